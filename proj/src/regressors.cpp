#include "psr/regressors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace psr {
namespace {

using nn::Activation;
using nn::Matrix;
using nn::Vector;

constexpr std::uint64_t kBodyStream = 1;
constexpr std::uint64_t kHeadStream = 2;
constexpr std::uint64_t kDecoderStream = 3;

constexpr std::uint64_t kOrderStream = 11;
constexpr std::uint64_t kBatchStream = 12;
constexpr std::uint64_t kDropoutStream = 13;

nn::Network dense_stack(std::size_t input, const std::vector<std::size_t>& widths, Activation hidden,
                        Activation last, double dropout, Rng& rng) {
    std::vector<nn::Layer> layers;
    std::size_t in = input;
    for (std::size_t k = 0; k < widths.size(); ++k) {
        const bool is_last = k + 1 == widths.size();
        layers.emplace_back(nn::make_dense(in, widths[k], is_last ? last : hidden, rng));
        if (dropout > 0.0) {
            layers.emplace_back(nn::DropoutLayer{dropout});
        }
        in = widths[k];
    }
    return nn::Network(std::move(layers));
}

Matrix gather_features(const SubjectSeries& subject, std::span<const std::size_t> indices, std::size_t v) {
    Matrix x(v, indices.size());
    for (std::size_t c = 0; c < indices.size(); ++c) {
        const auto& f = subject.samples()[indices[c]].features;
        for (std::size_t r = 0; r < v; ++r) {
            x(r, c) = f[r];
        }
    }
    return x;
}

double median_of(std::vector<double> values) {
    const std::size_t n = values.size();
    std::sort(values.begin(), values.end());
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

} // namespace

std::string_view to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::mlp:
        return "mlp";
    case ModelKind::aer:
        return "aer";
    case ModelKind::resgur:
        return "resgur";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view name) {
    if (name == "mlp") return ModelKind::mlp;
    if (name == "aer") return ModelKind::aer;
    if (name == "resgur") return ModelKind::resgur;
    throw std::invalid_argument(fmt::format("unknown model '{}' (expected mlp, aer or resgur)", name));
}

Architecture Architecture::defaults(ModelKind kind) {
    Architecture a;
    a.kind = kind;
    if (kind == ModelKind::resgur) {
        a.encoder_widths = {};
        a.head_widths = {16, 8};
        a.dropout = 0.0;
    }
    return a;
}

RegressorModel::RegressorModel(ModelKind kind, nn::Network body, nn::Network head, std::optional<nn::Network> decoder)
    : kind_(kind), body_(std::move(body)), head_(std::move(head)), decoder_(std::move(decoder)) {
    if (head_.input_dim() != body_.output_dim() || head_.output_dim() != 1) {
        throw std::invalid_argument("regression head must map the latent vector to one output");
    }
    if ((kind_ == ModelKind::aer) != decoder_.has_value()) {
        throw std::invalid_argument("only the AER model carries a decoder");
    }
    if (decoder_ && (decoder_->input_dim() != body_.output_dim() || decoder_->output_dim() != body_.input_dim())) {
        throw std::invalid_argument("AER decoder must map the latent vector back to the input dimension");
    }
}

RegressorModel RegressorModel::create(const Architecture& arch, std::size_t input_dim, std::uint64_t seed) {
    if (input_dim == 0) {
        throw std::invalid_argument("input dimension must be positive");
    }
    const Rng root(seed);
    Rng body_rng = root.derive(kBodyStream);
    Rng head_rng = root.derive(kHeadStream);
    Rng decoder_rng = root.derive(kDecoderStream);

    nn::Network body;
    std::size_t latent = 0;
    if (arch.kind == ModelKind::resgur) {
        if (arch.gated_width == 0) {
            throw std::invalid_argument("gated width must be positive");
        }
        std::vector<nn::Layer> layers;
        layers.emplace_back(nn::make_dense(input_dim, arch.gated_width, Activation::identity, body_rng));
        for (std::size_t k = 0; k < arch.gated_layers; ++k) {
            layers.emplace_back(nn::make_gated(arch.gated_width, arch.gated_width, true, body_rng));
        }
        body = nn::Network(std::move(layers));
        latent = arch.gated_width;
    } else {
        if (arch.encoder_widths.empty()) {
            throw std::invalid_argument("encoder needs at least one layer");
        }
        body = dense_stack(input_dim, arch.encoder_widths, Activation::relu, Activation::relu, arch.dropout, body_rng);
        latent = arch.encoder_widths.back();
    }

    std::vector<std::size_t> head_widths = arch.head_widths;
    head_widths.push_back(1);
    nn::Network head = dense_stack(latent, head_widths, Activation::relu, Activation::identity, 0.0, head_rng);

    std::optional<nn::Network> decoder;
    if (arch.kind == ModelKind::aer) {
        std::vector<std::size_t> widths(arch.encoder_widths.rbegin() + 1, arch.encoder_widths.rend());
        widths.push_back(input_dim);
        decoder = dense_stack(latent, widths, Activation::relu, Activation::identity, 0.0, decoder_rng);
    }
    return RegressorModel(arch.kind, std::move(body), std::move(head), std::move(decoder));
}

RegressorModel::Estimate RegressorModel::forward_estimate(const nn::Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != input_dim()) {
        throw std::invalid_argument(fmt::format("feature vector has {} entries, model expects {}", x.size(), input_dim()));
    }
    const Matrix latent = body_.forward(x);
    Estimate e;
    e.y = head_.forward(latent)(0, 0);
    if (decoder_) {
        e.reconstruction = decoder_->forward(latent).col(0);
    }
    return e;
}

nn::Vector RegressorModel::predict(const nn::Matrix& x) const {
    if (static_cast<std::size_t>(x.rows()) != input_dim()) {
        throw std::invalid_argument(fmt::format("feature batch has {} rows, model expects {}", x.rows(), input_dim()));
    }
    return head_.forward(body_.forward(x)).row(0).transpose();
}

double batch_loss(const RegressorModel& model, const nn::Matrix& x, std::span<const double> y, double gamma) {
    const auto n = static_cast<std::size_t>(x.cols());
    if (n == 0) {
        throw std::invalid_argument("batch_loss: empty batch");
    }
    if (y.size() != n) {
        throw std::invalid_argument("batch_loss: label count does not match the batch");
    }
    const Matrix latent = model.body().forward(x);
    const Matrix y_hat = model.head().forward(latent);
    double sum = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        const double r = y_hat(0, static_cast<Eigen::Index>(c)) - y[c];
        sum += r * r;
    }
    if (model.decoder()) {
        sum += gamma * (model.decoder()->forward(latent) - x).squaredNorm();
    }
    return sum / static_cast<double>(n);
}

std::vector<std::size_t> sample_identical_batch(const SubjectSeries& subject, std::size_t sample_size, Rng& rng) {
    const std::size_t m = subject.sample_count();
    if (m == 0) {
        throw DataError(fmt::format("subject {} has no samples", subject.subject_id()));
    }
    if (sample_size == 0) {
        throw std::invalid_argument("sample size B must be >= 1");
    }
    const std::size_t k = std::min(m, sample_size);
    std::vector<std::size_t> pool(m);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t j = 0; j < k; ++j) {
        std::swap(pool[j], pool[j + rng.uniform_index(m - j)]);
    }
    pool.resize(k);
    return pool;
}

TrainResult train(RegressorModel model, const Dataset& labeled, const TrainConfig& cfg, const BatchObserver& observer) {
    if (cfg.sample_size == 0) {
        throw std::invalid_argument("sample size B must be >= 1");
    }
    if (!(cfg.learning_rate > 0.0)) {
        throw std::invalid_argument("learning rate must be positive");
    }
    if (!(cfg.gamma >= 0.0)) {
        throw std::invalid_argument("gamma must be non-negative");
    }
    if (labeled.num_variables() != model.input_dim()) {
        throw std::invalid_argument(fmt::format("dataset has {} variables, model expects {}", labeled.num_variables(),
                                                model.input_dim()));
    }
    if (cfg.epochs > 0 && !labeled.has_labels()) {
        throw DataError("training data must be labeled");
    }

    const Rng root(cfg.seed);
    Rng order_rng = root.derive(kOrderStream);
    Rng batch_rng = root.derive(kBatchStream);
    Rng dropout_rng = root.derive(kDropoutStream);

    auto body_adam = nn::AdamState::for_network(model.body(), cfg.learning_rate);
    auto head_adam = nn::AdamState::for_network(model.head(), cfg.learning_rate);
    std::optional<nn::AdamState> decoder_adam;
    if (model.decoder()) {
        decoder_adam = nn::AdamState::for_network(*model.decoder(), cfg.learning_rate);
    }

    const auto& subjects = labeled.subjects();
    const std::size_t v = labeled.num_variables();
    std::vector<std::size_t> order(subjects.size());
    std::vector<double> trace;
    trace.reserve(cfg.epochs);
    nn::Network::Cache body_cache, head_cache, decoder_cache;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t j = 0; j + 1 < order.size(); ++j) {
            std::swap(order[j], order[j + order_rng.uniform_index(order.size() - j)]);
        }
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (const auto i : order) {
            const auto& subject = subjects[i];
            if (subject.sample_count() == 0) {
                continue;
            }
            const auto indices = sample_identical_batch(subject, cfg.sample_size, batch_rng);
            if (observer) {
                observer(BatchEvent{epoch, i, indices});
            }
            const Matrix x = gather_features(subject, indices, v);
            const auto n = static_cast<double>(indices.size());

            const Matrix latent = model.body().forward(x, nn::Mode::training, &dropout_rng, &body_cache);
            const Matrix y_hat = model.head().forward(latent, nn::Mode::training, &dropout_rng, &head_cache);
            Matrix d_y(1, y_hat.cols());
            double loss = 0.0;
            for (Eigen::Index c = 0; c < y_hat.cols(); ++c) {
                const double r = y_hat(0, c) - *subject.samples()[indices[static_cast<std::size_t>(c)]].label;
                loss += r * r;
                d_y(0, c) = 2.0 * r / n;
            }
            loss /= n;

            nn::Network head_grad = model.head().zeros_like();
            Matrix d_latent = nn::backward(model.head(), head_cache, d_y, head_grad);

            std::optional<nn::Network> decoder_grad;
            if (model.decoder()) {
                const Matrix x_hat = model.decoder()->forward(latent, nn::Mode::training, &dropout_rng, &decoder_cache);
                const Matrix diff = x_hat - x;
                loss += cfg.gamma * diff.squaredNorm() / n;
                decoder_grad = model.decoder()->zeros_like();
                d_latent += nn::backward(*model.decoder(), decoder_cache, (2.0 * cfg.gamma / n) * diff, *decoder_grad);
            }
            if (!std::isfinite(loss)) {
                throw TrainingDiverged(fmt::format(
                    "non-finite loss at epoch {} on subject {}; lower the learning rate (currently {})", epoch,
                    subject.subject_id(), cfg.learning_rate));
            }

            nn::Network body_grad = model.body().zeros_like();
            nn::backward(model.body(), body_cache, d_latent, body_grad);

            nn::adam_step(body_adam, model.body(), body_grad);
            nn::adam_step(head_adam, model.head(), head_grad);
            if (decoder_adam) {
                nn::adam_step(*decoder_adam, *model.decoder(), *decoder_grad);
            }
            epoch_loss += loss;
            ++steps;
        }
        trace.push_back(steps > 0 ? epoch_loss / static_cast<double>(steps) : 0.0);
    }
    return TrainResult{std::move(model), std::move(trace)};
}

std::vector<PosteriorEstimates> predict_posterior(const RegressorModel& model, const Dataset& d,
                                                  std::optional<std::size_t> test_sample_cap, std::uint64_t seed) {
    if (d.num_variables() != model.input_dim()) {
        throw std::invalid_argument(
            fmt::format("dataset has {} variables, model expects {}", d.num_variables(), model.input_dim()));
    }
    if (test_sample_cap && *test_sample_cap == 0) {
        throw std::invalid_argument("test sample cap must be >= 1");
    }
    const Rng root(seed);
    std::vector<PosteriorEstimates> out;
    out.reserve(d.subject_count());
    for (std::size_t i = 0; i < d.subject_count(); ++i) {
        const auto& subject = d.subjects()[i];
        if (subject.sample_count() == 0) {
            fmt::print(stderr, "warning: subject {} has no samples; excluded from posterior estimation\n",
                       subject.subject_id());
            continue;
        }
        std::vector<std::size_t> indices;
        if (test_sample_cap && *test_sample_cap < subject.sample_count()) {
            Rng rng = root.derive(i);
            indices = sample_identical_batch(subject, *test_sample_cap, rng);
            std::sort(indices.begin(), indices.end());
        } else {
            indices.resize(subject.sample_count());
            std::iota(indices.begin(), indices.end(), 0);
        }
        const Vector y_hat = model.predict(gather_features(subject, indices, d.num_variables()));
        PosteriorEstimates p;
        p.subject_id = subject.subject_id();
        p.latest_interval = subject.latest_interval();
        p.estimates.assign(y_hat.data(), y_hat.data() + y_hat.size());
        for (auto idx : indices) {
            p.intervals.push_back(subject.samples()[idx].interval);
            p.sample_indices.push_back(subject.samples()[idx].sample_idx);
        }
        out.push_back(std::move(p));
    }
    return out;
}

PosteriorEstimates interval_wise_median(const PosteriorEstimates& p) {
    PosteriorEstimates out;
    out.subject_id = p.subject_id;
    out.latest_interval = p.latest_interval;
    for (std::size_t a = 0; a < p.size();) {
        std::size_t b = a;
        while (b < p.size() && p.intervals[b] == p.intervals[a]) {
            ++b;
        }
        out.estimates.push_back(median_of({p.estimates.begin() + static_cast<std::ptrdiff_t>(a),
                                           p.estimates.begin() + static_cast<std::ptrdiff_t>(b)}));
        out.intervals.push_back(p.intervals[a]);
        out.sample_indices.push_back(1);
        a = b;
    }
    return out;
}

} // namespace psr
