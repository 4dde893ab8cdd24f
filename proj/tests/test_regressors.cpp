#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "helpers.hpp"
#include "psr/checkpoint.hpp"
#include "psr/regressors.hpp"
#include "psr/rng.hpp"

using namespace psr;
using psr::testing::subject;

namespace {

nn::DenseLayer dense(nn::Matrix w, nn::Vector b, nn::Activation a = nn::Activation::identity) {
    return nn::DenseLayer{std::move(w), std::move(b), a};
}

nn::Network identity_net(std::size_t v) {
    return nn::Network({dense(nn::Matrix::Identity(v, v), nn::Vector::Zero(v))});
}

/// MLP whose estimate is the first feature.
RegressorModel first_feature_model(std::size_t v) {
    nn::Matrix w = nn::Matrix::Zero(1, v);
    w(0, 0) = 1.0;
    return RegressorModel(ModelKind::mlp, identity_net(v), nn::Network({dense(w, nn::Vector::Zero(1))}),
                          std::nullopt);
}

/// N subjects of `m` samples with random features; label = first feature.
Dataset toy_dataset(std::size_t n, std::size_t m, std::size_t v, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SubjectSeries> subjects;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Sample> samples;
        for (std::size_t j = 0; j < m; ++j) {
            std::vector<double> x(v);
            for (auto& e : x) e = 2.0 * rng.uniform() - 1.0;
            samples.push_back({j + 1, 1, x, x[0]});
        }
        subjects.emplace_back("s" + std::to_string(i), m, std::move(samples));
    }
    return Dataset(std::move(subjects), v);
}

Architecture small_arch(ModelKind kind) {
    Architecture a;
    a.kind = kind;
    a.encoder_widths = {8, 4};
    a.dropout = 0.0;
    return a;
}

bool same_parameters(const nn::Network& a, const nn::Network& b) {
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t k = 0; k < pa.size(); ++k) {
        if (!std::equal(pa[k].begin(), pa[k].end(), pb[k].begin(), pb[k].end())) return false;
    }
    return true;
}

bool same_model(const RegressorModel& a, const RegressorModel& b) {
    return same_parameters(a.body(), b.body()) && same_parameters(a.head(), b.head()) &&
           a.decoder().has_value() == b.decoder().has_value() &&
           (!a.decoder() || same_parameters(*a.decoder(), *b.decoder()));
}

} // namespace

TEST_CASE("default architectures") {
    const auto aer = RegressorModel::create(Architecture::defaults(ModelKind::aer), 14, 1);
    CHECK(aer.input_dim() == 14);
    CHECK(aer.latent_dim() == 8);
    REQUIRE(aer.decoder());
    CHECK(aer.decoder()->output_dim() == 14);

    const auto mlp = RegressorModel::create(Architecture::defaults(ModelKind::mlp), 14, 1);
    CHECK_FALSE(mlp.decoder());
    CHECK(mlp.latent_dim() == 8);

    const auto gru = RegressorModel::create(Architecture::defaults(ModelKind::resgur), 14, 1);
    CHECK(gru.latent_dim() == 100);
    CHECK(gru.head().output_dim() == 1);
    CHECK_FALSE(gru.decoder());

    CHECK(parse_model_kind("resgur") == ModelKind::resgur);
    CHECK_THROWS(parse_model_kind("lstm"));
}

TEST_CASE("forward estimate") {
    SUBCASE("identity autoencoder reconstructs its input") {
        const RegressorModel m(ModelKind::aer, identity_net(3), nn::Network({dense(nn::Matrix::Ones(1, 3), nn::Vector::Zero(1))}),
                               identity_net(3));
        nn::Vector x(3);
        x << 1.0, -2.0, 0.5;
        const auto e = m.forward_estimate(x);
        CHECK(e.y == doctest::Approx(-0.5));
        REQUIRE(e.reconstruction);
        CHECK((*e.reconstruction - x).norm() == 0.0);
    }
    SUBCASE("mlp has no reconstruction") {
        const auto m = RegressorModel::create(Architecture::defaults(ModelKind::mlp), 4, 3);
        CHECK_FALSE(m.forward_estimate(nn::Vector::Ones(4)).reconstruction);
    }
    SUBCASE("inference is deterministic despite dropout") {
        const auto m = RegressorModel::create(Architecture::defaults(ModelKind::aer), 4, 3);
        const nn::Vector x = nn::Vector::LinSpaced(4, -1.0, 1.0);
        CHECK(m.forward_estimate(x).y == m.forward_estimate(x).y);
        nn::Matrix batch(4, 2);
        batch.col(0) = x;
        batch.col(1) = x;
        const auto y = m.predict(batch);
        CHECK(y(0) == m.forward_estimate(x).y);
        CHECK(y(1) == y(0));
    }
    SUBCASE("wrong width") {
        const auto m = first_feature_model(3);
        CHECK_THROWS_AS(m.forward_estimate(nn::Vector::Ones(2)), std::invalid_argument);
    }
}

TEST_CASE("batch loss") {
    const auto m = first_feature_model(1);
    nn::Matrix x(1, 2);
    x << 1.0, 3.0;
    SUBCASE("perfect fit") {
        const std::vector<double> y{1.0, 3.0};
        CHECK(batch_loss(m, x, y, 0.0) == 0.0);
    }
    SUBCASE("residuals 1 and 3") {
        const std::vector<double> y{0.0, 0.0};
        CHECK(batch_loss(m, x, y, 0.0) == doctest::Approx(5.0));
    }
    SUBCASE("empty batch") {
        CHECK_THROWS_AS(batch_loss(m, nn::Matrix(1, 0), std::vector<double>{}, 0.0), std::invalid_argument);
    }
    SUBCASE("reconstruction term") {
        const RegressorModel aer(ModelKind::aer, identity_net(1), nn::Network({dense(nn::Matrix::Ones(1, 1), nn::Vector::Zero(1))}),
                                 nn::Network({dense(nn::Matrix::Zero(1, 1), nn::Vector::Zero(1))}));
        const std::vector<double> y{1.0, 3.0};
        // decoder outputs 0, so ||x_hat - x||^2 averages (1 + 9) / 2
        CHECK(batch_loss(aer, x, y, 0.0) == 0.0);
        CHECK(batch_loss(aer, x, y, 2.0) == doctest::Approx(10.0));
    }
}

TEST_CASE("identical batch sampling") {
    std::vector<psr::testing::Row> rows;
    for (std::size_t t = 1; t <= 50; ++t) rows.emplace_back(t, 1, std::vector<double>{0.0});
    const auto s = subject("a", 50, rows);
    Rng rng(5);
    const auto all = sample_identical_batch(s, 100, rng);
    CHECK(all.size() == 50);
    CHECK(std::set(all.begin(), all.end()).size() == 50);
    CHECK(sample_identical_batch(s, 1, rng).size() == 1);
    const auto ten = sample_identical_batch(s, 10, rng);
    CHECK(std::set(ten.begin(), ten.end()).size() == 10);
    CHECK(*std::max_element(ten.begin(), ten.end()) < 50);
    CHECK_THROWS_AS(sample_identical_batch(s, 0, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_identical_batch(subject("e", 3, {}), 4, rng), DataError);
}

TEST_CASE("training converges on a toy target") {
    const auto d = toy_dataset(4, 60, 3, 11);
    TrainConfig tc;
    tc.sample_size = 30;
    tc.learning_rate = 1e-2;
    tc.epochs = 200;
    tc.gamma = 0.0;
    tc.seed = 2;
    const auto r = train(RegressorModel::create(small_arch(ModelKind::mlp), 3, 1), d, tc);
    REQUIRE(r.loss_trace.size() == 200);
    CHECK(r.loss_trace.back() < 0.01 * r.loss_trace.front());
}

TEST_CASE("training properties") {
    const auto d = toy_dataset(3, 20, 3, 4);
    TrainConfig tc;
    tc.sample_size = 8;
    tc.epochs = 15;
    tc.seed = 9;

    SUBCASE("aer with gamma 0 matches mlp") {
        tc.gamma = 0.0;
        const auto mlp = RegressorModel::create(small_arch(ModelKind::mlp), 3, 1);
        const auto aer = RegressorModel::create(small_arch(ModelKind::aer), 3, 1);
        REQUIRE(same_parameters(mlp.body(), aer.body()));
        REQUIRE(same_parameters(mlp.head(), aer.head()));
        const auto a = train(mlp, d, tc);
        const auto b = train(aer, d, tc);
        CHECK(a.loss_trace == b.loss_trace);
        CHECK(same_parameters(a.model.head(), b.model.head()));
    }
    SUBCASE("zero epochs leave the model unchanged") {
        tc.epochs = 0;
        const auto m = RegressorModel::create(small_arch(ModelKind::aer), 3, 1);
        const auto r = train(m, d, tc);
        CHECK(r.loss_trace.empty());
        CHECK(same_model(m, r.model));
    }
    SUBCASE("every batch comes from a single subject") {
        std::size_t batches = 0;
        const auto r = train(RegressorModel::create(small_arch(ModelKind::aer), 3, 1), d, tc,
                             [&](const BatchEvent& e) {
                                 ++batches;
                                 CHECK(e.subject_index < d.subject_count());
                                 CHECK(e.sample_indices.size() ==
                                       std::min<std::size_t>(8, d.subjects()[e.subject_index].sample_count()));
                                 std::set<std::size_t> u(e.sample_indices.begin(), e.sample_indices.end());
                                 CHECK(u.size() == e.sample_indices.size());
                             });
        CHECK(batches == tc.epochs * d.subject_count());
        CHECK(r.loss_trace.size() == tc.epochs);
    }
    SUBCASE("same seed gives the same model") {
        Architecture arch = small_arch(ModelKind::aer);
        arch.dropout = 0.2;
        const auto m = RegressorModel::create(arch, 3, 6);
        const auto a = train(m, d, tc);
        const auto b = train(m, d, tc);
        CHECK(a.loss_trace == b.loss_trace);
        CHECK(same_model(a.model, b.model));
        tc.seed = 10;
        CHECK(train(m, d, tc).loss_trace != a.loss_trace);
    }
    SUBCASE("unlabeled data is rejected") {
        CHECK_THROWS_AS(train(first_feature_model(3), strip_labels(d), tc), DataError);
    }
    SUBCASE("divergence is reported") {
        auto subjects = d.subjects();
        std::vector<Sample> samples = subjects[0].samples();
        for (auto& s : samples) s.label = 1e300;
        subjects[0] = subjects[0].with_samples(samples);
        CHECK_THROWS_AS(train(first_feature_model(3), Dataset(subjects, 3), tc), TrainingDiverged);
    }
}

TEST_CASE("posterior estimates") {
    using psr::testing::Row;
    const auto s = subject("a", 12,
                           {Row{2, 1, {2.0}}, Row{5, 1, {5.0}}, Row{5, 2, {6.0}}, Row{9, 1, {9.0}}});
    const Dataset d({s, subject("empty", 4, {})}, 1);
    const auto m = first_feature_model(1);

    SUBCASE("all samples") {
        const auto p = predict_posterior(m, d);
        REQUIRE(p.size() == 1);
        CHECK(p[0].subject_id == "a");
        CHECK(p[0].latest_interval == 12);
        CHECK(p[0].intervals == std::vector<std::size_t>{2, 5, 5, 9});
        CHECK(p[0].estimates == std::vector<double>{2.0, 5.0, 6.0, 9.0});
    }
    SUBCASE("capped subsample stays ordered") {
        const auto p = predict_posterior(m, d, 2, 3);
        REQUIRE(p[0].size() == 2);
        CHECK(std::is_sorted(p[0].intervals.begin(), p[0].intervals.end()));
        CHECK(predict_posterior(m, d, 2, 3)[0].estimates == p[0].estimates);
        CHECK_THROWS_AS(predict_posterior(m, d, 0), std::invalid_argument);
    }
    SUBCASE("constant model") {
        const RegressorModel c(ModelKind::mlp, identity_net(1),
                               nn::Network({dense(nn::Matrix::Zero(1, 1), nn::Vector::Constant(1, 7.0))}),
                               std::nullopt);
        const auto p = predict_posterior(c, d);
        for (double e : p[0].estimates) CHECK(e == 7.0);
    }
}

TEST_CASE("interval-wise median") {
    PosteriorEstimates p;
    p.subject_id = "a";
    p.latest_interval = 4;
    p.estimates = {1.0, 100.0, 5.0, 2.0, 4.0};
    p.intervals = {1, 1, 1, 3, 3};
    p.sample_indices = {1, 2, 3, 1, 2};
    const auto m = interval_wise_median(p);
    CHECK(m.intervals == std::vector<std::size_t>{1, 3});
    CHECK(m.estimates == std::vector<double>{5.0, 3.0});
    CHECK(m.latest_interval == 4);
}

TEST_CASE("checkpoint round trip is bit exact") {
    const auto d = toy_dataset(2, 10, 3, 8);
    TrainConfig tc;
    tc.epochs = 3;
    tc.sample_size = 5;
    for (auto kind : {ModelKind::aer, ModelKind::mlp, ModelKind::resgur}) {
        Architecture arch = Architecture::defaults(kind);
        if (kind == ModelKind::resgur) {
            arch.gated_layers = 2;
            arch.gated_width = 6;
        }
        auto r = train(RegressorModel::create(arch, 3, 4), d, tc);
        ModelCheckpoint ck{r.model, NormStats{{0.1, 0.2, 1.0 / 3.0}, {1.0, 2.0, 3.0}}, LabelingPolicy::weibull()};
        const auto path = std::filesystem::temp_directory_path() / "psr_ckpt_test.json";
        save_checkpoint(path, ck);
        const auto back = load_checkpoint(path);
        std::filesystem::remove(path);
        CHECK(back.model.kind() == kind);
        CHECK(same_model(back.model, r.model));
        REQUIRE(back.normalization);
        CHECK(back.normalization->means == ck.normalization->means);
        REQUIRE(back.labeling);
        CHECK(back.labeling->theta_divisor == 1.7);
        const nn::Vector x = nn::Vector::LinSpaced(3, -0.3, 0.9);
        CHECK(back.model.forward_estimate(x).y == r.model.forward_estimate(x).y);
    }
}
