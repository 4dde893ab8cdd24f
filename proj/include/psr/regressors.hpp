#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "psr/data_model.hpp"
#include "psr/neural.hpp"
#include "psr/rng.hpp"

namespace psr {

enum class ModelKind { mlp, aer, resgur };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

/// Layer widths for the three regressor families.
struct Architecture {
    ModelKind kind = ModelKind::aer;
    /// MLP/AER encoder widths after the input; the last entry is the latent size.
    std::vector<std::size_t> encoder_widths{32, 16, 8};
    /// Hidden widths of the regression head between latent and the scalar output.
    std::vector<std::size_t> head_widths{};
    std::size_t gated_layers = 4;
    std::size_t gated_width = 100;
    /// Applied after every encoder dense layer (MLP/AER only).
    double dropout = 0.1;

    /// AER/MLP: encoder [V,32,16,8], head [8,1], dropout 0.1.
    /// ResGUR: projection V->100, 4 residual gated units of width 100, head [100,16,8,1].
    static Architecture defaults(ModelKind kind);
};

/**
 * Static regressor: latent = body(x), y = head(latent) and, for AER,
 * x_hat = decoder(latent). For ResGUR the body is a dense projection
 * followed by residual gated units.
 */
class RegressorModel {
  public:
    struct Estimate {
        double y = 0.0;
        std::optional<nn::Vector> reconstruction;
    };

    RegressorModel(ModelKind kind, nn::Network body, nn::Network head, std::optional<nn::Network> decoder);

    static RegressorModel create(const Architecture& arch, std::size_t input_dim, std::uint64_t seed);

    ModelKind kind() const { return kind_; }
    std::size_t input_dim() const { return body_.input_dim(); }
    std::size_t latent_dim() const { return body_.output_dim(); }

    const nn::Network& body() const { return body_; }
    const nn::Network& head() const { return head_; }
    const std::optional<nn::Network>& decoder() const { return decoder_; }
    nn::Network& body() { return body_; }
    nn::Network& head() { return head_; }
    std::optional<nn::Network>& decoder() { return decoder_; }

    /// Inference-mode estimate for one normalized feature vector.
    Estimate forward_estimate(const nn::Vector& x) const;

    /// Inference-mode estimates for a column batch (V x n).
    nn::Vector predict(const nn::Matrix& x) const;

  private:
    ModelKind kind_;
    nn::Network body_;
    nn::Network head_;
    std::optional<nn::Network> decoder_;
};

struct TrainConfig {
    std::size_t sample_size = 100; // B
    double learning_rate = 1e-2;
    std::size_t epochs = 300;
    double gamma = 1.0;
    std::uint64_t seed = 0;
};

/// Training diverged (non-finite loss).
class TrainingDiverged : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/**
 * Training loss over one batch, inference mode:
 *   (1/|B|) sum[(y_hat - y)^2 + gamma * ||x_hat - x||^2]
 * The reconstruction term only exists for AER. `x` is V x n, one column per sample.
 */
double batch_loss(const RegressorModel& model, const nn::Matrix& x, std::span<const double> y, double gamma);

/// min(M_i, B) distinct sample indices of one subject, uniformly at random.
std::vector<std::size_t> sample_identical_batch(const SubjectSeries& subject, std::size_t sample_size, Rng& rng);

struct BatchEvent {
    std::size_t epoch;
    std::size_t subject_index;
    std::span<const std::size_t> sample_indices;
};
using BatchObserver = std::function<void(const BatchEvent&)>;

struct TrainResult {
    RegressorModel model;
    std::vector<double> loss_trace; // mean batch loss per epoch
};

/// Identical-batch training: each epoch visits subjects in shuffled order and
/// takes one Adam step on a batch drawn from that subject alone.
TrainResult train(RegressorModel model, const Dataset& labeled, const TrainConfig& cfg,
                  const BatchObserver& observer = {});

/// Reindexed posterior estimates of one subject, ordered by (interval, sample_idx).
struct PosteriorEstimates {
    std::string subject_id;
    std::vector<double> estimates;
    std::vector<std::size_t> intervals;
    std::vector<std::size_t> sample_indices;
    std::size_t latest_interval = 0;

    std::size_t size() const { return estimates.size(); }
};

/// Evaluates the model on each subject's samples (or a uniform subsample of
/// at most `test_sample_cap`). Empty subjects are skipped with a warning.
std::vector<PosteriorEstimates> predict_posterior(const RegressorModel& model, const Dataset& d,
                                                  std::optional<std::size_t> test_sample_cap = std::nullopt,
                                                  std::uint64_t seed = 0);

/// One estimate per distinct interval: the median of that interval's estimates.
PosteriorEstimates interval_wise_median(const PosteriorEstimates& p);

} // namespace psr
