#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "psr/rng.hpp"

namespace psr::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { identity, relu, sigmoid, tanh };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

/// activation(W x + b)
struct DenseLayer {
    Matrix weights; // out x in
    Vector biases;  // out
    Activation activation = Activation::identity;

    std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }
};

/**
 * Static gated unit:
 *   c = sigmoid(W1 x + b1) * tanh(W2 x + b2)
 *   y = sigmoid(W3 x + b3) * tanh(c)
 * With `residual` set (requires in == out) the layer outputs y + x.
 */
struct GatedUnitLayer {
    Matrix w1, w2, w3;
    Vector b1, b2, b3;
    bool residual = false;

    std::size_t in_dim() const { return static_cast<std::size_t>(w1.cols()); }
    std::size_t out_dim() const { return static_cast<std::size_t>(w1.rows()); }
};

/// Inverted dropout; identity at inference.
struct DropoutLayer {
    double rate = 0.0;
};

using Layer = std::variant<DenseLayer, GatedUnitLayer, DropoutLayer>;

enum class Mode { training, inference };

Vector dense_forward(const DenseLayer& layer, const Vector& x);

/// Gated unit output before any residual skip.
Vector gated_forward(const GatedUnitLayer& layer, const Vector& x);

Vector dropout(const Vector& x, double rate, bool training, Rng& rng);

/// He-uniform for relu, Glorot-uniform otherwise; zero biases.
DenseLayer make_dense(std::size_t in, std::size_t out, Activation activation, Rng& rng);
GatedUnitLayer make_gated(std::size_t in, std::size_t out, bool residual, Rng& rng);

/**
 * A stack of layers evaluated on column batches (one sample per column).
 * Forward passes optionally record the intermediates needed by backward().
 */
class Network {
  public:
    struct DenseCache {
        Matrix input, output;
    };
    struct GatedCache {
        Matrix input, gate1, branch2, tanh_c, gate3;
    };
    struct DropoutCache {
        Matrix mask;
    };
    using LayerCache = std::variant<DenseCache, GatedCache, DropoutCache>;
    using Cache = std::vector<LayerCache>;

    Network() = default;
    explicit Network(std::vector<Layer> layers);

    const std::vector<Layer>& layers() const { return layers_; }
    bool empty() const { return layers_.empty(); }
    std::size_t input_dim() const;
    std::size_t output_dim() const;

    /// `rng` is required when mode == training and the net contains dropout.
    Matrix forward(const Matrix& x, Mode mode = Mode::inference, Rng* rng = nullptr, Cache* cache = nullptr) const;

    /// Same architecture with every parameter set to zero.
    Network zeros_like() const;

    /// Views over every parameter array in a fixed order (weights before biases, layer by layer).
    std::vector<std::span<double>> parameters();
    std::vector<std::span<const double>> parameters() const;
    std::size_t parameter_count() const;

  private:
    friend Matrix backward(const Network& net, const Cache& cache, const Matrix& upstream, Network& grads);

    std::vector<Layer> layers_;
};

/**
 * Reverse-mode pass through a recorded forward computation. Parameter
 * gradients are summed over batch columns and ADDED into `grads` (which must
 * have the architecture of `net`). Returns the gradient w.r.t. the input.
 */
Matrix backward(const Network& net, const Network::Cache& cache, const Matrix& upstream, Network& grads);

/// Bias-corrected Adam accumulators shaped like one network.
struct AdamState {
    Network first_moment;
    Network second_moment;
    long step_count = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_network(const Network& net, double learning_rate);
};

void adam_step(AdamState& state, Network& params, const Network& grads);

} // namespace psr::nn
