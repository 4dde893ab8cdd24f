#include "psr/neural.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace psr::nn {
namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Matrix sigmoid(const Matrix& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

void activate(Matrix& z, Activation a) {
    switch (a) {
    case Activation::identity:
        break;
    case Activation::relu:
        z = z.cwiseMax(0.0);
        break;
    case Activation::sigmoid:
        z = sigmoid(z);
        break;
    case Activation::tanh:
        z = z.array().tanh().matrix();
        break;
    }
}

/// Derivative expressed through the activation output.
Matrix activation_grad(const Matrix& out, Activation a) {
    switch (a) {
    case Activation::identity:
        return Matrix::Ones(out.rows(), out.cols());
    case Activation::relu:
        return (out.array() > 0.0).cast<double>().matrix();
    case Activation::sigmoid:
        return (out.array() * (1.0 - out.array())).matrix();
    case Activation::tanh:
        return (1.0 - out.array().square()).matrix();
    }
    return {};
}

void check_input(std::size_t expected, Eigen::Index rows, std::string_view what) {
    if (static_cast<std::size_t>(rows) != expected) {
        throw std::invalid_argument(fmt::format("{}: input has {} rows, layer expects {}", what, rows, expected));
    }
}

void fill_uniform(Matrix& m, double limit, Rng& rng) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            m(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
        }
    }
}

Matrix glorot(std::size_t in, std::size_t out, Rng& rng) {
    Matrix w(out, in);
    fill_uniform(w, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
    return w;
}

std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> span_of(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

struct GatedOut {
    Matrix gate1, branch2, tanh_c, gate3, y;
};

GatedOut gated_pass(const GatedUnitLayer& l, const Matrix& x) {
    GatedOut o;
    Matrix p1 = l.w1 * x;
    p1.colwise() += l.b1;
    Matrix p2 = l.w2 * x;
    p2.colwise() += l.b2;
    Matrix p3 = l.w3 * x;
    p3.colwise() += l.b3;
    o.gate1 = sigmoid(p1);
    o.branch2 = p2.array().tanh().matrix();
    o.tanh_c = (o.gate1.array() * o.branch2.array()).tanh().matrix();
    o.gate3 = sigmoid(p3);
    o.y = (o.gate3.array() * o.tanh_c.array()).matrix();
    return o;
}

} // namespace

std::string_view to_string(Activation a) {
    switch (a) {
    case Activation::identity:
        return "identity";
    case Activation::relu:
        return "relu";
    case Activation::sigmoid:
        return "sigmoid";
    case Activation::tanh:
        return "tanh";
    }
    return "?";
}

Activation parse_activation(std::string_view name) {
    if (name == "identity") return Activation::identity;
    if (name == "relu") return Activation::relu;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "tanh") return Activation::tanh;
    throw std::invalid_argument(fmt::format("unknown activation '{}'", name));
}

Vector dense_forward(const DenseLayer& layer, const Vector& x) {
    check_input(layer.in_dim(), x.size(), "dense_forward");
    Matrix z = layer.weights * x + layer.biases;
    activate(z, layer.activation);
    return z;
}

Vector gated_forward(const GatedUnitLayer& layer, const Vector& x) {
    check_input(layer.in_dim(), x.size(), "gated_forward");
    return gated_pass(layer, x).y;
}

Vector dropout(const Vector& x, double rate, bool training, Rng& rng) {
    if (!training || rate <= 0.0) {
        return x;
    }
    Vector out(x.size());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        out[k] = rng.uniform() < rate ? 0.0 : x[k] * keep_scale;
    }
    return out;
}

DenseLayer make_dense(std::size_t in, std::size_t out, Activation activation, Rng& rng) {
    DenseLayer layer;
    layer.activation = activation;
    if (activation == Activation::relu) {
        layer.weights.resize(out, in);
        fill_uniform(layer.weights, std::sqrt(6.0 / static_cast<double>(in)), rng);
    } else {
        layer.weights = glorot(in, out, rng);
    }
    layer.biases = Vector::Zero(out);
    return layer;
}

GatedUnitLayer make_gated(std::size_t in, std::size_t out, bool residual, Rng& rng) {
    if (residual && in != out) {
        throw std::invalid_argument("residual gated unit needs equal input and output widths");
    }
    GatedUnitLayer layer;
    layer.w1 = glorot(in, out, rng);
    layer.w2 = glorot(in, out, rng);
    layer.w3 = glorot(in, out, rng);
    layer.b1 = Vector::Zero(out);
    layer.b2 = Vector::Zero(out);
    layer.b3 = Vector::Zero(out);
    layer.residual = residual;
    return layer;
}

// ---------------------------------------------------------------------------

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
    std::size_t width = 0;
    for (const auto& layer : layers_) {
        std::visit(overloaded{[&](const DenseLayer& l) {
                                  if (l.biases.size() != l.weights.rows()) {
                                      throw std::invalid_argument("dense layer bias/weight shape mismatch");
                                  }
                                  if (width != 0 && l.in_dim() != width) {
                                      throw std::invalid_argument("dense layer input width mismatch");
                                  }
                                  width = l.out_dim();
                              },
                              [&](const GatedUnitLayer& l) {
                                  const auto r = l.w1.rows();
                                  const auto c = l.w1.cols();
                                  if (l.w2.rows() != r || l.w3.rows() != r || l.w2.cols() != c || l.w3.cols() != c ||
                                      l.b1.size() != r || l.b2.size() != r || l.b3.size() != r) {
                                      throw std::invalid_argument("gated layer branches must share one shape");
                                  }
                                  if (l.residual && r != c) {
                                      throw std::invalid_argument("residual gated unit needs square branches");
                                  }
                                  if (width != 0 && l.in_dim() != width) {
                                      throw std::invalid_argument("gated layer input width mismatch");
                                  }
                                  width = l.out_dim();
                              },
                              [&](const DropoutLayer& l) {
                                  if (!(l.rate >= 0.0 && l.rate < 1.0)) {
                                      throw std::invalid_argument("dropout rate must be in [0, 1)");
                                  }
                              }},
                   layer);
    }
}

std::size_t Network::input_dim() const {
    for (const auto& layer : layers_) {
        if (const auto* d = std::get_if<DenseLayer>(&layer)) return d->in_dim();
        if (const auto* g = std::get_if<GatedUnitLayer>(&layer)) return g->in_dim();
    }
    return 0;
}

std::size_t Network::output_dim() const {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        if (const auto* d = std::get_if<DenseLayer>(&*it)) return d->out_dim();
        if (const auto* g = std::get_if<GatedUnitLayer>(&*it)) return g->out_dim();
    }
    return 0;
}

Matrix Network::forward(const Matrix& x, Mode mode, Rng* rng, Cache* cache) const {
    if (cache) {
        cache->clear();
        cache->reserve(layers_.size());
    }
    Matrix h = x;
    for (const auto& layer : layers_) {
        std::visit(overloaded{[&](const DenseLayer& l) {
                                  check_input(l.in_dim(), h.rows(), "dense layer");
                                  Matrix z = l.weights * h;
                                  z.colwise() += l.biases;
                                  activate(z, l.activation);
                                  if (cache) cache->push_back(DenseCache{std::move(h), z});
                                  h = std::move(z);
                              },
                              [&](const GatedUnitLayer& l) {
                                  check_input(l.in_dim(), h.rows(), "gated layer");
                                  GatedOut o = gated_pass(l, h);
                                  Matrix y = std::move(o.y);
                                  if (l.residual) y += h;
                                  if (cache) {
                                      cache->push_back(GatedCache{std::move(h), std::move(o.gate1),
                                                                  std::move(o.branch2), std::move(o.tanh_c),
                                                                  std::move(o.gate3)});
                                  }
                                  h = std::move(y);
                              },
                              [&](const DropoutLayer& l) {
                                  Matrix mask;
                                  if (mode == Mode::training && l.rate > 0.0) {
                                      if (rng == nullptr) {
                                          throw std::invalid_argument("training-mode dropout requires an Rng");
                                      }
                                      const double keep_scale = 1.0 / (1.0 - l.rate);
                                      mask.resize(h.rows(), h.cols());
                                      for (Eigen::Index c = 0; c < h.cols(); ++c) {
                                          for (Eigen::Index r = 0; r < h.rows(); ++r) {
                                              mask(r, c) = rng->uniform() < l.rate ? 0.0 : keep_scale;
                                          }
                                      }
                                      h.array() *= mask.array();
                                  }
                                  if (cache) cache->push_back(DropoutCache{std::move(mask)});
                              }},
                   layer);
    }
    return h;
}

Network Network::zeros_like() const {
    Network out = *this;
    for (auto p : out.parameters()) {
        std::fill(p.begin(), p.end(), 0.0);
    }
    return out;
}

std::vector<std::span<double>> Network::parameters() {
    std::vector<std::span<double>> out;
    for (auto& layer : layers_) {
        std::visit(overloaded{[&](DenseLayer& l) {
                                  out.push_back(span_of(l.weights));
                                  out.push_back(span_of(l.biases));
                              },
                              [&](GatedUnitLayer& l) {
                                  for (Matrix* w : {&l.w1, &l.w2, &l.w3}) out.push_back(span_of(*w));
                                  for (Vector* b : {&l.b1, &l.b2, &l.b3}) out.push_back(span_of(*b));
                              },
                              [](DropoutLayer&) {}},
                   layer);
    }
    return out;
}

std::vector<std::span<const double>> Network::parameters() const {
    auto mutable_spans = const_cast<Network*>(this)->parameters();
    return {mutable_spans.begin(), mutable_spans.end()};
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (auto p : parameters()) {
        n += p.size();
    }
    return n;
}

Matrix backward(const Network& net, const Network::Cache& cache, const Matrix& upstream, Network& grads) {
    const auto& layers = net.layers();
    if (cache.size() != layers.size() || grads.layers().size() != layers.size()) {
        throw std::invalid_argument("backward: cache or gradient buffer does not match the network");
    }
    auto& grad_layers = grads.layers_;
    Matrix delta = upstream;
    for (std::size_t k = layers.size(); k-- > 0;) {
        std::visit(
            overloaded{
                [&](const DenseLayer& l) {
                    const auto& c = std::get<Network::DenseCache>(cache[k]);
                    auto& g = std::get<DenseLayer>(grad_layers[k]);
                    const Matrix dz = (delta.array() * activation_grad(c.output, l.activation).array()).matrix();
                    g.weights.noalias() += dz * c.input.transpose();
                    g.biases += dz.rowwise().sum();
                    delta = l.weights.transpose() * dz;
                },
                [&](const GatedUnitLayer& l) {
                    const auto& c = std::get<Network::GatedCache>(cache[k]);
                    auto& g = std::get<GatedUnitLayer>(grad_layers[k]);
                    const auto dy = delta.array();
                    const Matrix dp3 = (dy * c.tanh_c.array() * c.gate3.array() * (1.0 - c.gate3.array())).matrix();
                    const auto dc = dy * c.gate3.array() * (1.0 - c.tanh_c.array().square());
                    const Matrix dp1 = (dc * c.branch2.array() * c.gate1.array() * (1.0 - c.gate1.array())).matrix();
                    const Matrix dp2 = (dc * c.gate1.array() * (1.0 - c.branch2.array().square())).matrix();
                    g.w1.noalias() += dp1 * c.input.transpose();
                    g.w2.noalias() += dp2 * c.input.transpose();
                    g.w3.noalias() += dp3 * c.input.transpose();
                    g.b1 += dp1.rowwise().sum();
                    g.b2 += dp2.rowwise().sum();
                    g.b3 += dp3.rowwise().sum();
                    Matrix dx = l.w1.transpose() * dp1 + l.w2.transpose() * dp2 + l.w3.transpose() * dp3;
                    if (l.residual) dx += delta;
                    delta = std::move(dx);
                },
                [&](const DropoutLayer&) {
                    const auto& c = std::get<Network::DropoutCache>(cache[k]);
                    if (c.mask.size() != 0) {
                        delta.array() *= c.mask.array();
                    }
                }},
            layers[k]);
    }
    return delta;
}

AdamState AdamState::for_network(const Network& net, double learning_rate) {
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("learning rate must be positive");
    }
    AdamState s;
    s.first_moment = net.zeros_like();
    s.second_moment = net.zeros_like();
    s.learning_rate = learning_rate;
    return s;
}

void adam_step(AdamState& state, Network& params, const Network& grads) {
    auto p = params.parameters();
    auto g = grads.parameters();
    auto m = state.first_moment.parameters();
    auto v = state.second_moment.parameters();
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
        throw std::invalid_argument("adam_step: parameter, gradient and state shapes differ");
    }
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t a = 0; a < p.size(); ++a) {
        if (g[a].size() != p[a].size()) {
            throw std::invalid_argument("adam_step: gradient array size mismatch");
        }
        for (std::size_t k = 0; k < p[a].size(); ++k) {
            const double gk = g[a][k];
            m[a][k] = state.beta1 * m[a][k] + (1.0 - state.beta1) * gk;
            v[a][k] = state.beta2 * v[a][k] + (1.0 - state.beta2) * gk * gk;
            const double m_hat = m[a][k] / correction1;
            const double v_hat = v[a][k] / correction2;
            p[a][k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

} // namespace psr::nn
