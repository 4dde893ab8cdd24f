#include "psr/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

namespace psr {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "psr-model";
constexpr int kVersion = 1;

json matrix_to_json(const nn::Matrix& m) {
    // row-major flattening
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            flat.push_back(m(r, c));
        }
    }
    return flat;
}

nn::Matrix matrix_from_json(const json& j, std::size_t rows, std::size_t cols) {
    const auto flat = j.get<std::vector<double>>();
    if (flat.size() != rows * cols) {
        throw DataError(fmt::format("checkpoint: matrix has {} values, expected {}x{}", flat.size(), rows, cols));
    }
    nn::Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = flat[r * cols + c];
        }
    }
    return m;
}

nn::Vector vector_from_json(const json& j, std::size_t n) {
    const auto flat = j.get<std::vector<double>>();
    if (flat.size() != n) {
        throw DataError(fmt::format("checkpoint: vector has {} values, expected {}", flat.size(), n));
    }
    return Eigen::Map<const nn::Vector>(flat.data(), static_cast<Eigen::Index>(n));
}

json vector_to_json(const nn::Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

} // namespace

json network_to_json(const nn::Network& net) {
    json layers = json::array();
    for (const auto& layer : net.layers()) {
        if (const auto* d = std::get_if<nn::DenseLayer>(&layer)) {
            layers.push_back({{"type", "dense"},
                              {"in", d->in_dim()},
                              {"out", d->out_dim()},
                              {"activation", nn::to_string(d->activation)},
                              {"weights", matrix_to_json(d->weights)},
                              {"biases", vector_to_json(d->biases)}});
        } else if (const auto* g = std::get_if<nn::GatedUnitLayer>(&layer)) {
            layers.push_back({{"type", "gated"},
                              {"in", g->in_dim()},
                              {"out", g->out_dim()},
                              {"residual", g->residual},
                              {"w1", matrix_to_json(g->w1)},
                              {"w2", matrix_to_json(g->w2)},
                              {"w3", matrix_to_json(g->w3)},
                              {"b1", vector_to_json(g->b1)},
                              {"b2", vector_to_json(g->b2)},
                              {"b3", vector_to_json(g->b3)}});
        } else {
            layers.push_back({{"type", "dropout"}, {"rate", std::get<nn::DropoutLayer>(layer).rate}});
        }
    }
    return layers;
}

nn::Network network_from_json(const json& j) {
    std::vector<nn::Layer> layers;
    for (const auto& l : j) {
        const auto type = l.at("type").get<std::string>();
        if (type == "dense") {
            const auto in = l.at("in").get<std::size_t>();
            const auto out = l.at("out").get<std::size_t>();
            nn::DenseLayer d;
            d.activation = nn::parse_activation(l.at("activation").get<std::string>());
            d.weights = matrix_from_json(l.at("weights"), out, in);
            d.biases = vector_from_json(l.at("biases"), out);
            layers.emplace_back(std::move(d));
        } else if (type == "gated") {
            const auto in = l.at("in").get<std::size_t>();
            const auto out = l.at("out").get<std::size_t>();
            nn::GatedUnitLayer g;
            g.residual = l.at("residual").get<bool>();
            g.w1 = matrix_from_json(l.at("w1"), out, in);
            g.w2 = matrix_from_json(l.at("w2"), out, in);
            g.w3 = matrix_from_json(l.at("w3"), out, in);
            g.b1 = vector_from_json(l.at("b1"), out);
            g.b2 = vector_from_json(l.at("b2"), out);
            g.b3 = vector_from_json(l.at("b3"), out);
            layers.emplace_back(std::move(g));
        } else if (type == "dropout") {
            layers.emplace_back(nn::DropoutLayer{l.at("rate").get<double>()});
        } else {
            throw DataError(fmt::format("checkpoint: unknown layer type '{}'", type));
        }
    }
    return nn::Network(std::move(layers));
}

json policy_to_json(const LabelingPolicy& policy) {
    return {{"family", to_string(policy.shape.family)},
            {"alpha", policy.shape.alpha},
            {"beta", policy.shape.beta},
            {"theta_divisor", policy.theta_divisor}};
}

LabelingPolicy policy_from_json(const json& j) {
    const auto family = parse_label_family(j.at("family").get<std::string>());
    switch (family) {
    case LabelFamily::linear: {
        auto p = LabelingPolicy::linear();
        p.theta_divisor = j.value("theta_divisor", 1.0);
        return p;
    }
    case LabelFamily::piecewise_linear: {
        auto p = LabelingPolicy::piecewise_linear(j.at("alpha").get<double>());
        p.theta_divisor = j.value("theta_divisor", 1.0);
        return p;
    }
    case LabelFamily::weibull:
        return LabelingPolicy::weibull(j.at("alpha").get<double>(), j.at("beta").get<double>(),
                                       j.at("theta_divisor").get<double>());
    }
    throw std::logic_error("unreachable");
}

json checkpoint_to_json(const ModelCheckpoint& ckpt) {
    json j{{"format", kFormat},
           {"version", kVersion},
           {"kind", to_string(ckpt.model.kind())},
           {"body", network_to_json(ckpt.model.body())},
           {"head", network_to_json(ckpt.model.head())},
           {"decoder", ckpt.model.decoder() ? network_to_json(*ckpt.model.decoder()) : json(nullptr)}};
    if (ckpt.normalization) {
        j["normalization"] = {{"means", ckpt.normalization->means}, {"stds", ckpt.normalization->stds}};
    }
    if (ckpt.labeling) {
        j["labeling"] = policy_to_json(*ckpt.labeling);
    }
    return j;
}

ModelCheckpoint checkpoint_from_json(const json& j) {
    if (j.value("format", std::string()) != kFormat) {
        throw DataError("not a psr model checkpoint");
    }
    if (j.at("version").get<int>() != kVersion) {
        throw DataError(fmt::format("unsupported checkpoint version {}", j.at("version").get<int>()));
    }
    std::optional<nn::Network> decoder;
    if (!j.at("decoder").is_null()) {
        decoder = network_from_json(j.at("decoder"));
    }
    ModelCheckpoint ckpt{RegressorModel(parse_model_kind(j.at("kind").get<std::string>()),
                                        network_from_json(j.at("body")), network_from_json(j.at("head")),
                                        std::move(decoder)),
                         std::nullopt, std::nullopt};
    if (j.contains("normalization")) {
        ckpt.normalization = NormStats{j["normalization"].at("means").get<std::vector<double>>(),
                                       j["normalization"].at("stds").get<std::vector<double>>()};
    }
    if (j.contains("labeling")) {
        ckpt.labeling = policy_from_json(j["labeling"]);
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
    std::ofstream out(path);
    if (!out) {
        throw DataError(fmt::format("cannot write {}", path.string()));
    }
    out << checkpoint_to_json(ckpt).dump(1) << '\n';
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError(fmt::format("cannot open {}", path.string()));
    }
    return checkpoint_from_json(json::parse(in));
}

} // namespace psr
