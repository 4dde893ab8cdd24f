#include "psr/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

namespace psr {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>, std::less<>> kSchema{
    {"data", {"source", "train_path", "test_path", "test_rul_path", "feature_columns", "input_mode"}},
    {"synthetic",
     {"seed", "train_subjects", "test_subjects", "lifetime_min", "lifetime_max", "variables", "noise", "samples_min",
      "samples_max", "test_observed_min", "test_observed_max", "mixing_seed", "health_family", "health_alpha",
      "health_beta", "health_theta_divisor"}},
    {"labeling", {"family", "alpha", "beta", "theta_divisor"}},
    {"model",
     {"model", "encoder", "head", "gated_layers", "gated_width", "B", "lr", "epochs", "gamma", "dropout",
      "test_sample_cap"}},
    {"scarcity", {"train", "test", "keep_last"}},
    {"rectification",
     {"max_iterations", "initial_damping", "damping_up", "damping_down", "convergence_tol", "theta_lower",
      "theta_upper", "median_aggregation", "interval_prediction", "refit_every_interval", "eval_space"}},
    {"experiment", {"seed", "replicates", "workers"}},
};

/// Typed accessors over one parsed section; every key read is checked against the schema.
class Section {
  public:
    Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

    std::optional<std::string> raw(const std::string& key) const {
        if (!tree_) return std::nullopt;
        auto v = tree_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
        if (v) {
            auto s = *v;
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        }
        return std::nullopt;
    }

    std::string str(const std::string& key, std::string fallback) const {
        auto v = raw(key);
        return v ? *v : fallback;
    }

    template <class T>
    T num(const std::string& key, T fallback) const {
        auto v = raw(key);
        if (!v || v->empty()) return fallback;
        T out{};
        const auto* end = v->data() + v->size();
        const auto [ptr, ec] = std::from_chars(v->data(), end, out);
        if (ec != std::errc() || ptr != end) {
            throw ConfigError(fmt::format("[{}] {}: cannot parse '{}'", name_, key, *v));
        }
        return out;
    }

    bool flag(const std::string& key, bool fallback) const {
        auto v = raw(key);
        if (!v || v->empty()) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw ConfigError(fmt::format("[{}] {}: expected true/false, got '{}'", name_, key, *v));
    }

    std::vector<std::size_t> list(const std::string& key, std::vector<std::size_t> fallback) const {
        auto v = raw(key);
        if (!v) return fallback;
        std::vector<std::size_t> out;
        std::stringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto a = item.find_first_not_of(" \t");
            if (a == std::string::npos) continue;
            const auto b = item.find_last_not_of(" \t");
            const std::string_view tok(item.data() + a, b - a + 1);
            std::size_t x = 0;
            const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
            if (ec != std::errc() || ptr != tok.data() + tok.size()) {
                throw ConfigError(fmt::format("[{}] {}: bad list entry '{}'", name_, key, tok));
            }
            out.push_back(x);
        }
        return out;
    }

  private:
    const pt::ptree* tree_;
    std::string name_;
};

template <class E>
E parse_enum(std::string_view section, std::string_view key, std::string_view value,
             std::initializer_list<std::pair<std::string_view, E>> options) {
    for (const auto& [name, e] : options) {
        if (value == name) return e;
    }
    throw ConfigError(fmt::format("[{}] {}: unknown value '{}'", section, key, value));
}

LabelingPolicy make_policy(std::string_view family, double alpha, double beta, double divisor) {
    switch (parse_label_family(family)) {
    case LabelFamily::linear: {
        auto p = LabelingPolicy::linear();
        p.theta_divisor = divisor;
        return p;
    }
    case LabelFamily::piecewise_linear: {
        auto p = LabelingPolicy::piecewise_linear(alpha);
        p.theta_divisor = divisor;
        return p;
    }
    case LabelFamily::weibull:
        return LabelingPolicy::weibull(alpha, beta, divisor);
    }
    throw std::logic_error("unreachable");
}

std::string join(const std::vector<std::size_t>& v) { return fmt::format("{}", fmt::join(v, ",")); }

} // namespace

std::string_view to_string(DataSource v) {
    switch (v) {
    case DataSource::synthetic:
        return "synthetic";
    case DataSource::cmapss:
        return "cmapss";
    case DataSource::canonical:
        return "canonical";
    }
    return "?";
}

std::string_view to_string(InputMode v) { return v == InputMode::sample ? "sample" : "mean"; }
std::string_view to_string(IntervalPrediction v) { return v == IntervalPrediction::rectified ? "rectified" : "median"; }
std::string_view to_string(EvalSpace v) { return v == EvalSpace::label ? "label" : "rul"; }

SyntheticSpec ExperimentConfig::synthetic_split(Split split) const {
    SyntheticSpec spec = synthetic;
    if (split == Split::train) {
        spec.subjects = train_subjects;
        spec.observed_min = 1.0;
        spec.observed_max = 1.0;
    } else {
        spec.subjects = test_subjects;
        spec.observed_min = test_observed_min;
        spec.observed_max = test_observed_max;
    }
    return spec;
}

void ExperimentConfig::validate() const {
    auto fail = [](std::string msg) { throw ConfigError(std::move(msg)); };
    if (source != DataSource::synthetic && (train_path.empty() || test_path.empty())) {
        fail("[data] train_path and test_path are required for file sources");
    }
    if (source == DataSource::synthetic) {
        try {
            synthetic_split(Split::train).validate();
            synthetic_split(Split::test).validate();
        } catch (const std::invalid_argument& e) {
            fail(fmt::format("[synthetic] {}", e.what()));
        }
    }
    if (!(train_scarcity >= 0.0 && train_scarcity < 1.0)) fail("[scarcity] train must be in [0, 1)");
    const double ts = effective_test_scarcity();
    if (!(ts >= 0.0 && ts < 1.0)) fail("[scarcity] test must be in [0, 1)");
    if (train.sample_size == 0) fail("[model] B must be >= 1");
    if (!(train.learning_rate > 0.0)) fail("[model] lr must be > 0");
    if (!(train.gamma >= 0.0)) fail("[model] gamma must be >= 0");
    if (!(architecture.dropout >= 0.0 && architecture.dropout < 1.0)) fail("[model] dropout must be in [0, 1)");
    if (test_sample_cap && *test_sample_cap == 0) fail("[model] test_sample_cap must be >= 1 when set");
    if (replicates == 0) fail("[experiment] replicates must be >= 1");
    if (workers == 0) fail("[experiment] workers must be >= 1");
    if (!(lm.convergence_tol > 0.0)) fail("[rectification] convergence_tol must be > 0");
    if (lm.theta_bounds && !(lm.theta_bounds->first > 0.0 && lm.theta_bounds->second >= lm.theta_bounds->first)) {
        fail("[rectification] theta bounds need 0 < theta_lower <= theta_upper");
    }
}

ExperimentConfig parse_config(std::istream& in) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
    }
    for (const auto& [section, body] : tree) {
        const auto it = kSchema.find(section);
        if (it == kSchema.end() || body.empty()) {
            throw ConfigError(fmt::format("unknown config section or top-level key '{}'", section));
        }
        for (const auto& [key, value] : body) {
            if (!it->second.count(key)) {
                throw ConfigError(fmt::format("[{}] unknown key '{}'", section, key));
            }
        }
    }
    auto section = [&](const std::string& name) {
        return Section(tree.get_child_optional(name).get_ptr(), name);
    };

    ExperimentConfig c;
    const auto data = section("data");
    c.source = parse_enum<DataSource>("data", "source", data.str("source", "synthetic"),
                                      {{"synthetic", DataSource::synthetic},
                                       {"cmapss", DataSource::cmapss},
                                       {"canonical", DataSource::canonical}});
    c.train_path = data.str("train_path", "");
    c.test_path = data.str("test_path", "");
    c.test_rul_path = data.str("test_rul_path", "");
    c.feature_columns = data.list("feature_columns", {});
    c.input_mode = parse_enum<InputMode>("data", "input_mode", data.str("input_mode", "sample"),
                                         {{"sample", InputMode::sample}, {"mean", InputMode::mean}});

    const auto syn = section("synthetic");
    c.synthetic_seed = syn.num<std::uint64_t>("seed", c.synthetic_seed);
    c.train_subjects = syn.num<std::size_t>("train_subjects", c.train_subjects);
    c.test_subjects = syn.num<std::size_t>("test_subjects", c.test_subjects);
    c.synthetic.lifetime_min = syn.num<std::size_t>("lifetime_min", c.synthetic.lifetime_min);
    c.synthetic.lifetime_max = syn.num<std::size_t>("lifetime_max", c.synthetic.lifetime_max);
    c.synthetic.variables = syn.num<std::size_t>("variables", c.synthetic.variables);
    c.synthetic.noise = syn.num<double>("noise", c.synthetic.noise);
    c.synthetic.samples_min = syn.num<std::size_t>("samples_min", c.synthetic.samples_min);
    c.synthetic.samples_max = syn.num<std::size_t>("samples_max", c.synthetic.samples_max);
    c.synthetic.mixing_seed = syn.num<std::uint64_t>("mixing_seed", c.synthetic.mixing_seed);
    c.test_observed_min = syn.num<double>("test_observed_min", c.test_observed_min);
    c.test_observed_max = syn.num<double>("test_observed_max", c.test_observed_max);
    try {
        c.synthetic.health = make_policy(syn.str("health_family", "weibull"), syn.num<double>("health_alpha", 130.0),
                                         syn.num<double>("health_beta", 5.0),
                                         syn.num<double>("health_theta_divisor", 1.7));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(fmt::format("[synthetic] {}", e.what()));
    }

    const auto lab = section("labeling");
    try {
        const auto family = lab.str("family", "weibull");
        const double default_divisor = parse_label_family(family) == LabelFamily::weibull ? 1.7 : 1.0;
        c.labeling = make_policy(family, lab.num<double>("alpha", 130.0), lab.num<double>("beta", 5.0),
                                 lab.num<double>("theta_divisor", default_divisor));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(fmt::format("[labeling] {}", e.what()));
    }

    const auto model = section("model");
    try {
        c.architecture = Architecture::defaults(parse_model_kind(model.str("model", "aer")));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(fmt::format("[model] {}", e.what()));
    }
    c.architecture.encoder_widths = model.list("encoder", c.architecture.encoder_widths);
    c.architecture.head_widths = model.list("head", c.architecture.head_widths);
    c.architecture.gated_layers = model.num<std::size_t>("gated_layers", c.architecture.gated_layers);
    c.architecture.gated_width = model.num<std::size_t>("gated_width", c.architecture.gated_width);
    c.architecture.dropout = model.num<double>("dropout", c.architecture.dropout);
    c.train.sample_size = model.num<std::size_t>("B", c.train.sample_size);
    c.train.learning_rate = model.num<double>("lr", c.train.learning_rate);
    c.train.epochs = model.num<std::size_t>("epochs", c.train.epochs);
    c.train.gamma = model.num<double>("gamma", c.architecture.kind == ModelKind::aer ? c.train.gamma : 0.0);
    if (const auto cap = model.num<std::size_t>("test_sample_cap", 0); cap > 0) {
        c.test_sample_cap = cap;
    }

    const auto sc = section("scarcity");
    c.train_scarcity = sc.num<double>("train", 0.0);
    if (const auto test = sc.str("test", "same"); test != "same" && !test.empty()) {
        c.test_scarcity = sc.num<double>("test", 0.0);
    }
    c.keep_last = sc.flag("keep_last", false);

    const auto rect = section("rectification");
    c.lm.max_iterations = rect.num<std::size_t>("max_iterations", c.lm.max_iterations);
    c.lm.initial_damping = rect.num<double>("initial_damping", c.lm.initial_damping);
    c.lm.damping_up = rect.num<double>("damping_up", c.lm.damping_up);
    c.lm.damping_down = rect.num<double>("damping_down", c.lm.damping_down);
    c.lm.convergence_tol = rect.num<double>("convergence_tol", c.lm.convergence_tol);
    const double lower = rect.num<double>("theta_lower", 0.0);
    const double upper = rect.num<double>("theta_upper", 0.0);
    if (lower > 0.0 || upper > 0.0) {
        c.lm.theta_bounds = std::make_pair(lower, upper);
    }
    c.median_aggregation = rect.flag("median_aggregation", false);
    c.interval_prediction = parse_enum<IntervalPrediction>(
        "rectification", "interval_prediction", rect.str("interval_prediction", "rectified"),
        {{"rectified", IntervalPrediction::rectified}, {"median", IntervalPrediction::median}});
    c.refit_every_interval = rect.flag("refit_every_interval", false);
    c.eval_space = parse_enum<EvalSpace>("rectification", "eval_space", rect.str("eval_space", "label"),
                                         {{"label", EvalSpace::label}, {"rul", EvalSpace::rul}});

    const auto exp = section("experiment");
    c.seed = exp.num<std::uint64_t>("seed", c.seed);
    c.replicates = exp.num<std::size_t>("replicates", c.replicates);
    c.workers = exp.num<std::size_t>("workers", c.workers);

    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot open config {}", path.string()));
    }
    return parse_config(in);
}

std::string to_ini(const ExperimentConfig& c) {
    std::string out;
    auto line = [&](std::string_view key, const auto& value) { out += fmt::format("{} = {}\n", key, value); };

    out += "[data]\n";
    line("source", to_string(c.source));
    line("train_path", c.train_path);
    line("test_path", c.test_path);
    line("test_rul_path", c.test_rul_path);
    line("feature_columns", join(c.feature_columns));
    line("input_mode", to_string(c.input_mode));

    out += "\n[synthetic]\n";
    line("seed", c.synthetic_seed);
    line("train_subjects", c.train_subjects);
    line("test_subjects", c.test_subjects);
    line("lifetime_min", c.synthetic.lifetime_min);
    line("lifetime_max", c.synthetic.lifetime_max);
    line("variables", c.synthetic.variables);
    line("noise", c.synthetic.noise);
    line("samples_min", c.synthetic.samples_min);
    line("samples_max", c.synthetic.samples_max);
    line("test_observed_min", c.test_observed_min);
    line("test_observed_max", c.test_observed_max);
    line("mixing_seed", c.synthetic.mixing_seed);
    line("health_family", to_string(c.synthetic.health.shape.family));
    line("health_alpha", c.synthetic.health.shape.alpha);
    line("health_beta", c.synthetic.health.shape.beta);
    line("health_theta_divisor", c.synthetic.health.theta_divisor);

    out += "\n[labeling]\n";
    line("family", to_string(c.labeling.shape.family));
    line("alpha", c.labeling.shape.alpha);
    line("beta", c.labeling.shape.beta);
    line("theta_divisor", c.labeling.theta_divisor);

    out += "\n[model]\n";
    line("model", to_string(c.architecture.kind));
    line("encoder", join(c.architecture.encoder_widths));
    line("head", join(c.architecture.head_widths));
    line("gated_layers", c.architecture.gated_layers);
    line("gated_width", c.architecture.gated_width);
    line("B", c.train.sample_size);
    line("lr", c.train.learning_rate);
    line("epochs", c.train.epochs);
    line("gamma", c.train.gamma);
    line("dropout", c.architecture.dropout);
    line("test_sample_cap", c.test_sample_cap.value_or(0));

    out += "\n[scarcity]\n";
    line("train", c.train_scarcity);
    if (c.test_scarcity) {
        line("test", *c.test_scarcity);
    } else {
        line("test", "same");
    }
    line("keep_last", c.keep_last);

    out += "\n[rectification]\n";
    line("max_iterations", c.lm.max_iterations);
    line("initial_damping", c.lm.initial_damping);
    line("damping_up", c.lm.damping_up);
    line("damping_down", c.lm.damping_down);
    line("convergence_tol", c.lm.convergence_tol);
    line("theta_lower", c.lm.theta_bounds ? c.lm.theta_bounds->first : 0.0);
    line("theta_upper", c.lm.theta_bounds ? c.lm.theta_bounds->second : 0.0);
    line("median_aggregation", c.median_aggregation);
    line("interval_prediction", to_string(c.interval_prediction));
    line("refit_every_interval", c.refit_every_interval);
    line("eval_space", to_string(c.eval_space));

    out += "\n[experiment]\n";
    line("seed", c.seed);
    line("replicates", c.replicates);
    line("workers", c.workers);
    return out;
}

} // namespace psr
