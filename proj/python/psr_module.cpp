#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "psr/checkpoint.hpp"
#include "psr/config.hpp"
#include "psr/data_model.hpp"
#include "psr/evaluation.hpp"
#include "psr/experiment.hpp"
#include "psr/labeling.hpp"
#include "psr/rectification.hpp"
#include "psr/regressors.hpp"
#include "psr/scarcity.hpp"
#include "psr/synthetic.hpp"

namespace py = pybind11;
using namespace pybind11::literals;

namespace {

psr::PosteriorEstimates make_posterior(const std::vector<double>& estimates, const std::vector<std::size_t>& intervals,
                                       std::size_t latest_interval) {
    if (estimates.size() != intervals.size()) {
        throw std::invalid_argument("estimates and intervals differ in length");
    }
    psr::PosteriorEstimates p;
    p.estimates = estimates;
    p.intervals = intervals;
    p.sample_indices.assign(estimates.size(), 1);
    p.latest_interval = latest_interval;
    if (p.latest_interval == 0) {
        for (auto t : intervals) p.latest_interval = std::max(p.latest_interval, t);
    }
    return p;
}

std::vector<psr::PredictionRecord> to_records(const py::iterable& rows) {
    std::vector<psr::PredictionRecord> out;
    for (const auto& row : rows) {
        const auto t = row.cast<py::tuple>();
        if (t.size() != 5) {
            throw std::invalid_argument("records are (subject_id, interval, sample_idx or None, predicted, truth)");
        }
        psr::PredictionRecord r;
        r.subject_id = py::str(t[0]);
        r.interval = t[1].cast<std::size_t>();
        if (!t[2].is_none()) r.sample_idx = t[2].cast<std::size_t>();
        r.predicted = t[3].cast<double>();
        r.truth = t[4].cast<double>();
        out.push_back(std::move(r));
    }
    return out;
}

py::dict summary_dict(const psr::ExperimentResult& result) {
    py::dict out;
    for (const auto& row : result.summary) {
        out[py::str(row.metric)] = py::dict("mean"_a = row.mean, "std"_a = row.std, "n"_a = row.n);
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_psr, m) {
    m.doc() = "Static RUL regression with parametrical rectification";

    py::register_exception<psr::ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<psr::DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<psr::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<psr::TrainingDiverged>(m, "TrainingDiverged", PyExc_RuntimeError);

    py::class_<psr::Dataset>(m, "Dataset")
        .def_property_readonly("subject_count", &psr::Dataset::subject_count)
        .def_property_readonly("num_variables", &psr::Dataset::num_variables)
        .def_property_readonly("total_samples", &psr::Dataset::total_samples)
        .def_property_readonly("max_interval", &psr::Dataset::max_interval)
        .def_property_readonly("has_labels", &psr::Dataset::has_labels)
        .def_property_readonly("category", [](const psr::Dataset& d) { return std::string(psr::to_string(psr::categorize(d))); })
        .def_property_readonly("subject_ids",
                               [](const psr::Dataset& d) {
                                   std::vector<std::string> ids;
                                   for (const auto& s : d.subjects()) ids.push_back(s.subject_id());
                                   return ids;
                               })
        .def(
            "subject",
            [](const psr::Dataset& d, const std::string& id) {
                const auto* s = d.find(id);
                if (!s) throw py::key_error(id);
                py::dict out;
                out["latest_interval"] = s->latest_interval();
                out["true_rul"] = s->true_rul();
                std::vector<std::size_t> intervals;
                std::vector<std::size_t> sample_idx;
                std::vector<std::optional<double>> labels;
                psr::nn::Matrix x(static_cast<Eigen::Index>(s->sample_count()), static_cast<Eigen::Index>(d.num_variables()));
                for (std::size_t j = 0; j < s->sample_count(); ++j) {
                    const auto& smp = s->samples()[j];
                    intervals.push_back(smp.interval);
                    sample_idx.push_back(smp.sample_idx);
                    labels.push_back(smp.label);
                    for (std::size_t v = 0; v < d.num_variables(); ++v) {
                        x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(v)) = smp.features[v];
                    }
                }
                out["intervals"] = intervals;
                out["sample_idx"] = sample_idx;
                out["labels"] = labels;
                out["features"] = x;
                return out;
            },
            "subject_id"_a, "Samples of one subject as interval/sample_idx/label lists and a features matrix.")
        .def("__repr__", [](const psr::Dataset& d) {
            return "<Dataset subjects=" + std::to_string(d.subject_count()) +
                   " samples=" + std::to_string(d.total_samples()) + ">";
        });

    m.def(
        "generate_synthetic",
        [](std::size_t subjects, std::size_t lifetime_min, std::size_t lifetime_max, std::size_t variables,
           double noise, std::size_t samples_min, std::size_t samples_max, double observed_min, double observed_max,
           std::uint64_t mixing_seed, std::uint64_t seed) {
            psr::SyntheticSpec spec;
            spec.subjects = subjects;
            spec.lifetime_min = lifetime_min;
            spec.lifetime_max = lifetime_max;
            spec.variables = variables;
            spec.noise = noise;
            spec.samples_min = samples_min;
            spec.samples_max = samples_max;
            spec.observed_min = observed_min;
            spec.observed_max = observed_max;
            spec.mixing_seed = mixing_seed;
            return psr::generate_synthetic(spec, seed);
        },
        "subjects"_a = 20, "lifetime_min"_a = 120, "lifetime_max"_a = 250, "variables"_a = 5, "noise"_a = 0.0,
        "samples_min"_a = 1, "samples_max"_a = 1, "observed_min"_a = 1.0, "observed_max"_a = 1.0, "mixing_seed"_a = 7,
        "seed"_a = 1);

    m.def("read_canonical_csv", &psr::ingest_canonical_csv, "path"_a);
    m.def(
        "write_canonical_csv",
        [](const std::filesystem::path& path, const psr::Dataset& d, const std::string& comment) {
            psr::write_canonical_csv(path, d, comment);
        },
        "path"_a, "dataset"_a, "comment"_a = "");
    m.def(
        "ingest_cmapss",
        [](const std::filesystem::path& path, bool test, std::optional<std::filesystem::path> rul) {
            return psr::ingest_cmapss(path, test ? psr::Split::test : psr::Split::train, rul);
        },
        "path"_a, "test"_a = false, "rul_path"_a = std::nullopt);

    m.def(
        "scarcify",
        [](const psr::Dataset& d, double fraction, std::uint64_t seed, bool keep_last) {
            return psr::scarcify(d, {fraction, seed, keep_last});
        },
        "dataset"_a, "fraction"_a, "seed"_a = 0, "keep_last"_a = false);
    m.def("retained_count", &psr::retained_count, "m"_a, "fraction"_a);

    m.def(
        "label",
        [](const std::string& family, double theta, double t, double alpha, double beta) {
            switch (psr::parse_label_family(family)) {
            case psr::LabelFamily::linear:
                return psr::LabelingFunction::linear(theta)(t);
            case psr::LabelFamily::piecewise_linear:
                return psr::LabelingFunction::piecewise_linear(alpha, theta)(t);
            case psr::LabelFamily::weibull:
                return psr::LabelingFunction::weibull(alpha, beta, theta)(t);
            }
            return 0.0;
        },
        "family"_a, "theta"_a, "t"_a, "alpha"_a = 130.0, "beta"_a = 5.0, "Y(t; theta) of the named family.");

    m.def(
        "fit_theta",
        [](const std::vector<double>& estimates, const std::vector<std::size_t>& intervals, const std::string& family,
           double alpha, double beta, std::size_t latest_interval) {
            const auto p = make_posterior(estimates, intervals, latest_interval);
            psr::LabelingFunction f;
            f.family = psr::parse_label_family(family);
            f.alpha = alpha;
            f.beta = beta;
            const auto r = psr::fit_theta(p, f);
            return py::dict("theta_hat"_a = r.theta_hat, "objective"_a = r.objective_value,
                            "iterations"_a = r.iterations_used, "converged"_a = r.converged,
                            "prediction"_a = psr::rectify(r, static_cast<double>(p.latest_interval)));
        },
        "estimates"_a, "intervals"_a, "family"_a = "weibull", "alpha"_a = 130.0, "beta"_a = 5.0,
        "latest_interval"_a = 0, "Levenberg-Marquardt fit of theta; prediction is the rectified value at T.");

    m.def("rmse_subject", [](const py::iterable& rows) { return psr::rmse_subject(to_records(rows)); }, "records"_a);
    m.def("s_score", [](const py::iterable& rows) { return psr::s_score(to_records(rows)); }, "records"_a);
    m.def(
        "rmse_interval_levels",
        [](const py::iterable& rows) {
            const auto l = psr::rmse_interval_levels(to_records(rows));
            return py::dict("rmse_ts"_a = l.rmse_ts, "rmse_t"_a = l.rmse_t, "rmse_it"_a = l.rmse_it);
        },
        "records"_a);

    py::class_<psr::RegressorModel>(m, "RegressorModel")
        .def_property_readonly("kind", [](const psr::RegressorModel& r) { return std::string(psr::to_string(r.kind())); })
        .def_property_readonly("input_dim", &psr::RegressorModel::input_dim)
        .def(
            "predict", [](const psr::RegressorModel& r, const psr::nn::Matrix& x) { return r.predict(x.transpose()); },
            "x"_a, "Estimates for an (n, V) array of normalized features.")
        .def("save", [](const psr::RegressorModel& r, const std::filesystem::path& path) {
            psr::save_checkpoint(path, {r, std::nullopt, std::nullopt});
        });
    m.def(
        "load_model", [](const std::filesystem::path& path) { return psr::load_checkpoint(path).model; }, "path"_a);

    m.def(
        "train",
        [](const psr::Dataset& labeled, const std::string& model, std::size_t sample_size, double learning_rate,
           std::size_t epochs, double gamma, std::uint64_t seed) {
            const auto arch = psr::Architecture::defaults(psr::parse_model_kind(model));
            psr::TrainConfig tc{sample_size, learning_rate, epochs, gamma, seed};
            py::gil_scoped_release release;
            auto result = psr::train(psr::RegressorModel::create(arch, labeled.num_variables(), seed), labeled, tc);
            return std::make_pair(std::move(result.model), std::move(result.loss_trace));
        },
        "labeled"_a, "model"_a = "aer", "sample_size"_a = 100, "learning_rate"_a = 1e-2, "epochs"_a = 300,
        "gamma"_a = 1.0, "seed"_a = 0, "Identical-batch training; returns (model, loss_trace).");
    m.def(
        "label_dataset",
        [](const psr::Dataset& d, const std::string& family, double alpha, double beta, double theta_divisor) {
            psr::LabelingPolicy policy;
            switch (psr::parse_label_family(family)) {
            case psr::LabelFamily::linear:
                policy = psr::LabelingPolicy::linear();
                break;
            case psr::LabelFamily::piecewise_linear:
                policy = psr::LabelingPolicy::piecewise_linear(alpha);
                break;
            case psr::LabelFamily::weibull:
                policy = psr::LabelingPolicy::weibull(alpha, beta, theta_divisor);
                break;
            }
            return psr::label_dataset(d, policy);
        },
        "dataset"_a, "family"_a = "weibull", "alpha"_a = 130.0, "beta"_a = 5.0, "theta_divisor"_a = 1.7);
    m.def(
        "normalize",
        [](const psr::Dataset& train, const psr::Dataset& test) {
            const auto stats = psr::fit_normalization(train);
            return std::make_pair(psr::apply_normalization(train, stats), psr::apply_normalization(test, stats));
        },
        "train"_a, "test"_a, "Z-score both splits with statistics fitted on train.");

    m.def(
        "default_config", [] { return psr::to_ini(psr::ExperimentConfig{}); }, "Fully-resolved default config text.");
    m.def(
        "run_experiment",
        [](const std::string& config_text, std::optional<std::filesystem::path> out) {
            std::istringstream in(config_text);
            const auto cfg = psr::parse_config(in);
            psr::ExperimentResult result;
            {
                py::gil_scoped_release release;
                result = psr::run_experiment(cfg);
            }
            if (out) psr::write_experiment(*out, result);
            std::vector<py::dict> replicates;
            for (const auto& rep : result.replicates) {
                py::dict metrics;
                for (const auto& [k, v] : rep.metrics) metrics[py::str(k)] = v;
                replicates.push_back(py::dict("index"_a = rep.index, "seed"_a = rep.seed, "error"_a = rep.error,
                                              "metrics"_a = metrics));
            }
            return py::dict("summary"_a = summary_dict(result), "replicates"_a = replicates);
        },
        "config"_a, "out"_a = std::nullopt,
        "Runs every replicate of an INI config; optionally writes the result files to `out`.");
    m.def(
        "sweep",
        [](const std::string& config_text, const std::string& axis, const std::vector<double>& values) {
            std::istringstream in(config_text);
            const auto cfg = psr::parse_config(in);
            psr::SweepResult result;
            {
                py::gil_scoped_release release;
                result = psr::sweep(cfg, psr::parse_sweep_axis(axis), values);
            }
            std::vector<py::tuple> rows;
            for (const auto& r : result.rows) {
                rows.push_back(py::make_tuple(r.axis_value, r.summary.metric, r.summary.mean, r.summary.std));
            }
            return rows;
        },
        "config"_a, "axis"_a, "values"_a, "Long-format rows (axis_value, metric, mean, std).");
}
