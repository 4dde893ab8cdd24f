// Command-line front end: one subcommand per pipeline stage plus `run` and `sweep`.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "psr/checkpoint.hpp"
#include "psr/config.hpp"
#include "psr/data_model.hpp"
#include "psr/evaluation.hpp"
#include "psr/experiment.hpp"
#include "psr/labeling.hpp"
#include "psr/regressors.hpp"
#include "psr/scarcity.hpp"
#include "psr/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::string out = "out";
};

psr::ExperimentConfig resolve_config(const Globals& g) {
    psr::ExperimentConfig cfg = g.config.empty() ? psr::ExperimentConfig{} : psr::load_config(g.config);
    if (g.seed) cfg.seed = *g.seed;
    if (g.workers) cfg.workers = *g.workers;
    cfg.validate();
    return cfg;
}

fs::path output_dir(const Globals& g) {
    fs::create_directories(g.out);
    return g.out;
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    }
    return out;
}

std::vector<double> parse_values(const std::string& list) {
    std::vector<double> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (used != item.size()) {
            throw std::invalid_argument(fmt::format("bad sweep value '{}'", item));
        }
        out.push_back(v);
    }
    if (out.empty()) {
        throw std::invalid_argument("sweep needs at least one value");
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Static RUL regression with parametrical rectification"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "Experiment config (INI)")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Base seed; overrides [experiment] seed");
    app.add_option("--workers", g.workers, "Parallel replicate workers")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output directory")->capture_default_str();

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Convert a CMAPSS or canonical file to canonical CSV");
    std::string ingest_format = "cmapss";
    std::string ingest_input;
    std::string ingest_rul;
    std::string ingest_split = "train";
    std::vector<std::size_t> ingest_columns;
    ingest->add_option("--format", ingest_format)->check(CLI::IsMember({"cmapss", "canonical"}))->capture_default_str();
    ingest->add_option("--input", ingest_input)->required()->check(CLI::ExistingFile);
    ingest->add_option("--rul", ingest_rul, "True RUL file for a CMAPSS test split")->check(CLI::ExistingFile);
    ingest->add_option("--split", ingest_split)->check(CLI::IsMember({"train", "test"}))->capture_default_str();
    ingest->add_option("--columns", ingest_columns, "Zero-based CMAPSS feature columns")->delimiter(',');

    // synth
    auto* synth = app.add_subcommand("synth", "Generate the synthetic train/test splits of the config");

    // scarcify
    auto* scarc = app.add_subcommand("scarcify", "Remove a fraction of each subject's samples");
    std::string scarc_input;
    double scarc_fraction = 0.0;
    bool scarc_keep_last = false;
    scarc->add_option("--input", scarc_input)->required()->check(CLI::ExistingFile);
    scarc->add_option("--scarcity,--fraction", scarc_fraction, "Fraction removed, in [0, 1)")->required();
    scarc->add_flag("--keep-last", scarc_keep_last);

    // train
    auto* train = app.add_subcommand("train", "Normalize, label and train a regressor");
    std::string train_input;
    train->add_option("--input", train_input, "Canonical training CSV")->required()->check(CLI::ExistingFile);

    // predict
    auto* predict = app.add_subcommand("predict", "Posterior estimates for every test sample");
    std::string predict_model;
    std::string predict_input;
    predict->add_option("--model", predict_model)->required()->check(CLI::ExistingFile);
    predict->add_option("--input", predict_input, "Canonical test CSV")->required()->check(CLI::ExistingFile);

    // rectify
    auto* rect = app.add_subcommand("rectify", "Fit the labeling function per subject and rectify");
    std::string rect_posterior;
    std::string rect_model;
    rect->add_option("--posterior", rect_posterior)->required()->check(CLI::ExistingFile);
    rect->add_option("--model", rect_model, "Checkpoint whose labeling policy to use")->check(CLI::ExistingFile);

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Score predictions");
    std::string eval_records;
    std::string eval_predictions;
    std::string eval_truth;
    std::string eval_space;
    eval->add_option("--records", eval_records, "Prediction-record CSV with truth")->check(CLI::ExistingFile);
    eval->add_option("--predictions", eval_predictions, "Interval predictions from rectify")
        ->check(CLI::ExistingFile);
    eval->add_option("--truth", eval_truth, "Canonical test CSV carrying true RUL")->check(CLI::ExistingFile);
    eval->add_option("--space", eval_space, "label or rul; defaults to the config")
        ->check(CLI::IsMember({"label", "rul"}));

    // run
    auto* run = app.add_subcommand("run", "Full pipeline over all replicates");

    // sweep
    auto* sw = app.add_subcommand("sweep", "Run the experiment once per axis value");
    std::string sweep_axis;
    std::string sweep_values;
    sw->add_option("--axis", sweep_axis)->required()->check(CLI::IsMember({"scarcity", "B", "gamma"}));
    sw->add_option("--values", sweep_values, "Comma-separated axis values")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            const auto split = ingest_split == "test" ? psr::Split::test : psr::Split::train;
            psr::Dataset d;
            if (ingest_format == "cmapss") {
                std::optional<fs::path> rul;
                if (!ingest_rul.empty()) rul = ingest_rul;
                d = psr::ingest_cmapss(ingest_input, split, rul, {ingest_columns});
            } else {
                d = psr::ingest_canonical_csv(ingest_input);
            }
            const auto path = output_dir(g) / fmt::format("{}.csv", ingest_split);
            psr::write_canonical_csv(path, d, fmt::format("ingested from {}", ingest_input));
            fmt::print("{}: {} subjects, {} samples, {} variables, {}\n", path.string(), d.subject_count(),
                       d.total_samples(), d.num_variables(), psr::to_string(psr::categorize(d)));
        } else if (*synth) {
            auto cfg = resolve_config(g);
            if (g.seed) cfg.synthetic_seed = *g.seed;
            const psr::Rng root(cfg.synthetic_seed);
            const auto dir = output_dir(g);
            const auto header = psr::provenance_header(cfg);
            const auto train_set = psr::generate_synthetic(cfg.synthetic_split(psr::Split::train), root.derive(1).seed());
            const auto test_set = psr::generate_synthetic(cfg.synthetic_split(psr::Split::test), root.derive(2).seed());
            psr::write_canonical_csv(dir / "train.csv", train_set, header);
            psr::write_canonical_csv(dir / "test.csv", test_set, header);
            fmt::print("wrote {} and {}\n", (dir / "train.csv").string(), (dir / "test.csv").string());
        } else if (*scarc) {
            const auto cfg = resolve_config(g);
            const auto d = psr::ingest_canonical_csv(scarc_input);
            const auto s = psr::scarcify(d, {scarc_fraction, cfg.seed, scarc_keep_last});
            const auto path = output_dir(g) / "scarce.csv";
            psr::write_canonical_csv(path, s,
                                     fmt::format("scarcity {} of {} (seed {})", scarc_fraction, scarc_input, cfg.seed));
            fmt::print("{}: kept {} of {} samples, {}\n", path.string(), s.total_samples(), d.total_samples(),
                       psr::to_string(psr::categorize(s)));
        } else if (*train) {
            const auto cfg = resolve_config(g);
            auto d = psr::ingest_canonical_csv(train_input);
            if (cfg.input_mode == psr::InputMode::mean) d = psr::mean_collapse(d);
            const auto stats = psr::fit_normalization(d);
            d = psr::label_dataset(psr::apply_normalization(d, stats), cfg.labeling);
            auto tc = cfg.train;
            tc.seed = psr::Rng(cfg.seed).derive(4).seed();
            auto result = psr::train(
                psr::RegressorModel::create(cfg.architecture, d.num_variables(), psr::Rng(cfg.seed).derive(3).seed()),
                d, tc);
            const auto dir = output_dir(g);
            psr::save_checkpoint(dir / "model.json", {result.model, stats, cfg.labeling});
            auto loss = open_output(dir / "loss.csv");
            loss << "epoch,loss\n";
            for (std::size_t e = 0; e < result.loss_trace.size(); ++e) {
                fmt::print(loss, "{},{}\n", e + 1, psr::format_number(result.loss_trace[e]));
            }
            fmt::print("{}: final loss {}\n", (dir / "model.json").string(),
                       result.loss_trace.empty() ? 0.0 : result.loss_trace.back());
        } else if (*predict) {
            const auto cfg = resolve_config(g);
            const auto ckpt = psr::load_checkpoint(predict_model);
            auto d = psr::strip_labels(psr::ingest_canonical_csv(predict_input));
            if (cfg.input_mode == psr::InputMode::mean) d = psr::mean_collapse(d);
            if (ckpt.normalization) d = psr::apply_normalization(d, *ckpt.normalization);
            const auto posterior =
                psr::predict_posterior(ckpt.model, d, cfg.test_sample_cap, psr::Rng(cfg.seed).derive(5).seed());
            const auto path = output_dir(g) / "posterior.csv";
            auto out = open_output(path);
            psr::write_posterior_csv(out, posterior, fmt::format("posterior estimates of {}", predict_input));
            fmt::print("{}: {} subjects\n", path.string(), posterior.size());
        } else if (*rect) {
            const auto cfg = resolve_config(g);
            auto policy = cfg.labeling;
            if (!rect_model.empty()) {
                const auto ckpt = psr::load_checkpoint(rect_model);
                if (ckpt.labeling) policy = *ckpt.labeling;
            }
            std::ifstream in(rect_posterior);
            const auto posterior = psr::read_posterior_csv(in);
            const auto rectified =
                psr::rectify_posterior(posterior, policy, cfg.lm, cfg.median_aggregation, cfg.refit_every_interval);
            std::vector<psr::SubjectDiagnostic> diag;
            for (const auto& r : rectified) {
                diag.push_back({r.subject_id, r.fit.theta_hat, r.fit.objective_value, r.fit.iterations_used,
                                r.fit.converged});
            }
            const auto dir = output_dir(g);
            auto out = open_output(dir / "rectified.csv");
            psr::write_interval_predictions(out, rectified);
            auto dout = open_output(dir / "diagnostics.csv");
            psr::write_diagnostics(dout, diag);
            fmt::print("{}: {} subjects rectified\n", (dir / "rectified.csv").string(), rectified.size());
        } else if (*eval) {
            const auto cfg = resolve_config(g);
            psr::MetricsReport report;
            if (!eval_records.empty()) {
                const auto records = psr::read_prediction_records(fs::path(eval_records));
                report = psr::evaluate_records(records);
            } else {
                if (eval_predictions.empty() || eval_truth.empty()) {
                    throw std::invalid_argument("evaluate needs --records, or --predictions with --truth");
                }
                const auto space = eval_space.empty() ? cfg.eval_space
                                   : eval_space == "rul" ? psr::EvalSpace::rul
                                                         : psr::EvalSpace::label;
                const auto test = psr::ingest_canonical_csv(eval_truth);
                const auto truth = psr::GroundTruth::from_test(test);
                std::ifstream in(eval_predictions);
                std::vector<psr::PredictionRecord> intervals;
                std::vector<psr::PredictionRecord> terminal;
                for (const auto& row : psr::read_interval_predictions(in)) {
                    const auto* subject = test.find(row.subject_id);
                    if (!subject) {
                        throw psr::DataError(fmt::format("subject {} not in truth file", row.subject_id));
                    }
                    const auto t = static_cast<double>(row.interval);
                    const double predicted = space == psr::EvalSpace::rul
                                                 ? std::max(0.0, cfg.labeling.lifetime_for(row.theta) - t)
                                                 : row.predicted;
                    psr::PredictionRecord r{row.subject_id, row.interval, std::nullopt, predicted,
                                            truth.truth_at(row.subject_id, t, space, cfg.labeling)};
                    intervals.push_back(r);
                    if (row.interval == subject->latest_interval()) terminal.push_back(r);
                }
                report = psr::evaluate_records(intervals);
                report.rmse_i = psr::rmse_subject(terminal);
                report.s_score = psr::s_score(terminal);
            }
            const auto path = output_dir(g) / "metrics.txt";
            auto out = open_output(path);
            psr::write_metrics(out, report);
            psr::write_metrics(std::cout, report);
        } else if (*run) {
            const auto cfg = resolve_config(g);
            const auto result = psr::run_experiment(cfg);
            psr::write_experiment(output_dir(g), result);
            for (const auto& row : result.summary) {
                fmt::print("{:<12} {} +- {} (n={})\n", row.metric, row.mean, row.std, row.n);
            }
            if (result.failures() > 0) {
                fmt::print(stderr, "{} of {} replicates failed; see failures.csv\n", result.failures(),
                           result.replicates.size());
                return result.failures() == result.replicates.size() ? 1 : 0;
            }
        } else if (*sw) {
            const auto cfg = resolve_config(g);
            const auto axis = psr::parse_sweep_axis(sweep_axis);
            const auto result = psr::sweep(cfg, axis, parse_values(sweep_values));
            const auto dir = output_dir(g);
            for (std::size_t i = 0; i < result.cells.size(); ++i) {
                psr::write_experiment(dir / fmt::format("cell{}", i), result.cells[i]);
            }
            auto out = open_output(dir / "sweep.csv");
            psr::write_sweep(out, cfg, result);
            psr::write_sweep(std::cout, cfg, result);
        }
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}
