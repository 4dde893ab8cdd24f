#include "psr/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "psr/scarcity.hpp"
#include "text.hpp"

namespace psr {
namespace {

using text::write_comment;

double median(std::vector<double> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) {
        return *mid;
    }
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

void announce(const PipelineHooks& hooks, std::string_view stage, const GroundTruth& truth) {
    if (hooks.on_stage) {
        hooks.on_stage(stage, truth);
    }
}

/// Rectified value in the evaluation space.
double rectified_value(const RectificationResult& fit, double t, EvalSpace space, const LabelingPolicy& policy) {
    if (space == EvalSpace::label) {
        return rectify(fit, t);
    }
    return std::max(0.0, policy.lifetime_for(fit.theta_hat) - t);
}

/// A single raw estimate y at interval t read as a lifetime implies RUL at `at`.
double raw_value(double y, double t, double at, EvalSpace space, const LabelingPolicy& policy) {
    if (space == EvalSpace::label) {
        return y;
    }
    double theta = 0.0;
    if (policy.shape.family == LabelFamily::weibull) {
        theta = std::exp(loglog_transform(y, policy.shape) + std::log(t));
    } else {
        theta = y + t;
    }
    return std::max(0.0, policy.lifetime_for(theta) - at);
}

std::string csv_quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += "\"\"";
        } else if (c == '\n' || c == '\r') {
            out += ' ';
        } else {
            out += c;
        }
    }
    return out + "\"";
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    }
    return out;
}

} // namespace

GroundTruth::GroundTruth(const GroundTruth& other) : lifetimes_(other.lifetimes_), reads_(other.reads_.load()) {}

GroundTruth& GroundTruth::operator=(const GroundTruth& other) {
    lifetimes_ = other.lifetimes_;
    reads_ = other.reads_.load();
    return *this;
}

GroundTruth GroundTruth::from_test(const Dataset& test) {
    GroundTruth g;
    for (const auto& s : test.subjects()) {
        if (!s.true_rul()) {
            throw DataError(fmt::format("test subject {} has no true RUL", s.subject_id()));
        }
        g.lifetimes_.emplace(s.subject_id(), static_cast<double>(s.latest_interval()) + *s.true_rul());
    }
    return g;
}

double GroundTruth::lifetime(std::string_view subject_id) const {
    ++reads_;
    const auto it = lifetimes_.find(subject_id);
    if (it == lifetimes_.end()) {
        throw DataError(fmt::format("no ground truth for subject {}", subject_id));
    }
    return it->second;
}

bool GroundTruth::contains(std::string_view subject_id) const { return lifetimes_.find(subject_id) != lifetimes_.end(); }

double GroundTruth::truth_at(std::string_view subject_id, double t, EvalSpace space,
                             const LabelingPolicy& policy) const {
    const double life = lifetime(subject_id);
    if (space == EvalSpace::rul) {
        return life - t;
    }
    return policy.for_lifetime(life)(t);
}

ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
    Dataset train;
    Dataset test;
    switch (cfg.source) {
    case DataSource::synthetic: {
        const Rng root(cfg.synthetic_seed);
        train = generate_synthetic(cfg.synthetic_split(Split::train), root.derive(1).seed());
        test = generate_synthetic(cfg.synthetic_split(Split::test), root.derive(2).seed());
        break;
    }
    case DataSource::cmapss: {
        CmapssOptions options{cfg.feature_columns};
        train = ingest_cmapss(cfg.train_path, Split::train, std::nullopt, options);
        std::optional<std::filesystem::path> rul;
        if (!cfg.test_rul_path.empty()) {
            rul = cfg.test_rul_path;
        }
        test = ingest_cmapss(cfg.test_path, Split::test, rul, options);
        break;
    }
    case DataSource::canonical:
        train = ingest_canonical_csv(cfg.train_path);
        test = ingest_canonical_csv(cfg.test_path);
        break;
    }
    ExperimentData data;
    data.truth = GroundTruth::from_test(test);
    data.train = std::move(train);
    data.test = strip_labels(test);
    return data;
}

std::optional<double> ReplicateResult::metric(std::string_view name) const {
    for (const auto& [k, v] : metrics) {
        if (k == name) {
            return v;
        }
    }
    return std::nullopt;
}

std::size_t ExperimentResult::failures() const {
    return static_cast<std::size_t>(
        std::count_if(replicates.begin(), replicates.end(), [](const auto& r) { return r.error.has_value(); }));
}

std::optional<SummaryRow> ExperimentResult::summary_for(std::string_view metric) const {
    for (const auto& row : summary) {
        if (row.metric == metric) {
            return row;
        }
    }
    return std::nullopt;
}

std::vector<RectifiedSubject> rectify_posterior(const std::vector<PosteriorEstimates>& posterior,
                                                const LabelingPolicy& policy, const LMConfig& lm,
                                                bool median_aggregation, bool refit_every_interval) {
    std::vector<RectifiedSubject> out;
    out.reserve(posterior.size());
    for (const auto& raw : posterior) {
        if (raw.size() == 0) {
            continue;
        }
        const PosteriorEstimates p = median_aggregation ? interval_wise_median(raw) : raw;
        RectifiedSubject r;
        r.subject_id = p.subject_id;
        r.latest_interval = p.latest_interval;
        r.fit = fit_theta(p, policy.shape, lm);

        std::vector<std::size_t> intervals(p.intervals);
        intervals.erase(std::unique(intervals.begin(), intervals.end()), intervals.end());
        for (const auto t : intervals) {
            if (refit_every_interval) {
                PosteriorEstimates prefix;
                prefix.subject_id = p.subject_id;
                prefix.latest_interval = p.latest_interval;
                for (std::size_t j = 0; j < p.size() && p.intervals[j] <= t; ++j) {
                    prefix.estimates.push_back(p.estimates[j]);
                    prefix.intervals.push_back(p.intervals[j]);
                    prefix.sample_indices.push_back(p.sample_indices[j]);
                }
                const auto fit = fit_theta(prefix, policy.shape, lm);
                r.predictions.emplace_back(t, rectify(fit, static_cast<double>(t)));
                r.thetas.push_back(fit.theta_hat);
            } else {
                r.predictions.emplace_back(t, rectify(r.fit, static_cast<double>(t)));
                r.thetas.push_back(r.fit.theta_hat);
            }
        }
        if (intervals.empty() || intervals.back() != p.latest_interval) {
            r.predictions.emplace_back(p.latest_interval,
                                       rectify(r.fit, static_cast<double>(p.latest_interval)));
            r.thetas.push_back(r.fit.theta_hat);
        } else {
            r.predictions.back().second = rectify(r.fit, static_cast<double>(p.latest_interval));
            r.thetas.back() = r.fit.theta_hat;
        }
        out.push_back(std::move(r));
    }
    return out;
}

ReplicateResult run_replicate(const ExperimentConfig& cfg, const ExperimentData& data, std::size_t index,
                              const PipelineHooks& hooks) {
    ReplicateResult result;
    result.index = index;
    result.seed = cfg.seed + index;
    const Rng root(result.seed);
    const auto& truth = data.truth;

    announce(hooks, "ingest", truth);
    Dataset train_set = data.train;
    Dataset test_set = data.test;
    if (cfg.input_mode == InputMode::mean) {
        train_set = mean_collapse(train_set);
        test_set = mean_collapse(test_set);
    }

    announce(hooks, "normalize", truth);
    const NormStats stats = fit_normalization(train_set);
    train_set = apply_normalization(train_set, stats);
    test_set = apply_normalization(test_set, stats);

    announce(hooks, "label", truth);
    train_set = label_dataset(train_set, cfg.labeling);

    announce(hooks, "scarcify", truth);
    train_set = scarcify(train_set, {cfg.train_scarcity, root.derive(1).seed(), cfg.keep_last});
    if (cfg.effective_test_scarcity() > 0.0) {
        test_set = scarcify(test_set, {cfg.effective_test_scarcity(), root.derive(2).seed(), cfg.keep_last});
    }

    announce(hooks, "train", truth);
    TrainConfig tc = cfg.train;
    tc.seed = root.derive(4).seed();
    auto trained = train(RegressorModel::create(cfg.architecture, train_set.num_variables(), root.derive(3).seed()), train_set,
                         tc, hooks.on_batch);
    result.loss_trace = std::move(trained.loss_trace);

    announce(hooks, "predict", truth);
    const auto posterior = predict_posterior(trained.model, test_set, cfg.test_sample_cap, root.derive(5).seed());

    announce(hooks, "rectify", truth);
    const auto rectified =
        rectify_posterior(posterior, cfg.labeling, cfg.lm, cfg.median_aggregation, cfg.refit_every_interval);
    for (const auto& r : rectified) {
        result.diagnostics.push_back(
            {r.subject_id, r.fit.theta_hat, r.fit.objective_value, r.fit.iterations_used, r.fit.converged});
    }

    announce(hooks, "evaluate", truth);
    const auto space = cfg.eval_space;
    const auto& policy = cfg.labeling;
    const bool use_rectified = cfg.interval_prediction == IntervalPrediction::rectified;
    std::vector<PredictionRecord> interval_records;
    for (std::size_t i = 0; i < posterior.size(); ++i) {
        const auto& p = posterior[i];
        const auto& r = rectified[i];
        const auto T = static_cast<double>(p.latest_interval);

        std::vector<std::pair<std::size_t, double>> medians;
        for (std::size_t a = 0; a < p.size();) {
            std::size_t b = a;
            while (b < p.size() && p.intervals[b] == p.intervals[a]) {
                ++b;
            }
            const auto t = static_cast<double>(p.intervals[a]);
            const double m = median({p.estimates.begin() + static_cast<std::ptrdiff_t>(a),
                                     p.estimates.begin() + static_cast<std::ptrdiff_t>(b)});
            medians.emplace_back(p.intervals[a], m);

            const auto k = static_cast<std::size_t>(
                std::find_if(r.predictions.begin(), r.predictions.end(),
                             [&](const auto& e) { return e.first == p.intervals[a]; }) -
                r.predictions.begin());
            const double rect = space == EvalSpace::label
                                    ? r.predictions[k].second
                                    : std::max(0.0, policy.lifetime_for(r.thetas[k]) - t);
            const double raw_m = raw_value(m, t, t, space, policy);
            const double y = truth.truth_at(p.subject_id, t, space, policy);
            result.traces.push_back({p.subject_id, p.intervals[a], b - a, raw_m, rect, y});
            interval_records.push_back({p.subject_id, p.intervals[a], std::nullopt, use_rectified ? rect : raw_m, y});
            for (std::size_t j = a; j < b; ++j) {
                const double pred = use_rectified ? rect : raw_value(p.estimates[j], t, t, space, policy);
                interval_records.push_back({p.subject_id, p.intervals[a], p.sample_indices[j], pred, y});
            }
            a = b;
        }

        const double y_T = truth.truth_at(p.subject_id, T, space, policy);
        const auto [t_last, m_last] = medians.back();
        const double raw_T = raw_value(m_last, static_cast<double>(t_last), T, space, policy);
        const double rect_T = rectified_value(r.fit, T, space, policy);
        result.terminal.push_back({p.subject_id, p.latest_interval, std::nullopt, use_rectified ? rect_T : raw_T, y_T});
        result.terminal_raw.push_back({p.subject_id, p.latest_interval, std::nullopt, raw_T, y_T});
    }

    if (result.terminal.empty()) {
        throw DataError("no test subject produced a prediction");
    }
    result.metrics.emplace_back("rmse_i", rmse_subject(result.terminal));
    result.metrics.emplace_back("s_score", s_score(result.terminal));
    result.metrics.emplace_back("rmse_i_raw", rmse_subject(result.terminal_raw));
    result.metrics.emplace_back("s_score_raw", s_score(result.terminal_raw));
    const auto levels = rmse_interval_levels(interval_records);
    if (levels.rmse_t) result.metrics.emplace_back("rmse_t", *levels.rmse_t);
    if (levels.rmse_it) result.metrics.emplace_back("rmse_it", *levels.rmse_it);
    if (levels.rmse_ts) result.metrics.emplace_back("rmse_ts", *levels.rmse_ts);
    if (!result.loss_trace.empty()) result.metrics.emplace_back("final_loss", result.loss_trace.back());
    return result;
}

std::vector<SummaryRow> summarize(const std::vector<ReplicateResult>& replicates) {
    std::vector<SummaryRow> rows;
    std::vector<std::vector<double>> values;
    for (const auto& rep : replicates) {
        if (rep.error) {
            continue;
        }
        for (const auto& [name, v] : rep.metrics) {
            auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.metric == name; });
            if (it == rows.end()) {
                rows.push_back({name, 0.0, 0.0, 0});
                values.emplace_back();
                it = rows.end() - 1;
            }
            values[static_cast<std::size_t>(it - rows.begin())].push_back(v);
        }
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& v = values[i];
        const auto n = static_cast<double>(v.size());
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= n;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        rows[i].mean = mean;
        rows[i].std = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        rows[i].n = v.size();
    }
    return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const PipelineHooks& hooks) {
    cfg.validate();
    return run_experiment(cfg, load_experiment_data(cfg), hooks);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentData& data, const PipelineHooks& hooks) {
    cfg.validate();
    ExperimentResult result;
    result.config = cfg;
    result.replicates.resize(cfg.replicates);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < cfg.replicates; k = next++) {
            try {
                result.replicates[k] = run_replicate(cfg, data, k, hooks);
            } catch (const std::exception& e) {
                ReplicateResult failed;
                failed.index = k;
                failed.seed = cfg.seed + k;
                failed.error = e.what();
                result.replicates[k] = std::move(failed);
            }
        }
    };
    const std::size_t threads = std::min(cfg.workers, cfg.replicates);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < threads; ++i) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    result.summary = summarize(result.replicates);
    return result;
}

std::string provenance_header(const ExperimentConfig& cfg) {
    return fmt::format("{}\n[provenance]\nrng = {}\n", to_ini(cfg), Rng::kAlgorithm);
}

void write_experiment(const std::filesystem::path& dir, const ExperimentResult& result) {
    std::filesystem::create_directories(dir);
    const std::string header = provenance_header(result.config);
    auto comment = [&](std::ostream& out) { write_comment(out, header); };

    {
        auto out = open_output(dir / "metrics.csv");
        comment(out);
        out << "replicate,seed,metric,value\n";
        for (const auto& rep : result.replicates) {
            for (const auto& [name, v] : rep.metrics) {
                fmt::print(out, "{},{},{},{}\n", rep.index, rep.seed, name, format_number(v));
            }
        }
    }
    {
        auto out = open_output(dir / "summary.csv");
        comment(out);
        out << "metric,mean,std,n\n";
        for (const auto& row : result.summary) {
            fmt::print(out, "{},{},{},{}\n", row.metric, format_number(row.mean), format_number(row.std), row.n);
        }
    }
    {
        auto out = open_output(dir / "failures.csv");
        comment(out);
        out << "replicate,seed,error\n";
        for (const auto& rep : result.replicates) {
            if (rep.error) {
                fmt::print(out, "{},{},{}\n", rep.index, rep.seed, csv_quote(*rep.error));
            }
        }
    }
    for (const auto& rep : result.replicates) {
        if (rep.error) {
            continue;
        }
        const auto k = rep.index;
        {
            auto out = open_output(dir / fmt::format("diagnostics_rep{}.csv", k));
            write_diagnostics(out, rep.diagnostics, header);
        }
        {
            auto out = open_output(dir / fmt::format("predictions_rep{}.csv", k));
            write_prediction_records(out, rep.terminal, header);
        }
        {
            auto out = open_output(dir / fmt::format("predictions_raw_rep{}.csv", k));
            write_prediction_records(out, rep.terminal_raw, header);
        }
        {
            auto out = open_output(dir / fmt::format("traces_rep{}.csv", k));
            comment(out);
            out << "subject_id,interval,samples,raw_median,rectified,truth\n";
            for (const auto& t : rep.traces) {
                fmt::print(out, "{},{},{},{},{},{}\n", t.subject_id, t.interval, t.samples,
                           format_number(t.raw_median), format_number(t.rectified), format_number(t.truth));
            }
        }
        {
            auto out = open_output(dir / fmt::format("loss_rep{}.csv", k));
            comment(out);
            out << "epoch,loss\n";
            for (std::size_t e = 0; e < rep.loss_trace.size(); ++e) {
                fmt::print(out, "{},{}\n", e + 1, format_number(rep.loss_trace[e]));
            }
        }
    }
}

std::string_view to_string(SweepAxis axis) {
    switch (axis) {
    case SweepAxis::scarcity:
        return "scarcity";
    case SweepAxis::sample_size:
        return "B";
    case SweepAxis::gamma:
        return "gamma";
    }
    return "?";
}

SweepAxis parse_sweep_axis(std::string_view name) {
    if (name == "scarcity") return SweepAxis::scarcity;
    if (name == "B" || name == "sample_size") return SweepAxis::sample_size;
    if (name == "gamma") return SweepAxis::gamma;
    throw std::invalid_argument(fmt::format("unknown sweep axis '{}' (expected scarcity, B or gamma)", name));
}

ExperimentConfig apply_axis(const ExperimentConfig& cfg, SweepAxis axis, double value) {
    ExperimentConfig c = cfg;
    switch (axis) {
    case SweepAxis::scarcity:
        c.train_scarcity = value;
        break;
    case SweepAxis::sample_size:
        if (!(value >= 1.0) || value != std::floor(value)) {
            throw ConfigError(fmt::format("B must be a positive integer, got {}", value));
        }
        c.train.sample_size = static_cast<std::size_t>(value);
        break;
    case SweepAxis::gamma:
        c.train.gamma = value;
        break;
    }
    c.validate();
    return c;
}

SweepResult sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::vector<double>& values) {
    SweepResult result;
    result.axis = axis;
    std::vector<ExperimentConfig> cells;
    for (double v : values) {
        cells.push_back(apply_axis(cfg, axis, v));
    }
    const ExperimentData data = load_experiment_data(cfg);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        result.cells.push_back(run_experiment(cells[i], data));
        for (const auto& row : result.cells.back().summary) {
            result.rows.push_back({values[i], row});
        }
    }
    return result;
}

void write_sweep(std::ostream& out, const ExperimentConfig& base, const SweepResult& result) {
    write_comment(out, provenance_header(base));
    out << "axis,axis_value,metric,mean,std,n\n";
    for (const auto& row : result.rows) {
        fmt::print(out, "{},{},{},{},{},{}\n", to_string(result.axis), format_number(row.axis_value),
                   row.summary.metric, format_number(row.summary.mean), format_number(row.summary.std), row.summary.n);
    }
}

} // namespace psr
