#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "psr/config.hpp"
#include "psr/data_model.hpp"
#include "psr/evaluation.hpp"
#include "psr/labeling.hpp"
#include "psr/rectification.hpp"
#include "psr/regressors.hpp"

namespace psr {

/**
 * Test-split truth, held apart from the data the pipeline works on. Every
 * lookup is counted so tests can check that nothing reads it before scoring.
 */
class GroundTruth {
  public:
    GroundTruth() = default;
    GroundTruth(const GroundTruth& other);
    GroundTruth& operator=(const GroundTruth& other);

    /// Lifetime L_i = T_i + true_rul for every test subject; throws DataError if any RUL is missing.
    static GroundTruth from_test(const Dataset& test);

    double lifetime(std::string_view subject_id) const;
    bool contains(std::string_view subject_id) const;
    std::size_t size() const { return lifetimes_.size(); }

    /// Truth at interval t: Y(t; theta(L)) in label space, L - t in RUL space.
    double truth_at(std::string_view subject_id, double t, EvalSpace space, const LabelingPolicy& policy) const;

    std::size_t reads() const { return reads_.load(); }

  private:
    std::map<std::string, double, std::less<>> lifetimes_;
    mutable std::atomic<std::size_t> reads_{0};
};

/// Pipeline stages, announced to hooks in this order.
inline constexpr std::string_view kStages[] = {"ingest", "normalize", "label", "scarcify",
                                               "train",  "predict",   "rectify", "evaluate"};

struct PipelineHooks {
    /// Called at the start of each stage of each replicate.
    std::function<void(std::string_view stage, const GroundTruth& truth)> on_stage;
    /// Forwarded to training.
    BatchObserver on_batch;
};

/// Raw data of one experiment before any per-replicate processing.
struct ExperimentData {
    Dataset train;
    /// Test split with labels and true RUL removed.
    Dataset test;
    GroundTruth truth;
};

/// Loads or generates both splits per cfg and separates the test truth.
ExperimentData load_experiment_data(const ExperimentConfig& cfg);

struct SubjectDiagnostic {
    std::string subject_id;
    double theta_hat = 0.0;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// One row of the per-interval trace of a test subject.
struct IntervalTrace {
    std::string subject_id;
    std::size_t interval = 0;
    std::size_t samples = 0;
    double raw_median = 0.0;
    double rectified = 0.0;
    double truth = 0.0;
};

struct ReplicateResult {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::optional<std::string> error;
    /// Metric name to value, in emission order.
    std::vector<std::pair<std::string, double>> metrics;
    std::vector<SubjectDiagnostic> diagnostics;
    /// Terminal (t = T_i) predictions: rectified and raw last-available estimate.
    std::vector<PredictionRecord> terminal;
    std::vector<PredictionRecord> terminal_raw;
    std::vector<IntervalTrace> traces;
    std::vector<double> loss_trace;

    std::optional<double> metric(std::string_view name) const;
};

struct SummaryRow {
    std::string metric;
    double mean = 0.0;
    double std = 0.0; // sample std (n - 1); 0 when n = 1
    std::size_t n = 0;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<ReplicateResult> replicates; // ordered by index
    std::vector<SummaryRow> summary;

    std::size_t failures() const;
    std::optional<SummaryRow> summary_for(std::string_view metric) const;
};

/// One replicate on already-loaded data. Throws on stage failure.
ReplicateResult run_replicate(const ExperimentConfig& cfg, const ExperimentData& data, std::size_t index,
                              const PipelineHooks& hooks = {});

/// All replicates (seed = cfg.seed + k) on up to cfg.workers threads. A failed
/// replicate is recorded and the others continue.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const PipelineHooks& hooks = {});
ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentData& data,
                                const PipelineHooks& hooks = {});

std::vector<SummaryRow> summarize(const std::vector<ReplicateResult>& replicates);

/// Header comment carried by every output file: the resolved config and RNG algorithm.
std::string provenance_header(const ExperimentConfig& cfg);

/// metrics.csv, summary.csv, failures.csv and per-replicate diagnostics,
/// traces, predictions and loss files.
void write_experiment(const std::filesystem::path& dir, const ExperimentResult& result);

enum class SweepAxis { scarcity, sample_size, gamma };

std::string_view to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(std::string_view name);

/// Copy of cfg with the axis set to value.
ExperimentConfig apply_axis(const ExperimentConfig& cfg, SweepAxis axis, double value);

struct SweepRow {
    double axis_value = 0.0;
    SummaryRow summary;
};

struct SweepResult {
    SweepAxis axis = SweepAxis::scarcity;
    std::vector<ExperimentResult> cells;
    std::vector<SweepRow> rows;
};

SweepResult sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::vector<double>& values);

/// Long-format CSV `axis,axis_value,metric,mean,std,n`.
void write_sweep(std::ostream& out, const ExperimentConfig& base, const SweepResult& result);

// Stage-level file formats used by the CLI.

/// CSV `subject_id,interval,sample_idx,estimate` with `#@subject=` directives for T_i.
void write_posterior_csv(std::ostream& out, const std::vector<PosteriorEstimates>& posterior,
                         std::string_view header_comment = {});
std::vector<PosteriorEstimates> read_posterior_csv(std::istream& in);

struct RectifiedSubject {
    std::string subject_id;
    std::size_t latest_interval = 0;
    RectificationResult fit;
    /// (t, rectified value) at each sampled interval and at T_i.
    std::vector<std::pair<std::size_t, double>> predictions;
    /// Theta behind each prediction; differs from fit.theta_hat only under per-interval refits.
    std::vector<double> thetas;
};

/**
 * Fits theta per subject (optionally on interval medians) and rectifies every
 * sampled interval and T_i. With `refit_every_interval` the value at each
 * sampled interval t comes from a fit on the estimates up to t; T_i always
 * uses the full history.
 */
std::vector<RectifiedSubject> rectify_posterior(const std::vector<PosteriorEstimates>& posterior,
                                                const LabelingPolicy& policy, const LMConfig& lm,
                                                bool median_aggregation, bool refit_every_interval = false);

struct RectifiedRow {
    std::string subject_id;
    std::size_t interval = 0;
    double predicted = 0.0;
    double theta = 0.0;
};

/// CSV `subject_id,interval,predicted,theta`.
void write_interval_predictions(std::ostream& out, const std::vector<RectifiedSubject>& rectified,
                                std::string_view header_comment = {});
std::vector<RectifiedRow> read_interval_predictions(std::istream& in);

/// CSV `subject_id,theta_hat,J,iterations,converged`.
void write_diagnostics(std::ostream& out, const std::vector<SubjectDiagnostic>& diagnostics,
                       std::string_view header_comment = {});

/// Number format shared by every numeric output: shortest round-trip representation.
std::string format_number(double v);

} // namespace psr
