#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace psr {

/// One scored prediction. Records without sample_idx are interval-wise.
struct PredictionRecord {
    std::string subject_id;
    std::size_t interval = 0;
    std::optional<std::size_t> sample_idx;
    double predicted = 0.0;
    double truth = 0.0;
};

struct MetricsReport {
    std::optional<double> rmse_i;
    std::optional<double> rmse_t;
    std::optional<double> rmse_it;
    std::optional<double> rmse_ts;
    std::optional<double> s_score;
    std::size_t subject_count = 0;
    std::size_t interval_count = 0;
    std::size_t sample_count = 0;
};

/// Subject-level RMSE over one record per subject (the prediction at T_i').
double rmse_subject(std::span<const PredictionRecord> records);

struct IntervalLevels {
    std::optional<double> rmse_ts; // all (subject, t, s) records
    std::optional<double> rmse_t;  // all (subject, t) records
    std::optional<double> rmse_it; // mean over subjects of per-subject interval RMSE
};

IntervalLevels rmse_interval_levels(std::span<const PredictionRecord> records);

inline constexpr double kUnderestimateScale = 13.0;
inline constexpr double kOverestimateScale = 10.0;

/// Asymmetric score, summed over subjects: exp(-d/13)-1 for d<0, exp(d/10)-1 otherwise.
double s_score(std::span<const PredictionRecord> records);

/**
 * Scores whatever granularity the records carry. When the interval-wise
 * records hold exactly one entry per subject they are also scored at subject
 * level (rmse_i and s_score).
 */
MetricsReport evaluate_records(std::span<const PredictionRecord> records);

/// CSV `subject_id,interval,sample_idx,predicted,truth`; '#' lines are comments.
std::vector<PredictionRecord> read_prediction_records(std::istream& in);
std::vector<PredictionRecord> read_prediction_records(const std::filesystem::path& path);
void write_prediction_records(std::ostream& out, std::span<const PredictionRecord> records,
                              std::string_view header_comment = {});

/// `key = value` lines; absent metrics are omitted.
void write_metrics(std::ostream& out, const MetricsReport& report);

} // namespace psr
