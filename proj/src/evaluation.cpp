#include "psr/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "psr/data_model.hpp"
#include "text.hpp"

namespace psr {
namespace {

double rmse(std::span<const PredictionRecord> records) {
    double sum = 0.0;
    for (const auto& r : records) {
        const double d = r.predicted - r.truth;
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(records.size()));
}

void require_one_per_subject(std::span<const PredictionRecord> records, std::string_view what) {
    std::set<std::string_view> seen;
    for (const auto& r : records) {
        if (!seen.insert(r.subject_id).second) {
            throw DataError(fmt::format("{}: subject '{}' has more than one record", what, r.subject_id));
        }
    }
}

using text::parse_number;
using text::trim;

} // namespace

double rmse_subject(std::span<const PredictionRecord> records) {
    if (records.empty()) {
        throw DataError("rmse_subject: no records");
    }
    require_one_per_subject(records, "rmse_subject");
    return rmse(records);
}

IntervalLevels rmse_interval_levels(std::span<const PredictionRecord> records) {
    std::vector<PredictionRecord> samples;
    std::vector<PredictionRecord> intervals;
    for (const auto& r : records) {
        (r.sample_idx ? samples : intervals).push_back(r);
    }
    IntervalLevels out;
    if (!samples.empty()) {
        out.rmse_ts = rmse(samples);
    }
    if (!intervals.empty()) {
        out.rmse_t = rmse(intervals);
        std::map<std::string, std::vector<PredictionRecord>> by_subject;
        for (const auto& r : intervals) {
            by_subject[r.subject_id].push_back(r);
        }
        double sum = 0.0;
        for (const auto& [id, recs] : by_subject) {
            sum += rmse(recs);
        }
        out.rmse_it = sum / static_cast<double>(by_subject.size());
    }
    return out;
}

double s_score(std::span<const PredictionRecord> records) {
    double score = 0.0;
    for (const auto& r : records) {
        const double delta = r.predicted - r.truth;
        score += delta < 0.0 ? std::exp(-delta / kUnderestimateScale) - 1.0 : std::exp(delta / kOverestimateScale) - 1.0;
    }
    return score;
}

MetricsReport evaluate_records(std::span<const PredictionRecord> records) {
    MetricsReport report;
    const auto levels = rmse_interval_levels(records);
    report.rmse_ts = levels.rmse_ts;
    report.rmse_t = levels.rmse_t;
    report.rmse_it = levels.rmse_it;

    std::vector<PredictionRecord> intervals;
    std::set<std::string_view> subjects;
    for (const auto& r : records) {
        subjects.insert(r.subject_id);
        if (r.sample_idx) {
            ++report.sample_count;
        } else {
            intervals.push_back(r);
        }
    }
    report.subject_count = subjects.size();
    report.interval_count = intervals.size();

    std::set<std::string_view> interval_subjects;
    for (const auto& r : intervals) {
        interval_subjects.insert(r.subject_id);
    }
    if (!intervals.empty() && interval_subjects.size() == intervals.size()) {
        report.rmse_i = rmse_subject(intervals);
        report.s_score = s_score(intervals);
    }
    return report;
}

std::vector<PredictionRecord> read_prediction_records(std::istream& in) {
    std::vector<PredictionRecord> out;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty() || body.starts_with('#')) {
            continue;
        }
        const auto fields = text::split(body);
        if (!header) {
            if (fields.size() != 5 || fields[0] != "subject_id" || fields[1] != "interval" ||
                fields[2] != "sample_idx" || fields[3] != "predicted" || fields[4] != "truth") {
                throw ParseError(fmt::format(
                    "line {}: expected header 'subject_id,interval,sample_idx,predicted,truth'", line_no));
            }
            header = true;
            continue;
        }
        if (fields.size() != 5) {
            throw ParseError(fmt::format("line {}: expected 5 fields, found {}", line_no, fields.size()));
        }
        PredictionRecord r;
        r.subject_id = std::string(fields[0]);
        r.interval = parse_number<std::size_t>(fields[1], line_no);
        if (!fields[2].empty()) {
            r.sample_idx = parse_number<std::size_t>(fields[2], line_no);
        }
        r.predicted = parse_number<double>(fields[3], line_no);
        r.truth = parse_number<double>(fields[4], line_no);
        if (!std::isfinite(r.predicted) || !std::isfinite(r.truth)) {
            throw DataError(fmt::format("line {}: predicted and truth must be finite", line_no));
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<PredictionRecord> read_prediction_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError(fmt::format("cannot open {}", path.string()));
    }
    return read_prediction_records(in);
}

void write_prediction_records(std::ostream& out, std::span<const PredictionRecord> records,
                              std::string_view header_comment) {
    text::write_comment(out, header_comment);
    out << "subject_id,interval,sample_idx,predicted,truth\n";
    for (const auto& r : records) {
        fmt::print(out, "{},{},{},{},{}\n", r.subject_id, r.interval,
                   r.sample_idx ? std::to_string(*r.sample_idx) : std::string(), r.predicted, r.truth);
    }
}

void write_metrics(std::ostream& out, const MetricsReport& report) {
    auto emit = [&](std::string_view key, const std::optional<double>& v) {
        if (v) fmt::print(out, "{} = {}\n", key, *v);
    };
    emit("rmse_i", report.rmse_i);
    emit("rmse_t", report.rmse_t);
    emit("rmse_it", report.rmse_it);
    emit("rmse_ts", report.rmse_ts);
    emit("s_score", report.s_score);
    fmt::print(out, "subjects = {}\nintervals = {}\nsamples = {}\n", report.subject_count, report.interval_count,
               report.sample_count);
}

} // namespace psr
