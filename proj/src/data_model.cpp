#include "psr/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace psr {
namespace {

constexpr std::size_t kCmapssColumns = 26;
constexpr std::size_t kCmapssFeatures = 24;

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

double parse_double(std::string_view token, std::size_t line_no) {
    double value = 0.0;
    const auto* end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw ParseError(fmt::format("line {}: cannot parse number '{}'", line_no, token));
    }
    return value;
}

std::size_t parse_positive(std::string_view token, std::size_t line_no, std::string_view what) {
    std::size_t value = 0;
    const auto* end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        // CMAPSS files store integers as "1.0000" in some mirrors.
        const double d = parse_double(token, line_no);
        if (d < 1.0 || d != std::floor(d)) {
            throw ParseError(fmt::format("line {}: {} must be a positive integer, got '{}'", line_no, what, token));
        }
        return static_cast<std::size_t>(d);
    }
    if (value == 0) {
        throw ParseError(fmt::format("line {}: {} must be >= 1", line_no, what));
    }
    return value;
}

bool sample_less(const Sample& a, const Sample& b) {
    return std::tie(a.interval, a.sample_idx) < std::tie(b.interval, b.sample_idx);
}

} // namespace

// ---------------------------------------------------------------------------
// SubjectSeries / Dataset

SubjectSeries::SubjectSeries(std::string subject_id, std::size_t latest_interval, std::vector<Sample> samples,
                             std::optional<double> true_rul)
    : subject_id_(std::move(subject_id)), latest_interval_(latest_interval), samples_(std::move(samples)),
      true_rul_(true_rul) {
    std::sort(samples_.begin(), samples_.end(), sample_less);
    for (std::size_t k = 0; k < samples_.size(); ++k) {
        const auto& s = samples_[k];
        if (s.interval < 1 || s.sample_idx < 1) {
            throw DataError(fmt::format("subject {}: interval and sample_idx must be >= 1", subject_id_));
        }
        if (s.interval > latest_interval_) {
            throw DataError(fmt::format("subject {}: sample at interval {} exceeds latest interval {}", subject_id_,
                                        s.interval, latest_interval_));
        }
        if (k > 0 && !sample_less(samples_[k - 1], s)) {
            throw DataError(fmt::format("subject {}: duplicate sample (interval {}, sample_idx {})", subject_id_,
                                        s.interval, s.sample_idx));
        }
    }
    if (latest_interval_ < 1) {
        throw DataError(fmt::format("subject {}: latest interval must be >= 1", subject_id_));
    }
}

std::vector<std::size_t> SubjectSeries::interval_counts() const {
    std::vector<std::size_t> counts(latest_interval_, 0);
    for (const auto& s : samples_) {
        ++counts[s.interval - 1];
    }
    return counts;
}

std::size_t SubjectSeries::last_sampled_interval() const {
    return samples_.empty() ? 0 : samples_.back().interval;
}

SubjectSeries SubjectSeries::with_samples(std::vector<Sample> samples) const {
    return SubjectSeries(subject_id_, latest_interval_, std::move(samples), true_rul_);
}

SubjectSeries SubjectSeries::with_true_rul(std::optional<double> true_rul) const {
    return SubjectSeries(subject_id_, latest_interval_, samples_, true_rul);
}

std::string_view to_string(SeriesCategory category) {
    switch (category) {
    case SeriesCategory::RSTS:
        return "RSTS";
    case SeriesCategory::RMTS:
        return "RMTS";
    case SeriesCategory::SSTS:
        return "SSTS";
    case SeriesCategory::SMTS:
        return "SMTS";
    }
    return "?";
}

Dataset::Dataset(std::vector<SubjectSeries> subjects, std::size_t num_variables,
                 std::optional<NormStats> normalization)
    : subjects_(std::move(subjects)), num_variables_(num_variables), normalization_(std::move(normalization)) {
    std::set<std::string_view> ids;
    for (const auto& subject : subjects_) {
        if (!ids.insert(subject.subject_id()).second) {
            throw DataError(fmt::format("duplicate subject id '{}'", subject.subject_id()));
        }
        for (const auto& s : subject.samples()) {
            if (s.features.size() != num_variables_) {
                throw DataError(fmt::format("subject {}: sample has {} features, dataset has {}", subject.subject_id(),
                                            s.features.size(), num_variables_));
            }
        }
    }
    if (normalization_ &&
        (normalization_->means.size() != num_variables_ || normalization_->stds.size() != num_variables_)) {
        throw DataError("normalization statistics do not match the number of variables");
    }
}

std::size_t Dataset::total_samples() const {
    std::size_t m = 0;
    for (const auto& s : subjects_) {
        m += s.sample_count();
    }
    return m;
}

std::size_t Dataset::max_interval() const {
    std::size_t t = 0;
    for (const auto& s : subjects_) {
        t = std::max(t, s.latest_interval());
    }
    return t;
}

bool Dataset::has_labels() const {
    for (const auto& subject : subjects_) {
        for (const auto& s : subject.samples()) {
            if (!s.label) {
                return false;
            }
        }
    }
    return total_samples() > 0;
}

const SubjectSeries* Dataset::find(std::string_view subject_id) const {
    for (const auto& s : subjects_) {
        if (s.subject_id() == subject_id) {
            return &s;
        }
    }
    return nullptr;
}

// ---------------------------------------------------------------------------
// CMAPSS

Dataset parse_cmapss(std::istream& in, Split split, std::istream* rul_in, const CmapssOptions& options) {
    std::vector<std::size_t> columns = options.feature_columns;
    if (columns.empty()) {
        for (std::size_t c = 0; c < kCmapssFeatures; ++c) {
            columns.push_back(c);
        }
    }
    for (auto c : columns) {
        if (c >= kCmapssFeatures) {
            throw DataError(fmt::format("feature column {} out of range (0..{})", c, kCmapssFeatures - 1));
        }
    }

    std::vector<std::size_t> unit_order;
    std::map<std::size_t, std::vector<Sample>> units;
    std::string line;
    std::size_t line_no = 0;
    std::vector<double> row(kCmapssColumns);
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        std::istringstream tokens(line);
        std::string token;
        std::size_t n = 0;
        while (tokens >> token) {
            if (n < kCmapssColumns) {
                row[n] = parse_double(token, line_no);
            }
            ++n;
        }
        if (n != kCmapssColumns) {
            throw ParseError(fmt::format("line {}: expected {} columns, found {}", line_no, kCmapssColumns, n));
        }
        if (row[0] < 1 || row[1] < 1 || row[0] != std::floor(row[0]) || row[1] != std::floor(row[1])) {
            throw ParseError(fmt::format("line {}: unit and cycle must be positive integers", line_no));
        }
        const auto unit = static_cast<std::size_t>(row[0]);
        const auto cycle = static_cast<std::size_t>(row[1]);
        auto [it, inserted] = units.try_emplace(unit);
        if (inserted) {
            unit_order.push_back(unit);
        }
        if (!it->second.empty() && it->second.back().interval >= cycle) {
            throw DataError(fmt::format("line {}: unit {} cycles are not increasing ({} after {})", line_no, unit,
                                        cycle, it->second.back().interval));
        }
        Sample s;
        s.interval = cycle;
        s.sample_idx = 1;
        s.features.reserve(columns.size());
        for (auto c : columns) {
            s.features.push_back(row[2 + c]);
        }
        it->second.push_back(std::move(s));
    }
    if (units.empty()) {
        throw DataError("no records");
    }

    std::vector<double> ruls;
    if (split == Split::test && rul_in != nullptr) {
        std::size_t rul_line = 0;
        while (std::getline(*rul_in, line)) {
            ++rul_line;
            const auto t = trim(line);
            if (!t.empty()) {
                ruls.push_back(parse_double(t, rul_line));
            }
        }
    }

    std::vector<SubjectSeries> subjects;
    subjects.reserve(unit_order.size());
    for (auto unit : unit_order) {
        auto& samples = units[unit];
        const auto latest = samples.back().interval;
        std::optional<double> rul;
        if (!ruls.empty()) {
            if (unit > ruls.size()) {
                throw DataError(fmt::format("RUL file has {} entries but unit {} is present", ruls.size(), unit));
            }
            rul = ruls[unit - 1];
        }
        subjects.emplace_back(std::to_string(unit), latest, std::move(samples), rul);
    }
    return Dataset(std::move(subjects), columns.size());
}

Dataset ingest_cmapss(const std::filesystem::path& path, Split split,
                      const std::optional<std::filesystem::path>& rul_path, const CmapssOptions& options) {
    std::ifstream in(path);
    if (!in) {
        throw DataError(fmt::format("cannot open {}", path.string()));
    }
    if (rul_path) {
        std::ifstream rul(*rul_path);
        if (!rul) {
            throw DataError(fmt::format("cannot open {}", rul_path->string()));
        }
        return parse_cmapss(in, split, &rul, options);
    }
    return parse_cmapss(in, split, nullptr, options);
}

// ---------------------------------------------------------------------------
// Canonical CSV

Dataset parse_canonical_csv(std::istream& in) {
    struct Meta {
        std::optional<std::size_t> latest;
        std::optional<double> true_rul;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<Sample>> rows;
    std::unordered_map<std::string, Meta> meta;
    auto touch = [&](const std::string& id) {
        if (!rows.count(id)) {
            rows.emplace(id, std::vector<Sample>{});
            order.push_back(id);
        }
    };

    std::string line;
    std::size_t line_no = 0;
    std::optional<std::size_t> num_vars;
    bool has_label = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty()) {
            continue;
        }
        if (text.starts_with("#@")) {
            std::string id;
            Meta m;
            for (auto field : split_csv(text.substr(2))) {
                const auto eq = field.find('=');
                if (eq == std::string_view::npos) {
                    throw ParseError(fmt::format("line {}: directive field '{}' is not key=value", line_no, field));
                }
                const auto key = trim(field.substr(0, eq));
                const auto value = trim(field.substr(eq + 1));
                if (key == "subject") {
                    id = std::string(value);
                } else if (key == "latest_interval") {
                    m.latest = parse_positive(value, line_no, "latest_interval");
                } else if (key == "true_rul") {
                    m.true_rul = parse_double(value, line_no);
                } else {
                    throw ParseError(fmt::format("line {}: unknown directive key '{}'", line_no, key));
                }
            }
            if (id.empty()) {
                throw ParseError(fmt::format("line {}: directive without subject", line_no));
            }
            touch(id);
            auto& existing = meta[id];
            if (m.latest) existing.latest = m.latest;
            if (m.true_rul) existing.true_rul = m.true_rul;
            continue;
        }
        if (text.starts_with('#')) {
            continue;
        }
        const auto fields = split_csv(text);
        if (!num_vars) {
            if (fields.size() < 4 || fields[0] != "subject_id" || fields[1] != "interval" ||
                fields[2] != "sample_idx") {
                throw ParseError(
                    fmt::format("line {}: expected header 'subject_id,interval,sample_idx,v1,...'", line_no));
            }
            has_label = fields.back() == "label";
            num_vars = fields.size() - 3 - (has_label ? 1 : 0);
            if (*num_vars == 0) {
                throw ParseError(fmt::format("line {}: header declares no feature columns", line_no));
            }
            continue;
        }
        const std::size_t expected = 3 + *num_vars + (has_label ? 1 : 0);
        if (fields.size() != expected) {
            throw DataError(
                fmt::format("line {}: ragged row with {} fields, header declares {}", line_no, fields.size(), expected));
        }
        const std::string id(fields[0]);
        if (id.empty()) {
            throw ParseError(fmt::format("line {}: empty subject_id", line_no));
        }
        Sample s;
        s.interval = parse_positive(fields[1], line_no, "interval");
        s.sample_idx = parse_positive(fields[2], line_no, "sample_idx");
        s.features.reserve(*num_vars);
        for (std::size_t v = 0; v < *num_vars; ++v) {
            s.features.push_back(parse_double(fields[3 + v], line_no));
        }
        if (has_label && !fields.back().empty()) {
            s.label = parse_double(fields.back(), line_no);
        }
        touch(id);
        rows[id].push_back(std::move(s));
    }
    if (!num_vars) {
        throw DataError("no records");
    }

    std::vector<SubjectSeries> subjects;
    subjects.reserve(order.size());
    for (const auto& id : order) {
        auto& samples = rows[id];
        std::size_t observed = 0;
        for (const auto& s : samples) {
            observed = std::max(observed, s.interval);
        }
        const auto& m = meta[id];
        const std::size_t latest = m.latest.value_or(observed);
        if (latest == 0) {
            throw DataError(fmt::format("subject {}: no samples and no latest_interval directive", id));
        }
        subjects.emplace_back(id, latest, std::move(samples), m.true_rul);
    }
    return Dataset(std::move(subjects), *num_vars);
}

Dataset ingest_canonical_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError(fmt::format("cannot open {}", path.string()));
    }
    return parse_canonical_csv(in);
}

void write_canonical_csv(std::ostream& out, const Dataset& d, std::string_view header_comment) {
    if (!header_comment.empty()) {
        std::istringstream lines{std::string(header_comment)};
        std::string line;
        while (std::getline(lines, line)) {
            fmt::print(out, "# {}\n", line);
        }
    }
    const bool labeled = d.has_labels();
    for (const auto& subject : d.subjects()) {
        fmt::print(out, "#@subject={},latest_interval={}", subject.subject_id(), subject.latest_interval());
        if (subject.true_rul()) {
            fmt::print(out, ",true_rul={}", *subject.true_rul());
        }
        out << '\n';
    }
    out << "subject_id,interval,sample_idx";
    for (std::size_t v = 1; v <= d.num_variables(); ++v) {
        fmt::print(out, ",v{}", v);
    }
    out << (labeled ? ",label\n" : "\n");
    for (const auto& subject : d.subjects()) {
        for (const auto& s : subject.samples()) {
            fmt::print(out, "{},{},{}", subject.subject_id(), s.interval, s.sample_idx);
            for (double x : s.features) {
                fmt::print(out, ",{}", x);
            }
            if (labeled) {
                fmt::print(out, ",{}", *s.label);
            }
            out << '\n';
        }
    }
}

void write_canonical_csv(const std::filesystem::path& path, const Dataset& d, std::string_view header_comment) {
    std::ofstream out(path);
    if (!out) {
        throw DataError(fmt::format("cannot write {}", path.string()));
    }
    write_canonical_csv(out, d, header_comment);
}

// ---------------------------------------------------------------------------
// Taxonomy, normalization, aggregation

SeriesCategory categorize(const Dataset& d) {
    bool any_empty = false;
    bool any_multi = false;
    for (const auto& subject : d.subjects()) {
        for (auto count : subject.interval_counts()) {
            any_empty = any_empty || count == 0;
            any_multi = any_multi || count > 1;
        }
    }
    if (any_empty) {
        return any_multi ? SeriesCategory::SMTS : SeriesCategory::SSTS;
    }
    return any_multi ? SeriesCategory::RMTS : SeriesCategory::RSTS;
}

NormStats fit_normalization(const Dataset& d) {
    const std::size_t m = d.total_samples();
    if (m < 2) {
        throw DataError(fmt::format("normalization needs at least 2 samples, dataset has {}", m));
    }
    const std::size_t v = d.num_variables();
    NormStats stats{std::vector<double>(v, 0.0), std::vector<double>(v, 0.0)};
    for (const auto& subject : d.subjects()) {
        for (const auto& s : subject.samples()) {
            for (std::size_t k = 0; k < v; ++k) {
                stats.means[k] += s.features[k];
            }
        }
    }
    for (auto& mu : stats.means) {
        mu /= static_cast<double>(m);
    }
    for (const auto& subject : d.subjects()) {
        for (const auto& s : subject.samples()) {
            for (std::size_t k = 0; k < v; ++k) {
                const double dev = s.features[k] - stats.means[k];
                stats.stds[k] += dev * dev;
            }
        }
    }
    for (auto& sd : stats.stds) {
        sd = std::sqrt(sd / static_cast<double>(m));
        if (!(sd > 0.0)) {
            sd = 1.0;
        }
    }
    return stats;
}

Dataset apply_normalization(const Dataset& d, const NormStats& stats) {
    const std::size_t v = d.num_variables();
    if (stats.means.size() != v || stats.stds.size() != v) {
        throw DataError(fmt::format("normalization has {} variables, dataset has {}", stats.means.size(), v));
    }
    std::vector<SubjectSeries> subjects;
    subjects.reserve(d.subject_count());
    for (const auto& subject : d.subjects()) {
        std::vector<Sample> samples = subject.samples();
        for (auto& s : samples) {
            for (std::size_t k = 0; k < v; ++k) {
                s.features[k] = (s.features[k] - stats.means[k]) / stats.stds[k];
            }
        }
        subjects.push_back(subject.with_samples(std::move(samples)));
    }
    return Dataset(std::move(subjects), v, stats);
}

Dataset mean_collapse(const Dataset& d) {
    const std::size_t v = d.num_variables();
    std::vector<SubjectSeries> subjects;
    subjects.reserve(d.subject_count());
    for (const auto& subject : d.subjects()) {
        std::vector<Sample> collapsed;
        const auto& samples = subject.samples();
        for (std::size_t a = 0; a < samples.size();) {
            std::size_t b = a;
            while (b < samples.size() && samples[b].interval == samples[a].interval) {
                ++b;
            }
            Sample mean;
            mean.interval = samples[a].interval;
            mean.sample_idx = 1;
            mean.features.assign(v, 0.0);
            double label_sum = 0.0;
            bool labeled = true;
            for (std::size_t k = a; k < b; ++k) {
                for (std::size_t j = 0; j < v; ++j) {
                    mean.features[j] += samples[k].features[j];
                }
                labeled = labeled && samples[k].label.has_value();
                label_sum += samples[k].label.value_or(0.0);
            }
            const double n = static_cast<double>(b - a);
            for (auto& x : mean.features) {
                x /= n;
            }
            if (labeled) {
                mean.label = label_sum / n;
            }
            collapsed.push_back(std::move(mean));
            a = b;
        }
        subjects.push_back(subject.with_samples(std::move(collapsed)));
    }
    return Dataset(std::move(subjects), v, d.normalization());
}

Dataset strip_labels(const Dataset& d) {
    std::vector<SubjectSeries> subjects;
    subjects.reserve(d.subject_count());
    for (const auto& subject : d.subjects()) {
        std::vector<Sample> samples = subject.samples();
        for (auto& s : samples) {
            s.label.reset();
        }
        subjects.emplace_back(subject.subject_id(), subject.latest_interval(), std::move(samples));
    }
    return Dataset(std::move(subjects), d.num_variables(), d.normalization());
}

} // namespace psr
