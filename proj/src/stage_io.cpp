#include <algorithm>
#include <map>
#include <string>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <fmt/ranges.h>

#include "psr/experiment.hpp"
#include "text.hpp"

namespace psr {
namespace {

void expect_header(const std::vector<std::string_view>& fields, std::initializer_list<std::string_view> names,
                   std::size_t line_no) {
    if (fields.size() != names.size() || !std::equal(fields.begin(), fields.end(), names.begin())) {
        throw ParseError(fmt::format("line {}: expected header '{}'", line_no, fmt::join(names, ",")));
    }
}

} // namespace

std::string format_number(double v) { return fmt::format("{}", v); }

void write_posterior_csv(std::ostream& out, const std::vector<PosteriorEstimates>& posterior,
                         std::string_view header_comment) {
    text::write_comment(out, header_comment);
    for (const auto& p : posterior) {
        fmt::print(out, "#@subject={},latest_interval={}\n", p.subject_id, p.latest_interval);
    }
    out << "subject_id,interval,sample_idx,estimate\n";
    for (const auto& p : posterior) {
        for (std::size_t j = 0; j < p.size(); ++j) {
            fmt::print(out, "{},{},{},{}\n", p.subject_id, p.intervals[j], p.sample_indices[j],
                       format_number(p.estimates[j]));
        }
    }
}

std::vector<PosteriorEstimates> read_posterior_csv(std::istream& in) {
    std::vector<PosteriorEstimates> out;
    std::map<std::string, std::size_t, std::less<>> index;
    auto entry = [&](std::string_view id) -> PosteriorEstimates& {
        auto it = index.find(id);
        if (it == index.end()) {
            it = index.emplace(std::string(id), out.size()).first;
            out.emplace_back();
            out.back().subject_id = std::string(id);
        }
        return out[it->second];
    };

    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = text::trim(line);
        if (body.starts_with("#@")) {
            std::string_view id;
            std::size_t latest = 0;
            for (const auto kv : text::split(body.substr(2))) {
                const auto eq = kv.find('=');
                if (eq == std::string_view::npos) {
                    throw ParseError(fmt::format("line {}: malformed directive '{}'", line_no, kv));
                }
                const auto key = kv.substr(0, eq);
                const auto value = kv.substr(eq + 1);
                if (key == "subject") {
                    id = value;
                } else if (key == "latest_interval") {
                    latest = text::parse_number<std::size_t>(value, line_no);
                } else {
                    throw ParseError(fmt::format("line {}: unknown directive key '{}'", line_no, key));
                }
            }
            if (id.empty()) {
                throw ParseError(fmt::format("line {}: directive without subject", line_no));
            }
            entry(id).latest_interval = latest;
            continue;
        }
        if (body.empty() || body.starts_with('#')) {
            continue;
        }
        const auto fields = text::split(body);
        if (!header) {
            expect_header(fields, {"subject_id", "interval", "sample_idx", "estimate"}, line_no);
            header = true;
            continue;
        }
        if (fields.size() != 4) {
            throw ParseError(fmt::format("line {}: expected 4 fields, found {}", line_no, fields.size()));
        }
        auto& p = entry(fields[0]);
        p.intervals.push_back(text::parse_number<std::size_t>(fields[1], line_no));
        p.sample_indices.push_back(text::parse_number<std::size_t>(fields[2], line_no));
        p.estimates.push_back(text::parse_number<double>(fields[3], line_no));
    }
    for (auto& p : out) {
        std::vector<std::size_t> order(p.size());
        for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::tie(p.intervals[a], p.sample_indices[a]) < std::tie(p.intervals[b], p.sample_indices[b]);
        });
        PosteriorEstimates sorted;
        sorted.subject_id = p.subject_id;
        sorted.latest_interval = p.latest_interval;
        for (auto j : order) {
            sorted.estimates.push_back(p.estimates[j]);
            sorted.intervals.push_back(p.intervals[j]);
            sorted.sample_indices.push_back(p.sample_indices[j]);
        }
        if (sorted.latest_interval == 0 && !sorted.intervals.empty()) {
            sorted.latest_interval = sorted.intervals.back();
        }
        if (!sorted.intervals.empty() && sorted.intervals.back() > sorted.latest_interval) {
            throw DataError(fmt::format("subject {}: estimate at interval {} beyond latest interval {}",
                                        sorted.subject_id, sorted.intervals.back(), sorted.latest_interval));
        }
        p = std::move(sorted);
    }
    return out;
}

void write_interval_predictions(std::ostream& out, const std::vector<RectifiedSubject>& rectified,
                                std::string_view header_comment) {
    text::write_comment(out, header_comment);
    out << "subject_id,interval,predicted,theta\n";
    for (const auto& r : rectified) {
        for (std::size_t k = 0; k < r.predictions.size(); ++k) {
            fmt::print(out, "{},{},{},{}\n", r.subject_id, r.predictions[k].first,
                       format_number(r.predictions[k].second), format_number(r.thetas[k]));
        }
    }
}

std::vector<RectifiedRow> read_interval_predictions(std::istream& in) {
    std::vector<RectifiedRow> out;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = text::trim(line);
        if (body.empty() || body.starts_with('#')) {
            continue;
        }
        const auto fields = text::split(body);
        if (!header) {
            expect_header(fields, {"subject_id", "interval", "predicted", "theta"}, line_no);
            header = true;
            continue;
        }
        if (fields.size() != 4) {
            throw ParseError(fmt::format("line {}: expected 4 fields, found {}", line_no, fields.size()));
        }
        out.push_back({std::string(fields[0]), text::parse_number<std::size_t>(fields[1], line_no),
                       text::parse_number<double>(fields[2], line_no), text::parse_number<double>(fields[3], line_no)});
    }
    return out;
}

void write_diagnostics(std::ostream& out, const std::vector<SubjectDiagnostic>& diagnostics,
                       std::string_view header_comment) {
    text::write_comment(out, header_comment);
    out << "subject_id,theta_hat,J,iterations,converged\n";
    for (const auto& d : diagnostics) {
        fmt::print(out, "{},{},{},{},{}\n", d.subject_id, format_number(d.theta_hat), format_number(d.objective),
                   d.iterations, d.converged ? "true" : "false");
    }
}

} // namespace psr
