#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "psr/data_model.hpp"

namespace psr::testing {

/// (interval, sample_idx, features)
using Row = std::tuple<std::size_t, std::size_t, std::vector<double>>;

inline SubjectSeries subject(std::string id, std::size_t latest, const std::vector<Row>& rows,
                             std::optional<double> true_rul = std::nullopt) {
    std::vector<Sample> samples;
    for (const auto& [t, s, x] : rows) {
        samples.push_back({t, s, x, std::nullopt});
    }
    return SubjectSeries(std::move(id), latest, std::move(samples), true_rul);
}

/// One sample per listed interval with a single feature equal to the interval.
inline SubjectSeries intervals_subject(std::string id, std::size_t latest, const std::vector<std::size_t>& ts) {
    std::vector<Row> rows;
    for (auto t : ts) {
        rows.emplace_back(t, 1, std::vector<double>{static_cast<double>(t)});
    }
    return subject(std::move(id), latest, rows);
}

} // namespace psr::testing
