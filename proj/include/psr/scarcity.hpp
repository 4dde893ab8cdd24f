#pragma once

#include <cstddef>
#include <cstdint>

#include "psr/data_model.hpp"

namespace psr {

struct ScarcityConfig {
    /// Fraction of samples REMOVED per subject; 0.7 keeps 30%.
    double scarcity_fraction = 0.0;
    std::uint64_t seed = 0;
    /// Always retain the subject's last sample (max interval, then max sample_idx).
    bool keep_last = false;
};

/// Number of samples kept out of `m`: max(1, round((1 - p) * m)).
std::size_t retained_count(std::size_t m, double scarcity_fraction);

/// Per-subject uniform subsampling without replacement. T_i is unchanged.
Dataset scarcify(const Dataset& d, const ScarcityConfig& cfg);

} // namespace psr
