#include "psr/scarcity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "psr/rng.hpp"

namespace psr {

std::size_t retained_count(std::size_t m, double scarcity_fraction) {
    const auto k = static_cast<std::size_t>(std::llround((1.0 - scarcity_fraction) * static_cast<double>(m)));
    return std::min(m, std::max<std::size_t>(1, k));
}

Dataset scarcify(const Dataset& d, const ScarcityConfig& cfg) {
    if (!(cfg.scarcity_fraction >= 0.0 && cfg.scarcity_fraction < 1.0)) {
        throw std::invalid_argument(fmt::format("scarcity fraction must be in [0, 1), got {}", cfg.scarcity_fraction));
    }
    const Rng root(cfg.seed);
    std::vector<SubjectSeries> subjects;
    subjects.reserve(d.subject_count());
    for (std::size_t i = 0; i < d.subject_count(); ++i) {
        const auto& subject = d.subjects()[i];
        const auto& samples = subject.samples();
        const std::size_t m = samples.size();
        if (m == 0) {
            throw DataError(fmt::format("subject {} has no samples to subsample", subject.subject_id()));
        }
        const std::size_t k = retained_count(m, cfg.scarcity_fraction);
        if (k == m) {
            subjects.push_back(subject);
            continue;
        }
        Rng rng = root.derive(i);
        std::vector<std::size_t> pool(m);
        std::iota(pool.begin(), pool.end(), 0);
        std::size_t fixed = 0;
        if (cfg.keep_last) {
            // samples are sorted, so the last index is the lexicographic maximum
            std::swap(pool[0], pool[m - 1]);
            fixed = 1;
        }
        // partial Fisher-Yates over the unfixed tail
        for (std::size_t j = fixed; j < k; ++j) {
            const std::size_t pick = j + rng.uniform_index(m - j);
            std::swap(pool[j], pool[pick]);
        }
        pool.resize(k);
        std::sort(pool.begin(), pool.end());
        std::vector<Sample> kept;
        kept.reserve(k);
        for (auto idx : pool) {
            kept.push_back(samples[idx]);
        }
        subjects.push_back(subject.with_samples(std::move(kept)));
    }
    return Dataset(std::move(subjects), d.num_variables(), d.normalization());
}

} // namespace psr
