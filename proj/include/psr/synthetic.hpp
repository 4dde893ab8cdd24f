#pragma once

#include <cstddef>
#include <cstdint>

#include "psr/data_model.hpp"
#include "psr/labeling.hpp"

namespace psr {

/**
 * Oracle data with a learnable feature-to-label map. Each subject draws a
 * lifetime L uniformly in [lifetime_min, lifetime_max]; its latent health is
 * h(t) = Y(t; theta(L)) / scale under `health`, and the features are a fixed
 * random linear mix of [h, h^2, 1] plus Gaussian noise.
 */
struct SyntheticSpec {
    std::size_t subjects = 20;
    std::size_t lifetime_min = 120;
    std::size_t lifetime_max = 250;
    std::size_t variables = 5;
    std::uint64_t mixing_seed = 7;
    double noise = 0.0;
    /// Samples per interval, uniform in [samples_min, samples_max].
    std::size_t samples_min = 1;
    std::size_t samples_max = 1;
    /// Fraction of the lifetime observed; 1 yields completed (training) subjects.
    double observed_min = 1.0;
    double observed_max = 1.0;
    LabelingPolicy health = LabelingPolicy::weibull();

    void validate() const;
};

/// Samples carry the health-policy label and every subject carries
/// true_rul = L - T_i (zero for completed subjects).
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

} // namespace psr
