#include "psr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "psr/rng.hpp"

namespace psr {

void SyntheticSpec::validate() const {
    if (subjects == 0 || variables == 0) {
        throw std::invalid_argument("synthetic spec needs at least one subject and one variable");
    }
    if (lifetime_min < 2 || lifetime_max < lifetime_min) {
        throw std::invalid_argument("synthetic lifetimes need 2 <= lifetime_min <= lifetime_max");
    }
    if (!(noise >= 0.0)) {
        throw std::invalid_argument("synthetic noise must be >= 0");
    }
    if (samples_min == 0 || samples_max < samples_min) {
        throw std::invalid_argument("synthetic samples per interval need 1 <= samples_min <= samples_max");
    }
    if (!(observed_min > 0.0) || observed_max > 1.0 || observed_max < observed_min) {
        throw std::invalid_argument("synthetic observed fraction needs 0 < observed_min <= observed_max <= 1");
    }
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng mixing_rng(spec.mixing_seed);
    Eigen::MatrixXd mixing(spec.variables, 3);
    for (Eigen::Index c = 0; c < 3; ++c) {
        for (Eigen::Index r = 0; r < mixing.rows(); ++r) {
            mixing(r, c) = mixing_rng.normal();
        }
    }
    const double scale = spec.health.shape.family == LabelFamily::linear
                             ? static_cast<double>(spec.lifetime_max) / spec.health.theta_divisor
                             : spec.health.shape.alpha;

    const Rng root(seed);
    std::vector<SubjectSeries> subjects;
    subjects.reserve(spec.subjects);
    for (std::size_t i = 0; i < spec.subjects; ++i) {
        Rng rng = root.derive(i);
        const std::size_t lifetime = spec.lifetime_min + rng.uniform_index(spec.lifetime_max - spec.lifetime_min + 1);
        const double fraction = spec.observed_min + (spec.observed_max - spec.observed_min) * rng.uniform();
        const std::size_t latest = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(fraction * static_cast<double>(lifetime))), 1, lifetime);
        const auto health = spec.health.for_lifetime(static_cast<double>(lifetime));

        std::vector<Sample> samples;
        for (std::size_t t = 1; t <= latest; ++t) {
            const double label = health(static_cast<double>(t));
            const double h = label / scale;
            const Eigen::Vector3d basis(h, h * h, 1.0);
            const Eigen::VectorXd clean = mixing * basis;
            const std::size_t count = spec.samples_min + rng.uniform_index(spec.samples_max - spec.samples_min + 1);
            for (std::size_t s = 1; s <= count; ++s) {
                Sample sample;
                sample.interval = t;
                sample.sample_idx = s;
                sample.features.resize(spec.variables);
                for (std::size_t v = 0; v < spec.variables; ++v) {
                    sample.features[v] = clean[static_cast<Eigen::Index>(v)] +
                                         (spec.noise > 0.0 ? spec.noise * rng.normal() : 0.0);
                }
                sample.label = label;
                samples.push_back(std::move(sample));
            }
        }
        subjects.emplace_back(std::to_string(i + 1), latest, std::move(samples),
                              static_cast<double>(lifetime - latest));
    }
    return Dataset(std::move(subjects), spec.variables);
}

} // namespace psr
