#include "psr/rectification.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace psr {
namespace {

void require_estimates(const PosteriorEstimates& p) {
    if (p.estimates.empty() || p.estimates.size() != p.intervals.size()) {
        throw std::invalid_argument("rectification needs a non-empty, aligned set of posterior estimates");
    }
}

double max_interval(const PosteriorEstimates& p) {
    return static_cast<double>(*std::max_element(p.intervals.begin(), p.intervals.end()));
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::pair<double, double> bounds_for(const PosteriorEstimates& p, const LabelingFunction& family, const LMConfig& cfg) {
    const auto b = cfg.theta_bounds ? *cfg.theta_bounds : default_theta_bounds(p, family);
    if (!(b.first > 0.0) || !(b.second >= b.first)) {
        throw std::invalid_argument("theta bounds must satisfy 0 < lower <= upper");
    }
    return b;
}

} // namespace

double objective(double theta, const PosteriorEstimates& p, const LabelingFunction& family) {
    require_estimates(p);
    const auto f = family.with_theta(theta);
    double sum = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double r = p.estimates[j] - f(static_cast<double>(p.intervals[j]));
        sum += r * r;
    }
    return sum / static_cast<double>(p.size());
}

std::pair<double, double> default_theta_bounds(const PosteriorEstimates& p, const LabelingFunction& family) {
    require_estimates(p);
    const double t_max = std::max(1.0, max_interval(p));
    switch (family.family) {
    case LabelFamily::weibull:
        return {t_max / 10.0, 10.0 * t_max};
    case LabelFamily::piecewise_linear:
        return {t_max, t_max + 2.0 * family.alpha};
    case LabelFamily::linear: {
        const double top = *std::max_element(p.estimates.begin(), p.estimates.end());
        return {t_max, t_max + 2.0 * std::max(1.0, top)};
    }
    }
    throw std::logic_error("unreachable");
}

double initialize_theta(const PosteriorEstimates& p, const LabelingFunction& family, const LMConfig& cfg) {
    require_estimates(p);
    const auto [lo, hi] = bounds_for(p, family, cfg);
    double theta0 = 0.0;
    if (family.family == LabelFamily::weibull) {
        // y~ = ln(theta) - ln(t): the slope is fixed at -1, so the intercept is a mean
        double sum = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            sum += loglog_transform(p.estimates[j], family) + std::log(static_cast<double>(p.intervals[j]));
        }
        theta0 = std::exp(sum / static_cast<double>(p.size()));
    } else {
        std::vector<double> lifetimes(p.size());
        for (std::size_t j = 0; j < p.size(); ++j) {
            lifetimes[j] = p.estimates[j] + static_cast<double>(p.intervals[j]);
        }
        theta0 = median(std::move(lifetimes));
    }
    return std::clamp(theta0, lo, hi);
}

RectificationResult fit_theta(const PosteriorEstimates& p, const LabelingFunction& family, const LMConfig& cfg) {
    require_estimates(p);
    if (!(cfg.convergence_tol > 0.0)) {
        throw std::invalid_argument("convergence tolerance must be positive");
    }
    const auto [lo, hi] = bounds_for(p, family, cfg);
    double theta = initialize_theta(p, family, cfg);
    double j_cur = objective(theta, p, family);

    RectificationResult result;
    double damping = cfg.initial_damping;
    std::size_t iter = 0;
    bool converged = j_cur == 0.0;
    while (!converged && iter < cfg.max_iterations) {
        ++iter;
        const auto f = family.with_theta(theta);
        double jtj = 0.0;
        double jtr = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double t = static_cast<double>(p.intervals[j]);
            const double d = f.d_theta(t);
            jtj += d * d;
            jtr += d * (p.estimates[j] - f(t));
        }
        if (!(jtj > 0.0) || !std::isfinite(jtj)) {
            if (iter == 1) {
                // vanishing Jacobian at the warm start: nothing to fit
                result.theta_hat = theta;
                result.objective_value = j_cur;
                result.iterations_used = 0;
                result.converged = false;
                result.function = f;
                return result;
            }
            break;
        }

        bool accepted = false;
        while (!accepted && damping < 1e16) {
            const double candidate = std::clamp(theta + jtr / (jtj * (1.0 + damping)), lo, hi);
            if (candidate == theta) {
                // pinned at a bound or the step underflowed
                converged = true;
                break;
            }
            const double j_new = objective(candidate, p, family);
            if (j_new < j_cur) {
                const double improvement = (j_cur - j_new) / std::max(j_cur, 1e-300);
                theta = candidate;
                j_cur = j_new;
                damping = std::max(damping * cfg.damping_down, 1e-12);
                accepted = true;
                converged = improvement < cfg.convergence_tol || j_cur == 0.0;
            } else {
                damping *= cfg.damping_up;
            }
        }
        if (!accepted) {
            // no improving step exists at any damping: local minimum
            converged = true;
        }
    }

    result.theta_hat = theta;
    result.objective_value = j_cur;
    result.iterations_used = iter;
    result.converged = converged;
    result.function = family.with_theta(theta);
    return result;
}

double rectify(const RectificationResult& result, double t) { return std::max(0.0, result.function(t)); }

} // namespace psr
