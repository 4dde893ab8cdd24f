#pragma once

#include <cstddef>
#include <optional>
#include <utility>

#include "psr/labeling.hpp"
#include "psr/regressors.hpp"

namespace psr {

struct LMConfig {
    std::size_t max_iterations = 100;
    double initial_damping = 1e-3;
    double damping_up = 10.0;
    double damping_down = 0.1;
    /// Stop once an accepted step improves J by less than this relative amount.
    double convergence_tol = 1e-10;
    /// Overrides the data-dependent default bounds when set.
    std::optional<std::pair<double, double>> theta_bounds;
};

struct RectificationResult {
    double theta_hat = 0.0;
    double objective_value = 0.0;
    std::size_t iterations_used = 0;
    bool converged = false;
    LabelingFunction function;
};

/// J = (1/M) sum_j (y_hat_j - Y(t_j; theta))^2; `family` supplies alpha and beta.
double objective(double theta, const PosteriorEstimates& p, const LabelingFunction& family);

/**
 * Default search interval for theta given the subject's largest observed
 * interval t_max:
 *   linear / piecewise   [t_max, t_max + 2 * alpha_eff]
 *   weibull              [t_max / 10, 10 * t_max]
 * alpha_eff is the cap for piecewise-linear and max(1, max_j y_hat_j) for linear.
 */
std::pair<double, double> default_theta_bounds(const PosteriorEstimates& p, const LabelingFunction& family);

/// Closed-form warm start (median of y_hat + t for the linear families,
/// log-log intercept for Weibull), clamped to bounds.
double initialize_theta(const PosteriorEstimates& p, const LabelingFunction& family, const LMConfig& cfg = {});

/// Scalar Levenberg-Marquardt fit of theta to the posterior estimates.
RectificationResult fit_theta(const PosteriorEstimates& p, const LabelingFunction& family, const LMConfig& cfg = {});

/// max(0, Y(t; theta_hat)).
double rectify(const RectificationResult& result, double t);

} // namespace psr
