#pragma once

#include <string>
#include <string_view>

#include "psr/data_model.hpp"

namespace psr {

enum class LabelFamily { linear, piecewise_linear, weibull };

std::string_view to_string(LabelFamily family);
LabelFamily parse_label_family(std::string_view name);

/**
 * Parametric labeling function Y(t; theta).
 *
 *   linear            theta - t
 *   piecewise_linear  clamp(theta - t, 0, alpha)
 *   weibull           alpha * exp(-(t / theta)^beta)
 *
 * Only theta varies per subject; alpha and beta are fixed dataset-wide.
 */
struct LabelingFunction {
    LabelFamily family = LabelFamily::weibull;
    double alpha = 130.0;
    double beta = 5.0;
    double theta = 1.0;

    static LabelingFunction linear(double theta);
    static LabelingFunction piecewise_linear(double alpha, double theta);
    static LabelingFunction weibull(double alpha, double beta, double theta);

    LabelingFunction with_theta(double theta) const;

    double operator()(double t) const;

    /// dY/dtheta at t.
    double d_theta(double t) const;
};

double evaluate(const LabelingFunction& f, double t);

/// Family with fixed alpha/beta plus the rule theta_i = T_i / theta_divisor.
struct LabelingPolicy {
    LabelingFunction shape = LabelingFunction::weibull(130.0, 5.0, 1.0);
    double theta_divisor = 1.7;

    static LabelingPolicy weibull(double alpha = 130.0, double beta = 5.0, double theta_divisor = 1.7);
    static LabelingPolicy linear();
    static LabelingPolicy piecewise_linear(double alpha = 130.0);

    double theta_for(double lifetime) const;
    double lifetime_for(double theta) const { return theta * theta_divisor; }
    LabelingFunction for_lifetime(double lifetime) const { return shape.with_theta(theta_for(lifetime)); }
};

/// Labels every sample with Y(t; theta_rule(T_i)); samples of one interval share a label.
Dataset label_dataset(const Dataset& d, const LabelingPolicy& policy);

/// Clipping factor for the log-log domain guard: y is clipped to [eps*alpha, (1-eps)*alpha].
inline constexpr double kLoglogEpsilon = 1e-6;

/**
 * Linearizing transform of a Weibull label: returns -ln(-ln(y/alpha))/beta,
 * which equals ln(theta) - ln(t) for exact Weibull values. The companion
 * time coordinate is ln(t).
 */
double loglog_transform(double y, const LabelingFunction& weibull);

} // namespace psr
