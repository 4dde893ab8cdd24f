#include "psr/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace psr {

std::string_view to_string(LabelFamily family) {
    switch (family) {
    case LabelFamily::linear:
        return "linear";
    case LabelFamily::piecewise_linear:
        return "piecewise_linear";
    case LabelFamily::weibull:
        return "weibull";
    }
    return "?";
}

LabelFamily parse_label_family(std::string_view name) {
    if (name == "linear") return LabelFamily::linear;
    if (name == "piecewise_linear" || name == "piecewise") return LabelFamily::piecewise_linear;
    if (name == "weibull") return LabelFamily::weibull;
    throw std::invalid_argument(fmt::format("unknown labeling family '{}'", name));
}

LabelingFunction LabelingFunction::linear(double theta) {
    if (!(theta > 0.0)) {
        throw std::invalid_argument("linear labeling requires theta > 0");
    }
    return {LabelFamily::linear, 0.0, 0.0, theta};
}

LabelingFunction LabelingFunction::piecewise_linear(double alpha, double theta) {
    if (!(theta > 0.0) || !(alpha > 0.0)) {
        throw std::invalid_argument("piecewise-linear labeling requires alpha > 0 and theta > 0");
    }
    return {LabelFamily::piecewise_linear, alpha, 0.0, theta};
}

LabelingFunction LabelingFunction::weibull(double alpha, double beta, double theta) {
    if (!(alpha > 0.0) || !(beta > 0.0) || !(theta > 0.0)) {
        throw std::invalid_argument("Weibull labeling requires alpha, beta, theta > 0");
    }
    return {LabelFamily::weibull, alpha, beta, theta};
}

LabelingFunction LabelingFunction::with_theta(double new_theta) const {
    switch (family) {
    case LabelFamily::linear:
        return linear(new_theta);
    case LabelFamily::piecewise_linear:
        return piecewise_linear(alpha, new_theta);
    case LabelFamily::weibull:
        return weibull(alpha, beta, new_theta);
    }
    throw std::logic_error("unreachable");
}

double LabelingFunction::operator()(double t) const {
    switch (family) {
    case LabelFamily::linear:
        return theta - t;
    case LabelFamily::piecewise_linear:
        return std::clamp(theta - t, 0.0, alpha);
    case LabelFamily::weibull:
        return alpha * std::exp(-std::pow(t / theta, beta));
    }
    return 0.0;
}

double LabelingFunction::d_theta(double t) const {
    switch (family) {
    case LabelFamily::linear:
        return 1.0;
    case LabelFamily::piecewise_linear: {
        const double r = theta - t;
        return (r > 0.0 && r < alpha) ? 1.0 : 0.0;
    }
    case LabelFamily::weibull: {
        const double z = std::pow(t / theta, beta);
        return alpha * std::exp(-z) * beta * z / theta;
    }
    }
    return 0.0;
}

double evaluate(const LabelingFunction& f, double t) { return f(t); }

LabelingPolicy LabelingPolicy::weibull(double alpha, double beta, double theta_divisor) {
    if (!(theta_divisor > 0.0)) {
        throw std::invalid_argument("theta_divisor must be positive");
    }
    return {LabelingFunction::weibull(alpha, beta, 1.0), theta_divisor};
}

LabelingPolicy LabelingPolicy::linear() { return {LabelingFunction::linear(1.0), 1.0}; }

LabelingPolicy LabelingPolicy::piecewise_linear(double alpha) {
    return {LabelingFunction::piecewise_linear(alpha, 1.0), 1.0};
}

double LabelingPolicy::theta_for(double lifetime) const {
    if (!(theta_divisor > 0.0)) {
        throw std::invalid_argument("theta_divisor must be positive");
    }
    return lifetime / theta_divisor;
}

Dataset label_dataset(const Dataset& d, const LabelingPolicy& policy) {
    std::vector<SubjectSeries> subjects;
    subjects.reserve(d.subject_count());
    for (const auto& subject : d.subjects()) {
        if (subject.latest_interval() < 1) {
            throw DataError(fmt::format("subject {} has no latest interval", subject.subject_id()));
        }
        const auto f = policy.for_lifetime(static_cast<double>(subject.latest_interval()));
        std::vector<Sample> samples = subject.samples();
        for (auto& s : samples) {
            s.label = f(static_cast<double>(s.interval));
        }
        subjects.push_back(subject.with_samples(std::move(samples)));
    }
    return Dataset(std::move(subjects), d.num_variables(), d.normalization());
}

double loglog_transform(double y, const LabelingFunction& weibull) {
    if (weibull.family != LabelFamily::weibull) {
        throw std::invalid_argument("loglog_transform requires a Weibull labeling function");
    }
    const double a = weibull.alpha;
    const double clipped = std::clamp(y, kLoglogEpsilon * a, (1.0 - kLoglogEpsilon) * a);
    return -std::log(-std::log(clipped / a)) / weibull.beta;
}

} // namespace psr
