#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "psr/labeling.hpp"

using namespace psr;
using doctest::Approx;

TEST_CASE("evaluate") {
    const auto w = LabelingFunction::weibull(130, 5, 100);
    CHECK(w(0.0) == 130.0);
    CHECK(w(100.0) == Approx(130.0 / std::exp(1.0)).epsilon(1e-12));
    CHECK(LabelingFunction::linear(206)(6.0) == 200.0);
    CHECK(LabelingFunction::linear(10)(12.0) == -2.0);
    CHECK(LabelingFunction::piecewise_linear(130, 300)(10.0) == 130.0);
    CHECK(LabelingFunction::piecewise_linear(130, 300)(250.0) == 50.0);
    CHECK(LabelingFunction::piecewise_linear(130, 300)(310.0) == 0.0);
    CHECK(evaluate(w, 50.0) == w(50.0));
}

TEST_CASE("invalid parameters") {
    CHECK_THROWS_AS(LabelingFunction::weibull(0, 5, 100), std::invalid_argument);
    CHECK_THROWS_AS(LabelingFunction::weibull(130, -1, 100), std::invalid_argument);
    CHECK_THROWS_AS(LabelingFunction::weibull(130, 5, 0), std::invalid_argument);
    CHECK_THROWS_AS(LabelingFunction::linear(-3), std::invalid_argument);
    CHECK_THROWS_AS(parse_label_family("quadratic"), std::invalid_argument);
}

TEST_CASE("d_theta matches central differences") {
    const double h = 1e-6;
    for (const auto& f : {LabelingFunction::weibull(130, 5, 100), LabelingFunction::linear(80),
                          LabelingFunction::piecewise_linear(130, 200)}) {
        for (double t : {10.0, 60.0, 95.0, 140.0}) {
            const double fd = (f.with_theta(f.theta + h)(t) - f.with_theta(f.theta - h)(t)) / (2 * h);
            CHECK(f.d_theta(t) == Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("label dataset") {
    SUBCASE("weibull policy, T=170") {
        const Dataset d({testing::intervals_subject("a", 170, {1, 100, 170})}, 1);
        const auto l = label_dataset(d, LabelingPolicy::weibull());
        CHECK(l.subjects()[0].samples()[1].label.value() == Approx(130.0 / std::exp(1.0)).epsilon(1e-12));
        CHECK(l.subjects()[0].samples()[0].label.value() < 130.0);
    }
    SUBCASE("linear policy is zero at end of life") {
        const Dataset d({testing::intervals_subject("a", 50, {10, 50})}, 1);
        const auto l = label_dataset(d, LabelingPolicy::linear());
        CHECK(l.subjects()[0].samples()[0].label.value() == 40.0);
        CHECK(l.subjects()[0].samples()[1].label.value() == 0.0);
    }
    SUBCASE("samples of one interval share a label") {
        const Dataset d({testing::subject("a", 9, {{4, 1, {0.0}}, {4, 2, {1.0}}, {4, 3, {2.0}}})}, 1);
        const auto l = label_dataset(d, LabelingPolicy::weibull());
        const auto& s = l.subjects()[0].samples();
        CHECK(s[0].label == s[1].label);
        CHECK(s[1].label == s[2].label);
    }
}

TEST_CASE("theta rule") {
    const auto p = LabelingPolicy::weibull(130, 5, 1.7);
    CHECK(p.theta_for(170.0) == Approx(100.0));
    CHECK(p.lifetime_for(100.0) == Approx(170.0));
    CHECK(p.theta_for(200.0) > p.theta_for(199.0));
    CHECK(LabelingPolicy::linear().theta_for(77.0) == 77.0);
}

TEST_CASE("loglog transform") {
    const auto w = LabelingFunction::weibull(130, 5, 100);
    CHECK(loglog_transform(130.0 / std::exp(1.0), w) == Approx(0.0).epsilon(1e-12));
    // exact values lie on a line of slope -1 in (ln t, y~)
    const double y50 = loglog_transform(w(50), w);
    const double y100 = loglog_transform(w(100), w);
    const double y150 = loglog_transform(w(150), w);
    CHECK(std::abs((y100 - y50) / (std::log(100) - std::log(50)) + 1.0) < 1e-10);
    CHECK(std::abs((y150 - y100) / (std::log(150) - std::log(100)) + 1.0) < 1e-10);
    CHECK(std::isfinite(loglog_transform(0.0, w)));
    CHECK(std::isfinite(loglog_transform(130.0, w)));
    CHECK(std::isfinite(loglog_transform(-5.0, w)));
    CHECK_THROWS_AS(loglog_transform(1.0, LabelingFunction::linear(5)), std::invalid_argument);
}

TEST_CASE("property: weibull is decreasing into (0, alpha] and inverts through loglog") {
    for (double theta : {20.0, 100.0, 180.0}) {
        const auto w = LabelingFunction::weibull(130, 5, theta);
        double prev = w(0.0);
        CHECK(prev == 130.0);
        for (double t = theta / 50; t <= 3 * theta; t += theta / 50) {
            const double y = w(t);
            CHECK(y < prev);
            CHECK(y > 0.0);
            prev = y;
        }
        for (double t = theta / 10; t <= 1.5 * theta; t += theta / 20) {
            CHECK(std::abs(loglog_transform(w(t), w) - (std::log(theta) - std::log(t))) <= 1e-10);
        }
    }
}

TEST_CASE("property: piecewise with a huge cap equals linear below theta") {
    const auto pw = LabelingFunction::piecewise_linear(1e12, 150);
    const auto lin = LabelingFunction::linear(150);
    for (double t = 0; t <= 150; t += 7.5) CHECK(pw(t) == lin(t));
}
