#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "psr/scarcity.hpp"

using namespace psr;
using psr::testing::Row;
using psr::testing::subject;

namespace {

SubjectSeries numbered_subject(std::string id, std::size_t m) {
    std::vector<Row> rows;
    for (std::size_t t = 1; t <= m; ++t) rows.emplace_back(t, 1, std::vector<double>{static_cast<double>(t)});
    return subject(std::move(id), m, rows);
}

bool same_samples(const SubjectSeries& a, const SubjectSeries& b) {
    if (a.sample_count() != b.sample_count()) return false;
    for (std::size_t k = 0; k < a.sample_count(); ++k) {
        const auto& x = a.samples()[k];
        const auto& y = b.samples()[k];
        if (x.interval != y.interval || x.sample_idx != y.sample_idx || x.features != y.features) return false;
    }
    return true;
}

} // namespace

TEST_CASE("retained count") {
    CHECK(retained_count(200, 0.9) == 20);
    CHECK(retained_count(50, 0.99) == 1);
    CHECK(retained_count(10, 0.0) == 10);
    CHECK(retained_count(10, 0.5) == 5);
    CHECK(retained_count(3, 0.5) == 2); // round half away from zero
}

TEST_CASE("zero scarcity is the identity") {
    const Dataset d({numbered_subject("a", 17), numbered_subject("b", 4)}, 1);
    const auto s = scarcify(d, {0.0, 9, false});
    for (std::size_t i = 0; i < 2; ++i) CHECK(same_samples(d.subjects()[i], s.subjects()[i]));
}

TEST_CASE("exact per-subject counts and unchanged latest interval") {
    const Dataset d({numbered_subject("a", 200), numbered_subject("b", 50)}, 1);
    const auto s = scarcify(d, {0.9, 1, false});
    CHECK(s.subjects()[0].sample_count() == 20);
    CHECK(s.subjects()[1].sample_count() == 5);
    CHECK(s.subjects()[0].latest_interval() == 200);
    const auto one = scarcify(d, {0.99, 1, false});
    CHECK(one.subjects()[1].sample_count() == 1);
}

TEST_CASE("retained samples are an unmodified subset") {
    const Dataset d({numbered_subject("a", 100)}, 1);
    const auto s = scarcify(d, {0.7, 3, false});
    std::set<std::size_t> seen;
    for (const auto& x : s.subjects()[0].samples()) {
        CHECK(x.features[0] == static_cast<double>(x.interval));
        CHECK(seen.insert(x.interval).second);
    }
    CHECK(categorize(s) == SeriesCategory::SSTS);
}

TEST_CASE("keep_last retains the lexicographically last sample") {
    const Dataset d({subject("a", 5, {{1, 1, {0}}, {5, 1, {1}}, {5, 2, {2}}, {3, 1, {3}}})}, 1);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto s = scarcify(d, {0.9, seed, true});
        REQUIRE(s.subjects()[0].sample_count() == 1);
        CHECK(s.subjects()[0].samples()[0].interval == 5);
        CHECK(s.subjects()[0].samples()[0].sample_idx == 2);
    }
}

TEST_CASE("deterministic given the seed, different across seeds") {
    const Dataset d({numbered_subject("a", 100), numbered_subject("b", 80)}, 1);
    const auto a = scarcify(d, {0.5, 42, false});
    const auto b = scarcify(d, {0.5, 42, false});
    const auto c = scarcify(d, {0.5, 43, false});
    CHECK(same_samples(a.subjects()[0], b.subjects()[0]));
    CHECK(same_samples(a.subjects()[1], b.subjects()[1]));
    CHECK_FALSE(same_samples(a.subjects()[0], c.subjects()[0]));
}

TEST_CASE("invalid fraction") {
    const Dataset d({numbered_subject("a", 5)}, 1);
    CHECK_THROWS_AS(scarcify(d, {1.0, 0, false}), std::invalid_argument);
    CHECK_THROWS_AS(scarcify(d, {-0.1, 0, false}), std::invalid_argument);
}

TEST_CASE("property: retention is uniform over samples") {
    const std::size_t m = 10;
    const double p = 0.7;
    const Dataset d({numbered_subject("a", m)}, 1);
    const std::size_t k = retained_count(m, p);
    const int trials = 10000;
    std::vector<int> hits(m, 0);
    for (int trial = 0; trial < trials; ++trial) {
        const auto s = scarcify(d, {p, static_cast<std::uint64_t>(trial), false});
        for (const auto& x : s.subjects()[0].samples()) ++hits[x.interval - 1];
    }
    const double q = static_cast<double>(k) / static_cast<double>(m);
    const double se = std::sqrt(q * (1 - q) / trials);
    for (std::size_t j = 0; j < m; ++j) {
        const double freq = static_cast<double>(hits[j]) / trials;
        CHECK(std::abs(freq - q) <= 3 * se);
    }
}
