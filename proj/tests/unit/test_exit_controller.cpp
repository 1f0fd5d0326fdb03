#include <cmath>
#include <random>

#include "doctest.h"

#include "smtm/errors.hpp"
#include "smtm/exit_controller.hpp"

using namespace smtm;

namespace {

SimilarityRow row(std::size_t layer, std::vector<std::pair<ClassId, double>> entries) {
    return {layer, std::move(entries)};
}

}  // namespace

TEST_CASE("init_cumulative") {
    std::vector<ClassId> two = {4, 9};
    auto s = init_cumulative(two);
    CHECK(s.accumulators == std::vector<double>{0.0, 0.0});
    CHECK(s.layers_seen == 0);
    CHECK_THROWS_AS(init_cumulative(std::vector<ClassId>{}), ArityError);
    std::vector<ClassId> many(100);
    for (ClassId i = 0; i < 100; ++i) many[i] = i;
    CHECK(init_cumulative(many).accumulators == std::vector<double>(100, 0.0));
}

TEST_CASE("accumulate worked example") {
    std::vector<ClassId> one = {0, 1};
    auto s = init_cumulative(one);
    accumulate(s, row(1, {{0, 0.5}, {1, 0.0}}));
    accumulate(s, row(2, {{0, 0.8}, {1, 0.0}}));
    CHECK(s.accumulators[0] == doctest::Approx(1.05));
    CHECK(s.accumulators[0] * 2.0 == doctest::Approx(0.5 * 1 + 0.8 * 2));
    CHECK(s.accumulators[1] == 0.0);
    CHECK_THROWS_AS(accumulate(s, row(3, {{1, 0.2}, {0, 0.1}})), IntegrityError);
}

TEST_CASE("normalized accumulation matches direct weighted sums") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> size(2, 8);
    for (int stream = 0; stream < 1000; ++stream) {
        const int n = size(rng);
        std::vector<ClassId> cands(n);
        for (int i = 0; i < n; ++i) cands[i] = static_cast<ClassId>(i * 3);
        auto s = init_cumulative(cands);
        std::vector<double> direct(n, 0.0);
        for (int l = 1; l <= 20; ++l) {
            SimilarityRow r{static_cast<std::size_t>(l), {}};
            for (int i = 0; i < n; ++i) {
                const double v = u(rng);
                r.entries.emplace_back(cands[i], v);
                direct[i] += v * std::ldexp(1.0, l - 1);
            }
            accumulate(s, r);
            const double scale = std::ldexp(1.0, l - 1);
            for (int i = 0; i < n; ++i) {
                const double rebuilt = s.accumulators[i] * scale;
                CHECK(std::abs(rebuilt - direct[i]) <= 1e-6 * std::max(1.0, std::abs(direct[i])));
            }
            const auto naive = std::max_element(direct.begin(), direct.end()) - direct.begin();
            const auto fast = std::max_element(s.accumulators.begin(), s.accumulators.end()) - s.accumulators.begin();
            CHECK(naive == fast);
        }
    }
}

TEST_CASE("all-zero rows keep accumulators at zero") {
    std::vector<ClassId> c = {0, 1, 2};
    auto s = init_cumulative(c);
    for (std::size_t l = 1; l <= 6; ++l) accumulate(s, row(l, {{0, 0.0}, {1, 0.0}, {2, 0.0}}));
    CHECK(s.accumulators == std::vector<double>(3, 0.0));
}

namespace {

CumulativeState with_values(std::vector<double> acc) {
    CumulativeState s;
    for (std::size_t i = 0; i < acc.size(); ++i) s.candidates.push_back(static_cast<ClassId>(i));
    s.accumulators = std::move(acc);
    s.layers_seen = 2;
    return s;
}

}  // namespace

TEST_CASE("accumulated confidence") {
    auto ac = accumulated_confidence(with_values({1.05, 0.35}));
    CHECK(ac.kind == Confidence::Kind::Finite);
    CHECK(ac.value == doctest::Approx(2.0));
    CHECK(accumulated_confidence(with_values({0.4, 0.4})).value == 0.0);
    CHECK(accumulated_confidence(with_values({0.5, -0.1})).kind == Confidence::Kind::Infinite);
    CHECK(accumulated_confidence(with_values({-0.5, -0.1})).kind == Confidence::Kind::None);
    CHECK_THROWS_AS(accumulated_confidence(with_values({0.5})), ArityError);
    auto fresh = with_values({0.5, 0.1});
    fresh.layers_seen = 0;
    CHECK_THROWS_AS(accumulated_confidence(fresh), ArityError);
}

TEST_CASE("decide") {
    auto exit = decide(with_values({0.35, 1.05}), 1.0);
    CHECK(exit.exit);
    CHECK(exit.class_id == 1);
    CHECK(exit.exit_layer == 2);
    auto stay = decide(with_values({0.75, 0.5}), 1.0);
    CHECK_FALSE(stay.exit);
    CHECK(stay.confidence.value == doctest::Approx(0.5));
    CHECK(decide(with_values({1.0, 0.5}), 1.0).exit);  // AC == tau exits

    const double inf = std::numeric_limits<double>::infinity();
    CHECK(decide(with_values({0.5, -0.1}), 1e9).exit);
    CHECK_FALSE(decide(with_values({0.5, -0.1}), inf).exit);
    CHECK_FALSE(decide(with_values({-0.5, -0.1}), 0.0).exit);
    CHECK_FALSE(decide(with_values({0.9}), 0.0).exit);

    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 200; ++i) CHECK_FALSE(decide(with_values({u(rng), u(rng), u(rng)}), inf).exit);
}

TEST_CASE("ties resolve to the smaller class id") {
    auto s = with_values({0.8, 0.8, 0.1});
    s.candidates = {7, 2, 5};
    auto d = decide(s, 0.0);
    CHECK(d.exit);
    CHECK(d.class_id == 2);
}
