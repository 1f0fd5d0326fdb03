#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "smtm/errors.hpp"
#include "smtm/fixtures.hpp"
#include "smtm/priming_memory.hpp"

using namespace smtm;

namespace {

std::vector<std::vector<SemanticVector>> one_layer(std::vector<std::vector<float>> values) {
    std::vector<std::vector<SemanticVector>> out;
    for (auto& v : values) out.push_back({SemanticVector{1, std::move(v)}});
    return out;
}

}  // namespace

TEST_CASE("warm-up means") {
    std::vector<std::size_t> ch = {2};
    std::vector<ClassId> labels = {0, 0};
    auto same = warm_up_from_vectors(1, ch, one_layer({{4, 6}, {4, 6}}), labels);
    CHECK(same.center(0, 1).values == std::vector<float>{4, 6});
    CHECK(same.center(0, 1).update_count == 2);
    auto mean = warm_up_from_vectors(1, ch, one_layer({{1, 1}, {3, 3}}), labels);
    CHECK(mean.center(0, 1).values == std::vector<float>{2, 2});

    WarmupOptions capped;
    capped.update_count_cap = 1;
    CHECK(warm_up_from_vectors(1, ch, one_layer({{1, 1}, {3, 3}}), labels, capped).center(0, 1).update_count == 1);

    std::vector<ClassId> missing;
    std::vector<ClassId> only_one = {1};
    auto partial = warm_up_from_vectors(3, ch, one_layer({{1, 1}}), only_one, {}, &missing);
    CHECK(missing == std::vector<ClassId>{0, 2});
    CHECK_FALSE(partial.class_initialized(0));
    CHECK(partial.class_initialized(1));

    std::vector<ClassId> bad = {5};
    CHECK_THROWS_AS(warm_up_from_vectors(3, ch, one_layer({{1, 1}}), bad), RangeError);
}

TEST_CASE("warm-up matches naive grouping on the fixture model") {
    auto model = fixture_model({4});
    std::mt19937_64 rng(12);
    std::vector<FeatureMap> samples;
    std::vector<ClassId> labels;
    for (int i = 0; i < 25; ++i) {
        samples.push_back(oracle::random_map({3, 32, 32}, rng, -2.0f, 2.0f));
        labels.push_back(static_cast<ClassId>(i % 5));
    }
    auto g = warm_up(model, samples, labels, 5);
    for (ClassId c = 0; c < 5; ++c) {
        for (std::size_t l = 1; l <= model.num_exit_points(); ++l) {
            std::vector<double> sum(model.exit_channels()[l - 1], 0.0);
            int count = 0;
            for (std::size_t i = 0; i < samples.size(); ++i) {
                if (labels[i] != c) continue;
                const auto sv = encode_all_exits(model, samples[i])[l - 1];
                for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += sv.values[k];
                ++count;
            }
            for (std::size_t k = 0; k < sum.size(); ++k) {
                CHECK(std::abs(g.center(c, l).values[k] - sum[k] / count) <= 1e-5);
            }
        }
    }
}

TEST_CASE("record_observation") {
    FrequencyTable ft(4);
    TimeStampTable ts(4, 30);
    record_observation(ft, ts, 2);
    CHECK(ft.counts == std::vector<double>{0, 0, 1, 0});
    CHECK(ts.absent == std::vector<std::uint64_t>{1, 1, 0, 1});
    record_observation(ft, ts, 2);
    record_observation(ft, ts, 2);
    CHECK(ft.counts[2] == 3);
    CHECK(ts.absent[2] == 0);
    CHECK_THROWS_AS(record_observation(ft, ts, 4), RangeError);

    // second class observed on fresh tables
    FrequencyTable f2(3);
    TimeStampTable t2(3, 30);
    record_observation(f2, t2, 1);
    CHECK(f2.counts == std::vector<double>{0, 1, 0});
    CHECK(t2.absent == std::vector<std::uint64_t>{1, 0, 1});

    std::mt19937_64 rng(1);
    FrequencyTable big(10);
    TimeStampTable bts(10, 30);
    for (int i = 0; i < 1000; ++i) record_observation(big, bts, static_cast<ClassId>(rng() % 10));
    CHECK(std::accumulate(big.counts.begin(), big.counts.end(), 0.0) == 1000.0);
}

TEST_CASE("scores and forgetting") {
    CHECK(class_score(8, 35, 30, 0.25) == 2.0);
    CHECK(class_score(8, 0, 30, 0.25) == 8.0);
    CHECK(class_score(8, 29, 30, 0.25) == 8.0);
    CHECK(class_score(0, 500, 30, 0.25) == 0.0);
    CHECK(class_score(8, 60, 30, 0.25) == 0.5);
    CHECK_THROWS_AS(class_score(1, 1, 0, 0.25), ConfigError);

    FrequencyTable ft(3);
    ft.counts = {8, 8, 0};
    TimeStampTable ts(3, 30);
    ts.absent = {35, 10, 99};
    apply_forgetting(ft, ts);
    CHECK(ft.counts == std::vector<double>{2, 8, 0});
}

TEST_CASE("adaptive cache size") {
    std::vector<double> s = {9.0, 0.5, 0.5};
    CHECK(adaptive_cache_size(s, 0.95, 1, 3) == 2);
    std::vector<double> single = {0, 4, 0, 0};
    CHECK(adaptive_cache_size(single, 0.95, 1, 4) == 1);
    CHECK(adaptive_cache_size(single, 0.95, 2, 4) == 2);
    std::vector<double> zeros(5, 0.0);
    CHECK(adaptive_cache_size(zeros, 0.95, 3, 5) == 3);
    CHECK_THROWS_AS(adaptive_cache_size(s, 0.95, 3, 2), ConfigError);

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::uniform_int_distribution<std::size_t> n_dist(1, 100);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = n_dist(rng);
        std::vector<double> scores(n);
        for (auto& v : scores) v = (rng() % 3 == 0) ? 0.0 : std::pow(u(rng), 3);
        const std::size_t kmin = std::min<std::size_t>(2, n);
        const double cl = 0.5 + 0.49 * (trial % 10) / 9.0;
        CHECK(adaptive_cache_size(scores, cl, kmin, n) == oracle::adaptive_k(scores, cl, kmin, n));
    }
}

TEST_CASE("select_fast_memory") {
    GlobalMemory g(3, {1});
    for (ClassId c = 0; c < 3; ++c) g.center(c, 1) = {c, 1, {1.0f}, 1};
    std::vector<double> s = {5, 5, 3};
    CHECK(select_fast_memory(g, s, 2).classes == std::vector<ClassId>{0, 1});
    std::vector<double> zero = {0, 0, 0};
    CHECK(select_fast_memory(g, zero, 2).empty());

    GlobalMemory partial(3, {1});
    partial.center(2, 1) = {2, 1, {1.0f}, 1};
    CHECK(select_fast_memory(partial, s, 3).classes == std::vector<ClassId>{2});

    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng() % 99;
        GlobalMemory big(n, {1});
        for (ClassId c = 0; c < n; ++c) big.center(c, 1) = {c, 1, {1.0f}, 1};
        std::vector<double> scores(n);
        for (auto& v : scores) v = static_cast<double>(rng() % 6);
        std::vector<ClassId> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](ClassId a, ClassId b) { return scores[a] > scores[b]; });
        std::vector<ClassId> want;
        for (auto c : order) {
            if (want.size() < 4 && scores[c] > 0) want.push_back(c);
        }
        CHECK(select_fast_memory(big, scores, 4).classes == want);
    }
}

TEST_CASE("update_centers") {
    GlobalMemory g(1, {2, 2, 2});
    for (std::size_t l = 1; l <= 3; ++l) g.center(0, l) = {0, l, {2, 2}, 7};
    std::vector<SemanticVector> same = {{1, {2, 2}}};
    update_centers(g, 0, same);
    CHECK(g.center(0, 1).values == std::vector<float>{2, 2});
    CHECK(g.center(0, 1).update_count == 8);

    GlobalMemory h(1, {2, 2, 2});
    for (std::size_t l = 1; l <= 3; ++l) h.center(0, l) = {0, l, {1, 1}, 3};
    const auto untouched = h.center(0, 3);
    std::vector<SemanticVector> two = {{1, {5, 1}}, {2, {5, 1}}};
    update_centers(h, 0, two);
    CHECK(h.center(0, 1).values == std::vector<float>{2, 1});
    CHECK(h.center(0, 1).update_count == 4);
    CHECK(h.center(0, 2).values == std::vector<float>{2, 1});
    CHECK(h.center(0, 3) == untouched);

    std::vector<SemanticVector> wrong = {{1, {5, 1, 0}}};
    CHECK_THROWS_AS(update_centers(h, 0, wrong), ShapeError);
}

TEST_CASE("center store round trip") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<float> u(-3.0f, 3.0f);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng() % 12;
        std::vector<std::size_t> ch(1 + rng() % 6);
        for (auto& c : ch) c = 1 + rng() % 40;
        GlobalMemory g(n, ch);
        for (ClassId c = 0; c < n; ++c) {
            if (rng() % 4 == 0) continue;
            for (std::size_t l = 1; l <= ch.size(); ++l) {
                for (auto& v : g.center(c, l).values) v = u(rng);
                g.center(c, l).update_count = rng() % 1000 + 1;
            }
        }
        const auto bytes = serialize_centers(g);
        CHECK(deserialize_centers(bytes) == g);
        CHECK_THROWS_AS(deserialize_centers(bytes.substr(0, bytes.size() - 1)), SizeError);
    }
    CHECK_THROWS_AS(deserialize_centers("SMTMXXXX"), ParseError);
}
