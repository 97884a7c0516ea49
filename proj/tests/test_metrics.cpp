// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"

using namespace wf;
using metrics::Map;
using namespace wf::oracle;

namespace {

Map make_map(std::size_t h, std::size_t w, std::vector<double> v) { return Map{h, w, std::move(v)}; }

} // namespace

TEST(Metrics, MatchBruteForceOracles) {
    std::mt19937_64 gen(2026);
    for (int trial = 0; trial < 1000; ++trial) {
        const Map p = random_pred(gen, 16, 16);
        const Map g = random_gt(gen, 16, 16);
        ASSERT_NEAR(metrics::mae(p, g), ref_mae(p, g), 1e-9) << trial;
        ASSERT_NEAR(metrics::f_measure_mean(p, g), ref_f_mean(p, g), 1e-9) << trial;
        ASSERT_NEAR(metrics::s_measure(p, g), ref_s_measure(p, g), 1e-9) << trial;
        ASSERT_NEAR(metrics::e_measure_mean(p, g), ref_e_mean(p, g), 1e-9) << trial;
    }
}

TEST(Metrics, RangeOnRandomInputs) {
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t h = std::uniform_int_distribution<std::size_t>(1, 12)(gen);
        const std::size_t w = std::uniform_int_distribution<std::size_t>(1, 12)(gen);
        const Map p = random_pred(gen, h, w);
        const Map g = random_gt(gen, h, w);
        for (double v : {metrics::mae(p, g), metrics::f_measure_mean(p, g), metrics::s_measure(p, g),
                         metrics::e_measure_mean(p, g)}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        EXPECT_NEAR(metrics::s_measure(p, g), ref_s_measure(p, g), 1e-9);
    }
}

TEST(Metrics, PerfectPredictionFixpoints) {
    std::mt19937_64 gen(9);
    for (int trial = 0; trial < 100; ++trial) {
        Map g = random_gt(gen, 16, 16);
        if (metrics::gt_kind(g) != metrics::GtKind::mixed) {
            continue;
        }
        EXPECT_EQ(metrics::mae(g, g), 0.0);
        EXPECT_NEAR(metrics::s_measure(g, g), 1.0, 1e-6);
        EXPECT_EQ(metrics::e_measure_mean(g, g), 1.0);
        EXPECT_GE(metrics::f_measure_mean(g, g), 255.0 / 256.0);
    }
}

TEST(Metrics, HandExamples) {
    const Map zeros = make_map(4, 4, std::vector<double>(16, 0.0));
    const Map ones = make_map(4, 4, std::vector<double>(16, 1.0));
    EXPECT_EQ(metrics::mae(ones, zeros), 1.0);
    EXPECT_EQ(metrics::s_measure(zeros, zeros), 1.0);
    EXPECT_EQ(metrics::e_measure_mean(ones, zeros), 0.0);
    EXPECT_EQ(metrics::f_measure_mean(ones, zeros), 0.0);
    EXPECT_EQ(metrics::gt_kind(zeros), metrics::GtKind::all_background);
    EXPECT_EQ(metrics::gt_kind(ones), metrics::GtKind::all_foreground);

    // P = 0.5 everywhere, half the pixels foreground
    std::vector<double> half(256, 0.0);
    std::fill(half.begin(), half.begin() + 128, 1.0);
    const Map g = make_map(16, 16, half);
    const Map p = make_map(16, 16, std::vector<double>(256, 0.5));
    const double f = 1.3 * 0.5 / (0.3 * 0.5 + 1.0);
    EXPECT_NEAR(metrics::f_measure_mean(p, g), 128.0 / 256.0 * f, 1e-15);
}

TEST(Metrics, LevelCountingIsExactOnGridValues) {
    for (int k = 0; k < 256; ++k) {
        EXPECT_EQ(metrics::levels_reached(k / 255.0), k + 1);
        EXPECT_EQ(metrics::e_levels_reached((k + 1) / 256.0), k + 1);
        EXPECT_EQ(metrics::e_levels_reached(std::nextafter((k + 1) / 256.0, 0.0)), k);
    }
    EXPECT_EQ(metrics::levels_reached(0.0), 1);
    EXPECT_EQ(metrics::levels_reached(std::nextafter(1.0, 0.0)), 255);
}

TEST(Metrics, MaeIsMonotoneUnderFlips) {
    std::mt19937_64 gen(12);
    Map g = random_gt(gen, 16, 16);
    Map p = g;
    std::vector<std::size_t> order(p.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), gen);
    double last = metrics::mae(p, g);
    for (std::size_t i : order) {
        p.v[i] = 1.0 - g.v[i];
        const double now = metrics::mae(p, g);
        EXPECT_GE(now, last);
        last = now;
    }
    EXPECT_EQ(last, 1.0);
}

TEST(Metrics, InputContracts) {
    const Map a = make_map(2, 2, {0, 1, 0, 1});
    EXPECT_THROW(metrics::mae(a, make_map(1, 4, {0, 1, 0, 1})), ShapeError);
    EXPECT_THROW(metrics::mae(a, make_map(2, 2, {0, 0.5, 0, 1})), ContractError);
    EXPECT_THROW(metrics::mae(make_map(2, 2, {0, 1.5, 0, 1}), a), ContractError);
    EXPECT_THROW(metrics::as_map(Tensor<double>(Shape{3, 2, 2})), ShapeError);
    const auto m = metrics::as_map(Tensor<float>(Shape{1, 1, 2, 3}, 0.25f));
    EXPECT_EQ(m.h, 2u);
    EXPECT_EQ(m.w, 3u);
}

TEST(Metrics, AggregateAveragesAndCountsDegenerate) {
    const Map z = make_map(2, 2, {0, 0, 0, 0});
    const Map g = make_map(2, 2, {1, 0, 0, 0});
    const Map p = make_map(2, 2, {0.5, 0, 0, 0});
    const auto r = metrics::aggregate({metrics::score_image("a", p, g), metrics::score_image("b", p, z)});
    EXPECT_EQ(r.n_images, 2u);
    EXPECT_EQ(r.degenerate_gt, 1u);
    EXPECT_DOUBLE_EQ(r.mae, 0.5 * (metrics::mae(p, g) + metrics::mae(p, z)));
    EXPECT_DOUBLE_EQ(r.s_measure, 0.5 * (metrics::s_measure(p, g) + metrics::s_measure(p, z)));
    EXPECT_EQ(r.per_image[1].gt, metrics::GtKind::all_background);
}
