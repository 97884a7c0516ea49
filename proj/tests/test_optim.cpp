// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_support.hpp"

using namespace wf;

namespace {

ParamSet<double> scalar_param(double value, double grad) {
    ParamSet<double> ps;
    auto& p = ps.add("p", Tensor<double>(Shape{1}, value));
    p.grad[0] = grad;
    return ps;
}

} // namespace

TEST(AdamW, ZeroGradientZeroDecayIsFixedPoint) {
    std::mt19937_64 gen(4);
    ParamSet<double> ps;
    ps.add("a", test::random_tensor(Shape{3, 3}, gen));
    const auto before = ps.get("a").value;
    AdamWState<double> st;
    for (int i = 0; i < 5; ++i) {
        ASSERT_TRUE(adamw_step(ps, st, AdamWConfig{1e-2, 0.9, 0.999, 1e-8, 0.0}).ok());
    }
    EXPECT_EQ(ps.get("a").value, before);
    EXPECT_EQ(st.step, 5u);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
    auto ps = scalar_param(1.0, 1.0);
    AdamWState<double> st;
    adamw_step(ps, st, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
    // m_hat = 1, v_hat = 1: p = 1 - 0.1 / (1 + 1e-8)
    EXPECT_NEAR(ps.get("p").value[0], 0.9, 1e-8);
    EXPECT_DOUBLE_EQ(ps.get("p").value[0], 1.0 - 0.1 / (1.0 + 1e-8));
}

TEST(AdamW, DecoupledDecayOnly) {
    auto ps = scalar_param(1.0, 0.0);
    AdamWState<double> st;
    adamw_step(ps, st, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.1});
    EXPECT_DOUBLE_EQ(ps.get("p").value[0], 0.99);
}

TEST(AdamW, SecondStepUsesBiasCorrection) {
    auto ps = scalar_param(0.0, 2.0);
    AdamWState<double> st;
    const AdamWConfig cfg{0.01, 0.8, 0.9, 1e-8, 0.0};
    adamw_step(ps, st, cfg);
    ps.get("p").grad[0] = -1.0;
    adamw_step(ps, st, cfg);
    // hand recursion
    double m = 0.2 * 2.0, v = 0.1 * 4.0, p = 0.0;
    p -= 0.01 * (m / 0.2) / (std::sqrt(v / 0.1) + 1e-8);
    m = 0.8 * m + 0.2 * -1.0;
    v = 0.9 * v + 0.1 * 1.0;
    p -= 0.01 * (m / (1 - 0.64)) / (std::sqrt(v / (1 - 0.81)) + 1e-8);
    EXPECT_NEAR(ps.get("p").value[0], p, 1e-15);
}

TEST(AdamW, ZeroLearningRateLeavesParameters) {
    auto ps = scalar_param(0.3, 5.0);
    AdamWState<double> st;
    adamw_step(ps, st, AdamWConfig{0.0, 0.9, 0.999, 1e-8, 0.01});
    EXPECT_EQ(ps.get("p").value[0], 0.3);
}

TEST(AdamW, NonFiniteGradientRejectsOnlyThatTensor) {
    ParamSet<double> ps;
    auto& a = ps.add("a", Tensor<double>(Shape{2}, 1.0));
    auto& b = ps.add("b", Tensor<double>(Shape{2}, 1.0));
    a.grad[1] = std::numeric_limits<double>::quiet_NaN();
    b.grad.fill(1.0);
    AdamWState<double> st;
    const auto status = adamw_step(ps, st, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
    ASSERT_FALSE(status.ok());
    ASSERT_EQ(status.rejected.size(), 1u);
    EXPECT_EQ(status.rejected[0], "a");
    EXPECT_EQ(ps.get("a").value[0], 1.0);
    EXPECT_LT(ps.get("b").value[0], 1.0);
    EXPECT_EQ(st.m.count("a"), 0u);
}

TEST(AdamW, NegativeLearningRateIsContractError) {
    auto ps = scalar_param(1.0, 1.0);
    AdamWState<double> st;
    EXPECT_THROW(adamw_step(ps, st, AdamWConfig{-1.0, 0.9, 0.999, 1e-8, 0.0}), ContractError);
}

TEST(AdamW, MomentShapeMismatchIsShapeError) {
    auto ps = scalar_param(1.0, 1.0);
    AdamWState<double> st;
    st.m["p"] = Tensor<double>(Shape{2});
    st.v["p"] = Tensor<double>(Shape{2});
    EXPECT_THROW(adamw_step(ps, st, AdamWConfig{}), ShapeError);
}
