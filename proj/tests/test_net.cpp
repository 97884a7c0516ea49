// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace wf;

namespace {

std::size_t conv(std::size_t cin, std::size_t cout, std::size_t k) { return cout * cin * k * k + cout; }
std::size_t block(std::size_t cin, std::size_t cout) { return conv(cin, cout, 3) + 2 * cout; }

// Written out layer by layer from the architecture description.
std::size_t expected_params(const NetConfig& cfg) {
    const auto& c = cfg.channels;
    const auto& p = cfg.prior_channels;
    const std::size_t d = cfg.time_dim;
    std::size_t n = conv(3, c[0], 4) + conv(1, c[0], 4) + 2 * c[0] + conv(c[0], c[0], 3);
    for (std::size_t l = 1; l < 4; ++l) {
        n += conv(c[l - 1], c[l], 3) + 2 * c[l] + conv(c[l], c[l], 3);
    }
    n += d * d + d;
    for (std::size_t l = 0; l < 4; ++l) {
        n += 2 * (d * c[l] + c[l]) + block(c[l], c[l]) + block(c[l] + p[l], c[l]);
    }
    for (std::size_t l = 0; l < 3; ++l) {
        n += conv(c[l + 1], c[l], 1) + block(c[l], c[l]);
    }
    n += block(c[0] + 3, c[0]) + conv(c[0], 1, 3);
    for (std::size_t s = 0; s < 4; ++s) {
        n += block(stage_input_channels(cfg.stage_map, s), p[s]) + block(p[s], p[s]);
    }
    return n;
}

TrainItem<double> scene_item(std::uint64_t seed, std::size_t size) {
    const auto s = synth_scene<double>(Rng(seed), size, size, 0.5);
    const auto ex = extract_priors(s.scene.I, s.scene.z);
    return {s.scene.I, s.scene.G, stage_inputs(ex.stack, default_stage_map())};
}

} // namespace

TEST(NetConfig, Validation) {
    NetConfig c;
    EXPECT_NO_THROW(c.validate());
    c.image_size = 48;
    EXPECT_THROW(c.validate(), ConfigError);
    c = NetConfig{};
    c.time_dim = 7;
    EXPECT_THROW(c.validate(), ConfigError);
    c = NetConfig{};
    c.channels[2] = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = NetConfig{};
    c.stage_map[3].clear();
    EXPECT_THROW(c.validate(), ConfigError);
    c = NetConfig{};
    c.backbone = "resnet";
    EXPECT_THROW(VectorField{c}, ConfigError);
}

TEST(TimeEmbedding, KnownValues) {
    const auto z = time_embedding(0.0, 6, 1000.0);
    EXPECT_EQ(z, (std::vector<double>{0, 1, 0, 1, 0, 1}));
    const auto v = time_embedding(0.3, 4, 1000.0);
    EXPECT_DOUBLE_EQ(v[0], std::sin(300.0));
    EXPECT_DOUBLE_EQ(v[1], std::cos(300.0));
    EXPECT_NEAR(v[2], std::sin(3.0), 1e-12);
    EXPECT_NEAR(v[3], std::cos(3.0), 1e-12);
}

TEST(VectorField, ParameterCountMatchesLayerFormula) {
    for (const auto& cfg : {NetConfig{}, test::tiny_net()}) {
        const VectorField net(cfg);
        EXPECT_EQ(net.param_count(), expected_params(cfg));
        const auto ps = net.init<float>(0);
        EXPECT_EQ(ps.scalar_count(), net.param_count());
    }
    EXPECT_EQ(VectorField(NetConfig{}).param_count(), 583521u);
}

TEST(VectorField, InitIsDeterministicPerSeed) {
    const VectorField net(test::tiny_net());
    const auto a = net.init<double>(5), b = net.init<double>(5), c = net.init<double>(6);
    bool differs = false;
    for (const auto& p : a) {
        EXPECT_EQ(p.value, b.get(p.name).value) << p.name;
        differs = differs || !(p.value == c.get(p.name).value);
    }
    EXPECT_TRUE(differs);
    for (double v : a.get("head.out.w").value.data()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(VectorField, ForwardShapesAndZeroPriorSubstitution) {
    const NetConfig cfg = test::tiny_net();
    const VectorField net(cfg);
    auto ps = net.init<double>(1);
    std::mt19937_64 gen(2);
    for (auto& p : ps) {
        for (auto& v : p.value.data()) {
            v += std::uniform_real_distribution<double>(-0.1, 0.1)(gen);
        }
    }
    const auto item = scene_item(3, 32);
    std::vector<FlowSample<double>> batch{make_flow_sample(item, Rng(1), 0.0), make_flow_sample(item, Rng(2), 0.0)};
    batch[1].keep_priors = false;
    const auto in = batch_inputs<double>(batch);

    Graph<double> g;
    const auto act = net.forward(g, ps, in);
    EXPECT_EQ(g.value(act.logits).shape(), Shape({2, 1, 32, 32}));
    EXPECT_TRUE(g.value(act.logits).all_finite());
    for (std::size_t n = 0; n < 4; ++n) {
        const std::size_t side = net.level_size(n);
        EXPECT_EQ(g.value(act.f[n]).shape(), Shape({2, cfg.channels[n], side, side}));
        EXPECT_EQ(g.value(act.staged[n]).shape(), net.staged_shape(n, 2));
    }

    // dropped sample equals a forward without any priors
    NetInputs<double> bare;
    bare.image = in.image;
    bare.x_t = in.x_t;
    bare.t = in.t;
    Graph<double> g2;
    const auto act2 = net.forward(g2, ps, bare);
    const auto& l1 = g.value(act.logits);
    const auto& l2 = g2.value(act2.logits);
    for (std::size_t i = 32 * 32; i < 2 * 32 * 32; ++i) {
        EXPECT_NEAR(l1[i], l2[i], 1e-12);
    }
    EXPECT_FALSE(l1.vec() == l2.vec());
}

TEST(VectorField, ForwardRejectsBadShapes) {
    const VectorField net(test::tiny_net());
    auto ps = net.init<double>(0);
    NetInputs<double> in;
    in.image = Tensor<double>(Shape{1, 3, 64, 64});
    in.x_t = Tensor<double>(Shape{1, 1, 64, 64});
    in.t = {0.5};
    Graph<double> g;
    EXPECT_THROW(net.forward(g, ps, in), ShapeError);
    in.image = Tensor<double>(Shape{1, 3, 32, 32});
    in.x_t = Tensor<double>(Shape{1, 1, 32, 32});
    in.t = {0.5, 0.2};
    EXPECT_THROW(net.forward(g, ps, in), ShapeError);
}

// Full network plus task loss against central differences at double precision.
TEST(VectorField, EndToEndGradientMatchesFiniteDifferences) {
    const auto c = oracle::net_grad_case();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        EXPECT_LT(oracle::grad_error(c, seed), 1e-4) << "seed " << seed;
    }
}
