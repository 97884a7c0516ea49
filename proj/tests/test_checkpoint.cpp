// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>

#include "test_support.hpp"

using namespace wf;

namespace {

Checkpoint<float> trained_checkpoint() {
    const NetConfig cfg = test::tiny_net();
    const VectorField net(cfg);
    Checkpoint<float> ck{cfg, net.init<float>(3), {}};
    for (auto& p : ck.params) {
        p.grad.fill(0.01f);
    }
    adamw_step(ck.params, ck.adam, AdamWConfig{});
    return ck;
}

int error_code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return static_cast<int>(e.code());
    }
    return 0;
}

} // namespace

TEST(Sha256, KnownDigest) {
    EXPECT_EQ(hex(sha256("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(hex(sha256("")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Fingerprint, StableAndSensitiveToArchitecture) {
    const NetConfig a = test::tiny_net();
    EXPECT_EQ(fingerprint(a), fingerprint(test::tiny_net()));
    NetConfig b = a;
    b.channels[3] = 16;
    EXPECT_NE(fingerprint(a), fingerprint(b));
    NetConfig c = a;
    c.stage_map[0] = {Family::B};
    EXPECT_NE(fingerprint(a), fingerprint(c));
    NetConfig d = a;
    d.time_scale = 500.0;
    EXPECT_NE(fingerprint(a), fingerprint(d));
}

TEST(Checkpoint, RoundTripIsExact) {
    const auto ck = trained_checkpoint();
    const auto bytes = encode_checkpoint(ck);
    EXPECT_EQ(std::memcmp(bytes.data(), "WFCK", 4), 0);
    const auto back = decode_checkpoint<float>(bytes, "mem");
    EXPECT_EQ(back.adam.step, 1u);
    EXPECT_EQ(fingerprint(back.net), fingerprint(ck.net));
    for (const auto& p : ck.params) {
        EXPECT_EQ(back.params.get(p.name).value, p.value);
        EXPECT_EQ(back.adam.m.at(p.name), ck.adam.m.at(p.name));
        EXPECT_EQ(back.adam.v.at(p.name), ck.adam.v.at(p.name));
    }
    EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, FileRoundTripAndMissingFile) {
    test::TempDir dir("ckpt");
    const auto ck = trained_checkpoint();
    save_checkpoint(dir / "a.wfck", ck);
    const auto back = load_checkpoint<float>(dir / "a.wfck");
    EXPECT_EQ(back.params.get("head.out.w").value, ck.params.get("head.out.w").value);
    EXPECT_EQ(error_code_of([&] { load_checkpoint<float>(dir / "missing.wfck"); }), 2);
}

TEST(Checkpoint, CorruptionIsDetected) {
    const auto bytes = encode_checkpoint(trained_checkpoint());
    auto bad = bytes;
    bad[1] = 'X';
    EXPECT_EQ(error_code_of([&] { decode_checkpoint<float>(bad, "x"); }), 2);
    bad = bytes;
    bad.resize(bytes.size() / 2);
    EXPECT_EQ(error_code_of([&] { decode_checkpoint<float>(bad, "x"); }), 2);
    bad = bytes;
    bad.push_back(0);
    EXPECT_EQ(error_code_of([&] { decode_checkpoint<float>(bad, "x"); }), 2);

    // edit one architecture byte inside the JSON trailer: fingerprint mismatch
    bad = bytes;
    const std::string needle = "\"time_dim\":8";
    const std::string text(bad.begin(), bad.end());
    const auto at = text.rfind(needle);
    ASSERT_NE(at, std::string::npos);
    bad[at + needle.size() - 1] = '6';
    EXPECT_EQ(error_code_of([&] { decode_checkpoint<float>(bad, "x"); }), 3);
}

TEST(Checkpoint, MissingParameterIsContractError) {
    auto ck = trained_checkpoint();
    ParamSet<float> partial;
    for (const auto& p : ck.params) {
        if (p.name != "head.out.b") {
            partial.add(p.name, p.value);
        }
    }
    ck.params = std::move(partial);
    ck.adam = {};
    const auto bytes = encode_checkpoint(ck);
    try {
        decode_checkpoint<float>(bytes, "partial.wfck");
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(static_cast<int>(e.code()), 3);
        EXPECT_NE(std::string(e.what()).find("partial.wfck"), std::string::npos);
    }
}

TEST(Checkpoint, PrecisionConvertsOnLoad) {
    const auto ck = trained_checkpoint();
    const auto back = decode_checkpoint<double>(encode_checkpoint(ck), "mem");
    EXPECT_EQ(back.params.get("pyr1.refine.w").value, ck.params.get("pyr1.refine.w").value.cast<double>());
}

TEST(RunConfig, CanonicalJsonRoundTrip) {
    RunConfig c;
    c.net = test::tiny_net();
    c.flow.lr = 1e-3;
    c.flow.max_steps = 12;
    c.seeds.train = 77;
    c.paths.data = "data/train";
    const std::string text = canonical_dump(to_json(c));
    const RunConfig back = config_from_json(parse_json(text, "cfg"));
    EXPECT_EQ(canonical_dump(to_json(back)), text);
    EXPECT_EQ(back.flow.max_steps, 12u);
    EXPECT_EQ(back.seeds.train, 77u);
    EXPECT_EQ(fingerprint(back.net), fingerprint(c.net));
    EXPECT_EQ(to_json(c)["format_version"], 1);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(config_from_json(parse_json(R"({"widht": 3})", "cfg")), ConfigError);
    EXPECT_THROW(config_from_json(parse_json(R"({"flow": {"lr": 1e-3, "momentum": 0.9}})", "cfg")), ConfigError);
    EXPECT_THROW(config_from_json(parse_json(R"({"flow": {"batch": -2}})", "cfg")), ConfigError);
    EXPECT_THROW(config_from_json(parse_json(R"({"flow": {"lr": "fast"}})", "cfg")), ConfigError);
    EXPECT_THROW(config_from_json(parse_json(R"({"image_size": 50})", "cfg")), ConfigError);
    EXPECT_THROW(config_from_json(parse_json(R"({"format_version": 2})", "cfg")), ConfigError);
    EXPECT_THROW(config_from_json(parse_json(R"({"stage_map": [["B"], ["nope"], ["R"], ["Int"]]})", "cfg")),
                 ConfigError);
    EXPECT_THROW(parse_json("{not json", "cfg"), ConfigError);
    EXPECT_NO_THROW(config_from_json(parse_json("{}", "cfg")));
}
