// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sys/wait.h>

#include "test_support.hpp"

using namespace wf;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;
};

Run run_cli(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    const fs::path log = fs::temp_directory_path() / ("waterflow_cli_" + std::to_string(::getpid()) + "_" +
                                                      std::to_string(counter++) + ".txt");
    const std::string cmd = env + " \"" WATERFLOW_CLI "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = io::read_text(log);
    fs::remove(log);
    return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            out[fs::relative(e.path(), root).string()] = io::read_text(e.path());
        }
    }
    return out;
}

Json read_json(const fs::path& p) { return parse_json(io::read_text(p), p.string()); }

// Small architecture so a training run takes seconds.
void write_tiny_config(const fs::path& p, std::size_t batch = 2) {
    const Json j{{"image_size", 32},
                 {"channels", {4, 4, 8, 8}},
                 {"prior_channels", {4, 4, 4, 4}},
                 {"time_dim", 8},
                 {"flow", {{"batch", batch}, {"accumulation", 1}, {"lr", 1e-3}}}};
    io::write_text(p, canonical_dump(j));
}

class CliFixture : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new test::TempDir("cli");
        ASSERT_EQ(run_cli("synth --count 6 --size 32 --seed 3 --out " + q(*dir_ / "data")).code, 0);
        write_tiny_config(*dir_ / "tiny.json");
        const auto r = run_cli("train --data " + q(*dir_ / "data") + " --config " + q(*dir_ / "tiny.json") + " --out " +
                           q(*dir_ / "base.wfck") + " --max-steps 3 --quiet");
        ASSERT_EQ(r.code, 0) << r.output;
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }
    static fs::path path(const std::string& s) { return *dir_ / s; }

    static test::TempDir* dir_;
};

test::TempDir* CliFixture::dir_ = nullptr;

} // namespace

TEST(CliBasics, UsageAndExitCodes) {
    EXPECT_EQ(run_cli("--help").code, 0);
    EXPECT_EQ(run_cli("").code, 1);
    EXPECT_EQ(run_cli("frobnicate").code, 1);
    EXPECT_EQ(run_cli("synth --count 2").code, 1);
    EXPECT_EQ(run_cli("synth --count 2 --size 8 --out /tmp/x_wf_bad").code, 1);
    EXPECT_EQ(run_cli("synth --count 1 --size 32 --out /proc/waterflow_no").code, 2);
    EXPECT_EQ(run_cli("sample --checkpoint /nonexistent.wfck --image /nonexistent.ppm --out /tmp").code, 2);
    const auto r = run_cli("synth --count 1 --size 32 --out /tmp/wf_threads_bad", "WATERFLOW_THREADS=zero");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("WATERFLOW_THREADS"), std::string::npos);
}

TEST(CliSynth, CardinalityDeterminismAndReplay) {
    test::TempDir dir("synth");
    ASSERT_EQ(run_cli("synth --count 3 --size 32 --seed 9 --out " + q(dir / "a")).code, 0);
    std::size_t folders = 0;
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        folders += e.is_directory();
    }
    EXPECT_EQ(folders, 3u);
    EXPECT_TRUE(fs::exists(dir / "a" / "manifest.json"));
    for (const char* f : {"I.ppm", "J.ppm", "depth.pgm", "mask.pgm", "scene.json"}) {
        EXPECT_TRUE(fs::exists(dir / "a" / "0002" / f)) << f;
    }
    const auto manifest = read_json(dir / "a" / "manifest.json");
    EXPECT_EQ(manifest["count"], 3);
    EXPECT_EQ(manifest["format_version"], 1);

    ASSERT_EQ(run_cli("synth --count 3 --size 32 --seed 9 --out " + q(dir / "b"), "WATERFLOW_THREADS=1").code, 0);
    EXPECT_EQ(tree(dir / "a"), tree(dir / "b"));

    ASSERT_EQ(run_cli("synth --count 4 --size 32 --seed 5 --difficulty 0.8 --out " + q(dir / "c")).code, 0);
    ASSERT_EQ(run_cli("synth --from-manifest " + q(dir / "c" / "manifest.json") + " --out " + q(dir / "d")).code, 0);
    EXPECT_EQ(tree(dir / "c"), tree(dir / "d"));
    EXPECT_EQ(read_json(dir / "d" / "manifest.json")["difficulty"], 0.8);
}

TEST(CliPriors, ZeroDepthPreviewsAndFileCount) {
    test::TempDir dir("priors");
    std::mt19937_64 gen(4);
    io::write_ppm(dir / "I.ppm", test::random_tensor(Shape{3, 32, 32}, gen, 0.0, 1.0));
    io::write_pgm(dir / "z.pgm", Tensor<double>(Shape{1, 32, 32}, 0.0));
    const auto r = run_cli("priors --image " + q(dir / "I.ppm") + " --depth " + q(dir / "z.pgm") + " --out " +
                       q(dir / "out"));
    ASSERT_EQ(r.code, 0) << r.output;
    std::size_t files = 0, wft = 0;
    for (const auto& e : fs::directory_iterator(dir / "out")) {
        ++files;
        wft += e.path().extension() == ".wft";
    }
    EXPECT_EQ(wft, family_count);
    EXPECT_EQ(files, 2 * family_count + 1);
    const auto t_d = io::read_pgm<double>(dir / "out" / "T_D.pgm");
    for (double v : t_d.data()) {
        ASSERT_EQ(v, 1.0);
    }
    const auto back = io::read_pgm<double>(dir / "out" / "B.pgm");
    for (double v : back.data()) {
        ASSERT_EQ(v, 0.0);
    }
    EXPECT_EQ(read_json(dir / "out" / "priors.json")["format_version"], 1);
    EXPECT_EQ(io::load_wft<float>(dir / "out" / "Var.wft").shape(), Shape({3, 32, 32}));

    io::write_pgm(dir / "z48.pgm", Tensor<double>(Shape{1, 48, 48}, 0.0));
    EXPECT_EQ(run_cli("priors --image " + q(dir / "I.ppm") + " --depth " + q(dir / "z48.pgm") + " --out " +
                  q(dir / "o2"))
                  .code,
              3);
}

// A = 0 scene, flat albedo, known constant beta: the table must recover it.
// Some black albedo is scattered in so that the dark-pixel background estimate
// sees A = 0 too; black pixels fall under the regression floor.
TEST(CliPriors, AttenuationRecoveredFromGeneratedScene) {
    test::TempDir dir("priors_beta");
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> b(0.2, 1.5), d(0.1, 3.0), u(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        const Rgb beta{b(gen), b(gen), b(gen)};
        Tensor<double> z(Shape{1, 48, 48}), I(Shape{3, 48, 48});
        std::vector<double> albedo(48 * 48);
        for (std::size_t i = 0; i < albedo.size(); ++i) {
            z[i] = d(gen);
            albedo[i] = u(gen) < 0.05 ? 0.0 : 0.9;
        }
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t i = 0; i < 48 * 48; ++i) {
                I[c * 48 * 48 + i] = albedo[i] * std::exp(-beta[c] * z[i]);
            }
        }
        io::save_wft(dir / "I.wft", I);
        io::save_wft(dir / "z.wft", z);
        const auto r =
            run_cli("priors --image " + q(dir / "I.wft") + " --depth " + q(dir / "z.wft") + " --out " + q(dir / "out"));
        ASSERT_EQ(r.code, 0) << r.output;
        const auto j = read_json(dir / "out" / "priors.json");
        for (std::size_t c = 0; c < 3; ++c) {
            for (const auto& bin : j["beta_D_hat"][c]) {
                if (!bin["inherited"].get<bool>()) {
                    EXPECT_NEAR(bin["beta"].get<double>(), beta[c], 0.02 * beta[c]) << "channel " << c;
                }
            }
        }
    }
}

TEST_F(CliFixture, TrainZeroEpochsEqualsInitialization) {
    const auto r = run_cli("train --data " + q(path("data")) + " --config " + q(path("tiny.json")) + " --out " +
                       q(path("zero.wfck")) + " --epochs 0 --init-seed 4 --quiet");
    ASSERT_EQ(r.code, 0) << r.output;
    const auto ck = load_checkpoint<float>(path("zero.wfck"));
    const auto fresh = VectorField(ck.net).init<float>(4);
    EXPECT_EQ(ck.adam.step, 0u);
    for (const auto& p : fresh) {
        EXPECT_EQ(ck.params.get(p.name).value, p.value) << p.name;
    }
    EXPECT_EQ(io::read_text(path("zero.wfck.log.jsonl")), "");
    const auto eff = read_json(path("zero.wfck.config.json"));
    EXPECT_EQ(eff["seeds"]["init"], 4);
    EXPECT_EQ(eff["flow"]["epochs"], 0);
}

TEST_F(CliFixture, ResumeMatchesUninterruptedRun) {
    const std::string common = "train --data " + q(path("data")) + " --config " + q(path("tiny.json")) + " --quiet";
    ASSERT_EQ(run_cli(common + " --out " + q(path("straight.wfck")) + " --max-steps 4").code, 0);
    ASSERT_EQ(run_cli(common + " --out " + q(path("half.wfck")) + " --max-steps 2").code, 0);
    const auto r = run_cli(common + " --resume " + q(path("half.wfck")) + " --out " + q(path("resumed.wfck")) +
                       " --log " + q(path("half.wfck.log.jsonl")) + " --max-steps 4");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(io::read_file(path("straight.wfck")), io::read_file(path("resumed.wfck")));

    const auto count_lines = [](const fs::path& p) {
        std::ifstream in(p);
        std::string line;
        std::size_t n = 0;
        std::uint64_t last = 0;
        while (std::getline(in, line)) {
            const auto j = parse_json(line, "log");
            EXPECT_EQ(j["step"].get<std::uint64_t>(), last + 1);
            last = j["step"].get<std::uint64_t>();
            ++n;
        }
        return n;
    };
    EXPECT_EQ(count_lines(path("straight.wfck.log.jsonl")), 4u);
    EXPECT_EQ(count_lines(path("half.wfck.log.jsonl")), 4u);
}

TEST_F(CliFixture, ResumeRefusesOtherArchitecture) {
    const Json other{{"image_size", 32}, {"channels", {4, 4, 8, 16}}, {"prior_channels", {4, 4, 4, 4}},
                     {"time_dim", 8}};
    io::write_text(path("other.json"), canonical_dump(other));
    const auto r = run_cli("train --data " + q(path("data")) + " --config " + q(path("other.json")) + " --resume " +
                       q(path("base.wfck")) + " --out " + q(path("x.wfck")) + " --max-steps 4 --quiet");
    EXPECT_EQ(r.code, 3);
    const auto base = load_checkpoint<float>(path("base.wfck"));
    EXPECT_NE(r.output.find(hex(fingerprint(base.net))), std::string::npos) << r.output;
    EXPECT_NE(r.output.find(hex(fingerprint(config_from_json(other).net))), std::string::npos) << r.output;
}

TEST_F(CliFixture, SampleDefaultsDeterminismAndDiff) {
    const std::string base = "sample --checkpoint " + q(path("base.wfck")) + " --image " + q(path("data"));
    ASSERT_EQ(run_cli(base + " --out " + q(path("s1"))).code, 0);
    ASSERT_EQ(run_cli(base + " --out " + q(path("s2"))).code, 0);
    EXPECT_EQ(tree(path("s1")), tree(path("s2")));
    const auto meta = read_json(path("s1") / "sample.json");
    EXPECT_EQ(meta["steps"], 1);
    EXPECT_EQ(meta["count"], 6);
    EXPECT_EQ(meta["format_version"], 1);
    const auto prob = io::load_wft<float>(path("s1") / "0000.prob.wft");
    const auto mask = io::read_pgm<float>(path("s1") / "0000.mask.pgm");
    for (std::size_t i = 0; i < prob.size(); ++i) {
        ASSERT_EQ(mask[i], prob[i] >= 0.5f ? 1.0f : 0.0f);
    }

    ASSERT_EQ(run_cli(base + " --steps 8 --diff --out " + q(path("s8"))).code, 0);
    const auto p8 = io::load_wft<float>(path("s8") / "0003.prob.wft");
    const auto diff = io::load_wft<float>(path("s8") / "0003.diff.wft");
    EXPECT_TRUE(fs::exists(path("s8") / "0003.diff.pgm"));
    const auto p1 = io::load_wft<float>(path("s1") / "0003.prob.wft");
    for (std::size_t i = 0; i < diff.size(); ++i) {
        ASSERT_EQ(diff[i], std::abs(p8[i] - p1[i]));
        ASSERT_GE(p8[i], 0.0f);
        ASSERT_LE(p8[i], 1.0f);
    }

    const auto single = run_cli("sample --checkpoint " + q(path("base.wfck")) + " --image " +
                            q(path("data") / "0001" / "I.ppm") + " --stem one --seed 5 --out " + q(path("s3")));
    ASSERT_EQ(single.code, 0) << single.output;
    EXPECT_TRUE(fs::exists(path("s3") / "one.prob.wft"));
}

TEST_F(CliFixture, SampleRejectsWrongImageSize) {
    std::mt19937_64 gen(1);
    io::write_ppm(path("big.ppm"), test::random_tensor(Shape{3, 64, 64}, gen, 0.0, 1.0));
    const auto r = run_cli("sample --checkpoint " + q(path("base.wfck")) + " --image " + q(path("big.ppm")) + " --out " +
                       q(path("s4")));
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("64x64"), std::string::npos) << r.output;
    EXPECT_NE(r.output.find("32x32"), std::string::npos) << r.output;
}

TEST_F(CliFixture, BenchReportsTimedSamples) {
    const auto r = run_cli("bench --checkpoint " + q(path("base.wfck")) + " --steps 2 --iters 10 --report " +
                       q(path("bench.json")));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto j = read_json(path("bench.json"));
    EXPECT_EQ(j["steps"], 2);
    EXPECT_EQ(j["timed"], 7);
    EXPECT_EQ(j["samples_ms"].size(), 7u);
    EXPECT_EQ(j["format_version"], 1);
    EXPECT_LE(j["median_ms"].get<double>(), j["p90_ms"].get<double>());
    EXPECT_EQ(run_cli("bench --checkpoint " + q(path("base.wfck")) + " --iters 9").code, 1);
}

TEST(CliEval, SelfEvaluationAndEmptyIntersection) {
    test::TempDir dir("eval_self");
    ASSERT_EQ(run_cli("synth --count 3 --size 32 --seed 1 --out " + q(dir / "d")).code, 0);
    ASSERT_EQ(run_cli("eval --pred " + q(dir / "d") + " --gt " + q(dir / "d") + " --report " + q(dir / "r.json")).code,
              0);
    const auto j = read_json(dir / "r.json");
    EXPECT_EQ(j["mae"], 0.0);
    EXPECT_EQ(j["s_measure"], 1.0);
    EXPECT_EQ(j["n_images"], 3);
    EXPECT_EQ(j["format_version"], 1);

    fs::create_directories(dir / "other");
    io::write_pgm(dir / "other" / "zzz.mask.pgm", Tensor<double>(Shape{1, 32, 32}, 0.0));
    const auto r = run_cli("eval --pred " + q(dir / "other") + " --gt " + q(dir / "d") + " --report " + q(dir / "e.json"));
    EXPECT_EQ(r.code, 3);
    for (const char* stem : {"zzz", "0000", "0001", "0002"}) {
        EXPECT_NE(r.output.find(stem), std::string::npos) << stem;
    }
}

TEST(CliEval, ReportMatchesLibraryAndFlagsUnmatched) {
    test::TempDir dir("eval_pairs");
    fs::create_directories(dir / "pred");
    fs::create_directories(dir / "gt");
    std::mt19937_64 gen(20);
    std::vector<metrics::ImageScores> expect;
    for (int i = 0; i < 20; ++i) {
        const std::string stem = "img" + std::to_string(i);
        const auto p = test::random_tensor<float>(Shape{1, 16, 16}, gen, 0.0, 1.0);
        const auto g = test::random_mask<double>(Shape{1, 16, 16}, gen, 0.3);
        io::save_wft(dir / "pred" / (stem + ".prob.wft"), p);
        io::write_pgm(dir / "gt" / (stem + ".mask.pgm"), g);
        expect.push_back(metrics::score_image(stem, metrics::as_map(p), metrics::as_map(g)));
    }
    const auto want = metrics::aggregate(expect);
    ASSERT_EQ(run_cli("eval --pred " + q(dir / "pred") + " --gt " + q(dir / "gt") + " --report " + q(dir / "r.json") +
                  " --csv " + q(dir / "r.csv"))
                  .code,
              0);
    const auto j = read_json(dir / "r.json");
    EXPECT_NEAR(j["mae"].get<double>(), want.mae, 1e-12);
    EXPECT_NEAR(j["f_mean"].get<double>(), want.f_mean, 1e-12);
    EXPECT_NEAR(j["s_measure"].get<double>(), want.s_measure, 1e-12);
    EXPECT_NEAR(j["e_mean"].get<double>(), want.e_mean, 1e-12);
    ASSERT_EQ(j["per_image"].size(), 20u);
    EXPECT_TRUE(fs::exists(dir / "r.csv"));

    io::write_pgm(dir / "gt" / "lonely.mask.pgm", Tensor<double>(Shape{1, 16, 16}, 0.0));
    const auto r = run_cli("eval --pred " + q(dir / "pred") + " --gt " + q(dir / "gt") + " --report " + q(dir / "u.json"));
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.output.find("lonely"), std::string::npos);
    const auto u = read_json(dir / "u.json");
    EXPECT_EQ(u["n_images"], 20);
    EXPECT_EQ(u["unmatched"].dump().find("lonely") != std::string::npos, true);
}
