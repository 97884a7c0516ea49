// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance driver. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <sys/wait.h>

#include "oracles.hpp"

using namespace wf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Runs the CLI; output is kept in a file next to the run for inspection.
int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + WATERFLOW_CLI + "\" " + args + " > " + q(log) + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void must(int rc, const std::string& what, const fs::path& log) {
    if (rc != 0) {
        throw std::runtime_error(what + " exited " + std::to_string(rc) + ": " + io::read_text(log));
    }
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            out[fs::relative(e.path(), root).string()] = io::read_text(e.path());
        }
    }
    return out;
}

// 1. degrade then restore over synthetic scenes
Outcome formation_round_trip() {
    const auto t0 = Clock::now();
    double worst = 0.0, clamp_sum = 0.0;
    std::size_t compared = 0;
    for (std::uint64_t i = 0; i < 100; ++i) {
        const double difficulty = static_cast<double>(i % 11) / 10.0;
        const auto s = synth_scene<double>(Rng(1000 + i), 64, 64, difficulty);
        const auto& p = s.params;
        const auto d = degrade(s.scene.J, s.scene.z, p);
        const auto r = restore(d.I, s.scene.z, p);
        clamp_sum += d.clamp_fraction;
        const std::size_t hw = s.scene.z.size();
        for (std::size_t k = 0; k < s.scene.J.size(); ++k) {
            const std::size_t c = k / hw;
            const double z = s.scene.z[k % hw];
            const double raw =
                s.scene.J[k] * std::exp(-p.beta_D[c] * z) + p.A[c] * (1.0 - std::exp(-p.beta_B[c] * z));
            if (raw >= 0.0 && raw <= 1.0) {
                worst = std::max(worst, std::fabs(r.J_hat[k] - s.scene.J[k]));
                ++compared;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-6 && secs < 30.0 && compared > 0,
            "max_err=" + fmt(worst) + " mean_clamp_fraction=" + fmt(clamp_sum / 100.0) + " pixels=" +
                std::to_string(compared) + " runtime_s=" + fmt(secs)};
}

// 2. constant attenuation with A = 0
Outcome attenuation_recovery() {
    std::mt19937_64 gen(2);
    double worst = 0.0;
    std::size_t bins = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = oracle::attenuation_scene(gen);
        const auto t = estimate_beta_D(s.I, s.z, s.B);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t b = 0; b < t.bins; ++b) {
                if (!t.inherited[c][b]) {
                    worst = std::max(worst, std::fabs(t.beta[c][b] - s.beta[c]) / s.beta[c]);
                    ++bins;
                }
            }
        }
    }
    return {worst < 0.02 && bins > 0, "max_rel_err=" + fmt(worst) + " bins=" + std::to_string(bins)};
}

// 3. every op and the full network
Outcome gradient_suite() {
    auto cases = oracle::op_grad_cases();
    cases.push_back(oracle::net_grad_case());
    double worst = 0.0;
    std::string worst_name;
    for (const auto& c : cases) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const double e = oracle::grad_error(c, seed);
            if (!(e <= worst)) {
                worst = e;
                worst_name = c.name;
            }
        }
    }
    return {worst < 1e-4,
            "cases=" + std::to_string(cases.size()) + " seeds=20 max_rel_err=" + fmt(worst) + " (" + worst_name + ")"};
}

// 4. interpolation endpoints and one-step sampling
Outcome flow_identities() {
    std::mt19937_64 gen(4);
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        const auto x0 = test::random_tensor(Shape{1, 16, 16}, gen, -4.0, 4.0);
        const auto x1 = test::random_mask(Shape{1, 16, 16}, gen);
        ok = ok && interpolate(x0, x1, 0.0) == x0 && interpolate(x0, x1, 1.0) == x1;
        ok = ok && interpolate(x0.cast<float>(), x1.cast<float>(), 0.0) == x0.cast<float>() &&
             interpolate(x0.cast<float>(), x1.cast<float>(), 1.0) == x1.cast<float>();
    }
    const bool interp_ok = ok;
    const VectorField net(test::tiny_net());
    auto ps = net.init<float>(4);
    for (auto& p : ps) {
        for (auto& v : p.value.data()) {
            v += std::uniform_real_distribution<float>(-0.1f, 0.1f)(gen);
        }
    }
    const auto img = synth_scene<float>(Rng(4), 32, 32, 0.5).scene.I;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto r = sample(net, ps, img, SamplerConfig{1, seed, 0.5});
        const auto x0 = normal_map<float>(Rng(seed).split(stream::noise), Shape{1, 32, 32});
        const auto direct = ops::sigmoid(predict_logits(net, ps, img, x0, 0.0));
        ok = ok && r.noise == x0 && r.probability == direct;
    }
    return {ok, std::string("interpolate_endpoints=") + (interp_ok ? "exact" : "mismatch") +
                    " one_step=" + (ok ? "bitwise" : "mismatch")};
}

// 5. task loss hand case and weighting
Outcome loss_correctness() {
    const Tensor<double> logits(Shape{1, 1, 2, 2}, 0.0);
    const Tensor<double> G(Shape{1, 1, 2, 2}, std::vector<double>{1, 1, 0, 0});
    const auto v = task_loss(logits, G);
    const bool hand = std::fabs(v.iou - 0.5) < 1e-9 && std::fabs(v.bce - std::log(2.0)) < 1e-9;
    std::mt19937_64 gen(5);
    std::size_t within_ulp = 0;
    double ref_err = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto l = test::random_tensor(Shape{1, 1, 8, 8}, gen, -6.0, 6.0);
        const auto m = test::random_mask(Shape{1, 1, 8, 8}, gen);
        const auto r = task_loss(l, m);
        const double half = 0.5 * r.bce + 0.5 * r.iou;
        within_ulp += r.total == half || std::nextafter(r.total, half) == half;
        ref_err = std::max(ref_err, std::fabs(r.total - oracle::reference_loss(l.vec(), m.vec())));
    }
    return {hand && within_ulp == 1000 && ref_err < 1e-9,
            "bce=" + fmt(v.bce) + " iou=" + fmt(v.iou) + " weighted_within_1ulp=" + std::to_string(within_ulp) +
                "/1000 ref_err=" + fmt(ref_err)};
}

// 6. metrics against brute force, and perfect-prediction fixpoints
Outcome metric_oracles() {
    std::mt19937_64 gen(6);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto p = oracle::random_pred(gen, 16, 16);
        const auto g = oracle::random_gt(gen, 16, 16);
        worst = std::max({worst, std::fabs(metrics::mae(p, g) - oracle::ref_mae(p, g)),
                          std::fabs(metrics::f_measure_mean(p, g) - oracle::ref_f_mean(p, g)),
                          std::fabs(metrics::s_measure(p, g) - oracle::ref_s_measure(p, g)),
                          std::fabs(metrics::e_measure_mean(p, g) - oracle::ref_e_mean(p, g))});
    }
    std::size_t fix = 0, fix_ok = 0;
    while (fix < 200) {
        const auto g = oracle::random_gt(gen, 16, 16);
        if (metrics::gt_kind(g) != metrics::GtKind::mixed) {
            continue;
        }
        ++fix;
        fix_ok += metrics::mae(g, g) == 0.0 && std::fabs(metrics::s_measure(g, g) - 1.0) < 1e-6 &&
                  metrics::e_measure_mean(g, g) == 1.0 && metrics::f_measure_mean(g, g) >= 255.0 / 256.0;
    }
    return {worst < 1e-9 && fix_ok == fix,
            "max_abs_err=" + fmt(worst) + " fixpoints=" + std::to_string(fix_ok) + "/" + std::to_string(fix)};
}

// 7. toy learning run through the CLI; leaves the checkpoint for criterion 8
Outcome toy_learning(const fs::path& root) {
    const auto t0 = Clock::now();
    const fs::path log = root / "toy.out";
    must(run_cli("synth --count 200 --size 64 --difficulty 0.5 --seed 7 --out " + q(root / "train"), log), "synth",
         log);
    must(run_cli("synth --count 50 --size 64 --difficulty 0.5 --seed 8 --out " + q(root / "held_out"), log), "synth",
         log);
    must(run_cli("train --data " + q(root / "train") + " --out " + q(root / "toy.wfck") +
                     " --batch 8 --accumulation 1 --lr 1e-3 --max-steps 600 --seed 7 --init-seed 7 --quiet",
                 log),
         "train", log);
    const double train_s = seconds_since(t0);
    must(run_cli("sample --checkpoint " + q(root / "toy.wfck") + " --image " + q(root / "held_out") + " --steps 1 --out " +
                     q(root / "pred"),
                 log),
         "sample", log);
    must(run_cli("eval --pred " + q(root / "pred") + " --gt " + q(root / "held_out") + " --report " +
                     q(root / "report.json"),
                 log),
         "eval", log);
    const Json r = parse_json(io::read_text(root / "report.json"), "report");
    const double mae = r["mae"].get<double>(), sm = r["s_measure"].get<double>();
    return {mae < 0.08 && sm > 0.80 && train_s < 1800.0,
            "mae=" + fmt(mae) + " s_measure=" + fmt(sm) + " f_mean=" + fmt(r["f_mean"].get<double>()) +
                " e_mean=" + fmt(r["e_mean"].get<double>()) + " train_s=" + fmt(train_s)};
}

// 8. latency grows with step count
Outcome bench_ordering(const fs::path& root) {
    const fs::path ck = root / "toy.wfck";
    if (!fs::exists(ck)) {
        return {false, "no checkpoint from the toy run"};
    }
    const fs::path log = root / "bench.out";
    double med[2] = {0, 0};
    const std::size_t steps[2] = {1, 8};
    for (int i = 0; i < 2; ++i) {
        const fs::path rep = root / ("bench" + std::to_string(steps[i]) + ".json");
        must(run_cli("bench --checkpoint " + q(ck) + " --steps " + std::to_string(steps[i]) + " --iters 13 --report " +
                         q(rep),
                     log),
             "bench", log);
        med[i] = parse_json(io::read_text(rep), "bench")["median_ms"].get<double>();
    }
    return {med[1] > med[0], "median_ms steps1=" + fmt(med[0]) + " steps8=" + fmt(med[1])};
}

// 9. two identical pipelines, byte for byte. Both run in the same directory
// (wiped in between) so recorded paths match too.
Outcome pipeline_determinism(const fs::path& root) {
    const Json cfg{{"image_size", 32},
                   {"channels", {8, 8, 16, 16}},
                   {"prior_channels", {4, 4, 8, 8}},
                   {"time_dim", 16},
                   {"flow", {{"batch", 4}, {"accumulation", 2}, {"lr", 1e-3}, {"max_steps", 200}}}};
    std::map<std::string, std::string> runs[2];
    for (int k = 0; k < 2; ++k) {
        const fs::path d = root / "run";
        fs::remove_all(d);
        fs::create_directories(d);
        io::write_text(d / "small.json", canonical_dump(cfg));
        const fs::path log = d / "cli.out";
        must(run_cli("synth --count 24 --size 32 --seed 9 --out " + q(d / "data"), log), "synth", log);
        must(run_cli("train --data " + q(d / "data") + " --config " + q(d / "small.json") + " --out " +
                         q(d / "out" / "model.wfck") + " --quiet",
                     log),
             "train", log);
        must(run_cli("sample --checkpoint " + q(d / "out" / "model.wfck") + " --image " + q(d / "data") +
                         " --steps 4 --seed 5 --out " + q(d / "out" / "pred"),
                     log),
             "sample", log);
        must(run_cli("eval --pred " + q(d / "out" / "pred") + " --gt " + q(d / "data") + " --report " +
                         q(d / "out" / "report.json"),
                     log),
             "eval", log);
        // the train log carries wall-clock times
        fs::remove(d / "out" / "model.wfck.log.jsonl");
        runs[k] = tree(d / "out");
    }
    std::size_t differing = 0;
    for (const auto& [name, bytes] : runs[0]) {
        differing += !runs[1].count(name) || runs[1].at(name) != bytes;
    }
    const auto ck = load_checkpoint<float>(root / "run" / "out" / "model.wfck");
    return {differing == 0 && runs[0].size() == runs[1].size() && ck.adam.step == 200,
            "files=" + std::to_string(runs[0].size()) + " differing=" + std::to_string(differing) +
                " steps=" + std::to_string(ck.adam.step)};
}

} // namespace

int main() {
    const fs::path root = fs::absolute("acceptance_work");
    std::error_code ec;
    fs::remove_all(root, ec);
    fs::create_directories(root);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"formation round trip", formation_round_trip},
        {"attenuation recovery", attenuation_recovery},
        {"gradient suite", gradient_suite},
        {"rectified-flow identities", flow_identities},
        {"loss correctness", loss_correctness},
        {"metric oracles", metric_oracles},
        {"toy learning", [&] { return toy_learning(root); }},
        {"bench step ordering", [&] { return bench_ordering(root); }},
        {"pipeline determinism", [&] { return pipeline_determinism(root); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        const auto t0 = Clock::now();
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << o.detail
                  << " [" << fmt(seconds_since(t0)) << " s]" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
