// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_CLI_HPP
#define WATERFLOW_CLI_HPP

// Subcommand implementations behind tools/waterflow. Each takes a plain
// options struct so tests can drive them without a process boundary.

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "waterflow/checkpoint.hpp"
#include "waterflow/dataset.hpp"
#include "waterflow/metrics.hpp"
#include "waterflow/priors.hpp"

namespace wf::cli {

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
    DatasetSpec spec;
    std::string out_dir;
    std::string from_manifest; // replays a manifest instead of the flags
};

inline int cmd_synth(const SynthOptions& o) {
    DatasetSpec s = o.spec;
    if (!o.from_manifest.empty()) {
        s = manifest_from_json(parse_json(io::read_text(o.from_manifest), o.from_manifest));
    }
    if (o.out_dir.empty()) {
        throw ConfigError("--out is required");
    }
    write_dataset(o.out_dir, s);
    std::cout << "wrote " << s.count << " scenes to " << o.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// priors

struct PriorsOptions {
    std::string image;
    std::string depth;
    std::string out_dir;
    std::size_t bins = default_depth_bins;
};

// Channels tiled left to right, min-max normalized over the family.
template <Real T>
Tensor<T> family_preview(const Tensor<T>& m) {
    const std::size_t c = m.dim(0), h = m.dim(1), w = m.dim(2);
    const Tensor<T> norm = io::normalized_preview<T>(m.data(), c * h, w);
    Tensor<T> out(Shape{1, h, c * w});
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                out[y * c * w + k * w + x] = norm[(k * h + y) * w + x];
            }
        }
    }
    return out;
}

inline int cmd_priors(const PriorsOptions& o) {
    if (o.image.empty() || o.depth.empty() || o.out_dir.empty()) {
        throw ConfigError("--image, --depth and --out are required");
    }
    const Tensor<double> I = read_image<double>(o.image);
    const Tensor<double> z = read_depth<double>(o.depth);
    if (I.rank() != 3 || z.rank() != 3 || I.dim(1) != z.dim(1) || I.dim(2) != z.dim(2)) {
        throw ShapeError("image " + I.shape().str() + " and depth " + z.shape().str() + " differ in size");
    }
    const auto ex = extract_priors(I, z, o.bins);
    fs::create_directories(o.out_dir);
    const fs::path out(o.out_dir);
    for (std::size_t f = 0; f < family_count; ++f) {
        const auto& m = ex.stack.map(static_cast<Family>(f));
        io::save_wft(out / (std::string(family_names[f]) + ".wft"), m.template cast<float>());
        io::write_pgm(out / (std::string(family_names[f]) + ".pgm"), family_preview(m));
    }
    const auto& tb = ex.stack.beta_table();
    Json table = Json::array();
    for (std::size_t c = 0; c < 3; ++c) {
        Json row = Json::array();
        for (std::size_t b = 0; b < tb.bins; ++b) {
            row.push_back(Json{{"beta", tb.beta[c][b]}, {"inherited", static_cast<bool>(tb.inherited[c][b])}});
        }
        table.push_back(std::move(row));
    }
    Json j{{"format_version", format_version},
           {"A", rgb_json(ex.background.A)},
           {"A_low_confidence", ex.background.low_confidence},
           {"beta_B", rgb_json(ex.beta_B)},
           {"beta_D_degenerate", ex.beta_D_degenerate},
           {"depth_bins", tb.bins},
           {"z_min", tb.z_min},
           {"z_max", tb.z_max},
           {"beta_D_hat", std::move(table)}};
    io::write_text(out / "priors.json", canonical_dump(j));
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    std::string data_dir;
    std::string config_path;
    std::string out_checkpoint;
    std::string resume;
    std::string log_path;
    Json overrides = Json::object(); // merged over the config document
    bool quiet = false;
};

template <Real T>
std::vector<TrainItem<T>> prepare_training_items(const std::vector<DatasetItem<T>>& data, const NetConfig& net) {
    std::vector<TrainItem<T>> items(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
        const auto& d = data[i];
        if (d.I.dim(1) != net.image_size || d.I.dim(2) != net.image_size) {
            throw ConfigError("scene " + d.stem + " is " + std::to_string(d.I.dim(1)) + "x" +
                              std::to_string(d.I.dim(2)) + " but the network expects " +
                              std::to_string(net.image_size));
        }
        const auto ex = extract_priors(d.I, d.z);
        items[i] = TrainItem<T>{d.I, d.G, stage_inputs(ex.stack, net.stage_map)};
    });
    return items;
}

inline std::string log_line(const LossRecord& r) {
    Json j{{"step", r.step},
           {"loss_total", r.loss_total},
           {"loss_bce", r.loss_bce},
           {"loss_iou", r.loss_iou},
           {"lr", r.lr},
           {"wall_ms", r.wall_ms}};
    return j.dump() + "\n";
}

inline RunConfig load_run_config(const std::string& path, const Json& overrides) {
    RunConfig cfg;
    if (!path.empty()) {
        cfg = merge_json(cfg, parse_json(io::read_text(path), path));
    }
    return merge_json(cfg, overrides);
}

inline int cmd_train(const TrainOptions& o) {
    RunConfig cfg = load_run_config(o.config_path, o.overrides);
    if (!o.data_dir.empty()) {
        cfg.paths.data = o.data_dir;
    }
    if (!o.out_checkpoint.empty()) {
        cfg.paths.checkpoint = o.out_checkpoint;
    }
    if (!o.log_path.empty()) {
        cfg.paths.log = o.log_path;
    }
    if (cfg.paths.data.empty() || cfg.paths.checkpoint.empty()) {
        throw ConfigError("training needs a data directory and an output checkpoint path");
    }
    if (cfg.paths.log.empty()) {
        cfg.paths.log = cfg.paths.checkpoint + ".log.jsonl";
    }

    const VectorField net(cfg.net);
    Checkpoint<float> ck{cfg.net, {}, {}};
    if (!o.resume.empty()) {
        ck = load_checkpoint<float>(o.resume);
        const Fingerprint want = fingerprint(cfg.net), have = fingerprint(ck.net);
        if (want != have) {
            throw ContractError("checkpoint fingerprint " + hex(have) + " does not match configured architecture " +
                                hex(want));
        }
    } else {
        ck.params = net.init<float>(cfg.seeds.init);
    }

    const auto data = load_dataset<float>(cfg.paths.data);
    const auto items = prepare_training_items(data, cfg.net);
    const TrainConfig tc = cfg.train_config();
    SampleSchedule<float> schedule(items, cfg.seeds.train, tc);
    const std::uint64_t total = cfg.flow.max_steps > 0 ? cfg.flow.max_steps : schedule.steps_for_epochs(cfg.flow.epochs);

    for (const fs::path& p : {fs::path(cfg.paths.checkpoint), fs::path(cfg.paths.log)}) {
        if (p.has_parent_path()) {
            std::error_code ec;
            fs::create_directories(p.parent_path(), ec);
            if (ec) {
                throw IoError("cannot create " + p.parent_path().string() + ": " + ec.message());
            }
        }
    }
    io::write_text(cfg.paths.checkpoint + ".config.json", canonical_dump(to_json(cfg)));
    std::ofstream log(cfg.paths.log, o.resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log) {
        throw IoError("cannot open log " + cfg.paths.log);
    }
    Trainer<float> trainer(net, ck.params, ck.adam, tc);
    while (ck.adam.step < total) {
        const auto batches = schedule.micro_batches(ck.adam.step);
        LossRecord rec;
        try {
            rec = trainer.train_step(batches);
        } catch (const NumericalError& e) {
            std::ostringstream msg;
            msg << e.what() << "; sample draws come from train seed " << cfg.seeds.train << ", occurrences "
                << ck.adam.step * tc.accumulation * tc.batch << ".."
                << (ck.adam.step + 1) * tc.accumulation * tc.batch - 1;
            throw NumericalError(msg.str());
        }
        log << log_line(rec);
        if (!o.quiet && (rec.step % 25 == 0 || rec.step == total)) {
            std::cout << "step " << rec.step << "/" << total << " loss " << rec.loss_total << "\n";
        }
    }
    log.flush();
    if (!log) {
        throw IoError("failed writing log " + cfg.paths.log);
    }
    save_checkpoint(cfg.paths.checkpoint, ck);
    return 0;
}

// ---------------------------------------------------------------------------
// sample

struct SampleOptions {
    std::string checkpoint;
    std::string image;    // image file or dataset directory
    std::string depth;    // accepted and ignored: priors are zero-substituted
    std::string stem;     // output stem for a single image
    std::size_t steps = 1;
    std::uint64_t seed = 0;
    std::string out_dir;
    bool diff = false;
};

struct SampleJob {
    std::string stem;
    fs::path image;
};

inline std::vector<SampleJob> sample_jobs(const SampleOptions& o) {
    const fs::path in(o.image);
    std::vector<SampleJob> jobs;
    if (fs::is_directory(in)) {
        const DatasetSpec s = read_manifest(in);
        for (std::size_t i = 0; i < s.count; ++i) {
            jobs.push_back({scene_stem(i), in / scene_stem(i) / "I.ppm"});
        }
    } else {
        jobs.push_back({o.stem.empty() ? in.stem().string() : o.stem, in});
    }
    return jobs;
}

// Per-image seed: the base seed for a single image, split by index otherwise.
inline std::uint64_t job_seed(std::uint64_t base, std::size_t index, std::size_t n_jobs) {
    return n_jobs == 1 ? base : Rng(base).split(stream::sample).split(index).next_u64();
}

inline int cmd_sample(const SampleOptions& o) {
    if (o.checkpoint.empty() || o.image.empty() || o.out_dir.empty()) {
        throw ConfigError("--checkpoint, --image and --out are required");
    }
    if (o.steps == 0) {
        throw ConfigError("--steps must be at least 1");
    }
    auto ck = load_checkpoint<float>(o.checkpoint);
    const VectorField net(ck.net);
    const auto jobs = sample_jobs(o);
    fs::create_directories(o.out_dir);
    const fs::path out(o.out_dir);
    Json run{{"format_version", format_version},
             {"checkpoint_fingerprint", hex(fingerprint(ck.net))},
             {"steps", o.steps},
             {"seed", o.seed},
             {"threshold", 0.5},
             {"priors", "zero-substituted"},
             {"count", jobs.size()}};
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& job = jobs[i];
        const Tensor<float> I = read_image<float>(job.image);
        if (I.rank() != 3 || I.dim(0) != 3) {
            throw ShapeError(job.image.string() + " is not an RGB image");
        }
        if (I.dim(1) != ck.net.image_size || I.dim(2) != ck.net.image_size) {
            throw ConfigError("image " + job.image.string() + " is " + std::to_string(I.dim(1)) + "x" +
                              std::to_string(I.dim(2)) + " but the checkpoint expects " +
                              std::to_string(ck.net.image_size) + "x" + std::to_string(ck.net.image_size));
        }
        const SamplerConfig sc{o.steps, job_seed(o.seed, i, jobs.size()), 0.5};
        const auto res = sample(net, ck.params, I, sc);
        io::save_wft(out / (job.stem + ".prob.wft"), res.probability);
        io::write_pgm(out / (job.stem + ".prob.pgm"), res.probability);
        io::write_pgm(out / (job.stem + ".mask.pgm"), res.mask);
        if (o.diff) {
            const auto one = sample(net, ck.params, I, SamplerConfig{1, sc.seed, 0.5});
            Tensor<float> d(res.probability.shape());
            for (std::size_t k = 0; k < d.size(); ++k) {
                d[k] = std::abs(res.probability[k] - one.probability[k]);
            }
            io::save_wft(out / (job.stem + ".diff.wft"), d);
            io::write_pgm(out / (job.stem + ".diff.pgm"), d);
        }
    }
    io::write_text(out / "sample.json", canonical_dump(run));
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
    std::string pred_dir;
    std::string gt_dir;
    std::string report;
    std::string csv;
};

// stem -> file, either a dataset tree (<stem>/mask.pgm) or a flat directory
// where the first match in `suffixes` wins.
inline std::map<std::string, fs::path> collect_maps(const fs::path& dir, const std::vector<std::string>& suffixes) {
    if (!fs::is_directory(dir)) {
        throw IoError("not a directory: " + dir.string());
    }
    std::map<std::string, fs::path> out;
    std::map<std::string, std::size_t> rank;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory() && fs::exists(e.path() / "mask.pgm")) {
            out[e.path().filename().string()] = e.path() / "mask.pgm";
            rank[e.path().filename().string()] = 0;
            continue;
        }
        if (!e.is_regular_file()) {
            continue;
        }
        const std::string name = e.path().filename().string();
        for (std::size_t k = 0; k < suffixes.size(); ++k) {
            const auto& suf = suffixes[k];
            if (name.size() > suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0) {
                const std::string stem = name.substr(0, name.size() - suf.size());
                if (!rank.count(stem) || k + 1 < rank[stem]) {
                    out[stem] = e.path();
                    rank[stem] = k + 1;
                }
                break;
            }
        }
    }
    return out;
}

inline const std::vector<std::string>& prediction_suffixes() {
    static const std::vector<std::string> s{".prob.wft", ".wft", ".prob.pgm", ".mask.pgm", ".pgm"};
    return s;
}
inline const std::vector<std::string>& truth_suffixes() {
    static const std::vector<std::string> s{".mask.pgm", ".pgm", ".wft"};
    return s;
}

inline metrics::Map load_prediction(const fs::path& p) {
    if (p.extension() == ".wft") {
        return metrics::as_map(io::load_wft<double>(p));
    }
    return metrics::as_map(io::read_pgm<double>(p));
}

inline metrics::Map load_truth(const fs::path& p) {
    if (p.extension() == ".wft") {
        return metrics::as_map(io::load_wft<double>(p));
    }
    return metrics::as_map(io::read_mask_pgm<double>(p));
}

inline Json report_json(const metrics::MetricsReport& r, const std::string& dataset,
                        const std::vector<std::string>& unmatched) {
    Json per = Json::array();
    for (const auto& s : r.per_image) {
        per.push_back(Json{{"stem", s.stem},
                           {"mae", s.mae},
                           {"f_mean", s.f_mean},
                           {"s_measure", s.s_measure},
                           {"e_mean", s.e_mean},
                           {"gt", metrics::gt_kind_name(s.gt)}});
    }
    return Json{{"format_version", format_version},
                {"dataset", dataset},
                {"n_images", r.n_images},
                {"mae", r.mae},
                {"f_mean", r.f_mean},
                {"s_measure", r.s_measure},
                {"e_mean", r.e_mean},
                {"f_thresholds", "mean over 256 swept thresholds k/255"},
                {"e_thresholds", "mean over 256 swept thresholds (k+1)/256"},
                {"degenerate_gt", r.degenerate_gt},
                {"unmatched", unmatched},
                {"per_image", std::move(per)}};
}

inline int cmd_eval(const EvalOptions& o) {
    if (o.pred_dir.empty() || o.gt_dir.empty() || o.report.empty()) {
        throw ConfigError("--pred, --gt and --report are required");
    }
    const auto preds = collect_maps(o.pred_dir, prediction_suffixes());
    const auto truths = collect_maps(o.gt_dir, truth_suffixes());
    std::vector<std::string> stems, unmatched;
    for (const auto& [s, p] : preds) {
        (truths.count(s) ? stems : unmatched).push_back(s);
    }
    for (const auto& [s, p] : truths) {
        if (!preds.count(s)) {
            unmatched.push_back(s);
        }
    }
    std::sort(unmatched.begin(), unmatched.end());
    if (stems.empty()) {
        std::string all;
        for (const auto& s : unmatched) {
            all += " " + s;
        }
        throw ContractError("no prediction matches a ground-truth stem; stems:" + (all.empty() ? " (none)" : all));
    }
    std::vector<metrics::ImageScores> scores(stems.size());
    parallel_for(stems.size(), [&](std::size_t i) {
        const auto& s = stems[i];
        try {
            scores[i] = metrics::score_image(s, load_prediction(preds.at(s)), load_truth(truths.at(s)));
        } catch (const Error& e) {
            throw Error(e.code(), "stem " + s + ": " + e.what());
        }
    });
    const auto report = metrics::aggregate(std::move(scores));
    const std::string dataset = fs::path(o.gt_dir).lexically_normal().filename().string().empty()
                                    ? fs::path(o.gt_dir).lexically_normal().parent_path().filename().string()
                                    : fs::path(o.gt_dir).lexically_normal().filename().string();
    io::write_text(o.report, canonical_dump(report_json(report, dataset, unmatched)));
    if (!o.csv.empty()) {
        std::ostringstream csv;
        csv.precision(17);
        csv << "stem,mae,f_mean,s_measure,e_mean,gt\n";
        for (const auto& s : report.per_image) {
            csv << s.stem << "," << s.mae << "," << s.f_mean << "," << s.s_measure << "," << s.e_mean << ","
                << metrics::gt_kind_name(s.gt) << "\n";
        }
        io::write_text(o.csv, csv.str());
    }
    std::cout << "n=" << report.n_images << " mae=" << report.mae << " f_mean=" << report.f_mean
              << " s_measure=" << report.s_measure << " e_mean=" << report.e_mean << "\n";
    if (!unmatched.empty()) {
        std::cerr << "unmatched stems excluded:";
        for (const auto& s : unmatched) {
            std::cerr << " " << s;
        }
        std::cerr << "\n";
        return static_cast<int>(ExitCode::contract);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// bench

inline constexpr std::size_t bench_warmup = 3;

struct BenchOptions {
    std::string checkpoint;
    std::size_t steps = 1;
    std::size_t iters = 10;
    std::uint64_t seed = 0;
    std::string report;
};

struct BenchResult {
    std::size_t steps = 0;
    std::vector<double> timed_ms;
    double median_ms = 0.0;
    double p90_ms = 0.0;
    double fps = 0.0;
};

// Nearest-rank percentile of an ascending sample.
inline double percentile(const std::vector<double>& sorted, double q) {
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
    return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline BenchResult run_bench(const Checkpoint<float>& ck, std::size_t steps, std::size_t iters, std::uint64_t seed) {
    if (iters < 10) {
        throw ConfigError("--iters must be at least 10");
    }
    if (steps == 0) {
        throw ConfigError("--steps must be at least 1");
    }
    const VectorField net(ck.net);
    ParamSet<float> params = ck.params.template cast<float>();
    const std::size_t size = ck.net.image_size;
    const Tensor<float> I = synth_scene<float>(Rng(seed), size, size, 0.5).scene.I;
    BenchResult r;
    r.steps = steps;
    for (std::size_t k = 0; k < iters; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto res = sample(net, params, I, SamplerConfig{steps, seed + k, 0.5});
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (res.mask.empty()) {
            throw NumericalError("empty sample");
        }
        if (k >= bench_warmup) {
            r.timed_ms.push_back(ms);
        }
    }
    std::vector<double> sorted = r.timed_ms;
    std::sort(sorted.begin(), sorted.end());
    r.median_ms = median(sorted);
    r.p90_ms = percentile(sorted, 0.9);
    r.fps = 1000.0 / r.median_ms;
    return r;
}

inline Json bench_json(const BenchResult& r, std::size_t iters) {
    return Json{{"format_version", format_version},
                {"steps", r.steps},
                {"iters", iters},
                {"warmup", bench_warmup},
                {"timed", r.timed_ms.size()},
                {"median_ms", r.median_ms},
                {"p90_ms", r.p90_ms},
                {"fps", r.fps},
                {"samples_ms", r.timed_ms}};
}

inline int cmd_bench(const BenchOptions& o) {
    if (o.checkpoint.empty()) {
        throw ConfigError("--checkpoint is required");
    }
    const auto ck = load_checkpoint<float>(o.checkpoint);
    const auto r = run_bench(ck, o.steps, o.iters, o.seed);
    const std::string text = canonical_dump(bench_json(r, o.iters));
    if (!o.report.empty()) {
        io::write_text(o.report, text);
    }
    std::cout << text;
    return 0;
}

} // namespace wf::cli

#endif
