// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

// waterflow: synth | priors | train | sample | eval | bench

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "waterflow/cli.hpp"

namespace {

using wf::Json;

// Flags that override config keys when given; unset flags leave the
// config document untouched.
struct TrainFlags {
    std::optional<std::uint64_t> epochs, max_steps, seed, init_seed;
    std::optional<std::size_t> batch, accumulation, steps;
    std::optional<double> lr, prior_dropout;

    Json overrides() const {
        Json j = Json::object();
        auto flow = [&](const char* key, const auto& v) {
            if (v) {
                j["flow"][key] = *v;
            }
        };
        flow("epochs", epochs);
        flow("max_steps", max_steps);
        flow("batch", batch);
        flow("accumulation", accumulation);
        flow("steps", steps);
        flow("lr", lr);
        flow("prior_dropout", prior_dropout);
        if (seed) {
            j["seeds"]["train"] = *seed;
        }
        if (init_seed) {
            j["seeds"]["init"] = *init_seed;
        }
        return j;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Underwater saliency masks by rectified flow"};
    app.require_subcommand(1);

    wf::cli::SynthOptions synth;
    auto* s = app.add_subcommand("synth", "generate a synthetic scene dataset");
    s->add_option("--count", synth.spec.count, "number of scenes");
    s->add_option("--size", synth.spec.size, "scene height and width")->capture_default_str();
    s->add_option("--difficulty", synth.spec.difficulty, "water turbidity in [0,1]")->capture_default_str();
    s->add_option("--seed", synth.spec.seed, "dataset seed")->capture_default_str();
    s->add_option("--out", synth.out_dir, "output directory")->required();
    s->add_option("--from-manifest", synth.from_manifest, "regenerate the dataset described by a manifest.json");

    wf::cli::PriorsOptions priors;
    auto* p = app.add_subcommand("priors", "extract physical prior maps");
    p->add_option("--image", priors.image, "degraded image (PPM or WFT1)")->required();
    p->add_option("--depth", priors.depth, "depth map (PGM or WFT1)")->required();
    p->add_option("--out", priors.out_dir, "output directory")->required();
    p->add_option("--bins", priors.bins, "depth bins for attenuation estimation")->capture_default_str();

    wf::cli::TrainOptions train;
    TrainFlags tf;
    auto* t = app.add_subcommand("train", "train the vector-field network");
    t->add_option("--data", train.data_dir, "dataset directory");
    t->add_option("--config", train.config_path, "run config JSON");
    t->add_option("--out", train.out_checkpoint, "output checkpoint");
    t->add_option("--resume", train.resume, "checkpoint to continue from");
    t->add_option("--log", train.log_path, "JSON-lines log (default <out>.log.jsonl)");
    t->add_option("--epochs", tf.epochs);
    t->add_option("--max-steps", tf.max_steps, "stop after this many optimizer steps (overrides epochs)");
    t->add_option("--batch", tf.batch);
    t->add_option("--accumulation", tf.accumulation);
    t->add_option("--lr", tf.lr);
    t->add_option("--prior-dropout", tf.prior_dropout);
    t->add_option("--seed", tf.seed, "training data-order and noise seed");
    t->add_option("--init-seed", tf.init_seed, "parameter initialization seed");
    t->add_flag("--quiet", train.quiet);

    wf::cli::SampleOptions sample;
    auto* sm = app.add_subcommand("sample", "sample saliency masks");
    sm->add_option("--checkpoint", sample.checkpoint)->required();
    sm->add_option("--image", sample.image, "image file or dataset directory")->required();
    sm->add_option("--depth", sample.depth, "accepted for symmetry with training data; unused");
    sm->add_option("--stem", sample.stem, "output name for a single image");
    sm->add_option("--steps", sample.steps, "Euler steps")->capture_default_str();
    sm->add_option("--seed", sample.seed, "noise seed")->capture_default_str();
    sm->add_option("--out", sample.out_dir, "output directory")->required();
    sm->add_flag("--diff", sample.diff, "also write |P_steps - P_1|");

    wf::cli::EvalOptions eval;
    auto* e = app.add_subcommand("eval", "score predictions against ground truth");
    e->add_option("--pred", eval.pred_dir)->required();
    e->add_option("--gt", eval.gt_dir)->required();
    e->add_option("--report", eval.report)->required();
    e->add_option("--csv", eval.csv, "per-image CSV");

    wf::cli::BenchOptions bench;
    auto* b = app.add_subcommand("bench", "measure sampling latency");
    b->add_option("--checkpoint", bench.checkpoint)->required();
    b->add_option("--steps", bench.steps)->capture_default_str();
    b->add_option("--iters", bench.iters, "iterations including 3 warmups")->capture_default_str();
    b->add_option("--seed", bench.seed)->capture_default_str();
    b->add_option("--report", bench.report, "also write the JSON report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? 0 : static_cast<int>(wf::ExitCode::usage);
    }

    try {
        if (*s) {
            return wf::cli::cmd_synth(synth);
        }
        if (*p) {
            return wf::cli::cmd_priors(priors);
        }
        if (*t) {
            train.overrides = tf.overrides();
            return wf::cli::cmd_train(train);
        }
        if (*sm) {
            return wf::cli::cmd_sample(sample);
        }
        if (*e) {
            return wf::cli::cmd_eval(eval);
        }
        return wf::cli::cmd_bench(bench);
    } catch (const wf::Error& err) {
        std::cerr << "waterflow: " << err.what() << "\n";
        return static_cast<int>(err.code());
    } catch (const std::filesystem::filesystem_error& err) {
        std::cerr << "waterflow: i/o error: " << err.what() << "\n";
        return static_cast<int>(wf::ExitCode::io);
    } catch (const std::exception& err) {
        std::cerr << "waterflow: " << err.what() << "\n";
        return static_cast<int>(wf::ExitCode::contract);
    }
}
