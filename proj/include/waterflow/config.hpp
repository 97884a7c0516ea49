// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_CONFIG_HPP
#define WATERFLOW_CONFIG_HPP

// Run configuration as one canonical JSON document. Parsing rejects unknown
// keys at every level; serialization always emits every key.

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "waterflow/flow.hpp"
#include "waterflow/net.hpp"

namespace wf {

using Json = nlohmann::ordered_json;

inline constexpr int format_version = 1;

struct FlowDefaults {
    std::size_t steps = 1;
    double lr = 2.5e-5;
    std::size_t batch = 8;
    std::size_t accumulation = 4;
    std::uint64_t epochs = 90;
    std::uint64_t max_steps = 0; // 0: derived from epochs
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double prior_dropout = 0.5;
    double threshold = 0.5;
};

struct Seeds {
    std::uint64_t init = 0;
    std::uint64_t train = 1;
    std::uint64_t sample = 2;
};

struct Paths {
    std::string data;
    std::string checkpoint;
    std::string log;
};

struct RunConfig {
    NetConfig net;
    FlowDefaults flow;
    Seeds seeds;
    Paths paths;

    TrainConfig train_config() const {
        TrainConfig t;
        t.batch = flow.batch;
        t.accumulation = flow.accumulation;
        t.adam = AdamWConfig{flow.lr, flow.beta1, flow.beta2, flow.eps, flow.weight_decay};
        t.prior_dropout = flow.prior_dropout;
        return t;
    }

    void validate() const {
        net.validate();
        if (flow.steps == 0) {
            throw ConfigError("flow.steps must be at least 1");
        }
        if (flow.batch == 0 || flow.accumulation == 0) {
            throw ConfigError("flow.batch and flow.accumulation must be positive");
        }
        if (!(flow.lr >= 0.0) || !(flow.weight_decay >= 0.0) || !(flow.eps > 0.0)) {
            throw ConfigError("flow.lr and flow.weight_decay must be non-negative, flow.eps positive");
        }
        if (!(flow.beta1 >= 0.0 && flow.beta1 < 1.0) || !(flow.beta2 >= 0.0 && flow.beta2 < 1.0)) {
            throw ConfigError("AdamW betas must lie in [0,1)");
        }
        if (!(flow.prior_dropout >= 0.0 && flow.prior_dropout <= 1.0)) {
            throw ConfigError("flow.prior_dropout must lie in [0,1]");
        }
        if (!(flow.threshold > 0.0 && flow.threshold < 1.0)) {
            throw ConfigError("flow.threshold must lie in (0,1)");
        }
    }
};

namespace detail {

inline void allow_keys(const Json& j, std::string_view where, std::initializer_list<std::string_view> keys) {
    if (!j.is_object()) {
        throw ConfigError(std::string(where) + " must be a JSON object");
    }
    for (const auto& [k, v] : j.items()) {
        bool known = false;
        for (auto key : keys) {
            known = known || key == k;
        }
        if (!known) {
            throw ConfigError("unknown key '" + k + "' in " + std::string(where));
        }
    }
}

template <class V>
void read_key(const Json& j, const char* key, V& out, std::string_view where) {
    if (!j.contains(key)) {
        return;
    }
    try {
        if constexpr (std::is_unsigned_v<V>) {
            const Json& v = j.at(key);
            // in-memory documents hold literals as signed integers
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
                throw ConfigError(std::string(where) + "." + key + " must be a non-negative integer");
            }
        }
        out = j.at(key).get<V>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(where) + "." + key + ": " + e.what());
    }
}

} // namespace detail

inline Json stage_map_json(const StageMap& map) {
    Json out = Json::array();
    for (const auto& stage : map) {
        Json s = Json::array();
        for (Family f : stage) {
            s.push_back(name_of(f));
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline StageMap stage_map_from_json(const Json& j) {
    if (!j.is_array() || j.size() != 4) {
        throw ConfigError("stage_map must be an array of 4 stages");
    }
    StageMap map;
    for (std::size_t s = 0; s < 4; ++s) {
        if (!j[s].is_array()) {
            throw ConfigError("stage_map entries must be arrays of family names");
        }
        for (const auto& name : j[s]) {
            if (!name.is_string()) {
                throw ConfigError("stage_map entries must be arrays of family names");
            }
            map[s].push_back(family_from_name(name.get<std::string>()));
        }
    }
    return map;
}

// Everything that determines parameter names and extents.
inline Json architecture_json(const NetConfig& n) {
    Json j;
    j["image_size"] = n.image_size;
    j["channels"] = n.channels;
    j["prior_channels"] = n.prior_channels;
    j["time_dim"] = n.time_dim;
    j["time_scale"] = n.time_scale;
    j["backbone"] = n.backbone;
    j["stage_map"] = stage_map_json(n.stage_map);
    return j;
}

inline Json to_json(const RunConfig& c) {
    Json j;
    j["format_version"] = format_version;
    const Json arch = architecture_json(c.net);
    for (const auto& [k, v] : arch.items()) {
        j[k] = v;
    }
    const auto& f = c.flow;
    j["flow"] = Json{{"steps", f.steps},
                     {"lr", f.lr},
                     {"batch", f.batch},
                     {"accumulation", f.accumulation},
                     {"epochs", f.epochs},
                     {"max_steps", f.max_steps},
                     {"weight_decay", f.weight_decay},
                     {"beta1", f.beta1},
                     {"beta2", f.beta2},
                     {"eps", f.eps},
                     {"prior_dropout", f.prior_dropout},
                     {"threshold", f.threshold}};
    j["seeds"] = Json{{"init", c.seeds.init}, {"train", c.seeds.train}, {"sample", c.seeds.sample}};
    j["paths"] = Json{{"data", c.paths.data}, {"checkpoint", c.paths.checkpoint}, {"log", c.paths.log}};
    return j;
}

// Keys absent from the document keep their current values in `base`.
inline RunConfig merge_json(RunConfig base, const Json& j) {
    using detail::read_key;
    detail::allow_keys(j, "config",
                       {"format_version", "image_size", "channels", "prior_channels", "time_dim", "time_scale",
                        "backbone", "stage_map", "flow", "seeds", "paths"});
    if (j.contains("format_version") && j["format_version"] != format_version) {
        throw ConfigError("unsupported config format_version " + j["format_version"].dump());
    }
    auto& n = base.net;
    read_key(j, "image_size", n.image_size, "config");
    read_key(j, "channels", n.channels, "config");
    read_key(j, "prior_channels", n.prior_channels, "config");
    read_key(j, "time_dim", n.time_dim, "config");
    read_key(j, "time_scale", n.time_scale, "config");
    read_key(j, "backbone", n.backbone, "config");
    if (j.contains("stage_map")) {
        n.stage_map = stage_map_from_json(j["stage_map"]);
    }
    if (j.contains("flow")) {
        const auto& fj = j["flow"];
        detail::allow_keys(fj, "flow",
                           {"steps", "lr", "batch", "accumulation", "epochs", "max_steps", "weight_decay", "beta1",
                            "beta2", "eps", "prior_dropout", "threshold"});
        auto& f = base.flow;
        read_key(fj, "steps", f.steps, "flow");
        read_key(fj, "lr", f.lr, "flow");
        read_key(fj, "batch", f.batch, "flow");
        read_key(fj, "accumulation", f.accumulation, "flow");
        read_key(fj, "epochs", f.epochs, "flow");
        read_key(fj, "max_steps", f.max_steps, "flow");
        read_key(fj, "weight_decay", f.weight_decay, "flow");
        read_key(fj, "beta1", f.beta1, "flow");
        read_key(fj, "beta2", f.beta2, "flow");
        read_key(fj, "eps", f.eps, "flow");
        read_key(fj, "prior_dropout", f.prior_dropout, "flow");
        read_key(fj, "threshold", f.threshold, "flow");
    }
    if (j.contains("seeds")) {
        const auto& sj = j["seeds"];
        detail::allow_keys(sj, "seeds", {"init", "train", "sample"});
        read_key(sj, "init", base.seeds.init, "seeds");
        read_key(sj, "train", base.seeds.train, "seeds");
        read_key(sj, "sample", base.seeds.sample, "seeds");
    }
    if (j.contains("paths")) {
        const auto& pj = j["paths"];
        detail::allow_keys(pj, "paths", {"data", "checkpoint", "log"});
        read_key(pj, "data", base.paths.data, "paths");
        read_key(pj, "checkpoint", base.paths.checkpoint, "paths");
        read_key(pj, "log", base.paths.log, "paths");
    }
    base.validate();
    return base;
}

inline RunConfig config_from_json(const Json& j) { return merge_json(RunConfig{}, j); }

inline Json parse_json(const std::string& text, const std::string& what) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(what + " is not valid JSON: " + e.what());
    }
}

inline std::string canonical_dump(const Json& j) { return j.dump(2) + "\n"; }

} // namespace wf

#endif
