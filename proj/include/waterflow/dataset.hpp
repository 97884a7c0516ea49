// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_DATASET_HPP
#define WATERFLOW_DATASET_HPP

// On-disk synthetic dataset:
//
//   <root>/manifest.json
//   <root>/0000/{I.ppm, J.ppm, depth.pgm, mask.pgm, scene.json}
//   ...
//
// depth.pgm stores z / depth_range quantized to 8 bits.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "waterflow/config.hpp"
#include "waterflow/imaging.hpp"
#include "waterflow/io.hpp"
#include "waterflow/parallel.hpp"

namespace wf {

namespace fs = std::filesystem;

inline constexpr double depth_range = 4.0;

struct DatasetSpec {
    std::size_t count = 0;
    std::size_t size = 64;
    double difficulty = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (size < 16) {
            throw ConfigError("scene size must be at least 16");
        }
        if (!(difficulty >= 0.0 && difficulty <= 1.0)) {
            throw ConfigError("difficulty must lie in [0,1]");
        }
    }
};

inline Json manifest_json(const DatasetSpec& s) {
    return Json{{"format_version", format_version},
                {"count", s.count},
                {"size", s.size},
                {"difficulty", s.difficulty},
                {"seed", s.seed}};
}

inline DatasetSpec manifest_from_json(const Json& j) {
    detail::allow_keys(j, "manifest", {"format_version", "count", "size", "difficulty", "seed"});
    for (const char* key : {"count", "size", "difficulty", "seed"}) {
        if (!j.contains(key)) {
            throw ConfigError(std::string("manifest is missing '") + key + "'");
        }
    }
    DatasetSpec s;
    detail::read_key(j, "count", s.count, "manifest");
    detail::read_key(j, "size", s.size, "manifest");
    detail::read_key(j, "difficulty", s.difficulty, "manifest");
    detail::read_key(j, "seed", s.seed, "manifest");
    s.validate();
    return s;
}

inline DatasetSpec read_manifest(const fs::path& root) {
    const fs::path p = root / "manifest.json";
    return manifest_from_json(parse_json(io::read_text(p), p.string()));
}

inline std::string scene_stem(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu", index);
    return buf;
}

// Scene i of a dataset depends only on (seed, i).
inline SynthScene<double> dataset_scene(const DatasetSpec& s, std::size_t index) {
    return synth_scene<double>(Rng(s.seed).split(index), s.size, s.size, s.difficulty);
}

inline Json rgb_json(const Rgb& v) { return Json::array({v[0], v[1], v[2]}); }

inline void write_scene(const fs::path& dir, const DatasetSpec& s, std::size_t index, const SynthScene<double>& sc) {
    fs::create_directories(dir);
    io::write_ppm(dir / "I.ppm", sc.scene.I);
    io::write_ppm(dir / "J.ppm", sc.scene.J);
    Tensor<double> zq = sc.scene.z;
    for (auto& v : zq.data()) {
        v /= depth_range;
    }
    io::write_pgm(dir / "depth.pgm", zq);
    io::write_pgm(dir / "mask.pgm", sc.scene.G);
    Json j{{"format_version", format_version},
           {"index", index},
           {"seed", s.seed},
           {"difficulty", s.difficulty},
           {"size", s.size},
           {"depth_range", depth_range},
           {"A", rgb_json(sc.params.A)},
           {"beta_D", rgb_json(sc.params.beta_D)},
           {"beta_B", rgb_json(sc.params.beta_B)},
           {"clamp_fraction", sc.clamp_fraction}};
    io::write_text(dir / "scene.json", canonical_dump(j));
}

inline void write_dataset(const fs::path& root, const DatasetSpec& s) {
    s.validate();
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec || !fs::is_directory(root)) {
        throw IoError("cannot create output directory " + root.string());
    }
    parallel_for(s.count, [&](std::size_t i) { write_scene(root / scene_stem(i), s, i, dataset_scene(s, i)); });
    io::write_text(root / "manifest.json", canonical_dump(manifest_json(s)));
}

template <Real T>
struct DatasetItem {
    std::string stem;
    Tensor<T> I; // 3 x H x W
    Tensor<T> z; // 1 x H x W
    Tensor<T> G; // 1 x H x W
};

template <Real T>
Tensor<T> read_depth(const fs::path& path) {
    if (path.extension() == ".wft") {
        return io::load_wft<T>(path);
    }
    Tensor<T> z = io::read_pgm<T>(path);
    for (auto& v : z.data()) {
        v *= static_cast<T>(depth_range);
    }
    return z;
}

template <Real T>
Tensor<T> read_image(const fs::path& path) {
    if (path.extension() == ".wft") {
        return io::load_wft<T>(path);
    }
    return io::read_ppm<T>(path);
}

template <Real T>
std::vector<DatasetItem<T>> load_dataset(const fs::path& root) {
    const DatasetSpec s = read_manifest(root);
    std::vector<DatasetItem<T>> items(s.count);
    parallel_for(s.count, [&](std::size_t i) {
        const std::string stem = scene_stem(i);
        const fs::path dir = root / stem;
        items[i] = {stem, io::read_ppm<T>(dir / "I.ppm"), read_depth<T>(dir / "depth.pgm"),
                    io::read_mask_pgm<T>(dir / "mask.pgm")};
        if (items[i].I.dim(1) != s.size || items[i].I.dim(2) != s.size) {
            throw ShapeError(dir.string() + ": image is not " + std::to_string(s.size) + "x" +
                             std::to_string(s.size));
        }
    });
    return items;
}

} // namespace wf

#endif
