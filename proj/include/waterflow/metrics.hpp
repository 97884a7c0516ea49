// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_METRICS_HPP
#define WATERFLOW_METRICS_HPP

// Saliency evaluation: MAE, mean F-measure, S-measure and mean E-measure.
//
// Maps are single-channel (HxW or 1xHxW) with predictions in [0,1] and binary
// ground truth. Threshold sweeps use the 256 levels k/255 with P >= level.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "waterflow/tensor.hpp"

namespace wf::metrics {

inline constexpr int levels = 256;
inline constexpr double f_beta2 = 0.3;
inline constexpr double s_alpha = 0.5;

// Row-major HxW view over a single-channel map, in double.
struct Map {
    std::size_t h = 0, w = 0;
    std::vector<double> v;

    double operator()(std::size_t y, std::size_t x) const { return v[y * w + x]; }
    std::size_t size() const { return v.size(); }
};

template <Real T>
Map as_map(const Tensor<T>& t) {
    const bool ok = t.rank() == 2 || (t.rank() == 3 && t.dim(0) == 1) || (t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 1);
    if (!ok) {
        throw ShapeError("metric maps must be single-channel, got " + t.shape().str());
    }
    Map m;
    m.h = t.dim(t.rank() - 2);
    m.w = t.dim(t.rank() - 1);
    m.v.assign(t.data().begin(), t.data().end());
    return m;
}

inline void require_pair(const Map& p, const Map& g) {
    if (p.h != g.h || p.w != g.w) {
        throw ShapeError("prediction " + std::to_string(p.h) + "x" + std::to_string(p.w) + " vs ground truth " +
                         std::to_string(g.h) + "x" + std::to_string(g.w));
    }
    for (double v : g.v) {
        if (v != 0.0 && v != 1.0) {
            throw ContractError("ground truth must be binary");
        }
    }
    for (double v : p.v) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ContractError("prediction values must lie in [0,1]");
        }
    }
}

enum class GtKind { mixed, all_background, all_foreground };

inline GtKind gt_kind(const Map& g) {
    const auto fg = std::count(g.v.begin(), g.v.end(), 1.0);
    if (fg == 0) {
        return GtKind::all_background;
    }
    return static_cast<std::size_t>(fg) == g.size() ? GtKind::all_foreground : GtKind::mixed;
}

// Number of sweep levels k/255 that v reaches (v >= k/255), in [1, 256].
inline int levels_reached(double v) {
    int k = static_cast<int>(std::floor(v * 255.0));
    k = std::clamp(k, 0, 255);
    while (k < 255 && v >= static_cast<double>(k + 1) / 255.0) {
        ++k;
    }
    while (k > 0 && v < static_cast<double>(k) / 255.0) {
        --k;
    }
    return k + 1;
}

// E-measure levels are (k+1)/256, k = 0..255, all inside (0,1], so a binary
// prediction binarizes to itself at every level. 256 v is exact in binary.
inline int e_levels_reached(double v) { return static_cast<int>(std::clamp(std::floor(v * 256.0), 0.0, 256.0)); }

namespace detail {

// Foreground-prediction counts per level, split by ground-truth class.
struct LevelCounts {
    std::array<std::int64_t, levels> fg_on_fg{}; // true positives
    std::array<std::int64_t, levels> fg_on_bg{}; // false positives
};

// reach(v) is the number of levels v passes, in [0, 256].
inline LevelCounts level_counts(const Map& p, const Map& g, int (*reach)(double) = levels_reached) {
    std::array<std::int64_t, levels + 1> hist_fg{}, hist_bg{};
    for (std::size_t i = 0; i < p.size(); ++i) {
        const int r = reach(p.v[i]);
        (g.v[i] == 1.0 ? hist_fg : hist_bg)[r] += 1;
    }
    LevelCounts c;
    std::int64_t acc_fg = 0, acc_bg = 0;
    for (int k = levels - 1; k >= 0; --k) {
        // pixels reaching at least k + 1 levels pass level k
        acc_fg += hist_fg[k + 1];
        acc_bg += hist_bg[k + 1];
        c.fg_on_fg[k] = acc_fg;
        c.fg_on_bg[k] = acc_bg;
    }
    return c;
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double ssim_block(const std::vector<double>& p, const std::vector<double>& g) {
    const std::size_t n = p.size();
    if (n == 0) {
        return 0.0;
    }
    const double mx = mean(p), my = mean(g);
    double sx = 0.0, sy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += (p[i] - mx) * (p[i] - mx);
        sy += (g[i] - my) * (g[i] - my);
        sxy += (p[i] - mx) * (g[i] - my);
    }
    const double d = n > 1 ? static_cast<double>(n - 1) : 1.0;
    sx /= d;
    sy /= d;
    sxy /= d;
    const double a = 4.0 * mx * my * sxy;
    const double b = (mx * mx + my * my) * (sx + sy);
    if (a != 0.0) {
        return a / b;
    }
    return b == 0.0 ? 1.0 : 0.0;
}

inline double object_similarity(const std::vector<double>& x) {
    if (x.empty()) {
        return 0.0;
    }
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) {
        ss += (v - m) * (v - m);
    }
    const double sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
    return 2.0 * m / (m * m + 1.0 + sd);
}

inline double enhanced(double a, double b) {
    const double den = a * a + b * b;
    const double xi = den == 0.0 ? 0.0 : 2.0 * a * b / den;
    return (xi + 1.0) * (xi + 1.0) / 4.0;
}

} // namespace detail

inline double mae(const Map& p, const Map& g) {
    require_pair(p, g);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        s += std::abs(p.v[i] - g.v[i]);
    }
    return s / static_cast<double>(p.size());
}

// 0 when the ground truth has no foreground.
inline double f_measure_mean(const Map& p, const Map& g) {
    require_pair(p, g);
    const auto positives = std::count(g.v.begin(), g.v.end(), 1.0);
    if (positives == 0) {
        return 0.0;
    }
    const auto c = detail::level_counts(p, g);
    double sum = 0.0;
    for (int k = 0; k < levels; ++k) {
        const auto tp = c.fg_on_fg[k];
        const auto predicted = tp + c.fg_on_bg[k];
        if (predicted == 0) {
            continue;
        }
        const double prec = static_cast<double>(tp) / static_cast<double>(predicted);
        const double rec = static_cast<double>(tp) / static_cast<double>(positives);
        const double den = f_beta2 * prec + rec;
        if (den > 0.0) {
            sum += (1.0 + f_beta2) * prec * rec / den;
        }
    }
    return sum / levels;
}

inline double s_measure(const Map& p, const Map& g) {
    require_pair(p, g);
    const double gm = detail::mean(g.v);
    if (gm == 0.0) {
        return 1.0 - detail::mean(p.v);
    }
    if (gm == 1.0) {
        return detail::mean(p.v);
    }
    std::vector<double> fg, bg;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (g.v[i] == 1.0) {
            fg.push_back(p.v[i]);
        } else {
            bg.push_back(1.0 - p.v[i]);
        }
    }
    const double object = gm * detail::object_similarity(fg) + (1.0 - gm) * detail::object_similarity(bg);

    // Split about the foreground centroid, rounded half-to-even, then shifted
    // by one so the centroid row/column falls in the upper-left blocks.
    double cy = 0.0, cx = 0.0;
    std::size_t area = 0;
    for (std::size_t y = 0; y < g.h; ++y) {
        for (std::size_t x = 0; x < g.w; ++x) {
            if (g(y, x) == 1.0) {
                cy += static_cast<double>(y);
                cx += static_cast<double>(x);
                ++area;
            }
        }
    }
    const auto sx = static_cast<std::size_t>(std::nearbyint(cx / static_cast<double>(area))) + 1;
    const auto sy = static_cast<std::size_t>(std::nearbyint(cy / static_cast<double>(area))) + 1;
    const double total = static_cast<double>(g.size());
    const std::array<std::array<std::size_t, 4>, 4> blocks{{
        {0, sy, 0, sx},
        {0, sy, sx, g.w},
        {sy, g.h, 0, sx},
        {sy, g.h, sx, g.w},
    }};
    double region = 0.0;
    for (const auto& b : blocks) {
        std::vector<double> pb, gb;
        for (std::size_t y = b[0]; y < b[1]; ++y) {
            for (std::size_t x = b[2]; x < b[3]; ++x) {
                pb.push_back(p(y, x));
                gb.push_back(g(y, x));
            }
        }
        const double weight = static_cast<double>((b[1] - b[0]) * (b[3] - b[2])) / total;
        region += weight * detail::ssim_block(pb, gb);
    }
    return std::max(0.0, s_alpha * object + (1.0 - s_alpha) * region);
}

inline double e_measure_mean(const Map& p, const Map& g) {
    require_pair(p, g);
    const double n = static_cast<double>(p.size());
    const auto kind = gt_kind(g);
    const auto c = detail::level_counts(p, g, e_levels_reached);
    const auto positives = std::count(g.v.begin(), g.v.end(), 1.0);
    const double gm = static_cast<double>(positives) / n;
    double sum = 0.0;
    for (int k = 0; k < levels; ++k) {
        const auto tp = c.fg_on_fg[k], fp = c.fg_on_bg[k];
        const auto predicted = tp + fp;
        if (kind == GtKind::all_background) {
            sum += (n - static_cast<double>(predicted)) / n;
            continue;
        }
        if (kind == GtKind::all_foreground) {
            sum += static_cast<double>(predicted) / n;
            continue;
        }
        const auto fn = positives - tp;
        const auto tn = static_cast<std::int64_t>(p.size()) - positives - fp;
        const double pm = static_cast<double>(predicted) / n;
        const double s = static_cast<double>(tp) * detail::enhanced(1.0 - pm, 1.0 - gm) +
                         static_cast<double>(fp) * detail::enhanced(1.0 - pm, -gm) +
                         static_cast<double>(fn) * detail::enhanced(-pm, 1.0 - gm) +
                         static_cast<double>(tn) * detail::enhanced(-pm, -gm);
        sum += s / n;
    }
    return sum / levels;
}

template <Real T, Real U>
double mae(const Tensor<T>& p, const Tensor<U>& g) { return mae(as_map(p), as_map(g)); }
template <Real T, Real U>
double f_measure_mean(const Tensor<T>& p, const Tensor<U>& g) { return f_measure_mean(as_map(p), as_map(g)); }
template <Real T, Real U>
double s_measure(const Tensor<T>& p, const Tensor<U>& g) { return s_measure(as_map(p), as_map(g)); }
template <Real T, Real U>
double e_measure_mean(const Tensor<T>& p, const Tensor<U>& g) { return e_measure_mean(as_map(p), as_map(g)); }

struct ImageScores {
    std::string stem;
    double mae = 0.0;
    double f_mean = 0.0;
    double s_measure = 0.0;
    double e_mean = 0.0;
    GtKind gt = GtKind::mixed;
};

inline ImageScores score_image(const std::string& stem, const Map& p, const Map& g) {
    ImageScores s;
    s.stem = stem;
    s.mae = mae(p, g);
    s.f_mean = f_measure_mean(p, g);
    s.s_measure = s_measure(p, g);
    s.e_mean = e_measure_mean(p, g);
    s.gt = gt_kind(g);
    return s;
}

struct MetricsReport {
    std::size_t n_images = 0;
    double mae = 0.0;
    double f_mean = 0.0;
    double s_measure = 0.0;
    double e_mean = 0.0;
    std::size_t degenerate_gt = 0;
    std::vector<ImageScores> per_image;
};

// Means over images, summed in the given order.
inline MetricsReport aggregate(std::vector<ImageScores> scores) {
    MetricsReport r;
    r.n_images = scores.size();
    for (const auto& s : scores) {
        r.mae += s.mae;
        r.f_mean += s.f_mean;
        r.s_measure += s.s_measure;
        r.e_mean += s.e_mean;
        r.degenerate_gt += s.gt != GtKind::mixed ? 1 : 0;
    }
    if (!scores.empty()) {
        const double n = static_cast<double>(scores.size());
        r.mae /= n;
        r.f_mean /= n;
        r.s_measure /= n;
        r.e_mean /= n;
    }
    r.per_image = std::move(scores);
    return r;
}

inline const char* gt_kind_name(GtKind k) {
    switch (k) {
    case GtKind::all_background:
        return "all_background";
    case GtKind::all_foreground:
        return "all_foreground";
    default:
        return "mixed";
    }
}

} // namespace wf::metrics

#endif
