// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_PRIORS_HPP
#define WATERFLOW_PRIORS_HPP

// Physical prior features computed from a degraded image and its depth map,
// and the four-stage encoder that brings them to the pyramid resolutions.
//
// Feature families:
//   B       backscatter map                     3 x H x W
//   grad_z  depth-gradient magnitude            1 x H x W
//   beta_D  per-depth-bin attenuation, looked up per pixel   3 x H x W
//   T_D     direct transmission                 3 x H x W
//   R       transmission ratios r/g, r/b        2 x H x W
//   Var     local channel variance              3 x H x W
//   J_hat   restored image                      3 x H x W
//   Int     backscatter / attenuation intensity 2 x H x W

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "waterflow/imaging.hpp"
#include "waterflow/layers.hpp"

namespace wf {

enum class Family : std::size_t { B, grad_z, beta_D, T_D, R, Var, J_hat, Int };

inline constexpr std::size_t family_count = 8;
inline constexpr std::array<const char*, family_count> family_names{"B",   "grad_z", "beta_D", "T_D",
                                                                     "R",   "Var",    "J_hat",  "Int"};
inline constexpr std::array<std::size_t, family_count> family_channels{3, 1, 3, 3, 2, 3, 3, 2};

inline std::size_t channels_of(Family f) { return family_channels[static_cast<std::size_t>(f)]; }
inline const char* name_of(Family f) { return family_names[static_cast<std::size_t>(f)]; }

inline Family family_from_name(const std::string& name) {
    for (std::size_t i = 0; i < family_count; ++i) {
        if (name == family_names[i]) {
            return static_cast<Family>(i);
        }
    }
    throw ConfigError("unknown prior feature family '" + name + "'");
}

// Which families feed which encoder stage. Default: boundary cues first,
// then distance-varying attenuation, channel statistics, global constraints.
using StageMap = std::array<std::vector<Family>, 4>;

inline StageMap default_stage_map() {
    return {{{Family::B, Family::grad_z},
             {Family::T_D, Family::beta_D},
             {Family::R, Family::Var},
             {Family::J_hat, Family::Int}}};
}

inline constexpr double ratio_epsilon = 1e-6;
inline constexpr double regression_floor = 1e-3;
inline constexpr std::size_t variance_window = 7;
inline constexpr std::size_t default_depth_bins = 8;
inline constexpr std::size_t min_bin_pixels = 16;

// Per-channel, per-depth-bin attenuation table.
struct BetaTable {
    std::size_t bins = 0;
    double z_min = 0.0, z_max = 0.0;
    std::array<std::vector<double>, 3> beta;      // [channel][bin]
    std::array<std::vector<bool>, 3> inherited;   // bin had too few samples

    std::size_t bin_of(double z) const {
        if (z_max <= z_min) {
            return 0;
        }
        const double f = (z - z_min) / (z_max - z_min) * static_cast<double>(bins);
        return std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, std::floor(f))));
    }
};

template <Real T>
class PriorStack {
public:
    PriorStack(Tensor<T> B, Tensor<T> grad_z, BetaTable beta_D_hat, Tensor<T> beta_map, Tensor<T> T_D, Tensor<T> R,
               Tensor<T> Var, Tensor<T> J_hat, Tensor<T> Int)
        : beta_table_(std::move(beta_D_hat)) {
        maps_ = {std::move(B), std::move(grad_z), std::move(beta_map), std::move(T_D),
                 std::move(R), std::move(Var),    std::move(J_hat),    std::move(Int)};
        if (beta_table_.bins == 0) {
            throw ContractError("prior stack is missing the beta_D table");
        }
        for (std::size_t i = 0; i < family_count; ++i) {
            const auto& m = maps_[i];
            if (m.empty()) {
                throw ContractError(std::string("prior stack is missing feature family ") + family_names[i]);
            }
            if (m.rank() != 3 || m.dim(0) != family_channels[i]) {
                throw ShapeError(std::string("feature family ") + family_names[i] + " has dims " + m.shape().str());
            }
            if (m.dim(1) != maps_[0].dim(1) || m.dim(2) != maps_[0].dim(2)) {
                throw ShapeError("prior feature maps do not share H x W");
            }
        }
    }

    const Tensor<T>& map(Family f) const { return maps_[static_cast<std::size_t>(f)]; }
    const BetaTable& beta_table() const noexcept { return beta_table_; }
    std::size_t height() const { return maps_[0].dim(1); }
    std::size_t width() const { return maps_[0].dim(2); }

private:
    std::array<Tensor<T>, family_count> maps_;
    BetaTable beta_table_;
};

// ---------------------------------------------------------------------------
// individual features

template <Real T>
Tensor<T> backscatter_map(const Rgb& A, const Rgb& beta_B, const Tensor<T>& z) {
    if (z.empty()) {
        throw ContractError("backscatter map requires a depth map");
    }
    const Tensor<T> tb = transmission(z, beta_B);
    Tensor<T> out(tb.shape());
    const std::size_t hw = z.dim(1) * z.dim(2);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < hw; ++i) {
            out[c * hw + i] = std::clamp(static_cast<T>(A[c]) * (T{1} - tb[c * hw + i]), T{0}, T{1});
        }
    }
    return out;
}

// Central-difference gradient magnitude with replicated borders.
template <Real T>
Tensor<T> depth_gradient(const Tensor<T>& z) {
    detail::require_depth(z);
    const std::size_t h = z.dim(1), w = z.dim(2);
    if (h < 3 || w < 3) {
        throw ContractError("depth gradient needs H, W >= 3");
    }
    Tensor<T> out(z.shape());
    auto at = [&](std::size_t y, std::size_t x) { return z[y * w + x]; };
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t ym = y == 0 ? 0 : y - 1, yp = y + 1 == h ? y : y + 1;
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t xm = x == 0 ? 0 : x - 1, xp = x + 1 == w ? x : x + 1;
            const T gx = (at(y, xp) - at(y, xm)) / T{2};
            const T gy = (at(yp, x) - at(ym, x)) / T{2};
            out[y * w + x] = std::sqrt(gx * gx + gy * gy);
        }
    }
    return out;
}

// Least-squares slope of -log(I_c - B_c) against z within each of `bins`
// equal-width depth bins. Bins with fewer than 16 usable pixels (or no depth
// spread) inherit the nearest populated bin.
template <Real T>
BetaTable estimate_beta_D(const Tensor<T>& I, const Tensor<T>& z, const Tensor<T>& B,
                          std::size_t bins = default_depth_bins) {
    detail::require_rgb(I, "degraded image");
    detail::require_depth(z);
    detail::require_same_plane(I, z, "estimate_beta_D");
    require_same_shape(I.shape(), B.shape(), "estimate_beta_D backscatter");
    if (bins == 0) {
        throw ContractError("estimate_beta_D needs at least one depth bin");
    }
    const std::size_t hw = z.dim(1) * z.dim(2);
    const auto [lo, hi] = std::minmax_element(z.data().begin(), z.data().end());
    BetaTable table;
    table.bins = bins;
    table.z_min = static_cast<double>(*lo);
    table.z_max = static_cast<double>(*hi);
    if (!(table.z_max > table.z_min)) {
        throw EstimationError("depth map has no variation; attenuation slope is undefined");
    }
    std::vector<std::size_t> bin_of(hw);
    for (std::size_t i = 0; i < hw; ++i) {
        bin_of[i] = table.bin_of(static_cast<double>(z[i]));
    }
    for (std::size_t c = 0; c < 3; ++c) {
        std::vector<double> sz(bins, 0.0), sy(bins, 0.0);
        std::vector<std::size_t> n(bins, 0);
        for (std::size_t i = 0; i < hw; ++i) {
            const double d = static_cast<double>(I[c * hw + i]) - static_cast<double>(B[c * hw + i]);
            if (d > regression_floor) {
                sz[bin_of[i]] += static_cast<double>(z[i]);
                sy[bin_of[i]] += -std::log(d);
                ++n[bin_of[i]];
            }
        }
        std::vector<double> szz(bins, 0.0), szy(bins, 0.0);
        for (std::size_t i = 0; i < hw; ++i) {
            const double d = static_cast<double>(I[c * hw + i]) - static_cast<double>(B[c * hw + i]);
            if (d > regression_floor) {
                const std::size_t b = bin_of[i];
                const double mz = sz[b] / static_cast<double>(n[b]), my = sy[b] / static_cast<double>(n[b]);
                const double dz = static_cast<double>(z[i]) - mz;
                szz[b] += dz * dz;
                szy[b] += dz * (-std::log(d) - my);
            }
        }
        std::vector<std::optional<double>> raw(bins);
        const double spread_floor = 1e-12 * std::max(1.0, table.z_max * table.z_max);
        for (std::size_t b = 0; b < bins; ++b) {
            if (n[b] >= min_bin_pixels && szz[b] > spread_floor * static_cast<double>(n[b])) {
                raw[b] = szy[b] / szz[b];
            }
        }
        table.beta[c].assign(bins, 0.0);
        table.inherited[c].assign(bins, false);
        bool any = false;
        for (const auto& v : raw) {
            any = any || v.has_value();
        }
        if (!any) {
            throw EstimationError("no depth bin has enough usable pixels for channel " + std::to_string(c));
        }
        for (std::size_t b = 0; b < bins; ++b) {
            if (raw[b]) {
                table.beta[c][b] = *raw[b];
                continue;
            }
            table.inherited[c][b] = true;
            for (std::size_t off = 1; off < bins; ++off) {
                if (b >= off && raw[b - off]) {
                    table.beta[c][b] = *raw[b - off];
                    break;
                }
                if (b + off < bins && raw[b + off]) {
                    table.beta[c][b] = *raw[b + off];
                    break;
                }
            }
        }
    }
    return table;
}

// Backscatter coefficient from the darkest pixels of each depth bin, where
// I_c ~ A_c (1 - exp(-beta_B z)); least squares through the origin.
template <Real T>
Rgb estimate_beta_B(const Tensor<T>& I, const Tensor<T>& z, const Rgb& A, std::size_t bins = default_depth_bins) {
    detail::require_rgb(I, "degraded image");
    detail::require_depth(z);
    const std::size_t hw = z.dim(1) * z.dim(2);
    const auto [lo, hi] = std::minmax_element(z.data().begin(), z.data().end());
    const double z_min = static_cast<double>(*lo), z_max = static_cast<double>(*hi);
    std::vector<std::vector<std::size_t>> members(bins);
    for (std::size_t i = 0; i < hw; ++i) {
        std::size_t b = 0;
        if (z_max > z_min) {
            b = std::min(bins - 1, static_cast<std::size_t>((static_cast<double>(z[i]) - z_min) / (z_max - z_min) *
                                                             static_cast<double>(bins)));
        }
        members[b].push_back(i);
    }
    auto darkness = [&](std::size_t i) { return std::min({I[i], I[hw + i], I[2 * hw + i]}); };
    std::vector<std::size_t> dark;
    for (auto& m : members) {
        if (m.empty()) {
            continue;
        }
        std::stable_sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) { return darkness(a) < darkness(b); });
        const std::size_t take = std::max<std::size_t>(1, m.size() / 100);
        dark.insert(dark.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(take));
    }
    Rgb beta{0.0, 0.0, 0.0};
    for (std::size_t c = 0; c < 3; ++c) {
        if (A[c] < 1e-3) {
            continue;
        }
        double szz = 0.0, szy = 0.0;
        for (std::size_t i : dark) {
            const double zi = static_cast<double>(z[i]);
            const double ratio = static_cast<double>(I[c * hw + i]) / A[c];
            if (zi <= 0.0 || ratio >= 0.999) {
                continue;
            }
            szz += zi * zi;
            szy += zi * -std::log(1.0 - ratio);
        }
        beta[c] = szz > 0.0 ? std::clamp(szy / szz, 0.0, 10.0) : 0.0;
    }
    return beta;
}

template <Real T>
Tensor<T> transmission_ratio(const Tensor<T>& T_D) {
    detail::require_rgb(T_D, "transmission");
    const std::size_t hw = T_D.dim(1) * T_D.dim(2);
    Tensor<T> out(Shape{2, T_D.dim(1), T_D.dim(2)});
    const T eps = static_cast<T>(ratio_epsilon);
    for (std::size_t i = 0; i < hw; ++i) {
        const T r = T_D[i], g = T_D[hw + i], b = T_D[2 * hw + i];
        if (!(r > T{0} && g > T{0} && b > T{0})) {
            throw DomainError("transmission must be positive for ratio features");
        }
        out[i] = r / std::max(g, eps);
        out[hw + i] = r / std::max(b, eps);
    }
    return out;
}

// Per-channel variance over a window x window neighbourhood, replicate padded.
template <Real T>
Tensor<T> channel_variance(const Tensor<T>& img, std::size_t window = variance_window) {
    detail::require_rgb(img, "image");
    if (window % 2 == 0) {
        throw ContractError("variance window must be odd");
    }
    const std::size_t h = img.dim(1), w = img.dim(2), hw = h * w;
    const auto r = static_cast<std::ptrdiff_t>(window / 2);
    const auto hh = static_cast<std::ptrdiff_t>(h), ww = static_cast<std::ptrdiff_t>(w);
    const double count = static_cast<double>(window * window);
    Tensor<T> out(img.shape());
    for (std::size_t c = 0; c < 3; ++c) {
        const T* src = img.raw() + c * hw;
        for (std::ptrdiff_t y = 0; y < hh; ++y) {
            for (std::ptrdiff_t x = 0; x < ww; ++x) {
                auto sample = [&](std::ptrdiff_t dy, std::ptrdiff_t dx) {
                    const std::ptrdiff_t yy = std::clamp(y + dy, std::ptrdiff_t{0}, hh - 1);
                    const std::ptrdiff_t xx = std::clamp(x + dx, std::ptrdiff_t{0}, ww - 1);
                    return static_cast<double>(src[yy * ww + xx]);
                };
                double mean = 0.0;
                for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                    for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                        mean += sample(dy, dx);
                    }
                }
                mean /= count;
                double var = 0.0;
                for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                    for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                        const double d = sample(dy, dx) - mean;
                        var += d * d;
                    }
                }
                out[c * hw + static_cast<std::size_t>(y * ww + x)] = static_cast<T>(var / count);
            }
        }
    }
    return out;
}

// (mean_c B_c, 1 - mean_c T^D_c)
template <Real T>
Tensor<T> intensity_maps(const Tensor<T>& B, const Tensor<T>& T_D) {
    require_same_shape(B.shape(), T_D.shape(), "intensity_maps");
    detail::require_rgb(B, "backscatter");
    const std::size_t hw = B.dim(1) * B.dim(2);
    Tensor<T> out(Shape{2, B.dim(1), B.dim(2)});
    for (std::size_t i = 0; i < hw; ++i) {
        out[i] = (B[i] + B[hw + i] + B[2 * hw + i]) / T{3};
        out[hw + i] = T{1} - (T_D[i] + T_D[hw + i] + T_D[2 * hw + i]) / T{3};
    }
    return out;
}

// ---------------------------------------------------------------------------
// full extraction

template <Real T>
struct PriorExtraction {
    PriorStack<T> stack;
    BackgroundLight background;
    Rgb beta_B{0.0, 0.0, 0.0};
    bool beta_D_degenerate = false; // regression impossible; beta_D set to 0
};

template <Real T>
PriorExtraction<T> extract_priors(const Tensor<T>& I, const Tensor<T>& z, std::size_t bins = default_depth_bins) {
    detail::require_rgb(I, "degraded image");
    detail::require_depth(z);
    detail::require_same_plane(I, z, "extract_priors");
    const std::size_t h = z.dim(1), w = z.dim(2), hw = h * w;

    const BackgroundLight bg = estimate_background_light(I, z);
    const Rgb beta_B = estimate_beta_B(I, z, bg.A, bins);
    Tensor<T> B = backscatter_map(bg.A, beta_B, z);

    BetaTable table;
    bool degenerate = false;
    try {
        table = estimate_beta_D(I, z, B, bins);
    } catch (const EstimationError&) {
        degenerate = true;
        table.bins = bins;
        const auto [lo, hi] = std::minmax_element(z.data().begin(), z.data().end());
        table.z_min = static_cast<double>(*lo);
        table.z_max = static_cast<double>(*hi);
        for (std::size_t c = 0; c < 3; ++c) {
            table.beta[c].assign(bins, 0.0);
            table.inherited[c].assign(bins, true);
        }
    }

    Tensor<T> beta_map(Shape{3, h, w});
    Tensor<T> T_D(Shape{3, h, w});
    for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t b = table.bin_of(static_cast<double>(z[i]));
        for (std::size_t c = 0; c < 3; ++c) {
            const double beta = table.beta[c][b];
            beta_map[c * hw + i] = static_cast<T>(beta);
            // Negative slopes (albedo dominated bins) do not describe attenuation.
            const double optical = std::min(80.0, std::max(0.0, beta) * static_cast<double>(z[i]));
            T_D[c * hw + i] = static_cast<T>(std::exp(-optical));
        }
    }

    Tensor<T> J_hat(Shape{3, h, w});
    for (std::size_t k = 0; k < 3 * hw; ++k) {
        const T v = (I[k] - B[k]) / std::max(T_D[k], static_cast<T>(restore_transmission_floor));
        J_hat[k] = std::clamp(v, T{0}, T{1});
    }

    Tensor<T> R = transmission_ratio(T_D);
    Tensor<T> Var = channel_variance(I);
    Tensor<T> Int = intensity_maps(B, T_D);
    Tensor<T> grad_z = depth_gradient(z);
    PriorStack<T> stack(std::move(B), std::move(grad_z), std::move(table), std::move(beta_map), std::move(T_D),
                        std::move(R), std::move(Var), std::move(J_hat), std::move(Int));
    return {std::move(stack), bg, beta_B, degenerate};
}

// ---------------------------------------------------------------------------
// hierarchical encoding

inline std::size_t stage_input_channels(const StageMap& map, std::size_t stage) {
    std::size_t c = 0;
    for (Family f : map.at(stage)) {
        c += channels_of(f);
    }
    return c;
}

// Stage n (0-based) consumes its families averaged down by 2^n; the two
// stride-2 blocks then reach 1/4, 1/8, 1/16, 1/32 of the input resolution.
inline std::size_t stage_pre_factor(std::size_t stage) { return std::size_t{1} << stage; }

// Concatenated, pre-downsampled encoder inputs of one sample, [C_n, H_n, W_n].
template <Real T>
std::array<Tensor<T>, 4> stage_inputs(const PriorStack<T>& stack, const StageMap& map) {
    std::array<Tensor<T>, 4> out;
    const std::size_t h = stack.height(), w = stack.width();
    for (std::size_t s = 0; s < 4; ++s) {
        const std::size_t cin = stage_input_channels(map, s);
        if (cin == 0) {
            throw ConfigError("prior stage " + std::to_string(s + 1) + " has no feature families");
        }
        Tensor<T> full(Shape{1, cin, h, w});
        std::size_t c0 = 0;
        for (Family f : map[s]) {
            const auto& m = stack.map(f);
            std::copy(m.data().begin(), m.data().end(), full.raw() + c0 * h * w);
            c0 += channels_of(f);
        }
        Tensor<T> reduced = ops::downsample_avg(full, stage_pre_factor(s));
        out[s] = reduced.reshaped(Shape{cin, reduced.dim(2), reduced.dim(3)});
    }
    return out;
}

// The four physical-prior encoders: two conv-norm-SiLU blocks with stride-2
// downsampling each.
class PriorEncoder {
public:
    PriorEncoder() = default;
    PriorEncoder(StageMap map, std::array<std::size_t, 4> channels) : map_(std::move(map)), channels_(channels) {
        for (std::size_t s = 0; s < 4; ++s) {
            const std::string base = "ppe" + std::to_string(s + 1);
            first_[s] = nn::ConvBlock(base + ".block1", stage_input_channels(map_, s), channels_[s], 3, 2);
            second_[s] = nn::ConvBlock(base + ".block2", channels_[s], channels_[s], 3, 2);
        }
    }

    const StageMap& stage_map() const noexcept { return map_; }
    const std::array<std::size_t, 4>& channels() const noexcept { return channels_; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (std::size_t s = 0; s < 4; ++s) {
            n += first_[s].param_count() + second_[s].param_count();
        }
        return n;
    }

    template <Real T>
    void init(ParamSet<T>& ps, const Rng& rng) const {
        for (std::size_t s = 0; s < 4; ++s) {
            first_[s].init(ps, rng);
            second_[s].init(ps, rng);
        }
    }

    // inputs[s] is the batched [N, C_s, H_s, W_s] stage input.
    template <Real T>
    std::array<Var, 4> encode(Graph<T>& g, ParamSet<T>& ps, const std::array<Var, 4>& inputs) const {
        std::array<Var, 4> out;
        for (std::size_t s = 0; s < 4; ++s) {
            out[s] = second_[s](g, ps, first_[s](g, ps, inputs[s]));
        }
        return out;
    }

    // Names of the last conv in each stage.
    std::array<std::string, 4> final_conv_names() const {
        std::array<std::string, 4> n;
        for (std::size_t s = 0; s < 4; ++s) {
            n[s] = second_[s].conv.name;
        }
        return n;
    }

private:
    StageMap map_ = default_stage_map();
    std::array<std::size_t, 4> channels_{16, 32, 64, 64};
    std::array<nn::ConvBlock, 4> first_;
    std::array<nn::ConvBlock, 4> second_;
};

// Staged priors for one stack, evaluated outside any training graph.
template <Real T>
std::array<Tensor<T>, 4> encode_stages(const PriorEncoder& enc, ParamSet<T>& ps, const PriorStack<T>& stack) {
    Graph<T> g;
    auto in = stage_inputs(stack, enc.stage_map());
    std::array<Var, 4> vars;
    for (std::size_t s = 0; s < 4; ++s) {
        vars[s] = g.constant(in[s].reshaped(Shape{1, in[s].dim(0), in[s].dim(1), in[s].dim(2)}));
    }
    auto outs = enc.encode(g, ps, vars);
    std::array<Tensor<T>, 4> result;
    for (std::size_t s = 0; s < 4; ++s) {
        result[s] = g.value(outs[s]);
        if (!result[s].all_finite()) {
            throw NumericalError("non-finite staged prior at stage " + std::to_string(s + 1));
        }
    }
    return result;
}

} // namespace wf

#endif
