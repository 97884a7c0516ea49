// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_IMAGING_HPP
#define WATERFLOW_IMAGING_HPP

// Underwater image formation
//
//   I_c(x) = J_c(x) T^D_c(x) + A_c (1 - T^B_c(x)),   T_c(x) = exp(-beta_c z(x))
//
// with its inverse, dark-pixel background-light estimation and a synthetic
// scene generator producing (J, z, I, G) quadruples with known parameters.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "waterflow/rng.hpp"
#include "waterflow/tensor.hpp"

namespace wf {

using Rgb = std::array<double, 3>;

struct ImagingParams {
    Rgb A{0.0, 0.0, 0.0};
    Rgb beta_D{0.1, 0.1, 0.1};
    Rgb beta_B{0.1, 0.1, 0.1};

    void validate() const {
        for (std::size_t c = 0; c < 3; ++c) {
            if (!std::isfinite(A[c]) || A[c] < 0.0 || A[c] > 1.0) {
                throw DomainError("background light A[" + std::to_string(c) + "] must lie in [0,1]");
            }
            if (!std::isfinite(beta_D[c]) || beta_D[c] <= 0.0 || !std::isfinite(beta_B[c]) || beta_B[c] <= 0.0) {
                throw DomainError("attenuation coefficients must be positive and finite");
            }
        }
    }
};

template <Real T>
struct Scene {
    Tensor<T> J; // 3 x H x W, [0,1]
    Tensor<T> z; // 1 x H x W, >= 0
    Tensor<T> G; // 1 x H x W, {0,1}
    Tensor<T> I; // 3 x H x W, [0,1]
};

namespace detail {

template <Real T>
void require_depth(const Tensor<T>& z) {
    if (z.rank() != 3 || z.dim(0) != 1) {
        throw ShapeError("depth map must be 1xHxW, got " + z.shape().str());
    }
}

template <Real T>
void require_rgb(const Tensor<T>& img, const char* what) {
    if (img.rank() != 3 || img.dim(0) != 3) {
        throw ShapeError(std::string(what) + " must be 3xHxW, got " + img.shape().str());
    }
}

template <Real T>
void require_same_plane(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
        throw ShapeError(std::string(what) + ": " + a.shape().str() + " vs " + b.shape().str());
    }
}

} // namespace detail

// exp(-beta_c z) per channel; 3 x H x W in (0,1].
template <Real T>
Tensor<T> transmission(const Tensor<T>& z, const Rgb& beta) {
    detail::require_depth(z);
    const std::size_t hw = z.dim(1) * z.dim(2);
    Tensor<T> out(Shape{3, z.dim(1), z.dim(2)});
    for (std::size_t i = 0; i < hw; ++i) {
        if (!(z[i] >= T{0})) {
            throw DomainError("negative or non-finite depth at pixel " + std::to_string(i));
        }
    }
    for (std::size_t c = 0; c < 3; ++c) {
        if (!(beta[c] >= 0.0) || !std::isfinite(beta[c])) {
            throw DomainError("attenuation coefficient must be non-negative");
        }
        for (std::size_t i = 0; i < hw; ++i) {
            out[c * hw + i] = static_cast<T>(std::exp(-beta[c] * static_cast<double>(z[i])));
        }
    }
    return out;
}

template <Real T>
struct Degraded {
    Tensor<T> I;
    std::size_t clamped = 0;
    double clamp_fraction = 0.0;
};

template <Real T>
Degraded<T> degrade(const Tensor<T>& J, const Tensor<T>& z, const ImagingParams& p) {
    detail::require_rgb(J, "clean image");
    detail::require_depth(z);
    detail::require_same_plane(J, z, "degrade");
    const Tensor<T> td = transmission(z, p.beta_D);
    const Tensor<T> tb = transmission(z, p.beta_B);
    Degraded<T> out{Tensor<T>(J.shape())};
    const std::size_t hw = z.dim(1) * z.dim(2);
    for (std::size_t c = 0; c < 3; ++c) {
        const T a = static_cast<T>(p.A[c]);
        for (std::size_t i = 0; i < hw; ++i) {
            const std::size_t k = c * hw + i;
            const T v = J[k] * td[k] + a * (T{1} - tb[k]);
            const T cl = std::clamp(v, T{0}, T{1});
            out.clamped += cl != v;
            out.I[k] = cl;
        }
    }
    out.clamp_fraction = static_cast<double>(out.clamped) / static_cast<double>(J.size());
    return out;
}

inline constexpr double restore_transmission_floor = 1e-3;

template <Real T>
struct Restored {
    Tensor<T> J_hat;
    double clamp_fraction = 0.0;
};

template <Real T>
Restored<T> restore(const Tensor<T>& I, const Tensor<T>& z, const ImagingParams& p) {
    detail::require_rgb(I, "degraded image");
    detail::require_depth(z);
    detail::require_same_plane(I, z, "restore");
    const Tensor<T> td = transmission(z, p.beta_D);
    const Tensor<T> tb = transmission(z, p.beta_B);
    Restored<T> out{Tensor<T>(I.shape())};
    const std::size_t hw = z.dim(1) * z.dim(2);
    std::size_t clamped = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        const T a = static_cast<T>(p.A[c]);
        for (std::size_t i = 0; i < hw; ++i) {
            const std::size_t k = c * hw + i;
            const T v = (I[k] - a * (T{1} - tb[k])) / std::max(td[k], static_cast<T>(restore_transmission_floor));
            const T cl = std::clamp(v, T{0}, T{1});
            clamped += cl != v;
            out.J_hat[k] = cl;
        }
    }
    out.clamp_fraction = static_cast<double>(clamped) / static_cast<double>(I.size());
    return out;
}

struct BackgroundLight {
    Rgb A{0.0, 0.0, 0.0};
    bool low_confidence = false;
};

// Dark-pixel estimate: restrict to the deepest quartile, rank by the
// min-across-channels intensity and average the darkest 1% of the image's
// pixel count.
template <Real T>
BackgroundLight estimate_background_light(const Tensor<T>& I, const Tensor<T>& z) {
    detail::require_rgb(I, "degraded image");
    detail::require_depth(z);
    detail::require_same_plane(I, z, "estimate_background_light");
    const std::size_t hw = z.dim(1) * z.dim(2);
    if (hw < 100) {
        throw ContractError("background light estimation needs at least 100 pixels, got " + std::to_string(hw));
    }
    BackgroundLight out;
    bool constant = true;
    for (std::size_t c = 0; c < 3 && constant; ++c) {
        for (std::size_t i = 1; i < hw; ++i) {
            if (I[c * hw + i] != I[c * hw]) {
                constant = false;
                break;
            }
        }
    }
    if (constant) {
        for (std::size_t c = 0; c < 3; ++c) {
            out.A[c] = std::clamp(static_cast<double>(I[c * hw]), 0.0, 1.0);
        }
        out.low_confidence = true;
        return out;
    }

    std::vector<T> depths(z.data().begin(), z.data().end());
    std::sort(depths.begin(), depths.end());
    const T quartile = depths[(3 * hw) / 4];

    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < hw; ++i) {
        if (z[i] >= quartile) {
            pool.push_back(i);
        }
    }
    auto darkness = [&](std::size_t i) { return std::min({I[i], I[hw + i], I[2 * hw + i]}); };
    std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) { return darkness(a) < darkness(b); });
    const std::size_t n_dark = std::clamp<std::size_t>((hw + 99) / 100, 1, pool.size());
    for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n_dark; ++k) {
            acc += static_cast<double>(I[c * hw + pool[k]]);
        }
        out.A[c] = std::clamp(acc / static_cast<double>(n_dark), 0.0, 1.0);
    }
    // No dark pixel anywhere in the deep pool: the dark-pixel premise fails.
    out.low_confidence = static_cast<double>(darkness(pool.front())) >= 0.5;
    return out;
}

// ---------------------------------------------------------------------------
// synthetic scenes

template <Real T>
struct SynthScene {
    Scene<T> scene;
    ImagingParams params;
    double clamp_fraction = 0.0;
};

namespace detail {

inline Rgb hsv_to_rgb(double h, double s, double v) {
    const double hh = std::fmod(h, 1.0) * 6.0;
    const int sector = static_cast<int>(hh);
    const double f = hh - sector;
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (sector) {
    case 0:
        return {v, t, p};
    case 1:
        return {q, v, p};
    case 2:
        return {p, v, t};
    case 3:
        return {p, q, v};
    case 4:
        return {t, p, v};
    default:
        return {v, p, q};
    }
}

struct Ellipse {
    double cx, cy, rx, ry, cos_a, sin_a;
    double depth;
    Rgb color;
    double tex_freq, tex_phase, tex_amp;

    // Normalized radius: < 1 inside.
    double rho(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double u = (dx * cos_a + dy * sin_a) / rx;
        const double v = (-dx * sin_a + dy * cos_a) / ry;
        return std::sqrt(u * u + v * v);
    }
};

} // namespace detail

// Scene layout: 1-3 textured ellipses at shallow depth over a low-contrast
// seabed whose depth rises smoothly away from the objects, with a few dark
// rocks in the far field. Difficulty in [0,1] scales attenuation and
// background light. beta_B equals beta_D.
template <Real T>
SynthScene<T> synth_scene(const Rng& rng, std::size_t h, std::size_t w, double difficulty) {
    if (h < 16 || w < 16) {
        throw ContractError("synthetic scenes need H, W >= 16");
    }
    if (!(difficulty >= 0.0 && difficulty <= 1.0)) {
        throw DomainError("difficulty must lie in [0,1]");
    }
    Rng r = rng.split(stream::scene);
    const double side = static_cast<double>(std::min(h, w));

    std::vector<detail::Ellipse> objects(1 + r.below(3));
    for (auto& e : objects) {
        e.cx = r.uniform(0.22, 0.78) * static_cast<double>(w);
        e.cy = r.uniform(0.22, 0.78) * static_cast<double>(h);
        e.rx = r.uniform(0.10, 0.22) * side;
        e.ry = r.uniform(0.10, 0.22) * side;
        const double a = r.uniform(0.0, std::numbers::pi);
        e.cos_a = std::cos(a);
        e.sin_a = std::sin(a);
        e.depth = r.uniform(0.5, 1.3);
        e.color = detail::hsv_to_rgb(r.uniform(), r.uniform(0.55, 0.9), r.uniform(0.7, 1.0));
        e.tex_freq = r.uniform(0.3, 0.9);
        e.tex_phase = r.uniform(0.0, 2.0 * std::numbers::pi);
        e.tex_amp = r.uniform(0.04, 0.12);
    }

    const Rgb bed{r.uniform(0.22, 0.38), r.uniform(0.30, 0.45), r.uniform(0.30, 0.45)};
    struct Wave {
        double kx, ky, phase, amp;
    };
    std::array<Wave, 3> waves{};
    for (auto& wv : waves) {
        wv = {r.uniform(-0.25, 0.25), r.uniform(-0.25, 0.25), r.uniform(0.0, 2.0 * std::numbers::pi),
              r.uniform(0.02, 0.06)};
    }
    struct Rock {
        double cx, cy, radius;
    };
    std::vector<Rock> rocks(2 + r.below(3));
    for (auto& rk : rocks) {
        rk = {r.uniform(0.0, static_cast<double>(w)), r.uniform(0.0, static_cast<double>(h)),
              r.uniform(0.03, 0.06) * side};
    }
    const double far_top = r.uniform(3.3, 4.0), far_bottom = r.uniform(2.6, 3.4);
    const double falloff = r.uniform(0.6, 1.2);

    ImagingParams p;
    const double blue = (0.002 + 0.25 * difficulty) * r.uniform(0.8, 1.0);
    const double green = blue * r.uniform(1.0, 1.4);
    const double red = green * r.uniform(1.2, 2.0);
    p.beta_D = {red, green, blue};
    p.beta_B = p.beta_D;
    p.A = {difficulty * r.uniform(0.05, 0.15), difficulty * r.uniform(0.25, 0.45), difficulty * r.uniform(0.30, 0.55)};

    SynthScene<T> out;
    out.params = p;
    Scene<T>& s = out.scene;
    s.J = Tensor<T>(Shape{3, h, w});
    s.z = Tensor<T>(Shape{1, h, w});
    s.G = Tensor<T>(Shape{1, h, w});
    const std::size_t hw = h * w;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
            const std::size_t i = y * w + x;
            // Nearest object by normalized radius decides mask, colour and depth.
            std::size_t best = 0;
            double best_rho = objects[0].rho(px, py);
            for (std::size_t k = 1; k < objects.size(); ++k) {
                const double rho = objects[k].rho(px, py);
                if (rho < best_rho) {
                    best_rho = rho;
                    best = k;
                }
            }
            const auto& obj = objects[best];
            const double far = far_top + (far_bottom - far_top) * py / static_cast<double>(h);
            double depth;
            Rgb color;
            if (best_rho < 1.0) {
                s.G[i] = T{1};
                depth = obj.depth + 0.15 * best_rho * best_rho;
                const double tex = obj.tex_amp * std::sin(obj.tex_freq * (px * obj.cos_a + py * obj.sin_a) + obj.tex_phase);
                for (std::size_t c = 0; c < 3; ++c) {
                    color[c] = std::clamp(obj.color[c] + tex, 0.0, 1.0);
                }
            } else {
                const double d = best_rho - 1.0;
                const double edge_depth = obj.depth + 0.15;
                depth = edge_depth + (far - edge_depth) * (1.0 - std::exp(-d * d / (falloff * falloff)));
                double field = 0.0;
                for (const auto& wv : waves) {
                    field += wv.amp * std::sin(wv.kx * px + wv.ky * py + wv.phase);
                }
                double shade = 1.0;
                for (const auto& rk : rocks) {
                    const double dr = std::hypot(px - rk.cx, py - rk.cy) / rk.radius;
                    if (dr < 1.0) {
                        shade = std::min(shade, 0.05 + 0.3 * dr * dr);
                    }
                }
                for (std::size_t c = 0; c < 3; ++c) {
                    color[c] = std::clamp((bed[c] + field) * shade, 0.0, 1.0);
                }
            }
            s.z[i] = static_cast<T>(std::clamp(depth, 0.0, 4.0));
            for (std::size_t c = 0; c < 3; ++c) {
                s.J[c * hw + i] = static_cast<T>(color[c]);
            }
        }
    }
    auto degraded = degrade(s.J, s.z, p);
    s.I = std::move(degraded.I);
    out.clamp_fraction = degraded.clamp_fraction;
    return out;
}

} // namespace wf

#endif
