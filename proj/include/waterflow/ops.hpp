// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_OPS_HPP
#define WATERFLOW_OPS_HPP

// Forward kernels and their adjoints. Every function here is pure; the
// autodiff layer in graph.hpp composes them. Loops run in a fixed order so
// results are reproducible bit for bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "waterflow/tensor.hpp"

namespace wf::ops {

namespace detail {

inline void require_rank4(const Shape& s, const char* op) {
    if (s.rank() != 4) {
        throw ShapeError(std::string(op) + " expects a rank-4 NCHW tensor, got " + s.str());
    }
}

template <Real T>
T sigmoid_scalar(T v) {
    if (v >= 0) {
        return T{1} / (T{1} + std::exp(-v));
    }
    const T e = std::exp(v);
    return e / (T{1} + e);
}

} // namespace detail

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    if (in + 2 * pad < k) {
        throw ShapeError("kernel " + std::to_string(k) + " larger than padded input " + std::to_string(in + 2 * pad));
    }
    return (in + 2 * pad - k) / stride + 1;
}

// ---------------------------------------------------------------------------
// conv2d

template <Real T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride, std::size_t pad) {
    detail::require_rank4(x.shape(), "conv2d input");
    if (w.rank() != 4 || w.dim(2) != w.dim(3)) {
        throw ShapeError("conv2d weight must be [outC, inC, k, k], got " + w.shape().str());
    }
    if (x.dim(1) != w.dim(1)) {
        throw ShapeError("conv2d channel mismatch: input " + x.shape().str() + " vs weight " + w.shape().str());
    }
    if (b.rank() != 1 || b.dim(0) != w.dim(0)) {
        throw ShapeError("conv2d bias " + b.shape().str() + " does not match weight " + w.shape().str());
    }
    if (stride == 0) {
        throw ShapeError("conv2d stride must be positive");
    }
    const std::size_t n_batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t cout = w.dim(0), k = w.dim(2);
    const std::size_t oh = conv_out_extent(h, k, stride, pad), ow = conv_out_extent(wd, k, stride, pad);
    Tensor<T> y(Shape{n_batch, cout, oh, ow});
    const T* xp = x.raw();
    const T* wp = w.raw();
    T* yp = y.raw();
    const auto sp = static_cast<std::ptrdiff_t>(pad);
    const auto ss = static_cast<std::ptrdiff_t>(stride);
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t oc = 0; oc < cout; ++oc) {
            T* yplane = yp + (n * cout + oc) * oh * ow;
            std::fill(yplane, yplane + oh * ow, b[oc]);
            for (std::size_t ic = 0; ic < cin; ++ic) {
                const T* xplane = xp + (n * cin + ic) * h * wd;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const T wv = wp[((oc * cin + ic) * k + ky) * k + kx];
                        // Valid output columns: 0 <= ox*s - p + kx < W.
                        const auto kxs = static_cast<std::ptrdiff_t>(kx);
                        std::ptrdiff_t ox0 = 0;
                        while (ox0 * ss - sp + kxs < 0) {
                            ++ox0;
                        }
                        std::ptrdiff_t ox1 = static_cast<std::ptrdiff_t>(ow);
                        while (ox1 > ox0 && (ox1 - 1) * ss - sp + kxs >= static_cast<std::ptrdiff_t>(wd)) {
                            --ox1;
                        }
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * ss - sp + static_cast<std::ptrdiff_t>(ky);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                                continue;
                            }
                            const T* xrow = xplane + static_cast<std::size_t>(iy) * wd;
                            T* yrow = yplane + oy * ow;
                            if (stride == 1) {
                                const T* xs = xrow - sp + kxs;
                                for (std::ptrdiff_t ox = ox0; ox < ox1; ++ox) {
                                    yrow[ox] += wv * xs[ox];
                                }
                            } else {
                                for (std::ptrdiff_t ox = ox0; ox < ox1; ++ox) {
                                    yrow[ox] += wv * xrow[ox * ss - sp + kxs];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

// Adjoint of conv2d. Accumulates into dx/dw/db (callers zero them first).
template <Real T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, std::size_t stride, std::size_t pad,
                     Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
    const std::size_t n_batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t cout = w.dim(0), k = w.dim(2);
    const std::size_t oh = dy.dim(2), ow = dy.dim(3);
    const T* xp = x.raw();
    const T* wp = w.raw();
    const T* gp = dy.raw();
    const auto sp = static_cast<std::ptrdiff_t>(pad);
    const auto ss = static_cast<std::ptrdiff_t>(stride);
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t oc = 0; oc < cout; ++oc) {
            const T* gplane = gp + (n * cout + oc) * oh * ow;
            if (db) {
                T acc = 0;
                for (std::size_t i = 0; i < oh * ow; ++i) {
                    acc += gplane[i];
                }
                (*db)[oc] += acc;
            }
            for (std::size_t ic = 0; ic < cin; ++ic) {
                const T* xplane = xp + (n * cin + ic) * h * wd;
                T* dxplane = dx ? dx->raw() + (n * cin + ic) * h * wd : nullptr;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const std::size_t widx = ((oc * cin + ic) * k + ky) * k + kx;
                        const T wv = wp[widx];
                        const auto kxs = static_cast<std::ptrdiff_t>(kx);
                        std::ptrdiff_t ox0 = 0;
                        while (ox0 * ss - sp + kxs < 0) {
                            ++ox0;
                        }
                        std::ptrdiff_t ox1 = static_cast<std::ptrdiff_t>(ow);
                        while (ox1 > ox0 && (ox1 - 1) * ss - sp + kxs >= static_cast<std::ptrdiff_t>(wd)) {
                            --ox1;
                        }
                        T wacc = 0;
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * ss - sp + static_cast<std::ptrdiff_t>(ky);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                                continue;
                            }
                            const std::size_t xoff = static_cast<std::size_t>(iy) * wd;
                            const T* grow = gplane + oy * ow;
                            for (std::ptrdiff_t ox = ox0; ox < ox1; ++ox) {
                                const std::size_t ix = static_cast<std::size_t>(ox * ss - sp + kxs);
                                wacc += grow[ox] * xplane[xoff + ix];
                                if (dxplane) {
                                    dxplane[xoff + ix] += wv * grow[ox];
                                }
                            }
                        }
                        if (dw) {
                            (*dw)[widx] += wacc;
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// pointwise

template <Real T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& v : y.data()) {
        v = detail::sigmoid_scalar(v);
    }
    return y;
}

template <Real T>
Tensor<T> silu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& v : y.data()) {
        v = v * detail::sigmoid_scalar(v);
    }
    return y;
}

template <Real T>
void silu_backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dx) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T s = detail::sigmoid_scalar(x[i]);
        dx[i] += dy[i] * s * (T{1} + x[i] * (T{1} - s));
    }
}

template <Real T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> y = a;
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] += b[i];
    }
    return y;
}

template <Real T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "mul");
    Tensor<T> y = a;
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] *= b[i];
    }
    return y;
}

// ---------------------------------------------------------------------------
// resampling

namespace detail {

struct LerpTap {
    std::size_t i0, i1;
    double w1;
};

// Half-pixel-centred source taps, edge-clamped.
inline std::vector<LerpTap> bilinear_taps(std::size_t in, std::size_t factor) {
    std::vector<LerpTap> taps(in * factor);
    for (std::size_t o = 0; o < taps.size(); ++o) {
        double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const auto i0 = static_cast<std::size_t>(std::floor(src));
        const std::size_t i1 = std::min(i0 + 1, in - 1);
        taps[o] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
}

} // namespace detail

template <Real T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, std::size_t factor) {
    detail::require_rank4(x.shape(), "upsample_bilinear");
    if (factor == 0) {
        throw ShapeError("upsample factor must be positive");
    }
    const std::size_t n_batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = h * factor, ow = w * factor;
    const auto ty = detail::bilinear_taps(h, factor);
    const auto tx = detail::bilinear_taps(w, factor);
    Tensor<T> y(Shape{n_batch, c, oh, ow});
    for (std::size_t p = 0; p < n_batch * c; ++p) {
        const T* src = x.raw() + p * h * w;
        T* dst = y.raw() + p * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            const T wy1 = static_cast<T>(ty[oy].w1), wy0 = T{1} - wy1;
            const T* r0 = src + ty[oy].i0 * w;
            const T* r1 = src + ty[oy].i1 * w;
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const T wx1 = static_cast<T>(tx[ox].w1), wx0 = T{1} - wx1;
                const std::size_t c0 = tx[ox].i0, c1 = tx[ox].i1;
                dst[oy * ow + ox] = wy0 * (wx0 * r0[c0] + wx1 * r0[c1]) + wy1 * (wx0 * r1[c0] + wx1 * r1[c1]);
            }
        }
    }
    return y;
}

template <Real T>
void upsample_bilinear_backward(const Tensor<T>& dy, std::size_t factor, Tensor<T>& dx) {
    const std::size_t n_batch = dx.dim(0), c = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
    const std::size_t oh = h * factor, ow = w * factor;
    const auto ty = detail::bilinear_taps(h, factor);
    const auto tx = detail::bilinear_taps(w, factor);
    for (std::size_t p = 0; p < n_batch * c; ++p) {
        const T* g = dy.raw() + p * oh * ow;
        T* d = dx.raw() + p * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            const T wy1 = static_cast<T>(ty[oy].w1), wy0 = T{1} - wy1;
            T* r0 = d + ty[oy].i0 * w;
            T* r1 = d + ty[oy].i1 * w;
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const T wx1 = static_cast<T>(tx[ox].w1), wx0 = T{1} - wx1;
                const T gv = g[oy * ow + ox];
                const std::size_t c0 = tx[ox].i0, c1 = tx[ox].i1;
                r0[c0] += gv * wy0 * wx0;
                r0[c1] += gv * wy0 * wx1;
                r1[c0] += gv * wy1 * wx0;
                r1[c1] += gv * wy1 * wx1;
            }
        }
    }
}

template <Real T>
Tensor<T> downsample_avg(const Tensor<T>& x, std::size_t factor) {
    detail::require_rank4(x.shape(), "downsample_avg");
    if (factor == 0 || x.dim(2) % factor != 0 || x.dim(3) % factor != 0) {
        throw ShapeError("downsample factor " + std::to_string(factor) + " does not divide " + x.shape().str());
    }
    const std::size_t n_batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = h / factor, ow = w / factor;
    const T inv = T{1} / static_cast<T>(factor * factor);
    Tensor<T> y(Shape{n_batch, c, oh, ow});
    for (std::size_t p = 0; p < n_batch * c; ++p) {
        const T* src = x.raw() + p * h * w;
        T* dst = y.raw() + p * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                T acc = 0;
                for (std::size_t dy = 0; dy < factor; ++dy) {
                    for (std::size_t dx = 0; dx < factor; ++dx) {
                        acc += src[(oy * factor + dy) * w + ox * factor + dx];
                    }
                }
                dst[oy * ow + ox] = acc * inv;
            }
        }
    }
    return y;
}

template <Real T>
void downsample_avg_backward(const Tensor<T>& dy, std::size_t factor, Tensor<T>& dx) {
    const std::size_t n_batch = dx.dim(0), c = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
    const std::size_t oh = h / factor, ow = w / factor;
    const T inv = T{1} / static_cast<T>(factor * factor);
    for (std::size_t p = 0; p < n_batch * c; ++p) {
        const T* g = dy.raw() + p * oh * ow;
        T* d = dx.raw() + p * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                d[y * w + x] += g[(y / factor) * ow + x / factor] * inv;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// channel plumbing

template <Real T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_rank4(a.shape(), "concat_channels");
    detail::require_rank4(b.shape(), "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
        throw ShapeError("concat_channels: " + a.shape().str() + " vs " + b.shape().str());
    }
    const std::size_t n_batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
    Tensor<T> y(Shape{n_batch, ca + cb, a.dim(2), a.dim(3)});
    for (std::size_t n = 0; n < n_batch; ++n) {
        std::copy_n(a.raw() + n * ca * hw, ca * hw, y.raw() + n * (ca + cb) * hw);
        std::copy_n(b.raw() + n * cb * hw, cb * hw, y.raw() + n * (ca + cb) * hw + ca * hw);
    }
    return y;
}

// y[n,c] = x[n,c] * (1 + scale[n,c]) + shift[n,c], broadcast over pixels.
template <Real T>
Tensor<T> channel_affine(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift) {
    detail::require_rank4(x.shape(), "channel_affine");
    const Shape mod{x.dim(0), x.dim(1)};
    require_same_shape(scale.shape(), mod, "channel_affine scale");
    require_same_shape(shift.shape(), mod, "channel_affine shift");
    const std::size_t hw = x.dim(2) * x.dim(3);
    Tensor<T> y = x;
    for (std::size_t p = 0; p < x.dim(0) * x.dim(1); ++p) {
        const T s = T{1} + scale[p], b = shift[p];
        T* row = y.raw() + p * hw;
        for (std::size_t i = 0; i < hw; ++i) {
            row[i] = row[i] * s + b;
        }
    }
    return y;
}

// Dense layer over rank-2 [N, in] input with weight [out, in].
template <Real T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1) || b.rank() != 1 || b.dim(0) != w.dim(0)) {
        throw ShapeError("linear: input " + x.shape().str() + ", weight " + w.shape().str() + ", bias " +
                         b.shape().str());
    }
    const std::size_t n_batch = x.dim(0), in = x.dim(1), out = w.dim(0);
    Tensor<T> y(Shape{n_batch, out});
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t o = 0; o < out; ++o) {
            T acc = b[o];
            for (std::size_t i = 0; i < in; ++i) {
                acc += w[o * in + i] * x[n * in + i];
            }
            y[n * out + o] = acc;
        }
    }
    return y;
}

// ---------------------------------------------------------------------------
// group normalization

inline constexpr double group_norm_eps = 1e-6;

// min(8, C), reduced to the nearest divisor of C when 8 does not divide it.
inline std::size_t default_groups(std::size_t channels) {
    std::size_t g = std::min<std::size_t>(8, channels);
    while (channels % g != 0) {
        --g;
    }
    return g;
}

template <Real T>
struct GroupNormStats {
    std::vector<T> mean;
    std::vector<T> rstd;
};

template <Real T>
Tensor<T> group_norm(const Tensor<T>& x, std::size_t groups, const Tensor<T>& gain, const Tensor<T>& shift,
                     GroupNormStats<T>* stats = nullptr) {
    detail::require_rank4(x.shape(), "group_norm");
    const std::size_t n_batch = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (groups == 0 || c % groups != 0) {
        throw ShapeError("group_norm: " + std::to_string(groups) + " groups do not divide " + std::to_string(c) +
                         " channels");
    }
    require_same_shape(gain.shape(), Shape{c}, "group_norm gain");
    require_same_shape(shift.shape(), Shape{c}, "group_norm shift");
    const std::size_t cpg = c / groups, count = cpg * hw;
    Tensor<T> y(x.shape());
    if (stats) {
        stats->mean.assign(n_batch * groups, T{0});
        stats->rstd.assign(n_batch * groups, T{0});
    }
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t g = 0; g < groups; ++g) {
            const T* src = x.raw() + (n * c + g * cpg) * hw;
            T* dst = y.raw() + (n * c + g * cpg) * hw;
            T mean = 0;
            for (std::size_t i = 0; i < count; ++i) {
                mean += src[i];
            }
            mean /= static_cast<T>(count);
            T var = 0;
            for (std::size_t i = 0; i < count; ++i) {
                const T d = src[i] - mean;
                var += d * d;
            }
            var /= static_cast<T>(count);
            const T rstd = T{1} / std::sqrt(var + static_cast<T>(group_norm_eps));
            for (std::size_t cc = 0; cc < cpg; ++cc) {
                const std::size_t ch = g * cpg + cc;
                for (std::size_t i = 0; i < hw; ++i) {
                    dst[cc * hw + i] = (src[cc * hw + i] - mean) * rstd * gain[ch] + shift[ch];
                }
            }
            if (stats) {
                stats->mean[n * groups + g] = mean;
                stats->rstd[n * groups + g] = rstd;
            }
        }
    }
    return y;
}

template <Real T>
void group_norm_backward(const Tensor<T>& x, std::size_t groups, const Tensor<T>& gain, const GroupNormStats<T>& stats,
                         const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dgain, Tensor<T>* dshift) {
    const std::size_t n_batch = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const std::size_t cpg = c / groups, count = cpg * hw;
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t g = 0; g < groups; ++g) {
            const std::size_t base = (n * c + g * cpg) * hw;
            const T mean = stats.mean[n * groups + g], rstd = stats.rstd[n * groups + g];
            T sum_dxhat = 0, sum_dxhat_xhat = 0;
            for (std::size_t cc = 0; cc < cpg; ++cc) {
                const std::size_t ch = g * cpg + cc;
                T dgain_acc = 0, dshift_acc = 0;
                for (std::size_t i = 0; i < hw; ++i) {
                    const std::size_t idx = base + cc * hw + i;
                    const T xhat = (x[idx] - mean) * rstd;
                    const T dxhat = dy[idx] * gain[ch];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    dgain_acc += dy[idx] * xhat;
                    dshift_acc += dy[idx];
                }
                if (dgain) {
                    (*dgain)[ch] += dgain_acc;
                }
                if (dshift) {
                    (*dshift)[ch] += dshift_acc;
                }
            }
            if (!dx) {
                continue;
            }
            const T inv = T{1} / static_cast<T>(count);
            const T mean_dxhat = sum_dxhat * inv, mean_dxhat_xhat = sum_dxhat_xhat * inv;
            for (std::size_t cc = 0; cc < cpg; ++cc) {
                const std::size_t ch = g * cpg + cc;
                for (std::size_t i = 0; i < hw; ++i) {
                    const std::size_t idx = base + cc * hw + i;
                    const T xhat = (x[idx] - mean) * rstd;
                    const T dxhat = dy[idx] * gain[ch];
                    (*dx)[idx] += rstd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                }
            }
        }
    }
}

} // namespace wf::ops

#endif
