// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_NET_HPP
#define WATERFLOW_NET_HPP

// Conditional mask network v(X_t, t, I):
//
//   pyramid   OP_1 = conv(R(conv_s4(I) + conv_s4(X_t))),  OP_n = conv(R(conv_s2(OP_{n-1})))
//             with R = group norm + SiLU on the summed embedding
//   time      F_n = Block(OP_n * (1 + scale_n(T)) + shift_n(T)),  T = sinusoidal(t)
//   priors    BF_n = Block(concat(F_n, f_n)),  f_n from the prior encoder or zeros
//   decoder   coarse-to-fine upsampling with BF_n skips, full-resolution head
//
// The output is mask logits at input resolution (x-prediction).

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "waterflow/layers.hpp"
#include "waterflow/priors.hpp"

namespace wf {

struct NetConfig {
    std::size_t image_size = 64;
    std::array<std::size_t, 4> channels{16, 32, 64, 64};
    std::array<std::size_t, 4> prior_channels{16, 32, 64, 64};
    std::size_t time_dim = 64;
    double time_scale = 1000.0;
    StageMap stage_map = default_stage_map();
    std::string backbone = "toy-pyramid";

    void validate() const {
        if (image_size == 0 || image_size % 32 != 0) {
            throw ConfigError("image size " + std::to_string(image_size) + " is not divisible by 32");
        }
        if (time_dim == 0 || time_dim % 2 != 0) {
            throw ConfigError("time embedding dimension must be a positive even number");
        }
        for (std::size_t s = 0; s < 4; ++s) {
            if (channels[s] == 0 || prior_channels[s] == 0) {
                throw ConfigError("channel counts must be positive");
            }
            if (stage_map[s].empty()) {
                throw ConfigError("prior stage " + std::to_string(s + 1) + " has no feature families");
            }
        }
        if (backbone != "toy-pyramid") {
            throw ConfigError("unsupported backbone '" + backbone + "'");
        }
    }
};

// vector[2i] = sin(t w_i), vector[2i+1] = cos(t w_i), w_i = 10000^(-2i/D) * scale
inline std::vector<double> time_embedding(double t, std::size_t dim = 64, double scale = 1000.0) {
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < dim / 2; ++i) {
        const double omega =
            std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim)) * scale;
        v[2 * i] = std::sin(t * omega);
        v[2 * i + 1] = std::cos(t * omega);
    }
    return v;
}

// Batched network inputs. Tensors are NCHW.
template <Real T>
struct NetInputs {
    Tensor<T> image;                                 // [N, 3, H, W]
    Tensor<T> x_t;                                   // [N, 1, H, W]
    std::vector<double> t;                           // N values in [0,1]
    std::optional<std::array<Tensor<T>, 4>> priors;  // batched encoder stage inputs
    std::vector<T> prior_keep;                       // per-sample 0/1 factor; empty = all kept
    std::optional<std::array<Tensor<T>, 4>> staged;  // explicit staged priors, bypassing the encoder
};

struct NetActivations {
    Var op1_pre; // conv(I) + conv(X_t), before R(.)
    std::array<Var, 4> op;
    std::array<Var, 4> f;
    std::array<Var, 4> staged;
    std::array<Var, 4> bf;
    Var logits;
};

class VectorField {
public:
    explicit VectorField(NetConfig cfg) : cfg_(std::move(cfg)), encoder_(cfg_.stage_map, cfg_.prior_channels) {
        cfg_.validate();
        const auto& c = cfg_.channels;
        embed_image_ = nn::Conv2d{"pyr1.embed_image", 3, c[0], 4, 4, 0};
        embed_xt_ = nn::Conv2d{"pyr1.embed_xt", 1, c[0], 4, 4, 0};
        refit_norm_ = nn::GroupNorm{"pyr1.refit_norm", c[0]};
        refine_[0] = nn::Conv2d{"pyr1.refine", c[0], c[0], 3, 1, 1};
        for (std::size_t n = 1; n < 4; ++n) {
            const std::string base = "pyr" + std::to_string(n + 1);
            down_[n] = nn::Conv2d{base + ".down", c[n - 1], c[n], 3, 2, 1};
            down_norm_[n] = nn::GroupNorm{base + ".refit_norm", c[n]};
            refine_[n] = nn::Conv2d{base + ".refine", c[n], c[n], 3, 1, 1};
        }
        time_hidden_ = nn::Linear{"time.hidden", cfg_.time_dim, cfg_.time_dim};
        for (std::size_t n = 0; n < 4; ++n) {
            const std::string lvl = std::to_string(n + 1);
            mod_scale_[n] = nn::Linear{"time" + lvl + ".scale", cfg_.time_dim, c[n]};
            mod_shift_[n] = nn::Linear{"time" + lvl + ".shift", cfg_.time_dim, c[n]};
            time_block_[n] = nn::ConvBlock("time" + lvl + ".block", c[n], c[n]);
            fuse_block_[n] = nn::ConvBlock("fuse" + lvl, c[n] + cfg_.prior_channels[n], c[n]);
        }
        for (std::size_t n = 0; n < 3; ++n) {
            const std::string lvl = std::to_string(n + 1);
            dec_proj_[n] = nn::Conv2d{"dec" + lvl + ".proj", c[n + 1], c[n], 1, 1, 0};
            dec_block_[n] = nn::ConvBlock("dec" + lvl + ".block", c[n], c[n]);
        }
        head_block_ = nn::ConvBlock("head.block", c[0] + 3, c[0]);
        head_out_ = nn::Conv2d{"head.out", c[0], 1, 3, 1, 1};
    }

    const NetConfig& config() const noexcept { return cfg_; }
    const PriorEncoder& encoder() const noexcept { return encoder_; }

    // Spatial extent of pyramid level n (0-based).
    std::size_t level_size(std::size_t n) const { return cfg_.image_size / (std::size_t{4} << n); }

    std::size_t param_count() const {
        std::size_t total = embed_image_.param_count() + embed_xt_.param_count() + refit_norm_.param_count() +
                            refine_[0].param_count() + time_hidden_.param_count() + head_block_.param_count() +
                            head_out_.param_count() + encoder_.param_count();
        for (std::size_t n = 1; n < 4; ++n) {
            total += down_[n].param_count() + down_norm_[n].param_count() + refine_[n].param_count();
        }
        for (std::size_t n = 0; n < 4; ++n) {
            total += mod_scale_[n].param_count() + mod_shift_[n].param_count() + time_block_[n].param_count() +
                     fuse_block_[n].param_count();
        }
        for (std::size_t n = 0; n < 3; ++n) {
            total += dec_proj_[n].param_count() + dec_block_[n].param_count();
        }
        return total;
    }

    // Deterministic He fan-in initialization; the output conv and the time
    // modulation projections start at zero.
    template <Real T>
    ParamSet<T> init(std::uint64_t seed) const {
        ParamSet<T> ps;
        const Rng rng = Rng(seed).split(stream::init);
        embed_image_.init(ps, rng);
        embed_xt_.init(ps, rng);
        refit_norm_.init(ps);
        refine_[0].init(ps, rng);
        for (std::size_t n = 1; n < 4; ++n) {
            down_[n].init(ps, rng);
            down_norm_[n].init(ps);
            refine_[n].init(ps, rng);
        }
        time_hidden_.init(ps, rng);
        for (std::size_t n = 0; n < 4; ++n) {
            mod_scale_[n].init(ps, rng, true);
            mod_shift_[n].init(ps, rng, true);
            time_block_[n].init(ps, rng);
            fuse_block_[n].init(ps, rng);
        }
        for (std::size_t n = 0; n < 3; ++n) {
            dec_proj_[n].init(ps, rng);
            dec_block_[n].init(ps, rng);
        }
        head_block_.init(ps, rng);
        head_out_.init(ps, rng, true);
        encoder_.init(ps, rng);
        return ps;
    }

    template <Real T>
    NetActivations forward(Graph<T>& g, ParamSet<T>& ps, const NetInputs<T>& in) const {
        const std::size_t hw = cfg_.image_size;
        if (in.image.rank() != 4 || in.image.dim(1) != 3 || in.image.dim(2) != hw || in.image.dim(3) != hw) {
            throw ShapeError("network image must be [N, 3, " + std::to_string(hw) + ", " + std::to_string(hw) +
                             "], got " + in.image.shape().str());
        }
        const std::size_t n_batch = in.image.dim(0);
        require_same_shape(in.x_t.shape(), Shape{n_batch, 1, hw, hw}, "network X_t");
        if (in.t.size() != n_batch) {
            throw ShapeError("expected " + std::to_string(n_batch) + " time values, got " +
                             std::to_string(in.t.size()));
        }

        NetActivations act;
        const Var image = g.constant(in.image);
        const Var xt = g.constant(in.x_t);

        act.op1_pre = ad::add(g, embed_image_(g, ps, image), embed_xt_(g, ps, xt));
        act.op[0] = refine_[0](g, ps, ad::silu(g, refit_norm_(g, ps, act.op1_pre)));
        for (std::size_t n = 1; n < 4; ++n) {
            const Var d = down_[n](g, ps, act.op[n - 1]);
            act.op[n] = refine_[n](g, ps, ad::silu(g, down_norm_[n](g, ps, d)));
        }

        Tensor<T> emb(Shape{n_batch, cfg_.time_dim});
        for (std::size_t b = 0; b < n_batch; ++b) {
            const auto v = time_embedding(in.t[b], cfg_.time_dim, cfg_.time_scale);
            for (std::size_t i = 0; i < cfg_.time_dim; ++i) {
                emb[b * cfg_.time_dim + i] = static_cast<T>(v[i]);
            }
        }
        const Var temb = ad::silu(g, time_hidden_(g, ps, g.constant(std::move(emb))));
        for (std::size_t n = 0; n < 4; ++n) {
            const Var mod = ad::channel_affine(g, act.op[n], mod_scale_[n](g, ps, temb), mod_shift_[n](g, ps, temb));
            act.f[n] = time_block_[n](g, ps, mod);
        }

        act.staged = staged_priors(g, ps, in, n_batch);
        for (std::size_t n = 0; n < 4; ++n) {
            act.bf[n] = fuse_block_[n](g, ps, ad::concat_channels(g, act.f[n], act.staged[n]));
        }

        Var d = act.bf[3];
        for (std::size_t n = 3; n-- > 0;) {
            const Var up = dec_proj_[n](g, ps, ad::upsample_bilinear(g, d, 2));
            d = dec_block_[n](g, ps, ad::add(g, up, act.bf[n]));
        }
        const Var full = ad::concat_channels(g, ad::upsample_bilinear(g, d, 4), image);
        act.logits = head_out_(g, ps, head_block_(g, ps, full));
        return act;
    }

    // Staged prior shape at level n for a batch.
    Shape staged_shape(std::size_t n, std::size_t n_batch) const {
        return Shape{n_batch, cfg_.prior_channels[n], level_size(n), level_size(n)};
    }

private:
    template <Real T>
    std::array<Var, 4> staged_priors(Graph<T>& g, ParamSet<T>& ps, const NetInputs<T>& in, std::size_t n_batch) const {
        std::array<Var, 4> out;
        if (in.staged) {
            for (std::size_t n = 0; n < 4; ++n) {
                require_same_shape((*in.staged)[n].shape(), staged_shape(n, n_batch), "staged priors");
                out[n] = g.constant((*in.staged)[n]);
            }
            return out;
        }
        if (!in.priors) {
            for (std::size_t n = 0; n < 4; ++n) {
                out[n] = g.constant(Tensor<T>(staged_shape(n, n_batch)));
            }
            return out;
        }
        std::array<Var, 4> inputs;
        for (std::size_t n = 0; n < 4; ++n) {
            const auto& t = (*in.priors)[n];
            const std::size_t side = cfg_.image_size / stage_pre_factor(n);
            require_same_shape(t.shape(), Shape{n_batch, stage_input_channels(cfg_.stage_map, n), side, side},
                               "prior stage input");
            inputs[n] = g.constant(t);
        }
        out = encoder_.encode(g, ps, inputs);
        if (!in.prior_keep.empty()) {
            for (std::size_t n = 0; n < 4; ++n) {
                out[n] = ad::scale_batch(g, out[n], in.prior_keep);
            }
        }
        return out;
    }

    NetConfig cfg_;
    PriorEncoder encoder_;
    nn::Conv2d embed_image_, embed_xt_;
    nn::GroupNorm refit_norm_;
    std::array<nn::Conv2d, 4> down_, refine_;
    std::array<nn::GroupNorm, 4> down_norm_;
    nn::Linear time_hidden_;
    std::array<nn::Linear, 4> mod_scale_, mod_shift_;
    std::array<nn::ConvBlock, 4> time_block_, fuse_block_;
    std::array<nn::Conv2d, 3> dec_proj_;
    std::array<nn::ConvBlock, 3> dec_block_;
    nn::ConvBlock head_block_;
    nn::Conv2d head_out_;
};

} // namespace wf

#endif
