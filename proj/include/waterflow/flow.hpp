// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_FLOW_HPP
#define WATERFLOW_FLOW_HPP

// Rectified-flow training and sampling over mask space.
//
// Training pairs noise X_0 with a ground-truth mask X_1 on the straight line
// X_t = t X_1 + (1 - t) X_0 and supervises the network's mask prediction with
// the task loss 0.5 BCE + 0.5 IoU. Sampling integrates dX/dt = v with Euler
// steps, deriving v = (X1_hat - X_t) / (1 - t) from the mask prediction.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "waterflow/net.hpp"
#include "waterflow/optim.hpp"

namespace wf {

// ---------------------------------------------------------------------------
// interpolation

template <Real T>
Tensor<T> interpolate(const Tensor<T>& x0, const Tensor<T>& x1, double t) {
    require_same_shape(x0.shape(), x1.shape(), "interpolate");
    if (!(t >= 0.0 && t <= 1.0)) {
        throw DomainError("interpolation time " + std::to_string(t) + " outside [0,1]");
    }
    Tensor<T> out(x0.shape());
    const T tt = static_cast<T>(t), st = static_cast<T>(1.0 - t);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = tt * x1[i] + st * x0[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// task loss

inline constexpr double bce_clamp = 1e-7;
inline constexpr double iou_smooth = 1.0;

struct LossValue {
    double total = 0.0;
    double bce = 0.0;
    double iou = 0.0;
};

namespace detail {

inline double sigmoid_d(double v) {
    if (v >= 0.0) {
        return 1.0 / (1.0 + std::exp(-v));
    }
    const double e = std::exp(v);
    return e / (1.0 + e);
}

// Loss of one image and, optionally, d(loss)/d(logits) scaled by `scale`.
template <Real T>
LossValue task_loss_image(std::span<const T> logits, std::span<const T> mask, std::span<T> grad, double scale) {
    const std::size_t n = logits.size();
    std::vector<double> p(n);
    double bce = 0.0, inter = 0.0, sum_p = 0.0, sum_g = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = sigmoid_d(static_cast<double>(logits[i]));
        const double g = static_cast<double>(mask[i]);
        const double pc = std::clamp(p[i], bce_clamp, 1.0 - bce_clamp);
        bce -= g * std::log(pc) + (1.0 - g) * std::log(1.0 - pc);
        inter += p[i] * g;
        sum_p += p[i];
        sum_g += g;
    }
    bce /= static_cast<double>(n);
    const double uni = sum_p + sum_g - inter;
    const double ratio = (inter + iou_smooth) / (uni + iou_smooth);
    LossValue out;
    out.bce = bce;
    out.iou = 1.0 - ratio;
    out.total = 0.5 * out.bce + 0.5 * out.iou;
    if (!grad.empty()) {
        const double den = uni + iou_smooth;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = static_cast<double>(mask[i]);
            const double dp = p[i] * (1.0 - p[i]);
            const bool clamped = p[i] < bce_clamp || p[i] > 1.0 - bce_clamp;
            const double d_bce = clamped ? 0.0 : (p[i] - g) / static_cast<double>(n);
            const double d_ratio_dp = (g * den - (inter + iou_smooth) * (1.0 - g)) / (den * den);
            const double d_iou = -d_ratio_dp * dp;
            grad[i] += static_cast<T>(scale * (0.5 * d_bce + 0.5 * d_iou));
        }
    }
    return out;
}

template <Real T>
void require_binary(const Tensor<T>& G) {
    for (T v : G.data()) {
        if (v != T{0} && v != T{1}) {
            throw ContractError("task loss target must be binary");
        }
    }
}

} // namespace detail

// Mean over batch items of the per-image task loss. Accepts [N,1,H,W] or a
// single 1xHxW map.
template <Real T>
LossValue task_loss(const Tensor<T>& logits, const Tensor<T>& G) {
    require_same_shape(logits.shape(), G.shape(), "task_loss");
    detail::require_binary(G);
    if (!logits.all_finite()) {
        throw ContractError("task loss logits must be finite");
    }
    const Nchw d = as_nchw(logits.shape());
    const std::size_t per = logits.size() / d.n;
    LossValue acc;
    for (std::size_t b = 0; b < d.n; ++b) {
        const auto v = detail::task_loss_image<T>(logits.data().subspan(b * per, per), G.data().subspan(b * per, per),
                                                  {}, 0.0);
        acc.bce += v.bce;
        acc.iou += v.iou;
    }
    acc.bce /= static_cast<double>(d.n);
    acc.iou /= static_cast<double>(d.n);
    acc.total = 0.5 * acc.bce + 0.5 * acc.iou;
    return acc;
}

// Differentiable task loss node; `components` receives the forward values.
template <Real T>
Var task_loss(Graph<T>& g, Var logits, const Tensor<T>& G, LossValue* components = nullptr) {
    const LossValue v = task_loss(g.value(logits), G);
    if (components) {
        *components = v;
    }
    return g.push(Tensor<T>(Shape{1}, static_cast<T>(v.total)), {logits.id},
                  [G](Graph<T>& gr, std::size_t self) {
                      const auto& lv = gr.input_value(self, 0);
                      auto* dl = gr.input_grad(self, 0);
                      const Nchw d = as_nchw(lv.shape());
                      const std::size_t per = lv.size() / d.n;
                      const double seed = static_cast<double>(gr.grad(self)[0]) / static_cast<double>(d.n);
                      for (std::size_t b = 0; b < d.n; ++b) {
                          detail::task_loss_image<T>(lv.data().subspan(b * per, per), G.data().subspan(b * per, per),
                                                     dl->data().subspan(b * per, per), seed);
                      }
                  });
}

// ---------------------------------------------------------------------------
// training samples

// One image of the training set with its pre-computed encoder inputs.
template <Real T>
struct TrainItem {
    Tensor<T> image;                                      // 3 x H x W
    Tensor<T> mask;                                       // 1 x H x W, {0,1}
    std::optional<std::array<Tensor<T>, 4>> prior_inputs; // stage_inputs() of its PriorStack
};

template <Real T>
struct FlowSample {
    Tensor<T> x0;  // 1 x H x W standard normal
    Tensor<T> x1;  // 1 x H x W mask
    double t = 0.0;
    Tensor<T> xt;  // t x1 + (1 - t) x0
    const TrainItem<T>* item = nullptr;
    bool keep_priors = true;
};

template <Real T>
Tensor<T> normal_map(Rng rng, const Shape& shape) {
    Tensor<T> out(shape);
    for (auto& v : out.data()) {
        v = static_cast<T>(rng.normal());
    }
    return out;
}

// Draws X_0, t and the prior-dropout coin from dedicated streams of rng.
template <Real T>
FlowSample<T> make_flow_sample(const TrainItem<T>& item, const Rng& rng, double prior_dropout) {
    FlowSample<T> s;
    s.item = &item;
    s.x1 = item.mask;
    s.x0 = normal_map<T>(rng.split(stream::noise), item.mask.shape());
    Rng tr = rng.split(stream::time);
    s.t = tr.uniform();
    s.xt = interpolate(s.x0, s.x1, s.t);
    Rng dr = rng.split(stream::dropout);
    s.keep_priors = item.prior_inputs.has_value() && dr.uniform() >= prior_dropout;
    return s;
}

namespace detail {

template <Real T>
Tensor<T> stack_batch(const std::vector<const Tensor<T>*>& items) {
    const Shape& s = items.front()->shape();
    std::vector<std::size_t> dims{items.size()};
    for (std::size_t i = 0; i < s.rank(); ++i) {
        dims.push_back(s[i]);
    }
    Tensor<T> out{Shape(dims)};
    const std::size_t per = s.numel();
    for (std::size_t b = 0; b < items.size(); ++b) {
        require_same_shape(items[b]->shape(), s, "batch members");
        std::copy(items[b]->data().begin(), items[b]->data().end(), out.raw() + b * per);
    }
    return out;
}

} // namespace detail

template <Real T>
NetInputs<T> batch_inputs(std::span<const FlowSample<T>> batch) {
    if (batch.empty()) {
        throw ContractError("empty training batch");
    }
    NetInputs<T> in;
    std::vector<const Tensor<T>*> images, xts;
    bool any_priors = true;
    for (const auto& s : batch) {
        images.push_back(&s.item->image);
        xts.push_back(&s.xt);
        in.t.push_back(s.t);
        any_priors = any_priors && s.item->prior_inputs.has_value();
    }
    in.image = detail::stack_batch(images);
    in.x_t = detail::stack_batch(xts);
    if (any_priors) {
        std::array<Tensor<T>, 4> stages;
        for (std::size_t n = 0; n < 4; ++n) {
            std::vector<const Tensor<T>*> parts;
            for (const auto& s : batch) {
                parts.push_back(&(*s.item->prior_inputs)[n]);
            }
            stages[n] = detail::stack_batch(parts);
        }
        in.priors = std::move(stages);
        for (const auto& s : batch) {
            in.prior_keep.push_back(s.keep_priors ? T{1} : T{0});
        }
    }
    return in;
}

template <Real T>
Tensor<T> batch_targets(std::span<const FlowSample<T>> batch) {
    std::vector<const Tensor<T>*> masks;
    for (const auto& s : batch) {
        masks.push_back(&s.x1);
    }
    return detail::stack_batch(masks);
}

// ---------------------------------------------------------------------------
// trainer

struct TrainConfig {
    std::size_t batch = 8;
    std::size_t accumulation = 4;
    AdamWConfig adam{};
    double prior_dropout = 0.5;
};

struct LossRecord {
    std::uint64_t step = 0;
    double loss_total = 0.0;
    double loss_bce = 0.0;
    double loss_iou = 0.0;
    double lr = 0.0;
    double wall_ms = 0.0;
};

template <Real T>
class Trainer {
public:
    Trainer(const VectorField& net, ParamSet<T>& params, AdamWState<T>& state, TrainConfig cfg)
        : net_(net), params_(params), state_(state), cfg_(cfg) {
        if (cfg_.batch == 0 || cfg_.accumulation == 0) {
            throw ConfigError("batch and accumulation must be positive");
        }
    }

    const TrainConfig& config() const noexcept { return cfg_; }

    // Forward/backward over each micro-batch, gradients averaged over the
    // accumulation window, then one AdamW update.
    LossRecord train_step(std::span<const std::vector<FlowSample<T>>> micro_batches) {
        if (micro_batches.size() != cfg_.accumulation) {
            throw ContractError("expected " + std::to_string(cfg_.accumulation) + " micro-batches, got " +
                                std::to_string(micro_batches.size()));
        }
        const auto start = std::chrono::steady_clock::now();
        params_.zero_grad();
        LossRecord rec;
        for (const auto& mb : micro_batches) {
            Graph<T> g;
            const NetInputs<T> in = batch_inputs<T>(mb);
            const auto act = net_.forward(g, params_, in);
            if (!g.value(act.logits).all_finite()) {
                throw NumericalError("non-finite logits at step " + std::to_string(state_.step + 1));
            }
            LossValue lv;
            const Var loss = task_loss(g, act.logits, batch_targets<T>(mb), &lv);
            if (!std::isfinite(lv.total)) {
                throw NumericalError("non-finite loss at step " + std::to_string(state_.step + 1));
            }
            g.backward(loss);
            rec.loss_total += lv.total;
            rec.loss_bce += lv.bce;
            rec.loss_iou += lv.iou;
        }
        const double inv = 1.0 / static_cast<double>(micro_batches.size());
        rec.loss_total *= inv;
        rec.loss_bce *= inv;
        rec.loss_iou *= inv;
        if (micro_batches.size() > 1) {
            for (auto& p : params_) {
                for (auto& v : p.grad.data()) {
                    v *= static_cast<T>(inv);
                }
            }
        }
        const auto status = adamw_step(params_, state_, cfg_.adam);
        if (!status.ok()) {
            throw NumericalError("non-finite gradient in " + status.rejected.front() + " at step " +
                                 std::to_string(state_.step));
        }
        rec.step = state_.step;
        rec.lr = cfg_.adam.lr;
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        return rec;
    }

private:
    const VectorField& net_;
    ParamSet<T>& params_;
    AdamWState<T>& state_;
    TrainConfig cfg_;
};

// Deterministic mapping from global optimizer step to training samples.
// Sample occurrence k lives in epoch k / n at position k % n of that epoch's
// permutation; its draws come from stream k of the training seed, so a run
// resumed at any step boundary replays exactly.
template <Real T>
class SampleSchedule {
public:
    SampleSchedule(std::span<const TrainItem<T>> items, std::uint64_t seed, const TrainConfig& cfg)
        : items_(items), seed_(seed), cfg_(cfg) {
        if (items_.empty()) {
            throw ContractError("training set is empty");
        }
    }

    std::uint64_t steps_for_epochs(std::uint64_t epochs) const {
        const std::uint64_t per_step = cfg_.batch * cfg_.accumulation;
        return (epochs * items_.size() + per_step - 1) / per_step;
    }

    // Micro-batches for optimizer step index `step` (0-based).
    std::vector<std::vector<FlowSample<T>>> micro_batches(std::uint64_t step) {
        std::vector<std::vector<FlowSample<T>>> out(cfg_.accumulation);
        const Rng sample_root = Rng(seed_).split(stream::sample);
        for (std::size_t m = 0; m < cfg_.accumulation; ++m) {
            for (std::size_t b = 0; b < cfg_.batch; ++b) {
                const std::uint64_t k = (step * cfg_.accumulation + m) * cfg_.batch + b;
                const auto& item = items_[index_of(k)];
                out[m].push_back(make_flow_sample(item, sample_root.split(k), cfg_.prior_dropout));
            }
        }
        return out;
    }

private:
    std::size_t index_of(std::uint64_t occurrence) {
        const std::uint64_t epoch = occurrence / items_.size();
        if (!perm_epoch_ || *perm_epoch_ != epoch) {
            perm_.resize(items_.size());
            std::iota(perm_.begin(), perm_.end(), std::size_t{0});
            Rng r = Rng(seed_).split(stream::shuffle).split(epoch);
            for (std::size_t i = perm_.size(); i > 1; --i) {
                std::swap(perm_[i - 1], perm_[r.below(i)]);
            }
            perm_epoch_ = epoch;
        }
        return perm_[occurrence % items_.size()];
    }

    std::span<const TrainItem<T>> items_;
    std::uint64_t seed_;
    TrainConfig cfg_;
    std::vector<std::size_t> perm_;
    std::optional<std::uint64_t> perm_epoch_;
};

// ---------------------------------------------------------------------------
// sampling

struct SamplerConfig {
    std::size_t steps = 1;
    std::uint64_t seed = 0;
    double threshold = 0.5;
};

template <Real T>
struct SampleResult {
    Tensor<T> probability; // 1 x H x W, final sigmoid(logits)
    Tensor<T> mask;        // 1 x H x W, probability >= threshold
    Tensor<T> state;       // final X
    Tensor<T> noise;       // X at tau = 0
};


template <Real T>
SampleResult<T> sample_with(const std::function<Tensor<T>(const Tensor<T>&, double)>& predict, const Shape& shape,
                            const SamplerConfig& cfg) {
    if (cfg.steps == 0) {
        throw ConfigError("sampler needs at least one step");
    }
    SampleResult<T> out;
    out.noise = normal_map<T>(Rng(cfg.seed).split(stream::noise), shape);
    Tensor<T> x = out.noise;
    const double dt = 1.0 / static_cast<double>(cfg.steps);
    Tensor<T> prob;
    for (std::size_t k = 0; k < cfg.steps; ++k) {
        const double tau = static_cast<double>(k) * dt;
        const Tensor<T> logits = predict(x, tau);
        require_same_shape(logits.shape(), x.shape(), "predicted logits");
        prob = ops::sigmoid(logits);
        if (k + 1 == cfg.steps) {
            // 1 - tau equals dt on the last step, so the Euler update lands
            // exactly on the prediction.
            x = prob;
            break;
        }
        const double denom = std::max(1.0 - tau, dt / 2.0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double v = (static_cast<double>(prob[i]) - static_cast<double>(x[i])) / denom;
            x[i] = static_cast<T>(static_cast<double>(x[i]) + dt * v);
        }
    }
    out.state = std::move(x);
    out.probability = prob;
    out.mask = Tensor<T>(prob.shape());
    for (std::size_t i = 0; i < prob.size(); ++i) {
        out.mask[i] = static_cast<double>(prob[i]) >= cfg.threshold ? T{1} : T{0};
    }
    return out;
}

// Direct network mask logits at (X, tau) with zero-substituted priors.
template <Real T>
Tensor<T> predict_logits(const VectorField& net, ParamSet<T>& params, const Tensor<T>& image, const Tensor<T>& x,
                         double tau) {
    const std::size_t h = image.dim(1), w = image.dim(2);
    NetInputs<T> in;
    in.image = image.reshaped(Shape{1, 3, h, w});
    in.x_t = x.reshaped(Shape{1, 1, h, w});
    in.t = {tau};
    Graph<T> g;
    const auto act = net.forward(g, params, in);
    return g.value(act.logits).reshaped(Shape{1, h, w});
}

template <Real T>
SampleResult<T> sample(const VectorField& net, ParamSet<T>& params, const Tensor<T>& image, const SamplerConfig& cfg) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw ShapeError("sampling image must be 3xHxW, got " + image.shape().str());
    }
    const Shape shape{1, image.dim(1), image.dim(2)};
    return sample_with<T>([&](const Tensor<T>& x, double tau) { return predict_logits(net, params, image, x, tau); },
                          shape, cfg);
}

} // namespace wf

#endif
