// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_GRAPH_HPP
#define WATERFLOW_GRAPH_HPP

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "waterflow/ops.hpp"
#include "waterflow/tensor.hpp"

namespace wf {

template <Real T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
};

// Named, insertion-ordered parameter collection. References returned by
// add() stay valid for the lifetime of the set.
template <Real T>
class ParamSet {
public:
    Parameter<T>& add(const std::string& name, Tensor<T> init) {
        if (index_.count(name)) {
            throw ContractError("duplicate parameter name '" + name + "'");
        }
        index_[name] = params_.size();
        Tensor<T> grad(init.shape());
        params_.push_back({name, std::move(init), std::move(grad)});
        return params_.back();
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Parameter<T>& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw ContractError("unknown parameter '" + name + "'");
        }
        return params_[it->second];
    }
    const Parameter<T>& get(const std::string& name) const { return const_cast<ParamSet*>(this)->get(name); }

    std::size_t size() const noexcept { return params_.size(); }
    auto begin() noexcept { return params_.begin(); }
    auto end() noexcept { return params_.end(); }
    auto begin() const noexcept { return params_.begin(); }
    auto end() const noexcept { return params_.end(); }

    std::size_t scalar_count() const noexcept {
        std::size_t n = 0;
        for (const auto& p : params_) {
            n += p.value.size();
        }
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) {
            p.grad.fill(T{0});
        }
    }

    template <Real U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const auto& p : params_) {
            out.add(p.name, p.value.template cast<U>());
        }
        return out;
    }

private:
    std::deque<Parameter<T>> params_;
    std::map<std::string, std::size_t> index_;
};

// Handle to a node in a Graph.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the node
// list is topologically sorted and acyclic by construction.
template <Real T>
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t)>;

    Var constant(Tensor<T> value) { return push_node(std::move(value), {}, nullptr, false, nullptr); }

    Var param(Parameter<T>& p) { return push_node(p.value, {}, nullptr, true, &p); }

    Var push(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward) {
        bool rg = false;
        for (std::size_t in : inputs) {
            rg = rg || nodes_.at(in).requires_grad;
        }
        return push_node(std::move(value), std::move(inputs), rg ? std::move(backward) : nullptr, rg, nullptr);
    }

    const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
    const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
    std::size_t input(std::size_t node, std::size_t k) const { return nodes_[node].inputs[k]; }
    const Tensor<T>& grad(std::size_t id) const { return nodes_[id].grad; }
    const Tensor<T>& grad(Var v) const { return nodes_.at(v.id).grad; }

    // Gradient buffer of an input, or nullptr when it needs none.
    Tensor<T>* grad_of(std::size_t id) {
        Node& n = nodes_[id];
        if (!n.requires_grad) {
            return nullptr;
        }
        if (n.grad.empty()) {
            n.grad = Tensor<T>(n.value.shape());
        }
        return &n.grad;
    }
    Tensor<T>* input_grad(std::size_t node, std::size_t k) { return grad_of(nodes_[node].inputs[k]); }
    const Tensor<T>& input_value(std::size_t node, std::size_t k) const { return nodes_[nodes_[node].inputs[k]].value; }

    std::size_t node_count() const noexcept { return nodes_.size(); }

    // Seeds d(terminal)/d(terminal) = seed and accumulates exact derivatives
    // into each referenced Parameter::grad.
    void backward(Var terminal, T seed = T{1}) {
        Node& term = nodes_.at(terminal.id);
        if (term.value.size() != 1) {
            throw ContractError("backward requires a scalar terminal node, got " + term.value.shape().str());
        }
        if (!term.requires_grad) {
            return;
        }
        grad_of(terminal.id)->fill(seed);
        for (std::size_t i = terminal.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.grad.empty()) {
                continue;
            }
            if (n.backward) {
                n.backward(*this, i);
            }
            if (n.param) {
                for (std::size_t k = 0; k < n.grad.size(); ++k) {
                    n.param->grad[k] += n.grad[k];
                }
            }
        }
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        Parameter<T>* param = nullptr;
    };

    Var push_node(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn fn, bool rg, Parameter<T>* p) {
        nodes_.push_back(Node{std::move(value), {}, std::move(inputs), std::move(fn), rg, p});
        return Var{nodes_.size() - 1};
    }

    std::vector<Node> nodes_;
};

// Differentiable wrappers over the ops:: kernels.
namespace ad {

template <Real T>
Var conv2d(Graph<T>& g, Var x, Var w, Var b, std::size_t stride, std::size_t pad) {
    auto y = ops::conv2d(g.value(x), g.value(w), g.value(b), stride, pad);
    return g.push(std::move(y), {x.id, w.id, b.id}, [stride, pad](Graph<T>& gr, std::size_t self) {
        ops::conv2d_backward(gr.input_value(self, 0), gr.input_value(self, 1), gr.grad(self), stride, pad,
                             gr.input_grad(self, 0), gr.input_grad(self, 1), gr.input_grad(self, 2));
    });
}

template <Real T>
Var sigmoid(Graph<T>& g, Var x) {
    auto y = ops::sigmoid(g.value(x));
    return g.push(std::move(y), {x.id}, [](Graph<T>& gr, std::size_t self) {
        const auto& yv = gr.value(self);
        const auto& dy = gr.grad(self);
        auto* dx = gr.input_grad(self, 0);
        for (std::size_t i = 0; i < yv.size(); ++i) {
            (*dx)[i] += dy[i] * yv[i] * (T{1} - yv[i]);
        }
    });
}

template <Real T>
Var silu(Graph<T>& g, Var x) {
    auto y = ops::silu(g.value(x));
    return g.push(std::move(y), {x.id}, [](Graph<T>& gr, std::size_t self) {
        ops::silu_backward(gr.input_value(self, 0), gr.grad(self), *gr.input_grad(self, 0));
    });
}

template <Real T>
Var add(Graph<T>& g, Var a, Var b) {
    auto y = ops::add(g.value(a), g.value(b));
    return g.push(std::move(y), {a.id, b.id}, [](Graph<T>& gr, std::size_t self) {
        const auto& dy = gr.grad(self);
        for (std::size_t k = 0; k < 2; ++k) {
            if (auto* d = gr.input_grad(self, k)) {
                for (std::size_t i = 0; i < dy.size(); ++i) {
                    (*d)[i] += dy[i];
                }
            }
        }
    });
}

template <Real T>
Var mul(Graph<T>& g, Var a, Var b) {
    auto y = ops::mul(g.value(a), g.value(b));
    return g.push(std::move(y), {a.id, b.id}, [](Graph<T>& gr, std::size_t self) {
        const auto& dy = gr.grad(self);
        const auto& av = gr.input_value(self, 0);
        const auto& bv = gr.input_value(self, 1);
        if (auto* da = gr.input_grad(self, 0)) {
            for (std::size_t i = 0; i < dy.size(); ++i) {
                (*da)[i] += dy[i] * bv[i];
            }
        }
        if (auto* db = gr.input_grad(self, 1)) {
            for (std::size_t i = 0; i < dy.size(); ++i) {
                (*db)[i] += dy[i] * av[i];
            }
        }
    });
}

template <Real T>
Var upsample_bilinear(Graph<T>& g, Var x, std::size_t factor) {
    auto y = ops::upsample_bilinear(g.value(x), factor);
    return g.push(std::move(y), {x.id}, [factor](Graph<T>& gr, std::size_t self) {
        ops::upsample_bilinear_backward(gr.grad(self), factor, *gr.input_grad(self, 0));
    });
}

template <Real T>
Var downsample_avg(Graph<T>& g, Var x, std::size_t factor) {
    auto y = ops::downsample_avg(g.value(x), factor);
    return g.push(std::move(y), {x.id}, [factor](Graph<T>& gr, std::size_t self) {
        ops::downsample_avg_backward(gr.grad(self), factor, *gr.input_grad(self, 0));
    });
}

template <Real T>
Var concat_channels(Graph<T>& g, Var a, Var b) {
    auto y = ops::concat_channels(g.value(a), g.value(b));
    return g.push(std::move(y), {a.id, b.id}, [](Graph<T>& gr, std::size_t self) {
        const auto& dy = gr.grad(self);
        const std::size_t n_batch = dy.dim(0), hw = dy.dim(2) * dy.dim(3);
        const std::size_t ca = gr.input_value(self, 0).dim(1), cb = gr.input_value(self, 1).dim(1);
        auto* da = gr.input_grad(self, 0);
        auto* db = gr.input_grad(self, 1);
        for (std::size_t n = 0; n < n_batch; ++n) {
            const T* src = dy.raw() + n * (ca + cb) * hw;
            if (da) {
                for (std::size_t i = 0; i < ca * hw; ++i) {
                    da->raw()[n * ca * hw + i] += src[i];
                }
            }
            if (db) {
                for (std::size_t i = 0; i < cb * hw; ++i) {
                    db->raw()[n * cb * hw + i] += src[ca * hw + i];
                }
            }
        }
    });
}

template <Real T>
Var channel_affine(Graph<T>& g, Var x, Var scale, Var shift) {
    auto y = ops::channel_affine(g.value(x), g.value(scale), g.value(shift));
    return g.push(std::move(y), {x.id, scale.id, shift.id}, [](Graph<T>& gr, std::size_t self) {
        const auto& dy = gr.grad(self);
        const auto& xv = gr.input_value(self, 0);
        const auto& sv = gr.input_value(self, 1);
        auto* dx = gr.input_grad(self, 0);
        auto* ds = gr.input_grad(self, 1);
        auto* db = gr.input_grad(self, 2);
        const std::size_t hw = xv.dim(2) * xv.dim(3);
        for (std::size_t p = 0; p < xv.dim(0) * xv.dim(1); ++p) {
            const T s = T{1} + sv[p];
            T acc_s = 0, acc_b = 0;
            for (std::size_t i = 0; i < hw; ++i) {
                const T gv = dy[p * hw + i];
                acc_s += gv * xv[p * hw + i];
                acc_b += gv;
                if (dx) {
                    (*dx)[p * hw + i] += gv * s;
                }
            }
            if (ds) {
                (*ds)[p] += acc_s;
            }
            if (db) {
                (*db)[p] += acc_b;
            }
        }
    });
}

template <Real T>
Var linear(Graph<T>& g, Var x, Var w, Var b) {
    auto y = ops::linear(g.value(x), g.value(w), g.value(b));
    return g.push(std::move(y), {x.id, w.id, b.id}, [](Graph<T>& gr, std::size_t self) {
        const auto& dy = gr.grad(self);
        const auto& xv = gr.input_value(self, 0);
        const auto& wv = gr.input_value(self, 1);
        auto* dx = gr.input_grad(self, 0);
        auto* dw = gr.input_grad(self, 1);
        auto* db = gr.input_grad(self, 2);
        const std::size_t n_batch = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
        for (std::size_t n = 0; n < n_batch; ++n) {
            for (std::size_t o = 0; o < out; ++o) {
                const T gv = dy[n * out + o];
                if (db) {
                    (*db)[o] += gv;
                }
                for (std::size_t i = 0; i < in; ++i) {
                    if (dw) {
                        (*dw)[o * in + i] += gv * xv[n * in + i];
                    }
                    if (dx) {
                        (*dx)[n * in + i] += gv * wv[o * in + i];
                    }
                }
            }
        }
    });
}

template <Real T>
Var group_norm(Graph<T>& g, Var x, Var gain, Var shift, std::size_t groups) {
    ops::GroupNormStats<T> stats;
    auto y = ops::group_norm(g.value(x), groups, g.value(gain), g.value(shift), &stats);
    return g.push(std::move(y), {x.id, gain.id, shift.id},
                  [groups, stats = std::move(stats)](Graph<T>& gr, std::size_t self) {
                      ops::group_norm_backward(gr.input_value(self, 0), groups, gr.input_value(self, 1), stats,
                                               gr.grad(self), gr.input_grad(self, 0), gr.input_grad(self, 1),
                                               gr.input_grad(self, 2));
                  });
}

// Multiplies each batch item by a fixed (non-differentiable) factor.
template <Real T>
Var scale_batch(Graph<T>& g, Var x, std::vector<T> factors) {
    Tensor<T> y = g.value(x);
    if (factors.size() != y.dim(0)) {
        throw ShapeError("scale_batch: " + std::to_string(factors.size()) + " factors for " + y.shape().str());
    }
    const std::size_t per = y.size() / y.dim(0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] *= factors[i / per];
    }
    return g.push(std::move(y), {x.id}, [factors = std::move(factors), per](Graph<T>& gr, std::size_t self) {
        const auto& dy = gr.grad(self);
        auto* dx = gr.input_grad(self, 0);
        for (std::size_t i = 0; i < dy.size(); ++i) {
            (*dx)[i] += dy[i] * factors[i / per];
        }
    });
}

template <Real T>
Var sum(Graph<T>& g, Var x) {
    const auto& xv = g.value(x);
    T acc = 0;
    for (T v : xv.data()) {
        acc += v;
    }
    return g.push(Tensor<T>(Shape{1}, acc), {x.id}, [](Graph<T>& gr, std::size_t self) {
        const T gv = gr.grad(self)[0];
        auto* dx = gr.input_grad(self, 0);
        for (auto& v : dx->data()) {
            v += gv;
        }
    });
}

} // namespace ad

} // namespace wf

#endif
