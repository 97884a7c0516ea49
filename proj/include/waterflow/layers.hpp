// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_LAYERS_HPP
#define WATERFLOW_LAYERS_HPP

// Parameterized building blocks. A layer is a description (names and
// extents); its tensors live in a ParamSet under "<name>.<field>".

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "waterflow/graph.hpp"
#include "waterflow/rng.hpp"

namespace wf::nn {

inline std::uint64_t name_hash(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h = (h ^ ch) * 0x100000001b3ULL;
    }
    return h;
}

// He fan-in normal init, drawn from a stream keyed by the tensor name so the
// values do not depend on construction order.
template <Real T>
Tensor<T> he_normal(const Shape& shape, std::size_t fan_in, const Rng& base, const std::string& name) {
    Rng r = base.split(name_hash(name));
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor<T> t(shape);
    for (auto& v : t.data()) {
        v = static_cast<T>(std_dev * r.normal());
    }
    return t;
}

struct Conv2d {
    std::string name;
    std::size_t cin = 0, cout = 0, k = 3, stride = 1, pad = 1;

    std::size_t param_count() const { return cout * cin * k * k + cout; }

    template <Real T>
    void init(ParamSet<T>& ps, const Rng& rng, bool zero = false) const {
        const Shape ws{cout, cin, k, k};
        ps.add(name + ".w", zero ? Tensor<T>(ws) : he_normal<T>(ws, cin * k * k, rng, name + ".w"));
        ps.add(name + ".b", Tensor<T>(Shape{cout}));
    }

    template <Real T>
    Var operator()(Graph<T>& g, ParamSet<T>& ps, Var x) const {
        return ad::conv2d(g, x, g.param(ps.get(name + ".w")), g.param(ps.get(name + ".b")), stride, pad);
    }
};

struct GroupNorm {
    std::string name;
    std::size_t channels = 0;

    std::size_t groups() const { return ops::default_groups(channels); }
    std::size_t param_count() const { return 2 * channels; }

    template <Real T>
    void init(ParamSet<T>& ps) const {
        ps.add(name + ".gain", Tensor<T>(Shape{channels}, T{1}));
        ps.add(name + ".shift", Tensor<T>(Shape{channels}));
    }

    template <Real T>
    Var operator()(Graph<T>& g, ParamSet<T>& ps, Var x) const {
        return ad::group_norm(g, x, g.param(ps.get(name + ".gain")), g.param(ps.get(name + ".shift")), groups());
    }
};

struct Linear {
    std::string name;
    std::size_t in = 0, out = 0;

    std::size_t param_count() const { return in * out + out; }

    template <Real T>
    void init(ParamSet<T>& ps, const Rng& rng, bool zero = false) const {
        const Shape ws{out, in};
        ps.add(name + ".w", zero ? Tensor<T>(ws) : he_normal<T>(ws, in, rng, name + ".w"));
        ps.add(name + ".b", Tensor<T>(Shape{out}));
    }

    template <Real T>
    Var operator()(Graph<T>& g, ParamSet<T>& ps, Var x) const {
        return ad::linear(g, x, g.param(ps.get(name + ".w")), g.param(ps.get(name + ".b")));
    }
};

// conv -> group norm -> SiLU
struct ConvBlock {
    Conv2d conv;
    GroupNorm norm;

    ConvBlock() = default;
    ConvBlock(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k = 3, std::size_t stride = 1)
        : conv{name + ".conv", cin, cout, k, stride, k / 2}, norm{name + ".norm", cout} {}

    std::size_t param_count() const { return conv.param_count() + norm.param_count(); }

    template <Real T>
    void init(ParamSet<T>& ps, const Rng& rng) const {
        conv.init(ps, rng);
        norm.init(ps);
    }

    template <Real T>
    Var operator()(Graph<T>& g, ParamSet<T>& ps, Var x) const {
        return ad::silu(g, norm(g, ps, conv(g, ps, x)));
    }
};

} // namespace wf::nn

#endif
