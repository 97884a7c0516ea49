// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_IO_HPP
#define WATERFLOW_IO_HPP

// File formats: the WFT1 tensor container and binary 8-bit PPM/PGM.
//
// WFT1 layout: "WFT1", u8 dtype (0 = f32, 1 = f64), u8 rank, rank x u32 LE
// extents, then the row-major payload in little-endian order.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "waterflow/tensor.hpp"

namespace wf::io {

using Bytes = std::vector<std::uint8_t>;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <Real T>
constexpr DType dtype_of() {
    return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

// ---------------------------------------------------------------------------
// little-endian primitives

template <typename U>
void put_le(Bytes& out, U value) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }
}

template <typename U>
U get_le(std::span<const std::uint8_t> in, std::size_t& pos) {
    static_assert(std::is_unsigned_v<U>);
    if (pos + sizeof(U) > in.size()) {
        throw IoError("truncated buffer at offset " + std::to_string(pos));
    }
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        v |= static_cast<U>(static_cast<U>(in[pos + i]) << (8 * i));
    }
    pos += sizeof(U);
    return v;
}

// ---------------------------------------------------------------------------
// WFT1

template <Real T>
void append_wft(Bytes& out, const Tensor<T>& t) {
    const char magic[4] = {'W', 'F', 'T', '1'};
    out.insert(out.end(), magic, magic + 4);
    out.push_back(static_cast<std::uint8_t>(dtype_of<T>()));
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t i = 0; i < t.rank(); ++i) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim(i)));
    }
    using Bits = std::conditional_t<std::is_same_v<T, float>, std::uint32_t, std::uint64_t>;
    for (T v : t.data()) {
        put_le<Bits>(out, std::bit_cast<Bits>(v));
    }
}

template <Real T>
Bytes encode_wft(const Tensor<T>& t) {
    Bytes out;
    append_wft(out, t);
    return out;
}

// Decodes one WFT1 record starting at pos, converting the payload to T.
template <Real T>
Tensor<T> decode_wft(std::span<const std::uint8_t> in, std::size_t& pos, DType* stored = nullptr) {
    if (pos + 6 > in.size() || std::memcmp(in.data() + pos, "WFT1", 4) != 0) {
        throw IoError("bad WFT1 magic at offset " + std::to_string(pos));
    }
    pos += 4;
    const std::uint8_t code = in[pos++];
    if (code > 1) {
        throw IoError("unknown WFT1 dtype code " + std::to_string(code));
    }
    const std::size_t rank = in[pos++];
    if (rank == 0 || rank > Shape::max_rank) {
        throw IoError("unsupported WFT1 rank " + std::to_string(rank));
    }
    std::vector<std::size_t> dims(rank);
    std::size_t numel = 1;
    for (auto& d : dims) {
        d = get_le<std::uint32_t>(in, pos);
        if (d == 0) {
            throw IoError("WFT1 extent of zero at offset " + std::to_string(pos - 4));
        }
        numel *= d;
    }
    const std::size_t width = code == 0 ? 4 : 8;
    if ((in.size() - pos) / width < numel) {
        throw IoError("truncated WFT1 payload: " + std::to_string(numel) + " values expected");
    }
    const Shape shape(dims);
    std::vector<T> data(shape.numel());
    for (auto& v : data) {
        if (code == 0) {
            v = static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(in, pos)));
        } else {
            v = static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(in, pos)));
        }
    }
    if (stored) {
        *stored = static_cast<DType>(code);
    }
    return Tensor<T>(shape, std::move(data));
}

// ---------------------------------------------------------------------------
// files

inline Bytes read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path.string());
    }
    return Bytes(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot write " + path.string());
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw IoError("short write to " + path.string());
    }
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::string read_text(const std::filesystem::path& path) {
    const Bytes b = read_file(path);
    return std::string(b.begin(), b.end());
}

template <Real T>
void save_wft(const std::filesystem::path& path, const Tensor<T>& t) {
    write_file(path, encode_wft(t));
}

template <Real T>
Tensor<T> load_wft(const std::filesystem::path& path) {
    const Bytes b = read_file(path);
    std::size_t pos = 0;
    auto t = decode_wft<T>(b, pos);
    if (pos != b.size()) {
        throw IoError("trailing bytes in " + path.string());
    }
    return t;
}

// ---------------------------------------------------------------------------
// PPM (P6) / PGM (P5), maxval 255

inline std::uint8_t quantize(double v) {
    if (!(v > 0.0)) {
        return 0;
    }
    return static_cast<std::uint8_t>(std::lround(std::min(v, 1.0) * 255.0));
}

namespace detail {

inline std::size_t next_header_token(const Bytes& b, std::size_t& pos, const std::string& path) {
    while (pos < b.size()) {
        if (b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') {
                ++pos;
            }
        } else if (std::isspace(b[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    std::size_t v = 0;
    bool any = false;
    while (pos < b.size() && std::isdigit(b[pos])) {
        v = v * 10 + static_cast<std::size_t>(b[pos] - '0');
        ++pos;
        any = true;
    }
    if (!any) {
        throw IoError("malformed netpbm header in " + path);
    }
    return v;
}

template <Real T>
Tensor<T> read_netpbm(const std::filesystem::path& path, char kind, std::size_t channels) {
    const Bytes b = read_file(path);
    if (b.size() < 2 || b[0] != 'P' || b[1] != static_cast<std::uint8_t>(kind)) {
        throw IoError(path.string() + " is not a binary P" + std::string(1, kind) + " file");
    }
    std::size_t pos = 2;
    const std::size_t w = next_header_token(b, pos, path.string());
    const std::size_t h = next_header_token(b, pos, path.string());
    const std::size_t maxval = next_header_token(b, pos, path.string());
    if (maxval != 255) {
        throw IoError(path.string() + ": only maxval 255 is supported");
    }
    ++pos; // single whitespace after maxval
    if (w == 0 || h == 0 || pos + w * h * channels > b.size()) {
        throw IoError("truncated pixel data in " + path.string());
    }
    Tensor<T> t(Shape{channels, h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                t.at(c, y, x) = static_cast<T>(b[pos++]) / T{255};
            }
        }
    }
    return t;
}

template <Real T>
void write_netpbm(const std::filesystem::path& path, const Tensor<T>& img, char kind, std::size_t channels) {
    const Nchw d = as_nchw(img.shape());
    if (d.n != 1 || d.c != channels) {
        throw ShapeError("netpbm P" + std::string(1, kind) + " needs " + std::to_string(channels) +
                         " channels, got " + img.shape().str());
    }
    const std::string header = "P" + std::string(1, kind) + "\n" + std::to_string(d.w) + " " + std::to_string(d.h) +
                               "\n255\n";
    Bytes out(header.begin(), header.end());
    out.reserve(out.size() + d.h * d.w * channels);
    const std::size_t hw = d.h * d.w;
    for (std::size_t i = 0; i < hw; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
            out.push_back(quantize(static_cast<double>(img[c * hw + i])));
        }
    }
    write_file(path, out);
}

} // namespace detail

template <Real T>
Tensor<T> read_ppm(const std::filesystem::path& path) {
    return detail::read_netpbm<T>(path, '6', 3);
}

template <Real T>
Tensor<T> read_pgm(const std::filesystem::path& path) {
    return detail::read_netpbm<T>(path, '5', 1);
}

template <Real T>
void write_ppm(const std::filesystem::path& path, const Tensor<T>& img) {
    detail::write_netpbm(path, img, '6', 3);
}

template <Real T>
void write_pgm(const std::filesystem::path& path, const Tensor<T>& img) {
    detail::write_netpbm(path, img, '5', 1);
}

// Binary mask from an 8-bit PGM: pixel >= 128 counts as foreground.
template <Real T>
Tensor<T> read_mask_pgm(const std::filesystem::path& path) {
    Tensor<T> m = read_pgm<T>(path);
    for (auto& v : m.data()) {
        v = v * T{255} >= T{128} ? T{1} : T{0};
    }
    return m;
}

// Min-max normalized preview of one plane; constant planes keep their value
// when it already lies in [0,1].
template <Real T>
Tensor<T> normalized_preview(std::span<const T> values, std::size_t h, std::size_t w) {
    Tensor<T> out(Shape{1, h, w});
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const T range = *hi - *lo;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (range > T{0}) {
            out[i] = (values[i] - *lo) / range;
        } else {
            out[i] = std::clamp(values[i], T{0}, T{1});
        }
    }
    return out;
}

} // namespace wf::io

#endif
