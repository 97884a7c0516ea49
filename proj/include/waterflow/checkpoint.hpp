// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_CHECKPOINT_HPP
#define WATERFLOW_CHECKPOINT_HPP

// WFCK checkpoint container.
//
//   "WFCK"
//   u32 entry count
//   per entry: u16 name length, name bytes, one WFT1 record
//   u64 optimizer step
//   32-byte architecture fingerprint
//   u32 length, architecture JSON (UTF-8)
//
// Entry names are "param/<name>", "adam.m/<name>" and "adam.v/<name>", in
// parameter insertion order. All integers are little-endian.

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

#include <openssl/evp.h>

#include "waterflow/config.hpp"
#include "waterflow/io.hpp"

namespace wf {

using Fingerprint = std::array<std::uint8_t, 32>;

inline Fingerprint sha256(std::string_view text) {
    Fingerprint out{};
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
        throw Error(ExitCode::io, "SHA-256 digest failed");
    }
    return out;
}

inline std::string hex(const Fingerprint& f) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (auto b : f) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 15]);
    }
    return s;
}

inline Fingerprint fingerprint(const NetConfig& net) { return sha256(architecture_json(net).dump()); }

template <Real T>
struct Checkpoint {
    NetConfig net;
    ParamSet<T> params;
    AdamWState<T> adam;
};

template <Real T>
io::Bytes encode_checkpoint(const Checkpoint<T>& ck) {
    io::Bytes out{'W', 'F', 'C', 'K'};
    std::uint32_t count = 0;
    io::Bytes body;
    auto entry = [&](const std::string& name, const Tensor<T>& t) {
        if (name.size() > 0xffff) {
            throw ContractError("checkpoint entry name too long");
        }
        io::put_le<std::uint16_t>(body, static_cast<std::uint16_t>(name.size()));
        body.insert(body.end(), name.begin(), name.end());
        io::append_wft(body, t);
        ++count;
    };
    for (const auto& p : ck.params) {
        entry("param/" + p.name, p.value);
    }
    for (const auto& p : ck.params) {
        if (auto it = ck.adam.m.find(p.name); it != ck.adam.m.end()) {
            entry("adam.m/" + p.name, it->second);
        }
        if (auto it = ck.adam.v.find(p.name); it != ck.adam.v.end()) {
            entry("adam.v/" + p.name, it->second);
        }
    }
    io::put_le<std::uint32_t>(out, count);
    out.insert(out.end(), body.begin(), body.end());
    io::put_le<std::uint64_t>(out, ck.adam.step);
    const Fingerprint fp = fingerprint(ck.net);
    out.insert(out.end(), fp.begin(), fp.end());
    const std::string arch = architecture_json(ck.net).dump();
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arch.size()));
    out.insert(out.end(), arch.begin(), arch.end());
    return out;
}

// Parses and validates a checkpoint: the stored fingerprint must match the
// stored architecture, and every parameter of that architecture must be
// present with its initialized extents.
template <Real T>
Checkpoint<T> decode_checkpoint(std::span<const std::uint8_t> in, const std::string& path) {
    try {
        if (in.size() < 4 || std::memcmp(in.data(), "WFCK", 4) != 0) {
            throw IoError("bad WFCK magic");
        }
        std::size_t pos = 4;
        const auto count = io::get_le<std::uint32_t>(in, pos);
        std::vector<std::pair<std::string, Tensor<T>>> entries;
        for (std::uint32_t i = 0; i < count; ++i) {
            const auto len = io::get_le<std::uint16_t>(in, pos);
            if (pos + len > in.size()) {
                throw IoError("truncated entry name");
            }
            std::string name(reinterpret_cast<const char*>(in.data() + pos), len);
            pos += len;
            entries.emplace_back(std::move(name), io::decode_wft<T>(in, pos));
        }
        Checkpoint<T> ck;
        ck.adam.step = io::get_le<std::uint64_t>(in, pos);
        if (pos + 32 > in.size()) {
            throw IoError("truncated fingerprint");
        }
        Fingerprint stored{};
        std::memcpy(stored.data(), in.data() + pos, 32);
        pos += 32;
        const auto arch_len = io::get_le<std::uint32_t>(in, pos);
        if (pos + arch_len != in.size()) {
            throw IoError("architecture record length does not match file size");
        }
        const std::string arch(reinterpret_cast<const char*>(in.data() + pos), arch_len);
        ck.net = config_from_json(parse_json(arch, "architecture record")).net;
        if (fingerprint(ck.net) != stored) {
            throw ContractError("fingerprint " + hex(stored) + " does not match architecture record " +
                                hex(fingerprint(ck.net)));
        }

        // Shapes come from a fresh initialization of the stored architecture.
        const VectorField net(ck.net);
        ck.params = net.init<T>(0);
        std::size_t seen = 0;
        for (auto& [name, t] : entries) {
            const auto slash = name.find('/');
            const std::string kind = name.substr(0, slash);
            const std::string pname = slash == std::string::npos ? "" : name.substr(slash + 1);
            if (!ck.params.contains(pname)) {
                throw ContractError("entry '" + name + "' names no parameter of this architecture");
            }
            auto& p = ck.params.get(pname);
            if (t.shape() != p.value.shape()) {
                throw ShapeError("entry '" + name + "' has extents " + t.shape().str() + ", expected " +
                                 p.value.shape().str());
            }
            if (kind == "param") {
                p.value = std::move(t);
                ++seen;
            } else if (kind == "adam.m") {
                ck.adam.m[pname] = std::move(t);
            } else if (kind == "adam.v") {
                ck.adam.v[pname] = std::move(t);
            } else {
                throw ContractError("unknown checkpoint entry '" + name + "'");
            }
        }
        if (seen != ck.params.size()) {
            throw ContractError("checkpoint holds " + std::to_string(seen) + " of " +
                                std::to_string(ck.params.size()) + " parameters");
        }
        return ck;
    } catch (const Error& e) {
        throw Error(e.code(), path + ": " + e.what());
    }
}

template <Real T>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<T>& ck) {
    io::write_file(path, encode_checkpoint(ck));
}

template <Real T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
    const io::Bytes bytes = io::read_file(path);
    return decode_checkpoint<T>(bytes, path.string());
}

} // namespace wf

#endif
