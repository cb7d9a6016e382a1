// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "orsiflow/nn.hpp"

namespace orsiflow {

// Checkpoint container: little-endian flat records, layout documented in the
// repository README.
//
//   magic   "ORSIFCK1" (8 bytes)
//   u32     version (= 1)
//   u32     metadata count, then per entry: u32 klen, key, u32 vlen, value
//   u32     record count, then per record:
//             u32 name length, name bytes
//             u32 ndim, u32 dims[ndim]
//             f64 payload[prod(dims)]

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& os, double v) {
    const auto u = std::bit_cast<uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(u);
}

inline void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_str(std::istream& is) {
    const uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

} // namespace detail

inline constexpr char kCheckpointMagic[8] = {'O', 'R', 'S', 'I', 'F', 'C', 'K', '1'};

inline void save_checkpoint(const ParamStore& params, const std::filesystem::path& path,
                            const std::map<std::string, std::string>& meta = {}) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
    os.write(kCheckpointMagic, 8);
    detail::put_u32(os, 1);
    detail::put_u32(os, static_cast<uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        detail::put_str(os, k);
        detail::put_str(os, v);
    }
    detail::put_u32(os, static_cast<uint32_t>(params.size()));
    for (const auto& e : params.entries()) {
        detail::put_str(os, e.name);
        detail::put_u32(os, static_cast<uint32_t>(e.tensor.ndim()));
        for (int d = 0; d < e.tensor.ndim(); ++d) detail::put_u32(os, static_cast<uint32_t>(e.tensor.dim(d)));
        for (double v : e.tensor.values()) detail::put_f64(os, v);
    }
    if (!os) throw IoError("write failure on checkpoint: " + path.string());
}

struct CheckpointData {
    std::map<std::string, std::string> meta;
    struct Record {
        std::string name;
        Shape shape;
        std::vector<double> data;
    };
    std::vector<Record> records;
};

inline CheckpointData read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw IoError("bad checkpoint magic in " + path.string());
    const uint32_t version = detail::get_u32(is);
    if (version != 1) throw IoError("unsupported checkpoint version " + std::to_string(version));
    CheckpointData out;
    const uint32_t n_meta = detail::get_u32(is);
    for (uint32_t i = 0; i < n_meta; ++i) {
        std::string k = detail::get_str(is);
        out.meta[k] = detail::get_str(is);
    }
    const uint32_t n_rec = detail::get_u32(is);
    out.records.reserve(n_rec);
    for (uint32_t i = 0; i < n_rec; ++i) {
        CheckpointData::Record r;
        r.name = detail::get_str(is);
        const uint32_t nd = detail::get_u32(is);
        r.shape.resize(nd);
        for (uint32_t d = 0; d < nd; ++d) r.shape[d] = static_cast<int>(detail::get_u32(is));
        const auto n = static_cast<size_t>(shape_numel(r.shape));
        r.data.resize(n);
        for (size_t j = 0; j < n; ++j) r.data[j] = detail::get_f64(is);
        out.records.push_back(std::move(r));
    }
    if (!is) throw IoError("truncated checkpoint: " + path.string());
    return out;
}

/// Loads records into an existing store; names and shapes must match. With
/// `prefix` set, only parameters under that prefix are loaded and required.
inline std::map<std::string, std::string> load_checkpoint(ParamStore& params, const std::filesystem::path& path,
                                                          const std::string& prefix = "") {
    const CheckpointData data = read_checkpoint(path);
    std::map<std::string, const CheckpointData::Record*> by_name;
    for (const auto& r : data.records) by_name[r.name] = &r;
    for (auto& e : params.entries()) {
        if (!prefix.empty() && e.name.rfind(prefix, 0) != 0) continue;
        auto it = by_name.find(e.name);
        if (it == by_name.end()) throw IoError("checkpoint " + path.string() + " is missing parameter " + e.name);
        if (it->second->shape != e.tensor.shape())
            throw IoError("checkpoint shape mismatch for " + e.name + ": file " + shape_str(it->second->shape) +
                          " vs model " + shape_str(e.tensor.shape()));
        e.tensor.values() = it->second->data;
    }
    return data.meta;
}

} // namespace orsiflow
