// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#include "hlab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "hlab/rng.hpp"

namespace hlab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& off) {
    if (off + sizeof(T) > in.size()) throw std::runtime_error("checkpoint: truncated file");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::string out;
    out.append("HLAB", 4);
    put<std::uint32_t>(out, 1);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensor& t : tensors) {
        if (t.name.size() > 0xffff) throw std::invalid_argument("checkpoint: tensor name too long");
        put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
        out.append(t.name);
        put<std::uint8_t>(out, 2);
        put<std::uint64_t>(out, t.value.rows());
        put<std::uint64_t>(out, t.value.cols());
        for (double v : t.value.data()) put<double>(out, v);
    }
    atomic_write_file(path, out);
}

std::vector<NamedTensor> load_tensors(const std::string& path) {
    const std::string in = read_file(path);
    std::size_t off = 0;
    if (in.size() < 12 || in.compare(0, 4, "HLAB") != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    off = 4;
    const auto version = get<std::uint32_t>(in, off);
    if (version != 1)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    const auto count = get<std::uint32_t>(in, off);
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = get<std::uint16_t>(in, off);
        if (off + name_len > in.size()) throw std::runtime_error("checkpoint: truncated name");
        std::string name = in.substr(off, name_len);
        off += name_len;
        const auto ndim = get<std::uint8_t>(in, off);
        if (ndim != 2) throw std::runtime_error("checkpoint: only 2-D tensors supported");
        const auto rows = get<std::uint64_t>(in, off);
        const auto cols = get<std::uint64_t>(in, off);
        Matrix m(rows, cols);
        for (std::size_t k = 0; k < m.size(); ++k) m[k] = get<double>(in, off);
        tensors.push_back({std::move(name), std::move(m)});
    }
    return tensors;
}

void atomic_write_file(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + tmp.string());
        f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!f) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string file_hash_hex(const std::string& path) {
    const std::uint64_t h = fnv1a(read_file(path));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace hlab
