#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "optim.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace xfuse {

enum class ModelKind : uint8_t { Segmentation = 1, Classification = 2, TensorBundle = 3 };

// On-disk container: magic "XFUS", u32 version, u8 kind, u32 entry count,
// then per entry a u16 name length, the UTF-8 name, u8 rank, u32 dims and the
// little-endian f64 payload; a u64 FNV-1a of everything before it closes the
// file. Scalar metadata rides in the same table under reserved "__meta."
// names so the format stays single-purpose.
struct Checkpoint {
    uint32_t version = 1;
    ModelKind kind = ModelKind::Segmentation;
    ModelParams tensors;
    std::map<std::string, double> metadata;
};

namespace detail {

constexpr char kCkptMagic[4] = {'X', 'F', 'U', 'S'};
constexpr uint32_t kCkptVersion = 1;
constexpr size_t kCkptMaxRank = 8;
inline const std::string kMetaPrefix = "__meta.";

inline void put_u16(std::string& b, uint16_t v) {
    b.push_back(static_cast<char>(v & 0xff));
    b.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& b, double v) { put_u64(b, std::bit_cast<uint64_t>(v)); }

inline void put_entry(std::string& b, const std::string& name, const Shape& shape,
                      const double* data, size_t n) {
    if (name.empty() || name.size() > 0xffff)
        throw CheckpointError(CheckpointError::Kind::Format,
                              "checkpoint: bad tensor name length " + std::to_string(name.size()));
    if (shape.empty() || shape.size() > kCkptMaxRank)
        throw CheckpointError(CheckpointError::Kind::Format,
                              "checkpoint: rank " + std::to_string(shape.size()) +
                                  " outside 1.." + std::to_string(kCkptMaxRank));
    put_u16(b, static_cast<uint16_t>(name.size()));
    b.append(name);
    b.push_back(static_cast<char>(shape.size()));
    for (size_t d : shape) {
        if (d == 0 || d > 0xffffffffull)
            throw CheckpointError(CheckpointError::Kind::Format,
                                  "checkpoint: dimension " + std::to_string(d) + " out of range");
        put_u32(b, static_cast<uint32_t>(d));
    }
    for (size_t i = 0; i < n; ++i) put_f64(b, data[i]);
}

struct ByteReader {
    const std::string& bytes;
    size_t pos = 0;
    size_t limit = 0; // checksum start; reads past it are truncations

    bool need(size_t n) const { return pos + n <= limit; }

    void want(size_t n, const char* what) const {
        if (!need(n))
            throw CheckpointError(CheckpointError::Kind::Truncation,
                                  std::string("checkpoint: file ends inside ") + what);
    }

    uint8_t u8(const char* what) {
        want(1, what);
        return static_cast<uint8_t>(bytes[pos++]);
    }

    uint16_t u16(const char* what) {
        want(2, what);
        uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(static_cast<uint8_t>(bytes[pos++])) << (8 * i);
        return v;
    }

    uint32_t u32(const char* what) {
        want(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes[pos++])) << (8 * i);
        return v;
    }

    uint64_t u64(const char* what) {
        want(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(bytes[pos++])) << (8 * i);
        return v;
    }

    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
};

} // namespace detail

inline std::string checkpoint_bytes(const Checkpoint& ckpt) {
    std::string b;
    b.append(detail::kCkptMagic, 4);
    detail::put_u32(b, detail::kCkptVersion);
    b.push_back(static_cast<char>(ckpt.kind));
    const size_t count = ckpt.metadata.size() + ckpt.tensors.size();
    if (count > 0xffffffffull)
        throw CheckpointError(CheckpointError::Kind::Format, "checkpoint: too many tensors");
    detail::put_u32(b, static_cast<uint32_t>(count));
    for (const auto& [key, value] : ckpt.metadata)
        detail::put_entry(b, detail::kMetaPrefix + key, {1}, &value, 1);
    for (const auto& [name, t] : ckpt.tensors) {
        if (name.rfind(detail::kMetaPrefix, 0) == 0)
            throw CheckpointError(CheckpointError::Kind::Format,
                                  "checkpoint: tensor name '" + name + "' uses the reserved prefix");
        detail::put_entry(b, name, t.shape(), t.data(), t.numel());
    }
    detail::put_u64(b, detail::fnv1a64(b.data(), b.size()));
    return b;
}

inline Checkpoint parse_checkpoint(const std::string& bytes) {
    constexpr size_t kHeader = 4 + 4 + 1 + 4;
    if (bytes.size() < kHeader + 8)
        throw CheckpointError(CheckpointError::Kind::Truncation,
                              "checkpoint: " + std::to_string(bytes.size()) +
                                  " bytes is shorter than an empty container");
    detail::ByteReader r{bytes, 0, bytes.size() - 8};
    if (bytes.compare(0, 4, detail::kCkptMagic, 4) != 0)
        throw CheckpointError(CheckpointError::Kind::Header, "checkpoint: bad magic");
    r.pos = 4;
    const uint32_t version = r.u32("version");
    if (version != detail::kCkptVersion)
        throw CheckpointError(CheckpointError::Kind::Version,
                              "checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.version = version;
    const uint8_t kind = r.u8("model kind");
    if (kind < 1 || kind > 3)
        throw CheckpointError(CheckpointError::Kind::ModelKind,
                              "checkpoint: unknown model kind " + std::to_string(kind));
    ckpt.kind = static_cast<ModelKind>(kind);
    const uint32_t count = r.u32("tensor count");

    for (uint32_t e = 0; e < count; ++e) {
        const uint16_t name_len = r.u16("name length");
        if (name_len == 0)
            throw CheckpointError(CheckpointError::Kind::Format, "checkpoint: empty tensor name");
        r.want(name_len, "tensor name");
        std::string name = bytes.substr(r.pos, name_len);
        r.pos += name_len;
        const uint8_t rank = r.u8("rank");
        if (rank == 0 || rank > detail::kCkptMaxRank)
            throw CheckpointError(CheckpointError::Kind::Format,
                                  "checkpoint: tensor '" + name + "' has rank " +
                                      std::to_string(rank));
        Shape shape(rank);
        size_t numel = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            const uint32_t dim = r.u32("dimension");
            if (dim == 0)
                throw CheckpointError(CheckpointError::Kind::Format,
                                      "checkpoint: tensor '" + name + "' has a zero dimension");
            shape[d] = dim;
            if (numel > (size_t{1} << 40) / dim)
                throw CheckpointError(CheckpointError::Kind::Format,
                                      "checkpoint: tensor '" + name + "' is implausibly large");
            numel *= dim;
        }
        r.want(numel * 8, "tensor payload");
        std::vector<double> data(numel);
        for (size_t i = 0; i < numel; ++i) data[i] = r.f64("tensor payload");

        if (name.rfind(detail::kMetaPrefix, 0) == 0) {
            if (rank != 1 || numel != 1)
                throw CheckpointError(CheckpointError::Kind::Format,
                                      "checkpoint: metadata '" + name + "' is not scalar");
            if (!ckpt.metadata.emplace(name.substr(detail::kMetaPrefix.size()), data[0]).second)
                throw CheckpointError(CheckpointError::Kind::Format,
                                      "checkpoint: duplicate entry '" + name + "'");
        } else {
            Tensor t(std::move(shape), std::move(data));
            t.set_requires_grad(true);
            if (!ckpt.tensors.emplace(std::move(name), std::move(t)).second)
                throw CheckpointError(CheckpointError::Kind::Format,
                                      "checkpoint: duplicate tensor entry");
        }
    }

    if (r.pos != r.limit)
        throw CheckpointError(CheckpointError::Kind::Format,
                              "checkpoint: " + std::to_string(r.limit - r.pos) +
                                  " unexpected bytes after the tensor table");
    const uint64_t stored = detail::ByteReader{bytes, r.limit, bytes.size()}.u64("checksum");
    const uint64_t computed = detail::fnv1a64(bytes.data(), r.limit);
    if (stored != computed)
        throw CheckpointError(CheckpointError::Kind::Checksum, "checkpoint: checksum mismatch");
    return ckpt;
}

// Write-temp-then-rename so a crash or full disk never leaves a torn file at
// the destination.
inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string bytes = checkpoint_bytes(ckpt);
    const std::filesystem::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(target.parent_path(), ec);
    }
    const std::string tmp = path + ".tmp";
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: cannot open " + tmp);
    const size_t written = std::fwrite(bytes.data(), 1, bytes.size(), f);
    const bool flushed = std::fclose(f) == 0;
    if (written != bytes.size() || !flushed) {
        std::remove(tmp.c_str());
        throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: cannot move into " + path);
    }
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: cannot open " + path);
    std::string bytes;
    char buf[1 << 16];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) bytes.append(buf, n);
    const bool bad = std::ferror(f) != 0;
    std::fclose(f);
    if (bad) throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: cannot read " + path);
    return parse_checkpoint(bytes);
}

} // namespace xfuse
