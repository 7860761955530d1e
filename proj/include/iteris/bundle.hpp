#pragma once

// Bit-exact tensor container:
//
//   [ u64 little-endian header length ][ UTF-8 JSON manifest ]
//   [ zero padding up to the next 8-byte boundary ][ blob ]
//
// The manifest maps tensor name -> {dtype, shape, offset, length} plus a
// free-form "metadata" object. Offsets are relative to the blob base,
// 8-byte aligned, nondecreasing in (sorted-name) manifest order and
// non-overlapping; lengths must equal product(shape) * dtype size, and the
// file ends exactly after the last tensor. Payload is little-endian
// row-major. f32 tensors are widened to f64 on load and narrowed back on
// save, so a round trip is byte-identical.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "iteris/errors.hpp"
#include "iteris/matrix.hpp"

namespace iteris {

enum class Dtype { F64, F32 };

inline std::size_t dtype_size(Dtype d) { return d == Dtype::F64 ? 8 : 4; }

inline const char* dtype_name(Dtype d) { return d == Dtype::F64 ? "f64" : "f32"; }

inline Dtype dtype_from_name(const std::string& name) {
    if (name == "f64") return Dtype::F64;
    if (name == "f32") return Dtype::F32;
    throw IoError("bundle: unknown dtype '" + name + "'");
}

struct TensorEntry {
    Matrix values;
    Dtype dtype = Dtype::F64;
};

namespace detail {

inline std::uint64_t align8(std::uint64_t v) { return (v + 7ULL) & ~7ULL; }

inline void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

// Little-endian scalar IO that also works on big-endian hosts.
inline void append_f64_le(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64_le(out, bits);
}

inline void append_f32_le(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double read_f64_le(const unsigned char* p) {
    const std::uint64_t bits = get_u64_le(p);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline float read_f32_le(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

// Whole-file atomic write: temp file in the same directory, then rename.
inline void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " +
                          ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

} // namespace detail

struct TensorBundle {
    std::map<std::string, TensorEntry> tensors; // iteration order == manifest order
    nlohmann::json metadata = nlohmann::json::object();

    void put(const std::string& name, Matrix values, Dtype dtype = Dtype::F64) {
        tensors[name] = TensorEntry{std::move(values), dtype};
    }

    const Matrix& get(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw IoError("bundle is missing tensor '" + name + "'");
        return it->second.values;
    }

    bool has(const std::string& name) const { return tensors.count(name) != 0; }

    std::string to_bytes() const {
        nlohmann::json manifest;
        manifest["metadata"] = metadata;
        nlohmann::json tens = nlohmann::json::object();
        std::uint64_t offset = 0;
        for (const auto& [name, entry] : tensors) {
            const std::uint64_t length =
                entry.values.size() * dtype_size(entry.dtype);
            tens[name] = {{"dtype", dtype_name(entry.dtype)},
                          {"shape", {entry.values.rows(), entry.values.cols()}},
                          {"offset", offset},
                          {"length", length}};
            offset = detail::align8(offset + length);
        }
        manifest["tensors"] = tens;

        const std::string header = manifest.dump();
        std::string bytes;
        detail::put_u64_le(bytes, header.size());
        bytes += header;
        while (bytes.size() % 8 != 0) bytes.push_back('\0');

        for (const auto& [name, entry] : tensors) {
            for (double v : entry.values.data()) {
                if (entry.dtype == Dtype::F64)
                    detail::append_f64_le(bytes, v);
                else
                    detail::append_f32_le(bytes, static_cast<float>(v));
            }
            while (bytes.size() % 8 != 0) bytes.push_back('\0');
        }
        // the last tensor needs no tail padding; trim it so the file ends
        // exactly at offset + length of the final entry
        if (!tensors.empty()) {
            const auto& last = tens[tensors.rbegin()->first];
            const std::uint64_t blob_base = detail::align8(8 + header.size());
            const std::uint64_t end = blob_base + static_cast<std::uint64_t>(
                                                      last["offset"].get<std::uint64_t>()) +
                                      last["length"].get<std::uint64_t>();
            bytes.resize(end);
        }
        return bytes;
    }

    void save(const std::filesystem::path& path) const { detail::atomic_write(path, to_bytes()); }

    static TensorBundle from_bytes(const std::string& bytes, const std::string& origin = "bundle") {
        if (bytes.size() < 8) throw IoError(origin + ": truncated header length prefix");
        const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
        const std::uint64_t header_len = detail::get_u64_le(raw);
        if (8 + header_len > bytes.size()) throw IoError(origin + ": truncated manifest");

        nlohmann::json manifest;
        try {
                manifest = nlohmann::json::parse(bytes.substr(8, header_len));
        } catch (const nlohmann::json::exception& e) {
            throw IoError(origin + ": malformed manifest JSON: " + e.what());
        }
        if (!manifest.is_object() || !manifest.contains("tensors") ||
            !manifest["tensors"].is_object())
            throw IoError(origin + ": manifest must carry a 'tensors' object");

        TensorBundle bundle;
        bundle.metadata = manifest.value("metadata", nlohmann::json::object());

        const std::uint64_t blob_base = detail::align8(8 + header_len);
        std::uint64_t prev_end = 0;
        std::uint64_t prev_offset = 0;
        bool first = true;
        std::uint64_t file_end = blob_base;
        try {
            for (const auto& [name, spec] : manifest["tensors"].items()) {
                for (const char* key : {"dtype", "shape", "offset", "length"})
                    if (!spec.contains(key))
                        throw IoError(origin + ": tensor '" + name + "' is missing '" + key + "'");
                const Dtype dtype = dtype_from_name(spec["dtype"].get<std::string>());
                const auto& shape = spec["shape"];
                if (!shape.is_array() || shape.size() != 2)
                    throw IoError(origin + ": tensor '" + name + "' shape must be [rows, cols]");
                const std::uint64_t rows = shape[0].get<std::uint64_t>();
                const std::uint64_t cols = shape[1].get<std::uint64_t>();
                const std::uint64_t offset = spec["offset"].get<std::uint64_t>();
                const std::uint64_t length = spec["length"].get<std::uint64_t>();
                if (rows == 0 || cols == 0)
                    throw IoError(origin + ": tensor '" + name + "' has an empty shape");
                if (length != rows * cols * dtype_size(dtype))
                    throw IoError(origin + ": tensor '" + name + "' length " +
                                  std::to_string(length) + " does not match shape");
                if (offset % 8 != 0)
                    throw IoError(origin + ": tensor '" + name + "' offset is not 8-byte aligned");
                if (!first && offset < prev_offset)
                    throw IoError(origin + ": tensor offsets must be nondecreasing at '" + name +
                                  "'");
                if (!first && offset < prev_end)
                    throw IoError(origin + ": tensor '" + name + "' overlaps the previous tensor");
                prev_offset = offset;
                prev_end = offset + length;
                first = false;
                file_end = std::max(file_end, blob_base + prev_end);

                if (blob_base + offset + length > bytes.size())
                    throw IoError(origin + ": tensor '" + name + "' extends past the end of file");

                Matrix values(rows, cols);
                const unsigned char* src = raw + blob_base + offset;
                for (std::size_t i = 0; i < values.size(); ++i) {
                    values.data()[i] = dtype == Dtype::F64
                                           ? detail::read_f64_le(src + 8 * i)
                                           : static_cast<double>(detail::read_f32_le(src + 4 * i));
                }
                values.ensure_finite("bundle tensor '" + name + "'");
                bundle.tensors[name] = TensorEntry{std::move(values), dtype};
            }
        } catch (const nlohmann::json::exception& e) {
            throw IoError(origin + ": malformed tensor entry: " + e.what());
        }
        if (bytes.size() != file_end)
            throw IoError(origin + ": file size " + std::to_string(bytes.size()) +
                          " does not match manifest end " + std::to_string(file_end));
        return bundle;
    }

    static TensorBundle load(const std::filesystem::path& path) {
        return from_bytes(detail::read_file(path), "'" + path.string() + "'");
    }
};

} // namespace iteris
