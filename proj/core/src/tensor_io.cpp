#include "gssl/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace gssl {

namespace {

std::size_t dtype_size(DType d) {
    switch (d) {
        case DType::f32: return 4;
        case DType::f64: return 8;
        case DType::u8: return 1;
        case DType::i32: return 4;
    }
    return 0;
}

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t bytes) {
    for (std::size_t i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t offset, std::size_t bytes) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
    return v;
}

[[noreturn]] void fail(std::size_t offset, const std::string& what) {
    throw std::runtime_error("GTSR decode error at offset " + std::to_string(offset) + ": " + what);
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const StoredTensor& t) {
    if (shape_numel(t.shape) != t.values.size()) {
        throw std::invalid_argument("encode_tensor: shape " + shape_to_string(t.shape) +
                                    " does not match " + std::to_string(t.values.size()) +
                                    " values");
    }
    if (t.shape.size() > 255) throw std::invalid_argument("encode_tensor: rank exceeds 255");
    const std::size_t width = dtype_size(t.dtype);
    if (width == 0) throw std::invalid_argument("encode_tensor: unknown dtype");
    std::vector<std::uint8_t> out{'G', 'T', 'S', 'R', kGtsrVersion,
                                  static_cast<std::uint8_t>(t.dtype),
                                  static_cast<std::uint8_t>(t.shape.size())};
    for (auto e : t.shape) put_le(out, e, 8);
    out.reserve(out.size() + width * t.values.size());
    for (double v : t.values) {
        switch (t.dtype) {
            case DType::f32:
                put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
                break;
            case DType::f64:
                put_le(out, std::bit_cast<std::uint64_t>(v), 8);
                break;
            case DType::u8:
                if (!(v >= 0.0 && v <= 255.0 && std::floor(v) == v)) {
                    throw std::invalid_argument("encode_tensor: value " + std::to_string(v) +
                                                " not representable as u8");
                }
                out.push_back(static_cast<std::uint8_t>(v));
                break;
            case DType::i32:
                if (!(v >= -2147483648.0 && v <= 2147483647.0 && std::floor(v) == v)) {
                    throw std::invalid_argument("encode_tensor: value " + std::to_string(v) +
                                                " not representable as i32");
                }
                put_le(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(v)), 4);
                break;
        }
    }
    return out;
}

StoredTensor decode_tensor(std::span<const std::uint8_t> in) {
    if (in.size() < 4) fail(in.size(), "truncated magic");
    if (std::memcmp(in.data(), "GTSR", 4) != 0) fail(0, "bad magic");
    if (in.size() < 7) fail(in.size(), "truncated header");
    if (in[4] != kGtsrVersion) fail(4, "unsupported version " + std::to_string(in[4]));
    if (in[5] > static_cast<std::uint8_t>(DType::i32)) fail(5, "unknown dtype " + std::to_string(in[5]));
    StoredTensor t;
    t.dtype = static_cast<DType>(in[5]);
    const std::size_t rank = in[6];
    std::size_t offset = 7;
    if (in.size() < offset + 8 * rank) fail(in.size(), "truncated extents");
    for (std::size_t i = 0; i < rank; ++i, offset += 8) t.shape.push_back(get_le(in, offset, 8));
    const std::size_t width = dtype_size(t.dtype);
    const std::size_t count = shape_numel(t.shape);
    if (count != 0 && (in.size() - offset) / width < count) fail(in.size(), "truncated payload");
    if (in.size() - offset != count * width) fail(offset + count * width, "trailing bytes");
    t.values.resize(count);
    for (std::size_t i = 0; i < count; ++i, offset += width) {
        switch (t.dtype) {
            case DType::f32:
                t.values[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(in, offset, 4)));
                break;
            case DType::f64:
                t.values[i] = std::bit_cast<double>(get_le(in, offset, 8));
                break;
            case DType::u8:
                t.values[i] = in[offset];
                break;
            case DType::i32:
                t.values[i] = static_cast<std::int32_t>(static_cast<std::uint32_t>(get_le(in, offset, 4)));
                break;
        }
    }
    return t;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed for " + path.string());
}

void write_tensor(const std::filesystem::path& path, const StoredTensor& t) {
    write_file_bytes(path, encode_tensor(t));
}

StoredTensor read_tensor(const std::filesystem::path& path) {
    try {
        return decode_tensor(read_file_bytes(path));
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

StoredTensor to_stored(const Tensor& t, DType dtype) {
    StoredTensor s;
    s.dtype = dtype;
    s.shape = t.shape();
    s.values.assign(t.data().begin(), t.data().end());
    if (dtype == DType::f32) {
        for (auto& v : s.values) v = static_cast<float>(v);
    }
    return s;
}

Tensor from_stored(const StoredTensor& s) { return Tensor::from_vector(s.shape, s.values); }

}  // namespace gssl
