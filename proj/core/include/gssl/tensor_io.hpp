#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gssl/tensor.hpp"

namespace gssl {

// GTSR layout: "GTSR", version (1), dtype, rank, rank × u64 extents, then the
// row-major payload. All multi-byte fields are little-endian.
enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2, i32 = 3 };

inline constexpr std::uint8_t kGtsrVersion = 1;

// Values are held as doubles in memory; every supported dtype embeds exactly.
struct StoredTensor {
    DType dtype = DType::f64;
    Shape shape;
    std::vector<double> values;

    bool operator==(const StoredTensor&) const = default;
};

// Rejects values not representable in the dtype (u8/i32 need integers in range).
std::vector<std::uint8_t> encode_tensor(const StoredTensor& t);
// Errors name the byte offset where decoding failed.
StoredTensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const StoredTensor& t);
StoredTensor read_tensor(const std::filesystem::path& path);

StoredTensor to_stored(const Tensor& t, DType dtype);
Tensor from_stored(const StoredTensor& s);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace gssl
