// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "upgan/image.hpp"

namespace upgan::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor container layout (all integers little-endian):
///
///   bytes 0..3   magic "UPG1"
///   u32          rank
///   u32[rank]    dims
///   u32          dtype code (0 = float32)
///   ...          row-major payload, float32 little-endian
///
/// Semantics (names, normalization, provenance) live in a JSON sidecar.
struct TensorFile {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t expected_size() const;
};

inline constexpr std::uint32_t kDtypeFloat32 = 0;

void write_tensor(const std::filesystem::path& path, const TensorFile& tensor);
TensorFile read_tensor(const std::filesystem::path& path);

/// Encodes to / decodes from an in-memory byte buffer (same layout).
std::vector<unsigned char> encode_tensor(const TensorFile& tensor);
TensorFile decode_tensor(std::span<const unsigned char> bytes);

/// Binary PGM (P5) with 8- or 16-bit samples, or ASCII PGM (P2). Returns raw
/// sample values; `max_value` receives the header maxval when non-null.
Image read_pgm(const std::filesystem::path& path, int* max_value = nullptr);

/// Writes an 8-bit P5 file, mapping [lo, hi] linearly onto [0, 255].
void write_pgm(const std::filesystem::path& path, const Image& img, double lo, double hi);

/// Reads a grayscale slice from either a .pgm file or a rank-2 container
/// (.upg). For PGM the values are the raw samples.
Image read_grayscale(const std::filesystem::path& path);

}  // namespace upgan::io
