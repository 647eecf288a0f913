// SPDX-License-Identifier: Apache-2.0
#include "upgan/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace upgan::io {

namespace {

constexpr unsigned char kMagic[4] = {'U', 'P', 'G', '1'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::span<const unsigned char> bytes, std::size_t& pos) {
  if (pos + 4 > bytes.size()) throw FormatError("tensor container: truncated header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Skips whitespace and '#' comments in a PNM header.
int next_header_int(const std::vector<unsigned char>& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("pgm: malformed header");
  long v = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    v = v * 10 + (bytes[pos++] - '0');
    if (v > 1 << 24) throw FormatError("pgm: header value too large");
  }
  return static_cast<int>(v);
}

}  // namespace

std::size_t TensorFile::expected_size() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<unsigned char> encode_tensor(const TensorFile& tensor) {
  if (tensor.data.size() != tensor.expected_size()) {
    throw FormatError("tensor container: payload size does not match dims");
  }
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put_u32(out, d);
  put_u32(out, kDtypeFloat32);
  out.reserve(out.size() + tensor.data.size() * 4);
  for (float f : tensor.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

TensorFile decode_tensor(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("tensor container: bad magic");
  }
  std::size_t pos = 4;
  const std::uint32_t rank = get_u32(bytes, pos);
  if (rank > 16) throw FormatError("tensor container: implausible rank " + std::to_string(rank));
  TensorFile t;
  for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(get_u32(bytes, pos));
  const std::uint32_t dtype = get_u32(bytes, pos);
  if (dtype != kDtypeFloat32) throw FormatError("tensor container: unsupported dtype " + std::to_string(dtype));
  const std::size_t n = t.expected_size();
  if (bytes.size() - pos != n * 4) throw FormatError("tensor container: payload length mismatch");
  t.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.data[i] = std::bit_cast<float>(get_u32(bytes, pos));
  return t;
}

void write_tensor(const std::filesystem::path& path, const TensorFile& tensor) {
  const auto bytes = encode_tensor(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

TensorFile read_tensor(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Image read_pgm(const std::filesystem::path& path, int* max_value) {
  const auto bytes = slurp(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2')) {
    throw FormatError(path.string() + ": not a PGM file");
  }
  const bool binary = bytes[1] == '5';
  std::size_t pos = 2;
  const int w = next_header_int(bytes, pos);
  const int h = next_header_int(bytes, pos);
  const int maxval = next_header_int(bytes, pos);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw FormatError(path.string() + ": bad PGM header");
  if (max_value) *max_value = maxval;
  Image img(h, w);
  if (binary) {
    ++pos;  // single whitespace before raster
    const std::size_t bps = maxval > 255 ? 2 : 1;
    if (bytes.size() < pos + img.size() * bps) throw FormatError(path.string() + ": truncated raster");
    for (std::size_t i = 0; i < img.size(); ++i) {
      img.pixels[i] = bps == 1 ? bytes[pos + i] : (bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1];
    }
  } else {
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = next_header_int(bytes, pos);
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const Image& img, double lo, double hi) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<unsigned char> raster(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp((img.pixels[i] - lo) / span, 0.0, 1.0);
    raster[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
}

Image read_grayscale(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pgm") return read_pgm(path);
  if (ext == ".upg") {
    const TensorFile t = read_tensor(path);
    if (t.dims.size() != 2) throw FormatError(path.string() + ": expected a rank-2 tensor");
    Image img(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]));
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = t.data[i];
    return img;
  }
  throw FormatError(path.string() + ": unsupported image extension '" + ext + "'");
}

}  // namespace upgan::io
