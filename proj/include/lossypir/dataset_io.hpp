// Copyright 2026 The lossypir Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lossypir/bytes.hpp"
#include "lossypir/core.hpp"

// Dataset file formats.
//
//   raw_f64:     "LPR1" | u64 n | u64 M | u64 beta | n*M*beta f64   (all LE)
//   idx_images:  standard big-endian IDX3 (magic 0x00000803), one image per
//                sample, pixels mapped to [-1, 1] via v / 127.5 - 1.

namespace lossypir {

enum class DatasetFormat { kRawF64, kIdxImages };

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

inline std::vector<std::uint8_t> encode_raw_f64(const Dataset& ds) {
  ByteWriter w;
  w.put_magic("LPR1");
  w.put_le<std::uint64_t>(ds.num_samples());
  w.put_le<std::uint64_t>(ds.num_files());
  w.put_le<std::uint64_t>(ds.dim());
  for (double v : ds.values()) w.put_f64(v);
  return std::move(w).bytes();
}

inline Dataset decode_raw_f64(std::span<const std::uint8_t> bytes) {
  ByteReader<FormatError> r(bytes);
  r.expect_magic("LPR1");
  const std::size_t header_end = 4;
  const auto n = r.le<std::uint64_t>("n");
  const auto files = r.le<std::uint64_t>("M");
  const auto dim = r.le<std::uint64_t>("beta");
  if (n == 0 || files == 0 || dim == 0) {
    throw FormatError("raw_f64: zero-sized shape", header_end);
  }
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  if (files > kMax / dim || n > kMax / (files * dim) || n * files * dim > kMax / 8) {
    throw FormatError("raw_f64: shape overflows", header_end);
  }
  const std::uint64_t count = n * files * dim;
  if (r.remaining() < count * 8) {
    throw FormatError("raw_f64: truncated payload, need " + std::to_string(count * 8) +
                          " bytes, have " + std::to_string(r.remaining()),
                      r.offset() + r.remaining());
  }
  std::vector<double> values(count);
  for (auto& v : values) v = r.f64();
  r.expect_end("raw_f64 payload");
  return Dataset(n, files, dim, std::move(values));
}

inline std::vector<std::uint8_t> encode_idx_images(std::size_t count, std::size_t rows,
                                                   std::size_t cols,
                                                   std::span<const std::uint8_t> pixels) {
  enforce<DimensionError>(pixels.size() == count * rows * cols, "idx: pixel count mismatch");
  std::vector<std::uint8_t> out;
  auto put_be32 = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  put_be32(kIdxImageMagic);
  put_be32(static_cast<std::uint32_t>(count));
  put_be32(static_cast<std::uint32_t>(rows));
  put_be32(static_cast<std::uint32_t>(cols));
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

inline Dataset decode_idx_images(std::span<const std::uint8_t> bytes) {
  ByteReader<FormatError> r(bytes);
  const auto magic = r.be<std::uint32_t>("magic");
  if (magic != kIdxImageMagic) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "idx: bad magic 0x%08x, expected magic 0x%08x", magic,
                  kIdxImageMagic);
    throw FormatError(buf, 0);
  }
  const auto count = r.be<std::uint32_t>("image count");
  const auto rows = r.be<std::uint32_t>("rows");
  const auto cols = r.be<std::uint32_t>("cols");
  if (count == 0 || rows == 0 || cols == 0) throw FormatError("idx: zero-sized shape", 4);
  const std::uint64_t pixels = std::uint64_t{count} * rows * cols;
  if (r.remaining() < pixels) {
    throw FormatError("idx: truncated pixel data, need " + std::to_string(pixels) +
                          " bytes, have " + std::to_string(r.remaining()),
                      r.offset() + r.remaining());
  }
  auto raw = r.take(pixels, "pixels");
  r.expect_end("idx pixel data");
  std::vector<double> values(pixels);
  for (std::size_t i = 0; i < pixels; ++i) values[i] = raw[i] / 127.5 - 1.0;
  return Dataset(count, 1, std::size_t{rows} * cols, std::move(values),
                 ImageGeometry{rows, cols, 1});
}

inline Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  const auto bytes = read_file_bytes(path);
  return format == DatasetFormat::kRawF64 ? decode_raw_f64(bytes) : decode_idx_images(bytes);
}

inline void save_raw_f64(const Dataset& ds, const std::filesystem::path& path) {
  write_file_atomic(path, encode_raw_f64(ds));
}

}  // namespace lossypir
