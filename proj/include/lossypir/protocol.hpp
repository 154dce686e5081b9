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

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lossypir/bytes.hpp"
#include "lossypir/core.hpp"
#include "lossypir/leakage.hpp"
#include "lossypir/schemes.hpp"

// User and server roles of the N-subset download scheme, with bit-exact wire
// formats (all integers little-endian):
//
//   query:  u8 version | u32 scheme_id | u8 has_K | [u8 K] | u16 N | N x u16 index
//   answer: u8 version | u32 scheme_id | u16 bit_len | payload
//
// Query indices are 1-based and strictly increasing. The answer payload holds
// the codeword index in bit_len bits, most significant bit first, zero padded
// to whole bytes; a zero-length index still occupies one padding byte.

namespace lossypir {

inline constexpr std::uint8_t kWireVersion = 1;

struct QueryMessage {
  std::uint32_t scheme_id = 0;
  std::optional<std::uint8_t> k;       // time-sharing coin, when present
  std::vector<std::uint16_t> subset;   // 1-based, ascending

  bool operator==(const QueryMessage&) const = default;
};

struct AnswerMessage {
  std::uint32_t scheme_id = 0;
  std::uint16_t bit_len = 0;
  std::uint64_t codeword_index = 0;

  bool operator==(const AnswerMessage&) const = default;
};

namespace detail {

inline constexpr std::size_t kQueryIdAt = 1;
inline constexpr std::size_t kQueryHasKAt = 5;
inline constexpr std::size_t kQueryKAt = 6;

inline std::size_t query_n_at(bool has_k) { return has_k ? 7 : 6; }
inline std::size_t query_index_at(bool has_k, std::size_t i) { return query_n_at(has_k) + 2 + 2 * i; }

inline std::size_t payload_bytes(std::uint16_t bit_len) { return bit_len == 0 ? 1 : (bit_len + 7u) / 8u; }

}  // namespace detail

inline std::vector<std::uint8_t> encode_query(const QueryMessage& q) {
  if (q.subset.empty() || q.subset.size() > 0xffff) {
    throw ProtocolError("query: subset size must be in [1, 65535]", detail::query_n_at(q.k.has_value()));
  }
  for (std::size_t i = 0; i < q.subset.size(); ++i) {
    if (q.subset[i] == 0 || (i > 0 && q.subset[i] <= q.subset[i - 1])) {
      throw ProtocolError("query: indices must be 1-based and strictly increasing",
                          detail::query_index_at(q.k.has_value(), i));
    }
  }
  ByteWriter w;
  w.put_u8(kWireVersion);
  w.put_le<std::uint32_t>(q.scheme_id);
  w.put_u8(q.k ? 1 : 0);
  if (q.k) w.put_u8(*q.k);
  w.put_le<std::uint16_t>(static_cast<std::uint16_t>(q.subset.size()));
  for (auto v : q.subset) w.put_le<std::uint16_t>(v);
  return std::move(w).bytes();
}

inline QueryMessage decode_query(std::span<const std::uint8_t> bytes) {
  ByteReader<ProtocolError> r(bytes);
  const std::size_t at = r.offset();
  if (r.u8("version") != kWireVersion) throw ProtocolError("query: unsupported version", at);
  QueryMessage q;
  q.scheme_id = r.le<std::uint32_t>("scheme_id");
  const std::size_t flag_at = r.offset();
  const auto has_k = r.u8("has_K");
  if (has_k > 1) throw ProtocolError("query: has_K must be 0 or 1", flag_at);
  if (has_k) q.k = r.u8("K");
  const std::size_t n_at = r.offset();
  const auto n = r.le<std::uint16_t>("N");
  if (n == 0) throw ProtocolError("query: empty subset", n_at);
  q.subset.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx_at = r.offset();
    const auto v = r.le<std::uint16_t>("index");
    if (v == 0) throw ProtocolError("query: file indices are 1-based", idx_at);
    if (!q.subset.empty() && v <= q.subset.back()) {
      throw ProtocolError("query: indices must be strictly increasing", idx_at);
    }
    q.subset.push_back(v);
  }
  r.expect_end("query");
  return q;
}

inline std::vector<std::uint8_t> encode_answer(const AnswerMessage& a) {
  if (a.bit_len > 64) throw ProtocolError("answer: bit_len above 64 is not supported", 5);
  if (a.bit_len < 64 && a.codeword_index >= (std::uint64_t{1} << a.bit_len)) {
    throw ProtocolError("answer: codeword index does not fit in bit_len bits", 7);
  }
  ByteWriter w;
  w.put_u8(kWireVersion);
  w.put_le<std::uint32_t>(a.scheme_id);
  w.put_le<std::uint16_t>(a.bit_len);
  const std::size_t nbytes = detail::payload_bytes(a.bit_len);
  // Bit j of the index (from the top) lands at payload bit j.
  for (std::size_t b = 0; b < nbytes; ++b) {
    std::uint8_t byte = 0;
    for (std::size_t j = 0; j < 8; ++j) {
      const std::size_t pos = 8 * b + j;
      if (pos < a.bit_len && ((a.codeword_index >> (a.bit_len - 1 - pos)) & 1u)) byte |= std::uint8_t(0x80u >> j);
    }
    w.put_u8(byte);
  }
  return std::move(w).bytes();
}

inline AnswerMessage decode_answer(std::span<const std::uint8_t> bytes) {
  ByteReader<ProtocolError> r(bytes);
  if (r.u8("version") != kWireVersion) throw ProtocolError("answer: unsupported version", 0);
  AnswerMessage a;
  a.scheme_id = r.le<std::uint32_t>("scheme_id");
  const std::size_t len_at = r.offset();
  a.bit_len = r.le<std::uint16_t>("bit_len");
  if (a.bit_len > 64) throw ProtocolError("answer: bit_len above 64 is not supported", len_at);
  const std::size_t start = r.offset();
  const auto payload = r.take(detail::payload_bytes(a.bit_len), "payload");
  for (std::size_t pos = 0; pos < 8 * payload.size(); ++pos) {
    const bool bit = (payload[pos / 8] >> (7 - pos % 8)) & 1u;
    if (pos < a.bit_len) {
      a.codeword_index = (a.codeword_index << 1) | (bit ? 1u : 0u);
    } else if (bit) {
      throw ProtocolError("answer: nonzero padding bits", start + pos / 8);
    }
  }
  r.expect_end("answer");
  return a;
}

// Logical answer length for a codebook of k words: ceil(log2 k) bits.
inline std::uint16_t answer_bit_length(std::uint64_t k) {
  enforce(k >= 1, "answer length: empty codebook");
  std::uint16_t b = 0;
  while (b < 64 && (std::uint64_t{1} << b) < k) ++b;
  return b;
}

// ---------------------------------------------------------------------------
// Roles.

namespace detail {

// A plain scheme, or the two halves of a time-shared one.
struct SchemeView {
  std::uint32_t scheme_id = 0;
  std::vector<const CompressionScheme*> parts;
  double lambda = 0;
  bool shared = false;
};

inline SchemeView view_of(const CompressionScheme& s) {
  s.validate();
  return {s.scheme_id, {&s}, 0.0, false};
}

inline SchemeView view_of(const TimeSharedScheme& s) {
  s.validate();
  return {s.scheme_id, {&s.parts[0], &s.parts[1]}, s.lambda, true};
}

template <typename Rng>
QueryMessage make_query(const SchemeView& v, std::size_t m, Rng& rng) {
  std::size_t part = 0;
  QueryMessage q;
  q.scheme_id = v.scheme_id;
  if (v.shared) {
    std::bernoulli_distribution coin(v.lambda);
    part = coin(rng) ? 1 : 0;
    q.k = static_cast<std::uint8_t>(part);
  }
  const auto& s = *v.parts[part];
  enforce(m < s.num_files, "query: requested file " + std::to_string(m + 1) + " outside [1, " +
                               std::to_string(s.num_files) + "]");
  for (auto j : draw_subset(s.num_files, s.subset_size, m, rng)) q.subset.push_back(static_cast<std::uint16_t>(j + 1));
  return q;
}

// Checks a decoded query against the scheme and returns the part it selects.
inline const CompressionScheme& part_for(const SchemeView& v, const QueryMessage& q) {
  if (q.scheme_id != v.scheme_id) {
    throw ProtocolError("query: scheme_id " + std::to_string(q.scheme_id) + " does not match " +
                            std::to_string(v.scheme_id),
                        kQueryIdAt);
  }
  if (q.k.has_value() != v.shared) {
    throw ProtocolError(v.shared ? "query: time-shared scheme needs K" : "query: unexpected K", kQueryHasKAt);
  }
  std::size_t part = 0;
  if (v.shared) {
    if (*q.k > 1) throw ProtocolError("query: K must be 0 or 1", kQueryKAt);
    part = *q.k;
  }
  const auto& s = *v.parts[part];
  if (q.subset.size() != s.subset_size) {
    throw ProtocolError("query: subset size " + std::to_string(q.subset.size()) + " does not match N = " +
                            std::to_string(s.subset_size),
                        query_n_at(v.shared));
  }
  for (std::size_t i = 0; i < q.subset.size(); ++i) {
    if (q.subset[i] > s.num_files) {
      throw ProtocolError("query: file index " + std::to_string(q.subset[i]) + " outside [1, " +
                              std::to_string(s.num_files) + "]",
                          query_index_at(v.shared, i));
    }
  }
  return s;
}

inline std::vector<std::size_t> zero_based(const QueryMessage& q) {
  std::vector<std::size_t> out;
  for (auto v : q.subset) out.push_back(static_cast<std::size_t>(v) - 1);
  return out;
}

inline std::vector<std::uint8_t> answer(const SchemeView& v, std::span<const std::uint8_t> query_bytes,
                                        std::span<const double> files) {
  const auto q = decode_query(query_bytes);
  const auto& s = part_for(v, q);
  enforce<DimensionError>(files.size() == s.num_files * s.dim, "server: files have the wrong size");
  AnswerMessage a;
  a.scheme_id = v.scheme_id;
  a.bit_len = answer_bit_length(std::uint64_t{1} << s.bits_total);
  a.codeword_index = scheme_encode(s, files, zero_based(q));
  return encode_answer(a);
}

inline std::vector<double> reconstruct(const SchemeView& v, std::span<const std::uint8_t> answer_bytes,
                                       std::size_t m, const QueryMessage& q) {
  const auto& s = part_for(v, q);
  const auto a = decode_answer(answer_bytes);
  if (a.scheme_id != v.scheme_id) throw ProtocolError("answer: scheme_id does not match", 1);
  if (a.bit_len != answer_bit_length(std::uint64_t{1} << s.bits_total)) {
    throw ProtocolError("answer: bit_len does not match the scheme", 5);
  }
  return scheme_decode(s, static_cast<std::size_t>(a.codeword_index), zero_based(q), m);
}

}  // namespace detail

// The user's query for 0-based file m: m plus N-1 uniform dummies; a
// time-shared scheme first flips its coin K.
template <typename Rng>
QueryMessage user_make_query(std::size_t m, const CompressionScheme& s, Rng& rng) {
  return detail::make_query(detail::view_of(s), m, rng);
}

template <typename Rng>
QueryMessage user_make_query(std::size_t m, const TimeSharedScheme& s, Rng& rng) {
  return detail::make_query(detail::view_of(s), m, rng);
}

// The server sees query bytes and one sample of all M files, never m.
inline std::vector<std::uint8_t> server_answer(std::span<const std::uint8_t> query_bytes,
                                               std::span<const double> files, const CompressionScheme& s) {
  return detail::answer(detail::view_of(s), query_bytes, files);
}

inline std::vector<std::uint8_t> server_answer(std::span<const std::uint8_t> query_bytes,
                                               std::span<const double> files, const TimeSharedScheme& s) {
  return detail::answer(detail::view_of(s), query_bytes, files);
}

inline std::vector<double> user_reconstruct(std::span<const std::uint8_t> answer_bytes, std::size_t m,
                                            const QueryMessage& q, const CompressionScheme& s) {
  return detail::reconstruct(detail::view_of(s), answer_bytes, m, q);
}

inline std::vector<double> user_reconstruct(std::span<const std::uint8_t> answer_bytes, std::size_t m,
                                            const QueryMessage& q, const TimeSharedScheme& s) {
  return detail::reconstruct(detail::view_of(s), answer_bytes, m, q);
}

// ---------------------------------------------------------------------------
// Experiments.

struct TranscriptRecord {
  std::size_t trial = 0;
  std::size_t m = 0;  // 0-based
  std::vector<std::uint8_t> query;
  std::vector<std::uint8_t> answer;
  std::size_t answer_bits = 0;  // logical length
  double distortion = 0;
};

struct ExperimentResult {
  SchemePoint measured;
  double distortion_stderr = 0;
  QuerySampleSet queries;
  std::vector<TranscriptRecord> transcript;
};

inline std::string transcript_csv(const std::vector<TranscriptRecord>& rows) {
  std::string out = "trial,m,query_hex,answer_bits,distortion\n";
  for (const auto& r : rows) {
    out += std::to_string(r.trial) + "," + std::to_string(r.m + 1) + "," + to_hex(r.query) + "," +
           std::to_string(r.answer_bits) + "," + fmt9(r.distortion) + "\n";
  }
  return out;
}

namespace detail {

inline ExperimentResult run(const SchemeView& v, const Dataset& test, std::size_t trials, std::uint64_t seed) {
  const auto& first = *v.parts.front();
  enforce(trials >= 1, "experiment: trials must be >= 1");
  enforce<DimensionError>(test.num_files() == first.num_files && test.dim() == first.dim,
                          "experiment: test dataset shape does not match the scheme");
  const std::size_t files = first.num_files;
  ExperimentResult res;
  res.queries = QuerySampleSet(files, files + (v.shared ? 1 : 0), v.shared ? "time-shared" : "compression");
  res.transcript.reserve(trials);
  double sum = 0, sum_sq = 0, bits = 0;
  std::vector<double> indicator(files + (v.shared ? 1 : 0));
  for (std::size_t t = 0; t < trials; ++t) {
    auto rng = make_rng(seed, 0x7a00000000ull + t);
    std::uniform_int_distribution<std::size_t> pick_l(0, test.num_samples() - 1), pick_m(0, files - 1);
    const std::size_t l = pick_l(rng), m = pick_m(rng);
    TranscriptRecord rec;
    rec.trial = t + 1;
    rec.m = m;
    const auto q = make_query(v, m, rng);
    rec.query = encode_query(q);
    rec.answer = answer(v, rec.query, test.sample(l));
    const auto a = decode_answer(rec.answer);
    rec.answer_bits = a.bit_len;
    const auto est = reconstruct(v, rec.answer, m, decode_query(rec.query));
    rec.distortion = per_symbol_distortion(test.file(l, m), est);
    sum += rec.distortion;
    sum_sq += rec.distortion * rec.distortion;
    bits += static_cast<double>(rec.answer_bits);
    std::fill(indicator.begin(), indicator.end(), 0.0);
    std::size_t off = 0;
    if (v.shared) indicator[off++] = *q.k;
    for (auto j : q.subset) indicator[off + j - 1] = 1.0;
    res.queries.add(m, indicator);
    res.transcript.push_back(std::move(rec));
  }
  const double n = static_cast<double>(trials);
  const double mean = sum / n;
  res.distortion_stderr = trials > 1 ? std::sqrt(std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) / n) : 0.0;
  SchemePoint p;
  p.rate = bits / n / static_cast<double>(first.dim);
  p.distortion = mean;
  p.leakage_kind = LeakageKind::kMapAccuracy;
  if (v.shared) {
    p.leakage = v.lambda * v.parts[1]->leakage() + (1 - v.lambda) * v.parts[0]->leakage();
    p.scheme = "time-shared";
    p.label = "lambda=" + fmt9(v.lambda);
  } else {
    p.leakage = first.leakage();
    p.scheme = "compression";
    p.label = "N=" + std::to_string(first.subset_size) + ",bits=" + std::to_string(first.bits_total);
  }
  res.measured = p;
  return res;
}

}  // namespace detail

// Draws (sample, file) pairs, runs every exchange through the wire codecs
// and measures rate, distortion and the analytic MAP leakage. Each trial has
// its own random substream. Exported queries are subset indicator vectors,
// prefixed with K for a time-shared scheme.
inline ExperimentResult run_experiment(const Dataset& test, const CompressionScheme& s, std::size_t trials,
                                       std::uint64_t seed) {
  return detail::run(detail::view_of(s), test, trials, seed);
}

inline ExperimentResult run_experiment(const Dataset& test, const TimeSharedScheme& s, std::size_t trials,
                                       std::uint64_t seed) {
  return detail::run(detail::view_of(s), test, trials, seed);
}

}  // namespace lossypir
