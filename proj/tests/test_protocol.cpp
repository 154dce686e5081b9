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
#include <gtest/gtest.h>

#include <map>
#include <random>

#include "lossypir/leakage.hpp"
#include "lossypir/protocol.hpp"

namespace lossypir {
namespace {

using Bytes = std::vector<std::uint8_t>;

std::size_t error_offset(const Bytes& b, bool query) {
  try {
    if (query) {
      decode_query(b);
    } else {
      decode_answer(b);
    }
  } catch (const ProtocolError& e) {
    return e.offset();
  }
  return SIZE_MAX;
}

const Dataset& train_set() {
  static const Dataset ds = generate_gaussian_dataset(reference_gaussian_spec(), 3000, 1);
  return ds;
}

const Dataset& test_set() {
  static const Dataset ds = generate_gaussian_dataset(reference_gaussian_spec(), 3000, 2);
  return ds;
}

CompressionScheme small_scheme(std::size_t n, unsigned bits, std::uint32_t id = 9) {
  LloydConfig cfg;
  cfg.restarts = 1;
  cfg.rel_threshold = 1e-3;
  BuildOptions opt;
  opt.scheme_id = id;
  return build_compression_scheme(train_set(), n, bits, cfg, opt);
}

TEST(Wire, GoldenQuery) {
  QueryMessage q;
  q.scheme_id = 0x01020304;
  q.subset = {2, 5};
  EXPECT_EQ(encode_query(q), (Bytes{0x01, 0x04, 0x03, 0x02, 0x01, 0x00, 0x02, 0x00, 0x02, 0x00, 0x05, 0x00}));
  q.k = 1;
  EXPECT_EQ(encode_query(q),
            (Bytes{0x01, 0x04, 0x03, 0x02, 0x01, 0x01, 0x01, 0x02, 0x00, 0x02, 0x00, 0x05, 0x00}));
  EXPECT_EQ(decode_query(encode_query(q)), q);
}

TEST(Wire, GoldenAnswer) {
  AnswerMessage a{7, 12, 0xabc};
  EXPECT_EQ(encode_answer(a), (Bytes{0x01, 0x07, 0x00, 0x00, 0x00, 0x0c, 0x00, 0xab, 0xc0}));
  EXPECT_EQ(decode_answer(encode_answer(a)), a);
  // A one-word codebook has an empty index but still one padding byte.
  AnswerMessage empty{7, 0, 0};
  EXPECT_EQ(encode_answer(empty), (Bytes{0x01, 0x07, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}));
  EXPECT_EQ(answer_bit_length(1), 0);
  EXPECT_EQ(answer_bit_length(2), 1);
  EXPECT_EQ(answer_bit_length(4096), 12);
  EXPECT_EQ(answer_bit_length(4097), 13);
}

TEST(Wire, MalformedQueriesReportOffsets) {
  const Bytes good{0x01, 0, 0, 0, 0, 0x00, 0x02, 0x00, 0x01, 0x00, 0x03, 0x00};
  ASSERT_NO_THROW(decode_query(good));
  auto with = [&](std::size_t i, std::uint8_t v) {
    Bytes b = good;
    b[i] = v;
    return b;
  };
  EXPECT_EQ(error_offset(with(0, 2), true), 0u);
  EXPECT_EQ(error_offset(with(5, 2), true), 5u);
  EXPECT_EQ(error_offset(with(6, 0), true), 6u);
  EXPECT_EQ(error_offset(with(8, 0), true), 8u);
  EXPECT_EQ(error_offset(with(10, 1), true), 10u);
  Bytes longer = good;
  longer.push_back(0);
  EXPECT_EQ(error_offset(longer, true), 12u);
  EXPECT_EQ(error_offset(Bytes(good.begin(), good.end() - 1), true), 10u);
}

TEST(Wire, MalformedAnswersReportOffsets) {
  const Bytes good{0x01, 0x07, 0, 0, 0, 0x03, 0x00, 0xa0};
  ASSERT_EQ(decode_answer(good).codeword_index, 5u);
  Bytes pad = good;
  pad[7] = 0xa1;
  EXPECT_EQ(error_offset(pad, false), 7u);
  Bytes wide = good;
  wide[5] = 65;
  EXPECT_EQ(error_offset(wide, false), 5u);
  Bytes extra = good;
  extra.push_back(0);
  EXPECT_EQ(error_offset(extra, false), 8u);
  EXPECT_THROW(encode_answer(AnswerMessage{1, 3, 8}), ProtocolError);
  QueryMessage unsorted;
  unsorted.subset = {3, 2};
  EXPECT_THROW(encode_query(unsorted), ProtocolError);
}

TEST(Wire, FuzzedMessagesNeverCrash) {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> byte(0, 255), len(0, 24), coin(0, 3);
  for (int t = 0; t < 10000; ++t) {
    Bytes b(static_cast<std::size_t>(len(rng)));
    for (auto& x : b) x = static_cast<std::uint8_t>(byte(rng));
    // Bias toward plausible headers so that deeper checks are reached.
    if (!b.empty() && coin(rng)) b[0] = kWireVersion;
    if (b.size() > 5 && coin(rng)) b[5] = static_cast<std::uint8_t>(coin(rng) & 1);
    try {
      const auto q = decode_query(b);
      EXPECT_EQ(encode_query(q), b);
    } catch (const ProtocolError& e) {
      EXPECT_LE(e.offset(), b.size());
    }
    try {
      const auto a = decode_answer(b);
      EXPECT_EQ(encode_answer(a), b);
    } catch (const ProtocolError& e) {
      EXPECT_LE(e.offset(), b.size());
    }
  }
}

TEST(Wire, RandomValidRoundTrips) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 10000; ++t) {
    QueryMessage q;
    q.scheme_id = static_cast<std::uint32_t>(rng());
    if (rng() % 2) q.k = static_cast<std::uint8_t>(rng() % 2);
    for (std::uint16_t v = 1; v < 40; ++v) {
      if (rng() % 3 == 0) q.subset.push_back(v);
    }
    if (q.subset.empty()) q.subset.push_back(1);
    EXPECT_EQ(decode_query(encode_query(q)), q);
    AnswerMessage a;
    a.scheme_id = q.scheme_id;
    a.bit_len = static_cast<std::uint16_t>(rng() % 65);
    a.codeword_index = a.bit_len == 64 ? rng() : rng() & ((std::uint64_t{1} << a.bit_len) - 1);
    const auto enc = encode_answer(a);
    EXPECT_EQ(enc.size(), 7u + std::max<std::size_t>(1, (a.bit_len + 7) / 8));
    EXPECT_EQ(decode_answer(enc), a);
  }
}

TEST(Roles, OneWordCodebookAnswersWithPaddingByte) {
  const auto s = small_scheme(4, 0);
  auto rng = make_rng(3);
  const auto q = user_make_query(2, s, rng);
  const auto ans = server_answer(encode_query(q), test_set().sample(0), s);
  EXPECT_EQ(ans.size(), 8u);
  EXPECT_EQ(decode_answer(ans).bit_len, 0);
}

TEST(Roles, QueryContainsRequestedFile) {
  const auto s = small_scheme(2, 4);
  auto rng = make_rng(5);
  std::map<std::uint16_t, int> partner;
  for (int t = 0; t < 30000; ++t) {
    const auto q = user_make_query(0, s, rng);
    ASSERT_EQ(q.subset.size(), 2u);
    EXPECT_EQ(q.subset[0], 1);
    ++partner[q.subset[1]];
  }
  for (auto [j, c] : partner) EXPECT_NEAR(c / 30000.0, 1.0 / 3, 0.015) << j;
}

TEST(Roles, ServerRejectsMismatchedQueries) {
  const auto s = small_scheme(2, 4);
  const auto files = test_set().sample(0);
  QueryMessage q;
  q.scheme_id = 9;
  q.subset = {1, 2};
  EXPECT_NO_THROW(server_answer(encode_query(q), files, s));
  auto offset = [&](const QueryMessage& bad) -> std::size_t {
    try {
      server_answer(encode_query(bad), files, s);
    } catch (const ProtocolError& e) {
      return e.offset();
    }
    return SIZE_MAX;
  };
  auto bad = q;
  bad.scheme_id = 8;
  EXPECT_EQ(offset(bad), 1u);
  bad = q;
  bad.k = 0;
  EXPECT_EQ(offset(bad), 5u);
  bad = q;
  bad.subset = {1};
  EXPECT_EQ(offset(bad), 6u);
  bad = q;
  bad.subset = {1, 5};
  EXPECT_EQ(offset(bad), 10u);
}

TEST(Roles, ReconstructOutsideSubsetIsContractViolation) {
  const auto s = small_scheme(2, 4);
  QueryMessage q;
  q.scheme_id = 9;
  q.subset = {1, 2};
  const auto ans = server_answer(encode_query(q), test_set().sample(3), s);
  EXPECT_NO_THROW(user_reconstruct(ans, 1, q, s));
  EXPECT_THROW(user_reconstruct(ans, 2, q, s), ContractViolation);
}

TEST(Experiment, MatchesDirectEvaluation) {
  const auto s = small_scheme(1, 6);
  const auto r = run_experiment(test_set(), s, 1, 0);
  ASSERT_EQ(r.transcript.size(), 1u);
  const auto& rec = r.transcript.front();
  EXPECT_EQ(rec.trial, 1u);
  EXPECT_EQ(rec.answer_bits, 6u);
  EXPECT_EQ(r.measured.distortion, rec.distortion);
  const auto q = decode_query(rec.query);
  ASSERT_EQ(q.subset.size(), 1u);
  EXPECT_EQ(q.subset[0], rec.m + 1);
}

TEST(Experiment, DeterministicAndServerOblivious) {
  const auto s = small_scheme(2, 4);
  const auto a = run_experiment(test_set(), s, 500, 11);
  const auto b = run_experiment(test_set(), s, 500, 11);
  EXPECT_EQ(transcript_csv(a.transcript), transcript_csv(b.transcript));
  const auto c = run_experiment(test_set(), s, 500, 12);
  EXPECT_NE(transcript_csv(a.transcript), transcript_csv(c.transcript));
  // Replaying the query bytes alone reproduces every answer: the server's
  // output is a function of the query and the data, not of m.
  std::size_t replayed = 0;
  for (const auto& rec : a.transcript) {
    for (std::size_t l = 0; l < test_set().num_samples(); ++l) {
      const auto ans = server_answer(rec.query, test_set().sample(l), s);
      if (ans == rec.answer) {
        ++replayed;
        break;
      }
    }
  }
  EXPECT_EQ(replayed, a.transcript.size());
}

TEST(Experiment, MeasuredRateAndLeakage) {
  const auto s = small_scheme(2, 6);
  const auto r = run_experiment(test_set(), s, 100000, 1);
  EXPECT_EQ(r.measured.rate, s.rate());
  EXPECT_EQ(r.measured.leakage, 0.5);
  EXPECT_NEAR(map_accuracy(r.queries, DensityEstimator::kEmpiricalDiscrete), 0.5, 0.01);
  EXPECT_GT(r.distortion_stderr, 0);
  const auto csv = transcript_csv(r.transcript);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "trial,m,query_hex,answer_bits,distortion");
}

TEST(Experiment, TimeSharedScheme) {
  TimeSharedScheme ts;
  ts.scheme_id = 9;
  ts.parts = {small_scheme(1, 6), small_scheme(2, 6)};
  ts.lambda = 0.5;
  const std::size_t trials = 40000;
  const auto r = run_experiment(test_set(), ts, trials, 3);
  EXPECT_EQ(r.measured.rate, 2.0);
  EXPECT_DOUBLE_EQ(r.measured.leakage, 0.75);
  const auto d0 = run_experiment(test_set(), ts.parts[0], trials, 4);
  const auto d1 = run_experiment(test_set(), ts.parts[1], trials, 5);
  const double want = 0.5 * d0.measured.distortion + 0.5 * d1.measured.distortion;
  const double se = std::hypot(r.distortion_stderr, 0.5 * std::hypot(d0.distortion_stderr, d1.distortion_stderr));
  EXPECT_NEAR(r.measured.distortion, want, 3 * se);
  EXPECT_NEAR(map_accuracy(r.queries, DensityEstimator::kEmpiricalDiscrete), 0.75, 0.015);
  std::size_t ones = 0;
  for (const auto& rec : r.transcript) ones += decode_query(rec.query).k.value();
  EXPECT_NEAR(ones / double(trials), 0.5, 0.01);
}

}  // namespace
}  // namespace lossypir
