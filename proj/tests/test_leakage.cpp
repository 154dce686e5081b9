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

#include <cmath>
#include <map>
#include <random>

#include "lossypir/leakage.hpp"
#include "lossypir/schemes.hpp"

namespace lossypir {
namespace {

// Indicator queries of uniformly drawn N-subsets containing m.
QuerySampleSet subset_queries(std::size_t files, std::size_t n, std::size_t count, std::uint64_t seed) {
  QuerySampleSet qs(files, files);
  auto rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, files - 1);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t m = pick(rng);
    std::vector<double> q(files, 0.0);
    for (auto j : draw_subset(files, n, m, rng)) q[j] = 1;
    qs.add(m, q);
  }
  return qs;
}

// Plug-in mutual information from raw counts, computed independently.
double plugin_mi(const QuerySampleSet& qs) {
  std::map<std::pair<std::vector<double>, std::size_t>, double> joint;
  std::map<std::vector<double>, double> marg_q;
  std::map<std::size_t, double> marg_m;
  const double n = static_cast<double>(qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i) {
    std::vector<double> q(qs.query(i).begin(), qs.query(i).end());
    joint[{q, qs.label(i)}] += 1 / n;
    marg_q[q] += 1 / n;
    marg_m[qs.label(i)] += 1 / n;
  }
  double mi = 0;
  for (const auto& [k, p] : joint) mi += p * std::log2(p / (marg_q[k.first] * marg_m[k.second]));
  return mi;
}

TEST(MapAccuracy, ConstantQueriesGiveChance) {
  QuerySampleSet qs(10, 3);
  for (int i = 0; i < 20000; ++i) qs.add(i % 10, std::vector<double>{1, 2, 3});
  EXPECT_NEAR(map_accuracy(qs, DensityEstimator::kEmpiricalDiscrete), 0.1, 1e-9);
  EXPECT_NEAR(map_accuracy(qs, DensityEstimator::kGaussianKde), 0.1, 1e-9);
}

TEST(MapAccuracy, RevealingQueriesGiveOne) {
  QuerySampleSet qs(4, 1);
  for (int i = 0; i < 4000; ++i) qs.add(i % 4, std::vector<double>{double(i % 4)});
  EXPECT_NEAR(map_accuracy(qs, DensityEstimator::kEmpiricalDiscrete), 1.0, 1e-12);
  EXPECT_NEAR(map_accuracy(qs, DensityEstimator::kGaussianKde), 1.0, 1e-12);
}

TEST(MapAccuracy, SubsetQueriesGiveOneOverN) {
  for (std::size_t n : {1, 2, 4}) {
    const auto qs = subset_queries(4, n, 100000, n);
    EXPECT_NEAR(map_accuracy(qs, DensityEstimator::kEmpiricalDiscrete), 1.0 / n, 0.01) << n;
  }
}

TEST(MapAccuracy, KdeSeparatesGaussianClasses) {
  QuerySampleSet qs(2, 1);
  auto rng = make_rng(4);
  std::normal_distribution<double> g;
  for (int i = 0; i < 6000; ++i) qs.add(i % 2, std::vector<double>{g(rng) + (i % 2 ? 1.0 : -1.0)});
  // Bayes accuracy for unit-variance classes at +-1: Phi(1).
  EXPECT_NEAR(map_accuracy(qs, DensityEstimator::kGaussianKde), 0.841345, 0.03);
}

TEST(MapAccuracy, NeedsEveryClassInFitSplit) {
  QuerySampleSet qs(3, 1);
  for (int i = 0; i < 100; ++i) qs.add(i % 2, std::vector<double>{0});
  EXPECT_THROW(map_accuracy(qs, DensityEstimator::kEmpiricalDiscrete), EstimationError);
}

TEST(MutualInfo, SubsetQueriesFollowLogRatio) {
  for (std::size_t n : {1, 2, 4}) {
    const auto qs = subset_queries(4, n, 200000, 10 + n);
    const double mi = mutual_info_discrete(qs);
    EXPECT_NEAR(mi, 2 - std::log2(double(n)), 0.01) << n;
    EXPECT_NEAR(mi, plugin_mi(qs), 1e-9);
  }
}

TEST(MutualInfo, RelabelingInvariance) {
  const auto qs = subset_queries(4, 2, 20000, 3);
  QuerySampleSet moved(4, 4);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    std::vector<double> q(qs.query(i).begin(), qs.query(i).end());
    for (auto& v : q) v = 7 - 3 * v;  // bijection on the query alphabet
    moved.add(qs.label(i), q);
  }
  EXPECT_NEAR(mutual_info_discrete(qs), mutual_info_discrete(moved), 1e-12);
}

TEST(MutualInfo, ExactChannelValues) {
  const std::vector<std::vector<double>> reveal{{1, 0}, {0, 1}};
  const std::vector<std::vector<double>> blind{{0.5, 0.5}, {0.5, 0.5}};
  EXPECT_NEAR(mutual_info_exact(reveal), 1.0, 1e-15);
  EXPECT_NEAR(mutual_info_exact(blind), 0.0, 1e-15);
  EXPECT_NEAR(map_accuracy_exact(reveal), 1.0, 1e-15);
  EXPECT_NEAR(map_accuracy_exact(blind), 0.5, 1e-15);
  EXPECT_THROW(mutual_info_exact({{0.5, 0.4}, {1, 0}}), InvalidArgument);
}

TEST(MutualInfo, ConvexInChannel) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 1);
  auto random_channel = [&] {
    std::vector<std::vector<double>> c(3, std::vector<double>(4));
    for (auto& row : c) {
      double s = 0;
      for (auto& v : row) s += (v = u(rng));
      for (auto& v : row) v /= s;
    }
    return c;
  };
  for (int t = 0; t < 200; ++t) {
    const auto a = random_channel(), b = random_channel();
    for (double lam : {0.25, 0.5, 0.75}) {
      auto mix = a;
      for (std::size_t m = 0; m < 3; ++m) {
        for (std::size_t q = 0; q < 4; ++q) mix[m][q] = lam * a[m][q] + (1 - lam) * b[m][q];
      }
      EXPECT_LE(mutual_info_exact(mix), lam * mutual_info_exact(a) + (1 - lam) * mutual_info_exact(b) + 1e-12);
      EXPECT_LE(map_accuracy_exact(mix), lam * map_accuracy_exact(a) + (1 - lam) * map_accuracy_exact(b) + 1e-12);
    }
  }
}

TEST(Logloss, UniformDecoderIsZero) {
  const auto qs = subset_queries(4, 2, 1000, 1);
  const auto r = expected_logloss(qs, uniform_decoder(4));
  EXPECT_NEAR(r.value, 0.0, 1e-12);
  EXPECT_EQ(r.zero_probability_count, 0u);
}

TEST(Logloss, IndicatorDecoderOnRevealingQueries) {
  QuerySampleSet qs(8, 1);
  for (int i = 0; i < 800; ++i) qs.add(i % 8, std::vector<double>{double(i % 8)});
  SoftDecoder exact(8, [](std::span<const double> q) {
    std::vector<double> p(8, 0.0);
    p[static_cast<std::size_t>(q[0])] = 1;
    return p;
  });
  EXPECT_NEAR(expected_logloss(qs, exact).value, 3.0, 1e-12);
  SoftDecoder wrong(8, [](std::span<const double> q) {
    std::vector<double> p(8, 0.0);
    p[(static_cast<std::size_t>(q[0]) + 1) % 8] = 1;
    return p;
  });
  const auto r = expected_logloss(qs, wrong);
  EXPECT_TRUE(std::isinf(r.value) && r.value < 0);
  EXPECT_EQ(r.zero_probability_count, 800u);
}

TEST(Logloss, EmpiricalPosteriorMatchesMutualInfo) {
  const auto qs = subset_queries(4, 2, 40000, 9);
  // With balanced labels the empirical H(M) is log2 M, so the two agree.
  QuerySampleSet balanced(4, 4);
  std::vector<std::size_t> seen(4, 0);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    if (seen[qs.label(i)] < 9000) {
      ++seen[qs.label(i)];
      balanced.add(qs.label(i), qs.query(i));
    }
  }
  const auto r = expected_logloss(balanced, empirical_posterior_decoder(balanced));
  EXPECT_NEAR(r.value, mutual_info_discrete(balanced), 1e-12);
}

TEST(Logloss, RejectsBadPosteriors) {
  const auto qs = subset_queries(2, 1, 10, 1);
  SoftDecoder bad(2, [](std::span<const double>) { return std::vector<double>{0.7, 0.7}; });
  EXPECT_THROW(expected_logloss(qs, bad), EstimationError);
  EXPECT_THROW(expected_logloss(qs, uniform_decoder(3)), DimensionError);
}

TEST(Variance, PerClassUnbiased) {
  QuerySampleSet qs(2, 2);
  qs.add(0, std::vector<double>{1, 0});
  qs.add(0, std::vector<double>{3, 0});
  qs.add(1, std::vector<double>{0, 5});
  qs.add(1, std::vector<double>{0, 5});
  qs.add(1, std::vector<double>{0, 8});
  const auto v = query_variance(qs);
  EXPECT_DOUBLE_EQ(v[0][0], 2.0);
  EXPECT_DOUBLE_EQ(v[0][1], 0.0);
  EXPECT_DOUBLE_EQ(v[1][1], 3.0);
  QuerySampleSet thin(2, 1);
  thin.add(0, std::vector<double>{1});
  thin.add(1, std::vector<double>{1});
  thin.add(1, std::vector<double>{2});
  EXPECT_THROW(query_variance(thin), EstimationError);
}

TEST(QueryCsv, RoundTripWithOneBasedLabels) {
  QuerySampleSet qs(3, 2);
  qs.add(0, std::vector<double>{0.5, 1});
  qs.add(2, std::vector<double>{-1, 2.25});
  const auto text = to_csv(qs);
  EXPECT_EQ(text, "m,q_1,q_2\n1,0.5,1\n3,-1,2.25\n");
  const auto back = parse_query_csv(text);
  EXPECT_EQ(back.num_files(), 3u);
  EXPECT_EQ(back.label(1), 2u);
  EXPECT_EQ(back.query(1)[1], 2.25);
}

TEST(QueryCsv, ErrorsCarryOffsets) {
  auto offset_of = [](const std::string& text, std::size_t m = 0) -> std::size_t {
    try {
      parse_query_csv(text, m);
    } catch (const FormatError& e) {
      return e.offset();
    }
    return SIZE_MAX;
  };
  EXPECT_EQ(offset_of("x,q_1\n1,2\n"), 0u);
  EXPECT_EQ(offset_of("m,q_2\n1,2\n"), 0u);
  EXPECT_EQ(offset_of("m,q_1\n1,2\n0,3\n"), 10u);
  EXPECT_EQ(offset_of("m,q_1\n1,2\n2,3,4\n"), 10u);
  EXPECT_EQ(offset_of("m,q_1\n1,abc\n"), 6u);
  EXPECT_EQ(offset_of("m,q_1\n1.5,2\n"), 6u);
  EXPECT_EQ(offset_of("m,q_1\n"), 6u);
  EXPECT_EQ(offset_of("m,q_1\n4,1\n", 3), 0u);
}

}  // namespace
}  // namespace lossypir
