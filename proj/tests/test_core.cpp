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
#include <random>

#include "lossypir/core.hpp"

namespace lossypir {
namespace {

TEST(GaussianSpec, RejectsBadShapes) {
  auto spec = reference_gaussian_spec();
  spec.sigma = 0;
  EXPECT_THROW(spec.validate(), InvalidConfig);
  spec = reference_gaussian_spec();
  spec.means.pop_back();
  EXPECT_THROW(spec.validate(), InvalidConfig);
  spec = reference_gaussian_spec();
  spec.means[1].push_back(0);
  EXPECT_THROW(spec.validate(), InvalidConfig);
}

TEST(GenerateGaussian, SampleMeanNearSpecMean) {
  const auto ds = generate_gaussian_dataset(reference_gaussian_spec(), 250000, 7);
  std::vector<double> acc(3, 0.0);
  for (std::size_t l = 0; l < ds.num_samples(); ++l) {
    auto f = ds.file(l, 0);
    for (int i = 0; i < 3; ++i) acc[i] += f[i];
  }
  // sigma / sqrt(n) = 0.006, so 0.02 is over 3 standard errors.
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(acc[i] / 250000.0, 3.0, 0.02);
}

TEST(GenerateGaussian, DegenerateVarianceHitsMeans) {
  auto spec = reference_gaussian_spec();
  spec.sigma = 1e-9;
  const auto ds = generate_gaussian_dataset(spec, 100, 3);
  for (std::size_t l = 0; l < 100; ++l) {
    for (std::size_t m = 0; m < 4; ++m) {
      for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(ds.file(l, m)[i], spec.means[m][i], 1e-6);
    }
  }
}

TEST(GenerateGaussian, SameSeedSameBits) {
  const auto a = generate_gaussian_dataset(reference_gaussian_spec(), 1000, 11);
  const auto b = generate_gaussian_dataset(reference_gaussian_spec(), 1000, 11);
  const auto c = generate_gaussian_dataset(reference_gaussian_spec(), 1000, 12);
  ASSERT_EQ(a.values().size(), b.values().size());
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  EXPECT_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
}

TEST(Distortion, Examples) {
  const std::vector<double> x{1, 2, 3}, y{1, 2, 0};
  EXPECT_DOUBLE_EQ(per_symbol_distortion(x, x), 0.0);
  EXPECT_DOUBLE_EQ(per_symbol_distortion(x, y), 3.0);
  EXPECT_DOUBLE_EQ(per_symbol_distortion(std::vector<double>{0, 0}, std::vector<double>{3, 4}), 12.5);
  EXPECT_DOUBLE_EQ(per_symbol_distortion(std::vector<double>{7, 7}, std::vector<double>{10, 11}), 12.5);
  EXPECT_THROW(per_symbol_distortion(x, std::vector<double>{1, 2}), DimensionError);
}

TEST(Distortion, MetricPropertiesOnRandomTriples) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 4);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> x(5), y(5), z(5), xs(5), ys(5);
    for (int i = 0; i < 5; ++i) {
      x[i] = n(rng), y[i] = n(rng), z[i] = n(rng);
      xs[i] = x[i] + z[i], ys[i] = y[i] + z[i];
    }
    const double d = per_symbol_distortion(x, y);
    EXPECT_GE(d, 0);
    EXPECT_DOUBLE_EQ(d, per_symbol_distortion(y, x));
    EXPECT_NEAR(d, per_symbol_distortion(xs, ys), 1e-9 * (1 + d));
    EXPECT_GT(d, 0);
  }
}

TEST(ShiftByFileMeans, ZeroMeanAndRoundTrip) {
  const auto ds = generate_gaussian_dataset(reference_gaussian_spec(), 5000, 2);
  const auto [shifted, means] = shift_by_file_means(ds);
  ASSERT_EQ(means.size(), 4u);
  for (std::size_t m = 0; m < 4; ++m) {
    for (std::size_t i = 0; i < 3; ++i) {
      double acc = 0;
      for (std::size_t l = 0; l < ds.num_samples(); ++l) acc += shifted.file(l, m)[i];
      EXPECT_NEAR(acc / 5000.0, 0.0, 1e-9);
    }
  }
  const auto back = unshift_by_file_means(shifted, means);
  for (std::size_t j = 0; j < ds.values().size(); ++j) EXPECT_NEAR(back.values()[j], ds.values()[j], 1e-12);
}

TEST(ShiftByFileMeans, ConstantFileBecomesZero) {
  std::vector<double> v;
  for (int l = 0; l < 10; ++l) v.insert(v.end(), {2.5, 2.5, -1.0, -1.0});
  const Dataset ds(10, 2, 2, v);
  const auto [shifted, means] = shift_by_file_means(ds);
  for (double x : shifted.values()) EXPECT_NEAR(x, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(means[0][0], 2.5);
  EXPECT_DOUBLE_EQ(means[1][1], -1.0);
}

TEST(SchemePoint, RangeChecks) {
  SchemePoint p;
  p.rate = 2;
  p.distortion = 1;
  p.leakage = 0.2;
  EXPECT_THROW(p.validate(4), InvalidArgument);
  p.leakage = 0.25;
  EXPECT_NO_THROW(p.validate(4));
  p.leakage_kind = LeakageKind::kMutualInfo;
  p.leakage = 2.0;
  EXPECT_NO_THROW(p.validate(4));
  p.leakage = 2.1;
  EXPECT_THROW(p.validate(4), InvalidArgument);
}

TEST(Dataset, RejectsNonFinite) {
  EXPECT_THROW(Dataset(1, 1, 2, {1.0, std::nan("")}), InvalidArgument);
  EXPECT_THROW(Dataset(1, 1, 2, {1.0}), DimensionError);
}

}  // namespace
}  // namespace lossypir
