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
#include <utility>
#include <vector>

#include "lossypir/error.hpp"

// Shared vocabulary: source models, datasets, the distortion measure and the
// (rate, distortion, leakage) point type.
//
// File indices are 0-based throughout the C++ API. The wire formats and the
// CSV files use 1-based indices; conversion happens only at those boundaries.

namespace lossypir {

// Deterministic generator for a (seed, stream) pair. Independent streams are
// used for independent purposes (data, initialization, trials) so that
// changing one knob does not perturb the others.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

// Independent multivariate normal files sharing one isotropic variance.
struct GaussianSourceSpec {
  std::size_t num_files = 0;
  std::size_t dim = 0;
  std::vector<std::vector<double>> means;
  double sigma = 1.0;

  void validate() const {
    enforce<InvalidConfig>(num_files >= 1, "gaussian spec: num_files must be >= 1");
    enforce<InvalidConfig>(dim >= 1, "gaussian spec: dim must be >= 1");
    enforce<InvalidConfig>(sigma > 0 && std::isfinite(sigma),
                           "gaussian spec: sigma must be positive");
    enforce<InvalidConfig>(means.size() == num_files,
                           "gaussian spec: expected " + std::to_string(num_files) +
                               " mean vectors, got " + std::to_string(means.size()));
    for (const auto& mu : means) {
      enforce<InvalidConfig>(mu.size() == dim,
                             "gaussian spec: mean vector length must equal dim");
      for (double v : mu) {
        enforce<InvalidConfig>(std::isfinite(v), "gaussian spec: non-finite mean");
      }
    }
  }
};

// The four-file, three-symbol source with means on alternating corners of a
// cube and sigma = 3. Used as the reference workload throughout.
inline GaussianSourceSpec reference_gaussian_spec() {
  GaussianSourceSpec spec;
  spec.num_files = 4;
  spec.dim = 3;
  spec.sigma = 3.0;
  spec.means = {{3, 3, 3}, {3, -3, -3}, {-3, 3, -3}, {-3, -3, 3}};
  return spec;
}

struct ImageGeometry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;

  std::size_t symbols() const { return height * width * channels; }
  bool operator==(const ImageGeometry&) const = default;
};

// n samples, each holding M files of beta reals. Storage is sample-major:
// value(l, m, i) lives at ((l * M) + m) * beta + i. Immutable after
// construction.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::size_t num_samples, std::size_t num_files, std::size_t dim,
          std::vector<double> values,
          std::optional<ImageGeometry> geometry = std::nullopt)
      : n_(num_samples),
        files_(num_files),
        dim_(dim),
        values_(std::move(values)),
        geometry_(geometry) {
    enforce<DimensionError>(n_ >= 1 && files_ >= 1 && dim_ >= 1,
                            "dataset: all dimensions must be positive");
    enforce<DimensionError>(values_.size() == n_ * files_ * dim_,
                            "dataset: value count " + std::to_string(values_.size()) +
                                " does not match shape");
    if (geometry_) {
      enforce<DimensionError>(geometry_->symbols() == dim_,
                              "dataset: image geometry does not match dim");
      enforce<DimensionError>(geometry_->channels == 1 || geometry_->channels == 3,
                              "dataset: images must have 1 or 3 channels");
    }
    for (double v : values_) {
      enforce<InvalidArgument>(std::isfinite(v), "dataset: non-finite value");
    }
  }

  std::size_t num_samples() const { return n_; }
  std::size_t num_files() const { return files_; }
  std::size_t dim() const { return dim_; }
  const std::optional<ImageGeometry>& image_geometry() const { return geometry_; }

  std::span<const double> values() const { return values_; }

  // All M files of sample l, concatenated.
  std::span<const double> sample(std::size_t l) const {
    return std::span<const double>(values_).subspan(l * files_ * dim_, files_ * dim_);
  }

  std::span<const double> file(std::size_t l, std::size_t m) const {
    return std::span<const double>(values_).subspan((l * files_ + m) * dim_, dim_);
  }

  bool operator==(const Dataset&) const = default;

 private:
  std::size_t n_ = 0;
  std::size_t files_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
  std::optional<ImageGeometry> geometry_;
};

enum class LeakageKind { kMapAccuracy, kMutualInfo };

inline const char* to_string(LeakageKind kind) {
  return kind == LeakageKind::kMapAccuracy ? "map_accuracy" : "mutual_info";
}

inline LeakageKind parse_leakage_kind(const std::string& s) {
  if (s == "map_accuracy" || s == "map") return LeakageKind::kMapAccuracy;
  if (s == "mutual_info" || s == "mi") return LeakageKind::kMutualInfo;
  throw InvalidArgument("unknown leakage kind '" + s + "'");
}

// An achieved (rate, distortion, leakage) triple.
struct SchemePoint {
  double rate = 0;        // bits per source symbol
  double distortion = 0;  // per-symbol expected squared error
  double leakage = 1;
  LeakageKind leakage_kind = LeakageKind::kMapAccuracy;
  std::string scheme;  // family, e.g. "compression" or "shannon"
  std::string label;
  // Set when the leakage value is only an upper bound on the true leakage
  // (mutual information under time sharing is convex, not linear).
  bool leakage_is_upper_bound = false;

  // Throws if the point is outside the range allowed for M files.
  void validate(std::size_t num_files) const {
    const double tol = 1e-9;
    enforce(rate >= -tol && std::isfinite(rate), "scheme point: rate must be >= 0");
    enforce(distortion >= -tol && std::isfinite(distortion),
            "scheme point: distortion must be >= 0");
    if (leakage_kind == LeakageKind::kMapAccuracy) {
      enforce(leakage >= 1.0 / static_cast<double>(num_files) - tol && leakage <= 1 + tol,
              "scheme point: map accuracy outside [1/M, 1]");
    } else {
      enforce(leakage >= -tol &&
                  leakage <= std::log2(static_cast<double>(num_files)) + tol,
              "scheme point: mutual information outside [0, log2 M]");
    }
  }
};

// Per-symbol squared error: (1/beta) * sum_i (x_i - y_i)^2.
inline double per_symbol_distortion(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("per_symbol_distortion: length mismatch (" +
                         std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  }
  enforce<DimensionError>(!x.empty(), "per_symbol_distortion: empty vectors");
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

inline Dataset generate_gaussian_dataset(const GaussianSourceSpec& spec, std::size_t n,
                                         std::uint64_t seed) {
  spec.validate();
  enforce(n >= 1, "generate_gaussian_dataset: n must be >= 1");
  auto rng = make_rng(seed, /*stream=*/1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values;
  values.reserve(n * spec.num_files * spec.dim);
  for (std::size_t l = 0; l < n; ++l) {
    for (std::size_t m = 0; m < spec.num_files; ++m) {
      for (std::size_t i = 0; i < spec.dim; ++i) {
        values.push_back(spec.means[m][i] + spec.sigma * normal(rng));
      }
    }
  }
  return Dataset(n, spec.num_files, spec.dim, std::move(values));
}

// Per-file sample means, M vectors of length beta.
using FileMeans = std::vector<std::vector<double>>;

inline FileMeans file_means(const Dataset& ds) {
  FileMeans means(ds.num_files(), std::vector<double>(ds.dim(), 0.0));
  for (std::size_t l = 0; l < ds.num_samples(); ++l) {
    for (std::size_t m = 0; m < ds.num_files(); ++m) {
      auto f = ds.file(l, m);
      for (std::size_t i = 0; i < ds.dim(); ++i) means[m][i] += f[i];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(ds.num_samples());
  for (auto& mu : means) {
    for (double& v : mu) v *= inv_n;
  }
  return means;
}

inline Dataset apply_file_offsets(const Dataset& ds, const FileMeans& means, double sign) {
  enforce<DimensionError>(means.size() == ds.num_files(), "file means: wrong file count");
  std::vector<double> out(ds.values().begin(), ds.values().end());
  for (std::size_t l = 0; l < ds.num_samples(); ++l) {
    for (std::size_t m = 0; m < ds.num_files(); ++m) {
      enforce<DimensionError>(means[m].size() == ds.dim(), "file means: wrong dim");
      double* f = out.data() + (l * ds.num_files() + m) * ds.dim();
      for (std::size_t i = 0; i < ds.dim(); ++i) f[i] += sign * means[m][i];
    }
  }
  return Dataset(ds.num_samples(), ds.num_files(), ds.dim(), std::move(out),
                 ds.image_geometry());
}

// Subtracts each file's sample mean. Returns the shifted dataset and the
// means needed to undo the shift.
inline std::pair<Dataset, FileMeans> shift_by_file_means(const Dataset& ds) {
  FileMeans means = file_means(ds);
  return {apply_file_offsets(ds, means, -1.0), std::move(means)};
}

inline Dataset unshift_by_file_means(const Dataset& shifted, const FileMeans& means) {
  return apply_file_offsets(shifted, means, +1.0);
}

}  // namespace lossypir
