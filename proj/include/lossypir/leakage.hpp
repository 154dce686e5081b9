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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lossypir/core.hpp"
#include "lossypir/schemes.hpp"

// How much a query reveals about the requested file index: MAP-adversary
// accuracy, plug-in mutual information, expected log-loss of a soft decoder
// and per-class query variances. All estimators assume a uniform prior on
// the requested index.

namespace lossypir {

// Labeled query samples. Labels are 0-based here and 1-based in the CSV.
class QuerySampleSet {
 public:
  QuerySampleSet() = default;
  QuerySampleSet(std::size_t num_files, std::size_t dim, std::string source = "")
      : files_(num_files), dim_(dim), source_(std::move(source)) {
    enforce(num_files >= 1, "query samples: M must be >= 1");
    enforce(dim >= 1, "query samples: query arity must be >= 1");
  }

  void add(std::size_t m, std::span<const double> q) {
    enforce(m < files_, "query samples: label " + std::to_string(m + 1) + " outside [1, " +
                            std::to_string(files_) + "]");
    enforce<DimensionError>(q.size() == dim_, "query samples: query arity mismatch");
    for (double v : q) enforce(std::isfinite(v), "query samples: non-finite query value");
    labels_.push_back(static_cast<std::uint32_t>(m));
    values_.insert(values_.end(), q.begin(), q.end());
  }

  std::size_t num_files() const { return files_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return labels_.size(); }
  const std::string& source() const { return source_; }
  std::size_t label(std::size_t i) const { return labels_[i]; }
  std::span<const double> query(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * dim_, dim_);
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(files_, 0);
    for (auto m : labels_) ++counts[m];
    return counts;
  }

 private:
  std::size_t files_ = 0;
  std::size_t dim_ = 0;
  std::string source_;
  std::vector<std::uint32_t> labels_;
  std::vector<double> values_;
};

inline std::string to_csv(const QuerySampleSet& qs) {
  std::string out = "m";
  for (std::size_t j = 1; j <= qs.dim(); ++j) out += ",q_" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < qs.size(); ++i) {
    out += std::to_string(qs.label(i) + 1);
    for (double v : qs.query(i)) out += "," + fmt9(v);
    out += "\n";
  }
  return out;
}

// Parses `m,q_1,...,q_dim`. M is the largest label seen unless given.
inline QuerySampleSet parse_query_csv(const std::string& text, std::size_t num_files = 0,
                                      const std::string& source = "") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("query csv: empty input", 0);
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "m") {
    throw FormatError("query csv: header must be 'm,q_1,...,q_dim'", 0);
  }
  for (std::size_t j = 1; j < header.size(); ++j) {
    if (header[j] != "q_" + std::to_string(j)) {
      throw FormatError("query csv: expected column 'q_" + std::to_string(j) + "', found '" +
                            header[j] + "'",
                        0);
    }
  }
  const std::size_t dim = header.size() - 1;
  std::vector<std::pair<std::size_t, std::vector<double>>> rows;
  std::size_t offset = line.size() + 1, max_label = 0;
  while (std::getline(in, line)) {
    const std::size_t at = offset;
    offset += line.size() + 1;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != dim + 1) {
      throw FormatError("query csv: expected " + std::to_string(dim + 1) + " fields, found " +
                            std::to_string(f.size()),
                        at);
    }
    try {
      const double m = parse_double(f[0], "label");
      if (m < 1 || m != std::floor(m) || m > 65535) {
        throw InvalidArgument("label '" + f[0] + "' is not a 1-based file index");
      }
      std::vector<double> q(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        q[j] = parse_double(f[j + 1], "q_" + std::to_string(j + 1));
        if (!std::isfinite(q[j])) throw InvalidArgument("non-finite query value");
      }
      max_label = std::max(max_label, static_cast<std::size_t>(m));
      rows.emplace_back(static_cast<std::size_t>(m) - 1, std::move(q));
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("query csv: ") + e.what(), at);
    }
  }
  if (rows.empty()) throw FormatError("query csv: no samples", offset);
  if (num_files == 0) num_files = max_label;
  if (max_label > num_files) {
    throw FormatError("query csv: label " + std::to_string(max_label) + " exceeds M = " +
                          std::to_string(num_files),
                      0);
  }
  QuerySampleSet qs(num_files, dim, source);
  for (const auto& [m, q] : rows) qs.add(m, q);
  return qs;
}

// ---------------------------------------------------------------------------
// Discretization.

// Rounds each coordinate to 9 decimals so that equal queries compare equal.
inline std::vector<double> discrete_key(std::span<const double> q) {
  std::vector<double> key(q.size());
  for (std::size_t j = 0; j < q.size(); ++j) {
    key[j] = std::round(q[j] * 1e9) / 1e9;
    if (key[j] == 0) key[j] = 0;  // folds -0 into +0
  }
  return key;
}

// Maps every sample to a dense symbol id. Coordinates with more than 64
// distinct values are first cut into 64 equiprobable bins.
inline std::vector<std::size_t> discretize(const QuerySampleSet& qs, std::size_t* num_symbols) {
  constexpr std::size_t kBins = 64;
  const std::size_t n = qs.size(), d = qs.dim();
  std::vector<std::vector<double>> cut(d);
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = discrete_key(qs.query(i).subspan(j, 1))[0];
    std::sort(col.begin(), col.end());
    std::vector<double> uniq(col);
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (uniq.size() <= kBins) continue;
    // Upper edges at the b/64 quantiles.
    for (std::size_t b = 1; b < kBins; ++b) cut[j].push_back(col[b * n / kBins]);
    cut[j].erase(std::unique(cut[j].begin(), cut[j].end()), cut[j].end());
  }
  std::map<std::vector<double>, std::size_t> ids;
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto key = discrete_key(qs.query(i));
    for (std::size_t j = 0; j < d; ++j) {
      if (cut[j].empty()) continue;
      key[j] = static_cast<double>(std::upper_bound(cut[j].begin(), cut[j].end(), key[j]) -
                                   cut[j].begin());
    }
    out[i] = ids.emplace(std::move(key), ids.size()).first->second;
  }
  if (num_symbols) *num_symbols = ids.size();
  return out;
}

// ---------------------------------------------------------------------------
// MAP adversary.

enum class DensityEstimator { kEmpiricalDiscrete, kGaussianKde };

inline DensityEstimator parse_density_estimator(const std::string& s) {
  if (s == "empirical" || s == "empirical_discrete") return DensityEstimator::kEmpiricalDiscrete;
  if (s == "kde" || s == "gaussian_kde") return DensityEstimator::kGaussianKde;
  throw InvalidArgument("unknown estimator '" + s + "' (expected empirical or kde)");
}

struct MapOptions {
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
  // KDE only: at most this many fit points per class enter the density.
  std::size_t kde_max_fit_per_class = 2000;
};

// Product Gaussian kernel density for one class, Silverman bandwidth per
// coordinate.
class GaussianKde {
 public:
  GaussianKde(std::vector<double> points, std::size_t dim, std::span<const double> scale)
      : dim_(dim), points_(std::move(points)) {
    const std::size_t n = points_.size() / dim_;
    enforce<EstimationError>(n >= 1, "kde: class has no fit samples");
    const double factor = std::pow(4.0 / ((static_cast<double>(dim_) + 2.0) * static_cast<double>(n)),
                                   1.0 / (static_cast<double>(dim_) + 4.0));
    inv_h_.resize(dim_);
    log_norm_ = -std::log(static_cast<double>(n)) - 0.5 * static_cast<double>(dim_) * std::log(2 * M_PI);
    for (std::size_t j = 0; j < dim_; ++j) {
      double mean = 0, var = 0;
      for (std::size_t i = 0; i < n; ++i) mean += points_[i * dim_ + j];
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) var += std::pow(points_[i * dim_ + j] - mean, 2);
      const double sd = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
      // Degenerate coordinates get a bandwidth far below the data's scale.
      const double h = std::max(sd * factor, 1e-6 * std::max(scale[j], 1e-3));
      inv_h_[j] = 1.0 / h;
      log_norm_ -= std::log(h);
    }
  }

  double log_density(std::span<const double> q) const {
    const std::size_t n = points_.size() / dim_;
    double best = -std::numeric_limits<double>::infinity();
    thread_local std::vector<double> e;
    e.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0;
      for (std::size_t j = 0; j < dim_; ++j) {
        const double z = (q[j] - points_[i * dim_ + j]) * inv_h_[j];
        acc += z * z;
      }
      e[i] = -0.5 * acc;
      best = std::max(best, e[i]);
    }
    double sum = 0;
    for (double v : e) sum += std::exp(v - best);
    return best + std::log(sum) + log_norm_;
  }

 private:
  std::size_t dim_;
  std::vector<double> points_;
  std::vector<double> inv_h_;
  double log_norm_ = 0;
};

// Accuracy of the MAP guess argmax_m P(q|m) on a held-out split, averaged
// over classes (the accuracy under the uniform prior) and clamped to
// [1/M, 1]. Ties go to the lowest index.
inline double map_accuracy(const QuerySampleSet& qs, DensityEstimator estimator,
                           const MapOptions& opt = {}) {
  const std::size_t n = qs.size(), files = qs.num_files(), d = qs.dim();
  enforce<EstimationError>(n >= 2, "map_accuracy: need at least 2 samples");
  enforce(opt.holdout_fraction > 0 && opt.holdout_fraction < 1,
          "map_accuracy: holdout fraction must be in (0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(opt.seed, 0x1eaf);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t hold = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(opt.holdout_fraction * static_cast<double>(n))), 1,
      n - 1);
  const std::span<const std::size_t> fit(order.data(), n - hold);
  const std::span<const std::size_t> test(order.data() + (n - hold), hold);

  std::vector<std::size_t> fit_counts(files, 0);
  for (auto i : fit) ++fit_counts[qs.label(i)];
  for (std::size_t m = 0; m < files; ++m) {
    if (fit_counts[m] == 0) {
      throw EstimationError("map_accuracy: file " + std::to_string(m + 1) +
                            " has no samples in the fit split");
    }
  }

  std::function<std::size_t(std::span<const double>)> guess;
  std::map<std::vector<double>, std::vector<std::size_t>> table;
  std::vector<GaussianKde> kdes;
  if (estimator == DensityEstimator::kEmpiricalDiscrete) {
    for (auto i : fit) {
      auto& row = table[discrete_key(qs.query(i))];
      row.resize(files, 0);
      ++row[qs.label(i)];
    }
    guess = [&](std::span<const double> q) -> std::size_t {
      auto it = table.find(discrete_key(q));
      if (it == table.end()) return 0;
      std::size_t best = 0;
      double best_p = -1;
      for (std::size_t m = 0; m < files; ++m) {
        const double p = static_cast<double>(it->second[m]) / static_cast<double>(fit_counts[m]);
        if (p > best_p) best_p = p, best = m;
      }
      return best;
    };
  } else {
    std::vector<double> lo(d, std::numeric_limits<double>::infinity()), hi(d, -lo[0]), scale(d);
    for (auto i : fit) {
      auto q = qs.query(i);
      for (std::size_t j = 0; j < d; ++j) lo[j] = std::min(lo[j], q[j]), hi[j] = std::max(hi[j], q[j]);
    }
    for (std::size_t j = 0; j < d; ++j) scale[j] = hi[j] - lo[j];
    std::vector<std::vector<double>> pts(files);
    for (auto i : fit) {
      auto& p = pts[qs.label(i)];
      if (p.size() / d >= opt.kde_max_fit_per_class) continue;
      auto q = qs.query(i);
      p.insert(p.end(), q.begin(), q.end());
    }
    for (std::size_t m = 0; m < files; ++m) kdes.emplace_back(std::move(pts[m]), d, scale);
    guess = [&](std::span<const double> q) -> std::size_t {
      std::size_t best = 0;
      double best_l = -std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < files; ++m) {
        const double l = kdes[m].log_density(q);
        if (l > best_l) best_l = l, best = m;
      }
      return best;
    };
  }

  std::vector<std::size_t> seen(files, 0), right(files, 0);
  for (auto i : test) {
    const std::size_t m = qs.label(i);
    ++seen[m];
    if (guess(qs.query(i)) == m) ++right[m];
  }
  double acc = 0;
  std::size_t classes = 0;
  for (std::size_t m = 0; m < files; ++m) {
    if (seen[m] == 0) continue;
    acc += static_cast<double>(right[m]) / static_cast<double>(seen[m]);
    ++classes;
  }
  acc /= static_cast<double>(classes);
  return std::clamp(acc, 1.0 / static_cast<double>(files), 1.0);
}

// ---------------------------------------------------------------------------
// Mutual information and log-loss.

// Plug-in I(M; Q) in bits from empirical joint counts.
inline double mutual_info_discrete(const QuerySampleSet& qs) {
  enforce<EstimationError>(qs.size() >= 1, "mutual_info: empty sample set");
  std::size_t symbols = 0;
  const auto sym = discretize(qs, &symbols);
  const std::size_t files = qs.num_files();
  std::vector<double> joint(symbols * files, 0.0), pq(symbols, 0.0), pm(files, 0.0);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    joint[sym[i] * files + qs.label(i)] += 1;
    pq[sym[i]] += 1;
    pm[qs.label(i)] += 1;
  }
  const double n = static_cast<double>(qs.size());
  double h_m = 0, h_m_given_q = 0;
  for (double c : pm) {
    if (c > 0) h_m -= (c / n) * std::log2(c / n);
  }
  for (std::size_t s = 0; s < symbols; ++s) {
    for (std::size_t m = 0; m < files; ++m) {
      const double c = joint[s * files + m];
      if (c > 0) h_m_given_q -= (c / n) * std::log2(c / pq[s]);
    }
  }
  return std::clamp(h_m - h_m_given_q, 0.0, std::log2(static_cast<double>(files)));
}

// A soft guess F(m | q) of the requested index.
class SoftDecoder {
 public:
  using Fn = std::function<std::vector<double>(std::span<const double>)>;

  SoftDecoder(std::size_t num_files, Fn fn) : files_(num_files), fn_(std::move(fn)) {}

  std::size_t num_files() const { return files_; }
  std::vector<double> posterior(std::span<const double> q) const { return fn_(q); }

 private:
  std::size_t files_;
  Fn fn_;
};

inline SoftDecoder uniform_decoder(std::size_t num_files) {
  return SoftDecoder(num_files, [num_files](std::span<const double>) {
    return std::vector<double>(num_files, 1.0 / static_cast<double>(num_files));
  });
}

// The empirical posterior P(m | q) of the sample set on the same
// discretization mutual_info_discrete uses. Unseen queries get the uniform
// posterior.
inline SoftDecoder empirical_posterior_decoder(const QuerySampleSet& qs) {
  std::size_t symbols = 0;
  const auto sym = discretize(qs, &symbols);
  const std::size_t files = qs.num_files();
  std::vector<std::vector<double>> counts(symbols, std::vector<double>(files, 0.0));
  for (std::size_t i = 0; i < qs.size(); ++i) {
    counts[sym[i]][qs.label(i)] += 1;
  }
  // Binned queries are looked up through the raw sample that produced the
  // bin, so the decoder is exact on the sample set itself.
  auto by_sample = std::make_shared<std::map<std::vector<double>, std::size_t>>();
  for (std::size_t i = 0; i < qs.size(); ++i) by_sample->emplace(discrete_key(qs.query(i)), sym[i]);
  for (auto& row : counts) {
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    for (auto& v : row) v /= total;
  }
  auto post = std::make_shared<std::vector<std::vector<double>>>(std::move(counts));
  return SoftDecoder(files, [files, by_sample, post](std::span<const double> q) {
    auto it = by_sample->find(discrete_key(q));
    if (it == by_sample->end()) return std::vector<double>(files, 1.0 / static_cast<double>(files));
    return (*post)[it->second];
  });
}

struct LoglossResult {
  double value = 0;  // bits; -inf when some observed pair had F(m|q) = 0
  std::size_t zero_probability_count = 0;
};

// H(M) + mean log2 F(m | q) with H(M) = log2 M for the uniform prior.
inline LoglossResult expected_logloss(const QuerySampleSet& qs, const SoftDecoder& dec) {
  enforce<EstimationError>(qs.size() >= 1, "expected_logloss: empty sample set");
  enforce<DimensionError>(dec.num_files() == qs.num_files(),
                          "expected_logloss: decoder and samples disagree on M");
  LoglossResult r;
  double acc = 0;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const auto p = dec.posterior(qs.query(i));
    if (p.size() != qs.num_files()) throw EstimationError("expected_logloss: posterior has wrong size");
    double total = 0;
    for (double v : p) {
      if (!(v >= 0)) throw EstimationError("expected_logloss: negative posterior entry");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw EstimationError("expected_logloss: posterior does not sum to 1");
    const double f = p[qs.label(i)];
    if (f <= 0) {
      ++r.zero_probability_count;
      continue;
    }
    acc += std::log2(f);
  }
  r.value = r.zero_probability_count > 0
                ? -std::numeric_limits<double>::infinity()
                : std::log2(static_cast<double>(qs.num_files())) + acc / static_cast<double>(qs.size());
  return r;
}

// Unbiased per-coordinate variance of the queries of each file.
inline std::vector<std::vector<double>> query_variance(const QuerySampleSet& qs) {
  const std::size_t files = qs.num_files(), d = qs.dim();
  const auto counts = qs.class_counts();
  for (std::size_t m = 0; m < files; ++m) {
    if (counts[m] < 2) {
      throw EstimationError("query_variance: file " + std::to_string(m + 1) +
                            " has fewer than 2 samples");
    }
  }
  std::vector<std::vector<double>> mean(files, std::vector<double>(d, 0.0)), var = mean;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    auto q = qs.query(i);
    for (std::size_t j = 0; j < d; ++j) mean[qs.label(i)][j] += q[j];
  }
  for (std::size_t m = 0; m < files; ++m) {
    for (auto& v : mean[m]) v /= static_cast<double>(counts[m]);
  }
  for (std::size_t i = 0; i < qs.size(); ++i) {
    auto q = qs.query(i);
    const std::size_t m = qs.label(i);
    for (std::size_t j = 0; j < d; ++j) var[m][j] += (q[j] - mean[m][j]) * (q[j] - mean[m][j]);
  }
  for (std::size_t m = 0; m < files; ++m) {
    for (auto& v : var[m]) v /= static_cast<double>(counts[m] - 1);
  }
  return var;
}

// ---------------------------------------------------------------------------
// Exact leakage of a finite query mechanism P(q | m) under a uniform prior.
// channel[m][q]; every row must be a distribution.

inline void check_query_channel(const std::vector<std::vector<double>>& channel) {
  enforce(!channel.empty() && !channel.front().empty(), "query channel: empty table");
  for (const auto& row : channel) {
    enforce<DimensionError>(row.size() == channel.front().size(), "query channel: ragged table");
    double total = 0;
    for (double v : row) {
      enforce(v >= 0 && std::isfinite(v), "query channel: negative entry");
      total += v;
    }
    enforce(std::abs(total - 1) <= 1e-9, "query channel: row does not sum to 1");
  }
}

inline double mutual_info_exact(const std::vector<std::vector<double>>& channel) {
  check_query_channel(channel);
  const double inv_m = 1.0 / static_cast<double>(channel.size());
  double mi = 0;
  for (std::size_t q = 0; q < channel.front().size(); ++q) {
    double pq = 0;
    for (const auto& row : channel) pq += inv_m * row[q];
    for (const auto& row : channel) {
      if (row[q] > 0) mi += inv_m * row[q] * std::log2(row[q] / pq);
    }
  }
  return std::max(0.0, mi);
}

inline double map_accuracy_exact(const std::vector<std::vector<double>>& channel) {
  check_query_channel(channel);
  double acc = 0;
  for (std::size_t q = 0; q < channel.front().size(); ++q) {
    double best = 0;
    for (const auto& row : channel) best = std::max(best, row[q]);
    acc += best;
  }
  return acc / static_cast<double>(channel.size());
}

}  // namespace lossypir
