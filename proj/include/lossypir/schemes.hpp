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
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lossypir/bytes.hpp"
#include "lossypir/core.hpp"
#include "lossypir/quantizer.hpp"

namespace lossypir {

// ---------------------------------------------------------------------------
// N-subset compression schemes.

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// All N-subsets of {0..M-1}, each ascending, in lexicographic order.
inline std::vector<std::vector<std::size_t>> all_subsets(std::size_t num_files, std::size_t n) {
  enforce(n >= 1 && n <= num_files, "subset size must be in [1, M]");
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur(n);
  std::iota(cur.begin(), cur.end(), 0);
  while (true) {
    out.push_back(cur);
    std::size_t i = n;
    while (i > 0 && cur[i - 1] == num_files - n + i - 1) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < n; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

// Lexicographic rank of an ascending subset among all_subsets(M, N).
inline std::size_t subset_rank(std::span<const std::size_t> subset, std::size_t num_files) {
  const std::size_t n = subset.size();
  std::size_t rank = 0, prev = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t v = (i == 0 ? 0 : prev + 1); v < subset[i]; ++v) {
      rank += binomial(num_files - v - 1, n - i - 1);
    }
    prev = subset[i];
  }
  return rank;
}

// The requested index m plus N-1 dummies drawn uniformly without replacement
// from the other files, returned sorted.
template <typename Rng>
std::vector<std::size_t> draw_subset(std::size_t num_files, std::size_t n, std::size_t m,
                                     Rng& rng) {
  enforce(m < num_files, "draw_subset: file index out of range");
  enforce(n >= 1 && n <= num_files, "draw_subset: subset size must be in [1, M]");
  std::vector<std::size_t> others;
  others.reserve(num_files - 1);
  for (std::size_t j = 0; j < num_files; ++j) {
    if (j != m) others.push_back(j);
  }
  // Partial Fisher-Yates over the M-1 candidates.
  for (std::size_t i = 0; i + 1 < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, others.size() - 1);
    std::swap(others[i], others[pick(rng)]);
  }
  std::vector<std::size_t> subset(others.begin(), others.begin() + (n - 1));
  subset.push_back(m);
  std::sort(subset.begin(), subset.end());
  return subset;
}

struct CompressionScheme {
  std::uint32_t scheme_id = 0;
  std::size_t num_files = 0;
  std::size_t subset_size = 0;
  std::size_t dim = 0;
  unsigned bits_total = 0;
  // One codebook shared by every subset, or one per subset in lexicographic
  // subset order.
  bool per_subset = false;
  std::vector<Codebook> codebooks;
  FileMeans file_means;

  double rate() const { return static_cast<double>(bits_total) / static_cast<double>(dim); }
  double leakage() const { return 1.0 / static_cast<double>(subset_size); }

  const Codebook& codebook_for(std::span<const std::size_t> subset) const {
    return per_subset ? codebooks.at(subset_rank(subset, num_files)) : codebooks.front();
  }

  void validate() const {
    enforce(num_files >= 1 && dim >= 1, "scheme: empty shape");
    enforce(subset_size >= 1 && subset_size <= num_files, "scheme: subset size must be in [1, M]");
    enforce(bits_total <= 32, "scheme: bits_total above 32 is not supported");
    const std::size_t want = per_subset ? binomial(num_files, subset_size) : 1;
    enforce(codebooks.size() == want, "scheme: expected " + std::to_string(want) +
                                          " codebooks, found " + std::to_string(codebooks.size()));
    for (const auto& cb : codebooks) {
      enforce<DimensionError>(cb.dim() == subset_size * dim, "scheme: codebook dim must be N*beta");
      enforce(cb.size() == (std::size_t{1} << bits_total), "scheme: codebook size must be 2^bits");
    }
    enforce<DimensionError>(file_means.size() == num_files, "scheme: wrong number of file means");
    for (const auto& mu : file_means) {
      enforce<DimensionError>(mu.size() == dim, "scheme: file mean has wrong length");
    }
  }

  bool operator==(const CompressionScheme&) const = default;
};

struct BuildOptions {
  bool per_subset = false;
  std::uint32_t scheme_id = 0;
};

// Concatenation of the named files of sample l, in subset order.
inline void gather_subset(const Dataset& ds, std::size_t l, std::span<const std::size_t> subset,
                          std::vector<double>& out) {
  for (std::size_t m : subset) {
    auto f = ds.file(l, m);
    out.insert(out.end(), f.begin(), f.end());
  }
}

// Trains the codebook(s) of an N-subset scheme. cfg.k is ignored; the
// codebook size is 2^bits_total.
inline CompressionScheme build_compression_scheme(const Dataset& train, std::size_t n,
                                                  unsigned bits_total, LloydConfig cfg,
                                                  const BuildOptions& opt = {}) {
  const std::size_t files = train.num_files();
  enforce<InvalidConfig>(n >= 1 && n <= files, "build: subset size " + std::to_string(n) +
                                                    " outside [1, " + std::to_string(files) + "]");
  enforce<InvalidConfig>(bits_total <= 32, "build: bits_total above 32 is not supported");
  cfg.k = std::size_t{1} << bits_total;

  auto [shifted, means] = shift_by_file_means(train);
  const auto subsets = all_subsets(files, n);
  CompressionScheme s;
  s.scheme_id = opt.scheme_id;
  s.num_files = files;
  s.subset_size = n;
  s.dim = train.dim();
  s.bits_total = bits_total;
  s.per_subset = opt.per_subset;
  s.file_means = std::move(means);

  const std::size_t per = train.num_samples();
  if (!opt.per_subset) {
    const std::size_t total = subsets.size() * per;
    if (cfg.k > total) {
      throw InvalidConfig("build: 2^" + std::to_string(bits_total) + " codewords exceed the " +
                          std::to_string(total) + " training vectors");
    }
    std::vector<double> x;
    x.reserve(total * n * s.dim);
    for (std::size_t l = 0; l < per; ++l) {
      for (const auto& sub : subsets) gather_subset(shifted, l, sub, x);
    }
    s.codebooks.push_back(lloyd_train(x, n * s.dim, cfg).codebook);
  } else {
    for (std::size_t r = 0; r < subsets.size(); ++r) {
      std::vector<double> x;
      x.reserve(per * n * s.dim);
      for (std::size_t l = 0; l < per; ++l) gather_subset(shifted, l, subsets[r], x);
      LloydConfig sub_cfg = cfg;
      sub_cfg.seed = cfg.seed + 0x1000 * (r + 1);
      s.codebooks.push_back(lloyd_train(x, n * s.dim, sub_cfg).codebook);
    }
  }
  s.validate();
  return s;
}

// Quantizes the shifted subset of one sample and returns the codeword index.
inline std::size_t scheme_encode(const CompressionScheme& s, std::span<const double> files,
                                 std::span<const std::size_t> subset) {
  std::vector<double> v;
  v.reserve(subset.size() * s.dim);
  for (std::size_t m : subset) {
    for (std::size_t i = 0; i < s.dim; ++i) v.push_back(files[m * s.dim + i] - s.file_means[m][i]);
  }
  return nearest(s.codebook_for(subset), v).index;
}

// The reconstruction of file m from codeword `index`.
inline std::vector<double> scheme_decode(const CompressionScheme& s, std::size_t index,
                                         std::span<const std::size_t> subset, std::size_t m) {
  const auto pos = std::find(subset.begin(), subset.end(), m);
  if (pos == subset.end()) {
    throw ContractViolation("reconstruct: requested file " + std::to_string(m + 1) +
                            " is not in the downloaded subset");
  }
  const auto& cb = s.codebook_for(subset);
  enforce(index < cb.size(), "reconstruct: codeword index out of range");
  auto word = cb.codeword(index).subspan(static_cast<std::size_t>(pos - subset.begin()) * s.dim,
                                         s.dim);
  std::vector<double> out(s.dim);
  for (std::size_t i = 0; i < s.dim; ++i) out[i] = word[i] + s.file_means[m][i];
  return out;
}

// Monte-Carlo evaluation: a uniform test sample and file per trial, uniform
// dummies. Leakage is the analytic 1/N.
inline SchemePoint eval_scheme(const CompressionScheme& s, const Dataset& test, std::size_t trials,
                               std::uint64_t seed) {
  s.validate();
  enforce<DimensionError>(test.num_files() == s.num_files && test.dim() == s.dim,
                          "eval: test dataset shape does not match the scheme");
  enforce(trials >= 1, "eval: trials must be >= 1");
  auto rng = make_rng(seed, 0xe7a1);
  std::uniform_int_distribution<std::size_t> pick_l(0, test.num_samples() - 1);
  std::uniform_int_distribution<std::size_t> pick_m(0, s.num_files - 1);
  double acc = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t l = pick_l(rng), m = pick_m(rng);
    const auto subset = draw_subset(s.num_files, s.subset_size, m, rng);
    const std::size_t idx = scheme_encode(s, test.sample(l), subset);
    acc += per_symbol_distortion(test.file(l, m), scheme_decode(s, idx, subset, m));
  }
  SchemePoint p;
  p.rate = s.rate();
  p.distortion = acc / static_cast<double>(trials);
  p.leakage = s.leakage();
  p.leakage_kind = LeakageKind::kMapAccuracy;
  p.scheme = "compression";
  p.label = "N=" + std::to_string(s.subset_size) + ",bits=" + std::to_string(s.bits_total);
  return p;
}

// Two schemes mixed by a public coin K: K = 1 with probability lambda.
struct TimeSharedScheme {
  std::uint32_t scheme_id = 0;
  std::array<CompressionScheme, 2> parts;
  double lambda = 0;

  void validate() const {
    enforce(lambda >= 0 && lambda <= 1, "time-shared scheme: lambda must be in [0, 1]");
    for (const auto& p : parts) p.validate();
    enforce(parts[0].num_files == parts[1].num_files && parts[0].dim == parts[1].dim,
            "time-shared scheme: parts disagree on M or beta");
  }
};

// ---------------------------------------------------------------------------
// Scheme files.
//
//   "LPS1" | u32 scheme_id | u64 M | u64 N | u64 beta | u32 bits_total |
//   u8 per_subset | M*beta f64 means | u64 count | count LPQ1 codebooks

inline std::vector<std::uint8_t> encode_scheme(const CompressionScheme& s) {
  s.validate();
  ByteWriter w;
  w.put_magic("LPS1");
  w.put_le<std::uint32_t>(s.scheme_id);
  w.put_le<std::uint64_t>(s.num_files);
  w.put_le<std::uint64_t>(s.subset_size);
  w.put_le<std::uint64_t>(s.dim);
  w.put_le<std::uint32_t>(s.bits_total);
  w.put_u8(s.per_subset ? 1 : 0);
  for (const auto& mu : s.file_means) {
    for (double v : mu) w.put_f64(v);
  }
  w.put_le<std::uint64_t>(s.codebooks.size());
  for (const auto& cb : s.codebooks) w.put_bytes(encode_codebook(cb));
  return std::move(w).bytes();
}

inline CompressionScheme decode_scheme(std::span<const std::uint8_t> bytes) {
  ByteReader<FormatError> r(bytes);
  r.expect_magic("LPS1");
  CompressionScheme s;
  s.scheme_id = r.le<std::uint32_t>("scheme_id");
  const auto files = r.le<std::uint64_t>("M");
  const auto n = r.le<std::uint64_t>("N");
  const auto dim = r.le<std::uint64_t>("beta");
  const std::size_t shape_at = r.offset();
  s.bits_total = r.le<std::uint32_t>("bits_total");
  const auto flag = r.u8("per_subset");
  if (files == 0 || files > 65535 || n == 0 || n > files || dim == 0 || dim > (1u << 24) ||
      files * dim > r.remaining() / 8) {
    throw FormatError("scheme: invalid shape", shape_at);
  }
  if (flag > 1) throw FormatError("scheme: per_subset flag must be 0 or 1", r.offset() - 1);
  if (s.bits_total > 32) throw FormatError("scheme: bits_total above 32", shape_at);
  s.num_files = files;
  s.subset_size = n;
  s.dim = dim;
  s.per_subset = flag == 1;
  s.file_means.assign(files, std::vector<double>(dim));
  for (auto& mu : s.file_means) {
    for (auto& v : mu) v = r.f64("file mean");
  }
  const std::size_t count_at = r.offset();
  const auto count = r.le<std::uint64_t>("codebook count");
  const std::uint64_t want = s.per_subset ? binomial(files, n) : 1;
  if (count != want) throw FormatError("scheme: wrong codebook count", count_at);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    s.codebooks.push_back(read_codebook(r));
    if (s.codebooks.back().dim() != n * dim ||
        s.codebooks.back().size() != (std::size_t{1} << s.bits_total)) {
      throw FormatError("scheme: codebook shape does not match the header", at);
    }
  }
  r.expect_end("scheme");
  return s;
}

// ---------------------------------------------------------------------------
// Shannon's Gaussian scheme.

// Returns N when L = 1/N for a positive integer N.
inline std::size_t reciprocal_integer(double leakage) {
  enforce(leakage > 0 && leakage <= 1 && std::isfinite(leakage),
          "leakage must lie in (0, 1]");
  const double n = std::round(1.0 / leakage);
  if (std::abs(1.0 / n - leakage) > 1e-9) {
    throw InvalidArgument("leakage " + fmt9(leakage) + " is not the reciprocal of an integer");
  }
  return static_cast<std::size_t>(n);
}

// sigma^2 * 2^(-2 R L), never above sigma^2. Valid for any real L >= 0.
inline double gaussian_distortion(double sigma, double rate, double leakage) {
  return sigma * sigma * std::min(1.0, std::exp2(-2.0 * rate * leakage));
}

inline double shannon_gaussian_distortion(double sigma, double rate, double leakage) {
  enforce(sigma > 0, "shannon: sigma must be positive");
  enforce(rate >= 0 && std::isfinite(rate), "shannon: rate must be >= 0");
  reciprocal_integer(leakage);
  return gaussian_distortion(sigma, rate, leakage);
}

// Minimizes f over [lo, hi] for unimodal f.
template <typename F>
double golden_section_min(F f, double lo, double hi, double tol, double* argmin = nullptr) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  double x = 0.5 * (a + b), fx = f(x);
  // The endpoints are candidates too.
  for (double e : {lo, hi}) {
    const double fe = f(e);
    if (fe < fx) x = e, fx = fe;
  }
  if (argmin) *argmin = x;
  return fx;
}

// Best mix of two Gaussian-scheme points: leakages l0 < l < l1 fix the
// weight, the rate split is searched.
inline double shannon_pair_distortion(double sigma, double rate, double leakage, double l0,
                                      double l1, double* rate1 = nullptr) {
  const double lam = (leakage - l0) / (l1 - l0);
  if (lam <= 0) return gaussian_distortion(sigma, rate, l0);
  if (lam >= 1) return gaussian_distortion(sigma, rate, l1);
  auto objective = [&](double r1) {
    const double r0 = std::max(0.0, (rate - lam * r1) / (1.0 - lam));
    return lam * gaussian_distortion(sigma, r1, l1) +
           (1.0 - lam) * gaussian_distortion(sigma, r0, l0);
  };
  return golden_section_min(objective, 0.0, rate / lam, 1e-9, rate1);
}

// Lower envelope of time sharing between Shannon points at the leakages
// 1, 1/2, ..., 1/M, with the rate split between the two parts optimized.
inline double convexify_shannon(double sigma, double rate, double leakage, std::size_t num_files) {
  enforce(sigma > 0, "convexify: sigma must be positive");
  enforce(rate >= 0 && std::isfinite(rate), "convexify: rate must be >= 0");
  enforce(num_files >= 1, "convexify: M must be >= 1");
  const double lmin = 1.0 / static_cast<double>(num_files);
  if (!(leakage >= lmin - 1e-12 && leakage <= 1 + 1e-12)) {
    throw InvalidArgument("convexify: leakage " + fmt9(leakage) + " outside [1/M, 1]");
  }
  leakage = std::clamp(leakage, lmin, 1.0);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t n = 1; n <= num_files; ++n) {
    const double node = 1.0 / static_cast<double>(n);
    if (std::abs(node - leakage) <= 1e-12) best = std::min(best, gaussian_distortion(sigma, rate, node));
  }
  for (std::size_t n1 = 1; n1 <= num_files; ++n1) {
    for (std::size_t n0 = n1 + 1; n0 <= num_files; ++n0) {
      const double l1 = 1.0 / static_cast<double>(n1), l0 = 1.0 / static_cast<double>(n0);
      if (l0 < leakage && leakage < l1) {
        best = std::min(best, shannon_pair_distortion(sigma, rate, leakage, l0, l1));
      }
    }
  }
  return best;
}

// The convexified curve between adjacent leakage nodes, `per_segment` points
// per segment including both nodes, ordered by decreasing leakage.
inline std::vector<SchemePoint> shannon_curve(double sigma, double rate, std::size_t num_files,
                                              std::size_t per_segment) {
  enforce(per_segment >= 2, "shannon curve: need at least 2 points per segment");
  std::vector<SchemePoint> out;
  for (std::size_t n = 1; n <= num_files; ++n) {
    const double hi = 1.0 / static_cast<double>(n);
    const double lo = n < num_files ? 1.0 / static_cast<double>(n + 1) : hi;
    const std::size_t steps = n < num_files ? per_segment - 1 : 1;
    for (std::size_t i = 0; i < steps; ++i) {
      const double l = hi - (hi - lo) * static_cast<double>(i) / static_cast<double>(per_segment - 1);
      SchemePoint p;
      p.rate = rate;
      p.leakage = l;
      p.distortion = convexify_shannon(sigma, rate, l, num_files);
      p.scheme = "shannon";
      p.label = "R=" + fmt9(rate);
      out.push_back(p);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Time sharing and frontiers.

inline SchemePoint time_share(const SchemePoint& p0, const SchemePoint& p1, double lambda) {
  if (p0.leakage_kind != p1.leakage_kind) {
    throw InvalidArgument("time_share: points have different leakage kinds");
  }
  enforce(lambda >= 0 && lambda <= 1, "time_share: lambda must be in [0, 1]");
  if (lambda == 0) return p0;
  if (lambda == 1) return p1;
  SchemePoint p;
  p.rate = lambda * p1.rate + (1 - lambda) * p0.rate;
  p.distortion = lambda * p1.distortion + (1 - lambda) * p0.distortion;
  p.leakage = lambda * p1.leakage + (1 - lambda) * p0.leakage;
  p.leakage_kind = p0.leakage_kind;
  p.leakage_is_upper_bound = p0.leakage_kind == LeakageKind::kMutualInfo ||
                             p0.leakage_is_upper_bound || p1.leakage_is_upper_bound;
  p.scheme = "time_share";
  p.label = "lambda=" + fmt9(lambda);
  return p;
}

struct Frontier {
  std::vector<SchemePoint> points;  // sorted by (leakage, rate)
  LeakageKind kind = LeakageKind::kMapAccuracy;

  // Distortion of the frontier at leakage l, linear between points.
  double interpolate(double l) const {
    enforce(!points.empty(), "frontier: empty");
    if (l < points.front().leakage - 1e-12 || l > points.back().leakage + 1e-12) {
      throw InvalidArgument("frontier: leakage " + fmt9(l) + " outside the covered range");
    }
    for (std::size_t i = 1; i < points.size(); ++i) {
      const auto& a = points[i - 1];
      const auto& b = points[i];
      if (l <= b.leakage) {
        if (b.leakage == a.leakage) return std::min(a.distortion, b.distortion);
        const double t = (l - a.leakage) / (b.leakage - a.leakage);
        return a.distortion + t * (b.distortion - a.distortion);
      }
    }
    return points.back().distortion;
  }
};

// Replaces each point's distortion by the best time-sharing combination of
// points at the same rate: the lower convex envelope in (L, D), made
// nonincreasing in L since leaking less than the budget is always allowed.
inline Frontier lower_hull(std::vector<SchemePoint> points, double rate) {
  enforce(!points.empty(), "lower_hull: no points");
  const LeakageKind kind = points.front().leakage_kind;
  for (const auto& p : points) {
    if (std::abs(p.rate - rate) > 1e-9 * std::max(1.0, std::abs(rate))) {
      throw InvalidArgument("lower_hull: point '" + p.label + "' has rate " + fmt9(p.rate) +
                            ", expected " + fmt9(rate));
    }
    if (p.leakage_kind != kind) throw InvalidArgument("lower_hull: mixed leakage kinds");
  }
  std::sort(points.begin(), points.end(), [](const SchemePoint& a, const SchemePoint& b) {
    return a.leakage != b.leakage ? a.leakage < b.leakage : a.distortion < b.distortion;
  });
  // Andrew's monotone chain, lower part.
  std::vector<std::pair<double, double>> hull;
  for (const auto& p : points) {
    const std::pair<double, double> v{p.leakage, p.distortion};
    if (!hull.empty() && hull.back().first == v.first) continue;  // keeps the lower D
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull.back();
      const double cross =
          (b.first - a.first) * (v.second - a.second) - (b.second - a.second) * (v.first - a.first);
      if (cross > 0) break;
      hull.pop_back();
    }
    hull.push_back(v);
  }
  auto envelope = [&](double l) {
    for (std::size_t i = 1; i < hull.size(); ++i) {
      if (l <= hull[i].first) {
        const double t = (l - hull[i - 1].first) / (hull[i].first - hull[i - 1].first);
        return hull[i - 1].second + t * (hull[i].second - hull[i - 1].second);
      }
    }
    return hull.back().second;
  };
  Frontier f;
  f.kind = kind;
  double running = std::numeric_limits<double>::infinity();
  for (auto p : points) {
    running = std::min(running, std::min(p.distortion, envelope(p.leakage)));
    p.distortion = running;
    f.points.push_back(std::move(p));
  }
  return f;
}

// ---------------------------------------------------------------------------
// SchemePoint CSV.

inline std::string frontier_csv_header() { return "rate,distortion,leakage,leakage_kind,scheme,label"; }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string to_csv(const std::vector<SchemePoint>& points) {
  std::string out = frontier_csv_header() + "\n";
  for (const auto& p : points) {
    out += fmt9(p.rate) + "," + fmt9(p.distortion) + "," + fmt9(p.leakage) + "," +
           to_string(p.leakage_kind) + "," + csv_field(p.scheme) + "," + csv_field(p.label) + "\n";
  }
  return out;
}

// Splits one CSV record, honoring double-quoted fields.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InvalidArgument("cannot parse " + what + " '" + s + "' as a number");
  }
  if (used != s.size()) throw InvalidArgument("cannot parse " + what + " '" + s + "' as a number");
  return v;
}

inline std::vector<SchemePoint> parse_scheme_points_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(frontier_csv_header())) {
    throw FormatError("scheme point csv: expected header '" + frontier_csv_header() + "'", 0);
  }
  std::vector<SchemePoint> out;
  std::size_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    const std::size_t at = offset;
    offset += line.size() + 1;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw FormatError("scheme point csv: expected 6 fields", at);
    try {
      SchemePoint p;
      p.rate = parse_double(f[0], "rate");
      p.distortion = parse_double(f[1], "distortion");
      p.leakage = parse_double(f[2], "leakage");
      p.leakage_kind = parse_leakage_kind(f[3]);
      p.scheme = f[4];
      p.label = f[5];
      out.push_back(std::move(p));
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("scheme point csv: ") + e.what(), at);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Luminance-chrominance preprocessing for color images.

struct ColorPlanes {
  std::size_t height = 0, width = 0;
  std::vector<double> luma;     // height x width
  std::vector<double> chroma1;  // height/2 x width/2
  std::vector<double> chroma2;
};

namespace detail {

using Mat3 = std::array<std::array<double, 3>, 3>;

// Full-range BT.601, neutral chroma at 0.
inline const Mat3& rgb_to_ycc() {
  static const Mat3 m = {{{0.299, 0.587, 0.114},
                          {-0.168735891647856, -0.331264108352144, 0.5},
                          {0.5, -0.418687589158345, -0.081312410841655}}};
  return m;
}

inline Mat3 invert(const Mat3& a) {
  Mat3 inv{};
  const double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                     a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                     a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const int r0 = (j + 1) % 3, r1 = (j + 2) % 3, c0 = (i + 1) % 3, c1 = (i + 2) % 3;
      inv[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / det;
    }
  }
  return inv;
}

inline const Mat3& ycc_to_rgb() {
  static const Mat3 m = invert(rgb_to_ycc());
  return m;
}

}  // namespace detail

// Interleaved RGB (H x W x 3) to luma plus 2x2-mean decimated chroma.
inline ColorPlanes color_preprocess(std::span<const double> rgb, std::size_t height,
                                    std::size_t width) {
  enforce<DimensionError>(rgb.size() == height * width * 3, "color: image size mismatch");
  if (height % 2 != 0 || width % 2 != 0 || height == 0 || width == 0) {
    throw InvalidArgument("color: image dimensions must be even and nonzero");
  }
  const auto& a = detail::rgb_to_ycc();
  ColorPlanes out;
  out.height = height;
  out.width = width;
  out.luma.resize(height * width);
  std::vector<double> c1(height * width), c2(height * width);
  for (std::size_t p = 0; p < height * width; ++p) {
    const double* px = rgb.data() + 3 * p;
    out.luma[p] = a[0][0] * px[0] + a[0][1] * px[1] + a[0][2] * px[2];
    c1[p] = a[1][0] * px[0] + a[1][1] * px[1] + a[1][2] * px[2];
    c2[p] = a[2][0] * px[0] + a[2][1] * px[1] + a[2][2] * px[2];
  }
  const std::size_t h2 = height / 2, w2 = width / 2;
  out.chroma1.resize(h2 * w2);
  out.chroma2.resize(h2 * w2);
  for (std::size_t y = 0; y < h2; ++y) {
    for (std::size_t x = 0; x < w2; ++x) {
      const std::size_t p00 = (2 * y) * width + 2 * x, p10 = p00 + width;
      out.chroma1[y * w2 + x] = 0.25 * (c1[p00] + c1[p00 + 1] + c1[p10] + c1[p10 + 1]);
      out.chroma2[y * w2 + x] = 0.25 * (c2[p00] + c2[p00 + 1] + c2[p10] + c2[p10 + 1]);
    }
  }
  return out;
}

// Replicates chroma back to full size and inverts the color matrix.
inline std::vector<double> color_postprocess(const ColorPlanes& planes) {
  const std::size_t h = planes.height, w = planes.width;
  enforce<DimensionError>(h % 2 == 0 && w % 2 == 0 && planes.luma.size() == h * w &&
                              planes.chroma1.size() == h * w / 4 &&
                              planes.chroma2.size() == h * w / 4,
                          "color: plane sizes do not match the geometry");
  const auto& b = detail::ycc_to_rgb();
  std::vector<double> rgb(h * w * 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x, c = (y / 2) * (w / 2) + x / 2;
      const double v[3] = {planes.luma[p], planes.chroma1[c], planes.chroma2[c]};
      for (int k = 0; k < 3; ++k) {
        rgb[3 * p + k] = b[k][0] * v[0] + b[k][1] * v[1] + b[k][2] * v[2];
      }
    }
  }
  return rgb;
}

}  // namespace lossypir
