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
#include <filesystem>
#include <future>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lossypir/bytes.hpp"
#include "lossypir/core.hpp"

namespace lossypir {

// k codewords of length dim, stored row-major.
class Codebook {
 public:
  Codebook() = default;

  Codebook(std::size_t dim, std::vector<double> vectors) : dim_(dim), data_(std::move(vectors)) {
    enforce<DimensionError>(dim_ >= 1, "codebook: dim must be >= 1");
    enforce<DimensionError>(!data_.empty() && data_.size() % dim_ == 0,
                            "codebook: vector data is not a positive multiple of dim");
    for (double v : data_) enforce(std::isfinite(v), "codebook: non-finite codeword entry");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::span<const double> data() const { return data_; }

  std::span<const double> codeword(std::size_t j) const {
    return std::span<const double>(data_).subspan(j * dim_, dim_);
  }

  // Number of codewords that exactly repeat an earlier one.
  std::size_t duplicate_count() const {
    std::vector<std::size_t> order(size());
    std::iota(order.begin(), order.end(), 0);
    auto row_less = [&](std::size_t a, std::size_t b) {
      auto x = codeword(a), y = codeword(b);
      return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
    };
    std::sort(order.begin(), order.end(), row_less);
    std::size_t dups = 0;
    for (std::size_t i = 1; i < order.size(); ++i) {
      auto x = codeword(order[i - 1]), y = codeword(order[i]);
      if (std::equal(x.begin(), x.end(), y.begin())) ++dups;
    }
    return dups;
  }

  bool operator==(const Codebook&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

inline double squared_distance(const double* a, const double* b, std::size_t d) {
  double acc = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double t = a[i] - b[i];
    acc += t * t;
  }
  return acc;
}

struct Nearest {
  std::size_t index = 0;
  double squared_distance = 0;
};

// Exhaustive nearest codeword; ties go to the lowest index.
inline Nearest nearest(const Codebook& cb, std::span<const double> v) {
  if (v.size() != cb.dim()) {
    throw DimensionError("nearest: vector length " + std::to_string(v.size()) +
                         " does not match codebook dim " + std::to_string(cb.dim()));
  }
  Nearest best{0, std::numeric_limits<double>::infinity()};
  const double* c = cb.data().data();
  for (std::size_t j = 0; j < cb.size(); ++j, c += cb.dim()) {
    const double d2 = squared_distance(v.data(), c, cb.dim());
    if (d2 < best.squared_distance) best = {j, d2};
  }
  return best;
}

inline std::vector<std::uint8_t> encode_codebook(const Codebook& cb) {
  ByteWriter w;
  w.put_magic("LPQ1");
  w.put_le<std::uint64_t>(cb.size());
  w.put_le<std::uint64_t>(cb.dim());
  for (double v : cb.data()) w.put_f64(v);
  return std::move(w).bytes();
}

template <typename E>
Codebook read_codebook(ByteReader<E>& r) {
  r.expect_magic("LPQ1");
  const auto k = r.template le<std::uint64_t>("codebook k");
  const auto dim = r.template le<std::uint64_t>("codebook dim");
  if (k == 0 || dim == 0 || dim > (std::uint64_t{1} << 32) || k > (std::uint64_t{1} << 40) ||
      k * dim > r.remaining() / 8) {
    throw E("codebook: invalid or truncated shape", r.offset());
  }
  std::vector<double> data(k * dim);
  for (auto& v : data) v = r.f64("codeword");
  return Codebook(dim, std::move(data));
}

inline Codebook decode_codebook(std::span<const std::uint8_t> bytes) {
  ByteReader<FormatError> r(bytes);
  Codebook cb = read_codebook(r);
  r.expect_end("codebook");
  return cb;
}

struct LloydConfig {
  std::size_t k = 1;
  double rel_threshold = 1e-6;
  std::size_t max_iters = 500;
  std::size_t restarts = 8;
  std::uint64_t seed = 0;

  void validate(std::size_t num_samples) const {
    enforce<InvalidConfig>(k >= 1, "lloyd: k must be >= 1");
    enforce<InvalidConfig>(k <= num_samples, "lloyd: k = " + std::to_string(k) +
                                                 " exceeds the number of training vectors (" +
                                                 std::to_string(num_samples) + ")");
    enforce<InvalidConfig>(rel_threshold > 0, "lloyd: rel_threshold must be positive");
    enforce<InvalidConfig>(max_iters >= 1, "lloyd: max_iters must be >= 1");
    enforce<InvalidConfig>(restarts >= 1, "lloyd: restarts must be >= 1");
  }
};

struct LloydResult {
  Codebook codebook;
  double distortion = 0;        // per-symbol mean squared error on the training set
  std::vector<double> history;  // per-iteration distortion of the winning restart
  std::size_t winning_restart = 0;
  std::vector<double> restart_distortions;
  std::size_t empty_cell_reseeds = 0;
};

namespace detail {

// Static k-d tree over the codewords, answering exact two-nearest queries.
// Rebuilt after every centroid update; k is small next to n.
class CenterTree {
 public:
  void build(const double* centers, std::size_t k, std::size_t d) {
    c_ = centers;
    k_ = k;
    d_ = d;
    order_.resize(k);
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.clear();
    box_.clear();
    make(0, k);
  }

  // The `count` nearest codewords in increasing (distance, index) order.
  void nearest(const double* x, std::size_t count, std::uint32_t* idx, double* dist) const {
    std::fill_n(dist, count, std::numeric_limits<double>::infinity());
    std::fill_n(idx, count, std::numeric_limits<std::uint32_t>::max());
    visit(0, x, count, idx, dist);
  }

 private:
  struct Node {
    std::size_t begin, end;
    std::size_t left = 0, right = 0;  // 0 marks a leaf
  };

  std::size_t make(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end});
    box_.resize(box_.size() + 2 * d_);
    double* lo = box_.data() + id * 2 * d_;
    double* hi = lo + d_;
    std::fill(lo, lo + d_, std::numeric_limits<double>::infinity());
    std::fill(hi, hi + d_, -std::numeric_limits<double>::infinity());
    for (std::size_t i = begin; i < end; ++i) {
      const double* p = c_ + std::size_t{order_[i]} * d_;
      for (std::size_t t = 0; t < d_; ++t) {
        lo[t] = std::min(lo[t], p[t]);
        hi[t] = std::max(hi[t], p[t]);
      }
    }
    if (end - begin <= kLeaf) return id;
    std::size_t axis = 0;
    for (std::size_t t = 1; t < d_; ++t) {
      if (hi[t] - lo[t] > hi[axis] - lo[axis]) axis = t;
    }
    if (hi[axis] == lo[axis]) return id;
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return c_[a * d_ + axis] < c_[b * d_ + axis];
                     });
    const std::size_t l = make(begin, mid);
    const std::size_t r = make(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  double box_distance(std::size_t id, const double* x) const {
    const double* lo = box_.data() + id * 2 * d_;
    const double* hi = lo + d_;
    double acc = 0;
    for (std::size_t t = 0; t < d_; ++t) {
      const double e = x[t] < lo[t] ? lo[t] - x[t] : (x[t] > hi[t] ? x[t] - hi[t] : 0.0);
      acc += e * e;
    }
    return acc;
  }

  void visit(std::size_t id, const double* x, std::size_t count, std::uint32_t* idx,
             double* dist) const {
    const Node& nd = nodes_[id];
    if (nd.left == 0) {
      for (std::size_t i = nd.begin; i < nd.end; ++i) {
        const std::uint32_t j = order_[i];
        const double t = squared_distance(x, c_ + std::size_t{j} * d_, d_);
        if (t > dist[count - 1] || (t == dist[count - 1] && j > idx[count - 1])) continue;
        // Insertion into the sorted list.
        std::size_t p = count - 1;
        while (p > 0 && (t < dist[p - 1] || (t == dist[p - 1] && j < idx[p - 1]))) {
          dist[p] = dist[p - 1];
          idx[p] = idx[p - 1];
          --p;
        }
        dist[p] = t;
        idx[p] = j;
      }
      return;
    }
    const double dl = box_distance(nd.left, x), dr = box_distance(nd.right, x);
    const std::size_t first = dl <= dr ? nd.left : nd.right;
    const std::size_t second = dl <= dr ? nd.right : nd.left;
    // Equality is kept so that equidistant lower-index codewords are seen.
    if (std::min(dl, dr) <= dist[count - 1]) visit(first, x, count, idx, dist);
    if (std::max(dl, dr) <= dist[count - 1]) visit(second, x, count, idx, dist);
  }

  static constexpr std::size_t kLeaf = 8;
  const double* c_ = nullptr;
  std::size_t k_ = 0, d_ = 0;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::vector<double> box_;
};

struct LloydRun {
  std::vector<double> centers;
  double distortion = 0;
  std::vector<double> history;
  std::size_t reseeds = 0;
};

// One generalized Lloyd descent with exact, bound-accelerated assignment.
//
// Every point remembers the few codewords nearest to it at its last full
// search, and a lower bound on its distance to all the others. After a
// centroid update that bound drops by the largest codeword movement. While
// the best remembered codeword stays strictly below the bound, it is provably
// the nearest of all; otherwise the point is searched again through a k-d
// tree. The partition is exactly the one an exhaustive scan produces.
inline LloydRun lloyd_descent(std::span<const double> x, std::size_t d, const LloydConfig& cfg,
                              std::uint64_t restart) {
  const std::size_t n = x.size() / d;
  const std::size_t k = cfg.k;
  auto rng = make_rng(cfg.seed, 0x11000 + restart);

  LloydRun run;
  run.centers.resize(k * d);
  {
    // k distinct sample indices, uniformly without replacement (Floyd).
    std::vector<std::size_t> picks;
    picks.reserve(k);
    std::vector<bool> taken(n, false);
    for (std::size_t j = n - k; j < n; ++j) {
      std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
      if (taken[t]) t = j;
      taken[t] = true;
      picks.push_back(t);
    }
    std::shuffle(picks.begin(), picks.end(), rng);
    for (std::size_t j = 0; j < k; ++j) {
      std::copy_n(x.data() + picks[j] * d, d, run.centers.data() + j * d);
    }
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Guards the bound test against rounding in the bound arithmetic.
  constexpr double kSlack = 1.0 + 1e-12;
  const std::size_t width = std::min<std::size_t>(k, 8);  // remembered codewords
  const std::size_t want = width < k ? width + 1 : width;
  std::vector<std::uint32_t> assign(n, 0), cand(n * width);
  std::vector<double> others(n, kInf);  // lower bound, distance to the rest
  std::vector<double> dist2(n, 0.0);    // exact squared distance to own codeword
  std::vector<double> sums(k * d), previous(k * d);
  std::vector<std::size_t> counts(k);
  const double* c = run.centers.data();

  CenterTree tree;
  std::vector<std::uint32_t> found(want);
  std::vector<double> found_d(want);
  auto search = [&](std::size_t i) {
    tree.nearest(x.data() + i * d, want, found.data(), found_d.data());
    assign[i] = found[0];
    dist2[i] = found_d[0];
    std::copy_n(found.data(), width, cand.data() + i * width);
    others[i] = want > width ? std::sqrt(found_d[width]) : kInf;
  };

  tree.build(c, k, d);
  for (std::size_t i = 0; i < n; ++i) search(i);

  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(d));
  double prev = kInf;
  for (std::size_t iter = 0;; ++iter) {
    // Distortion of the current (partition, codebook) pair.
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) total += dist2[i];
    const double mse = total * norm;
    run.history.push_back(mse);
    run.distortion = mse;
    const bool converged = mse == 0.0 || (prev < kInf && prev - mse <= cfg.rel_threshold * prev);
    if (converged || iter + 1 >= cfg.max_iters) break;
    prev = mse;
    previous = run.centers;

    // Re-seed empty cells with the samples farthest from their codewords.
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[assign[i]];
    bool reseeded = false;
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[assign[i]] > 1 && (far == n || dist2[i] > dist2[far])) far = i;
      }
      if (far == n) break;
      --counts[assign[far]];
      assign[far] = static_cast<std::uint32_t>(j);
      counts[j] = 1;
      dist2[far] = 0;
      std::copy_n(x.data() + far * d, d, run.centers.data() + j * d);
      ++run.reseeds;
      reseeded = true;
    }

    // Centroid update.
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double* s = sums.data() + std::size_t{assign[i]} * d;
      const double* xi = x.data() + i * d;
      for (std::size_t e = 0; e < d; ++e) s[e] += xi[e];
    }
    double drift = 0;
    for (std::size_t j = 0; j < k; ++j) {
      double* cj = run.centers.data() + j * d;
      if (counts[j] != 0) {
        const double inv = 1.0 / static_cast<double>(counts[j]);
        for (std::size_t e = 0; e < d; ++e) cj[e] = sums[j * d + e] * inv;
      }
      drift = std::max(drift, squared_distance(cj, previous.data() + j * d, d));
    }
    drift = std::sqrt(drift);
    tree.build(c, k, d);

    // Assignment. A re-seeded codeword jumped, so every point searches anew.
    for (std::size_t i = 0; i < n; ++i) {
      if (reseeded) {
        search(i);
        continue;
      }
      others[i] -= drift;
      const double* xi = x.data() + i * d;
      const std::uint32_t* ci = cand.data() + i * width;
      std::uint32_t a = ci[0];
      double best = squared_distance(xi, c + std::size_t{a} * d, d);
      for (std::size_t r = 1; r < width; ++r) {
        const double t = squared_distance(xi, c + std::size_t{ci[r]} * d, d);
        if (t < best || (t == best && ci[r] < a)) best = t, a = ci[r];
      }
      if (std::sqrt(best) * kSlack < others[i]) {
        assign[i] = a;
        dist2[i] = best;
      } else {
        search(i);
      }
    }
  }
  return run;
}

}  // namespace detail

inline LloydResult lloyd_train(std::span<const double> samples, std::size_t dim,
                               const LloydConfig& cfg) {
  enforce<DimensionError>(dim >= 1, "lloyd: dim must be >= 1");
  enforce<InvalidConfig>(!samples.empty(), "lloyd: no training vectors");
  enforce<DimensionError>(samples.size() % dim == 0,
                          "lloyd: sample data is not a multiple of dim");
  const std::size_t n = samples.size() / dim;
  cfg.validate(n);

  std::vector<detail::LloydRun> runs(cfg.restarts);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (hw > 1 && cfg.restarts > 1) {
    std::vector<std::future<detail::LloydRun>> jobs;
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
      jobs.push_back(std::async(std::launch::async, [&, r] {
        return detail::lloyd_descent(samples, dim, cfg, r);
      }));
    }
    for (std::size_t r = 0; r < cfg.restarts; ++r) runs[r] = jobs[r].get();
  } else {
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
      runs[r] = detail::lloyd_descent(samples, dim, cfg, r);
    }
  }

  LloydResult result;
  std::size_t best = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    result.restart_distortions.push_back(runs[r].distortion);
    result.empty_cell_reseeds += runs[r].reseeds;
    if (runs[r].distortion < runs[best].distortion) best = r;
  }
  result.winning_restart = best;
  result.distortion = runs[best].distortion;
  result.history = std::move(runs[best].history);
  result.codebook = Codebook(dim, std::move(runs[best].centers));
  return result;
}

inline LloydResult lloyd_train(const std::vector<std::vector<double>>& samples,
                               const LloydConfig& cfg) {
  enforce<InvalidConfig>(!samples.empty(), "lloyd: no training vectors");
  const std::size_t dim = samples.front().size();
  std::vector<double> flat;
  flat.reserve(samples.size() * dim);
  for (const auto& s : samples) {
    enforce<DimensionError>(s.size() == dim, "lloyd: training vectors differ in length");
    flat.insert(flat.end(), s.begin(), s.end());
  }
  return lloyd_train(flat, dim, cfg);
}

// ---------------------------------------------------------------------------
// Block-mean scalar quantization for images.

enum class LevelPlacement { kUniform, kLloydOptimized };

// 2^bits levels evenly spaced over [lo, hi], both endpoints included.
inline std::vector<double> uniform_levels(unsigned bits, double lo = -1.0, double hi = 1.0) {
  enforce<InvalidConfig>(bits >= 1 && bits <= 24, "uniform_levels: bits must be in [1, 24]");
  enforce<InvalidConfig>(hi > lo, "uniform_levels: empty range");
  const std::size_t count = std::size_t{1} << bits;
  std::vector<double> levels(count);
  for (std::size_t i = 0; i < count; ++i) {
    levels[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return levels;
}

// Index of the nearest level in a sorted list; ties go to the lower index.
inline std::size_t nearest_level(std::span<const double> levels, double v) {
  auto it = std::lower_bound(levels.begin(), levels.end(), v);
  if (it == levels.begin()) return 0;
  if (it == levels.end()) return levels.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - levels.begin());
  return (v - levels[hi - 1] <= levels[hi] - v) ? hi - 1 : hi;
}

struct ScalarBlockQuantizer {
  std::size_t block_h = 1;
  std::size_t block_w = 1;
  unsigned bits = 1;
  std::vector<double> levels;
  LevelPlacement placement = LevelPlacement::kUniform;

  void validate() const {
    enforce<InvalidConfig>(block_h >= 1 && block_w >= 1, "block quantizer: empty block");
    enforce<InvalidConfig>(bits >= 1 && bits <= 24, "block quantizer: bits must be in [1, 24]");
    enforce<InvalidConfig>(levels.size() == (std::size_t{1} << bits),
                           "block quantizer: expected 2^bits levels");
    enforce<InvalidConfig>(std::is_sorted(levels.begin(), levels.end()),
                           "block quantizer: levels must be sorted ascending");
  }

  // Bits per pixel per channel.
  double rate() const {
    return static_cast<double>(bits) / static_cast<double>(block_h * block_w);
  }
};

struct BlockQuantized {
  std::vector<std::uint32_t> codes;  // one level index per block, channel-major
  std::vector<std::uint8_t> packed;  // codes packed MSB-first, zero-padded
  std::size_t bit_cost = 0;
  double rate = 0;
  std::vector<double> reconstruction;  // same layout as the input image
  double distortion = 0;               // per-symbol squared error
};

// Replaces each h x w block (per channel) by its mean snapped to the nearest
// level. Images are row-major with interleaved channels.
inline BlockQuantized block_mean_quantize(std::span<const double> image, const ImageGeometry& g,
                                          const ScalarBlockQuantizer& q) {
  q.validate();
  enforce<DimensionError>(image.size() == g.symbols(), "block_mean_quantize: image size mismatch");
  if (g.height % q.block_h != 0 || g.width % q.block_w != 0) {
    throw InvalidConfig("block_mean_quantize: block " + std::to_string(q.block_h) + "x" +
                        std::to_string(q.block_w) + " does not divide image " +
                        std::to_string(g.height) + "x" + std::to_string(g.width));
  }
  const std::size_t bh = g.height / q.block_h, bw = g.width / q.block_w;
  const double inv_area = 1.0 / static_cast<double>(q.block_h * q.block_w);
  BlockQuantized out;
  out.reconstruction.assign(image.size(), 0.0);
  out.codes.reserve(bh * bw * g.channels);
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    for (std::size_t by = 0; by < bh; ++by) {
      for (std::size_t bx = 0; bx < bw; ++bx) {
        double sum = 0;
        for (std::size_t y = by * q.block_h; y < (by + 1) * q.block_h; ++y) {
          for (std::size_t x = bx * q.block_w; x < (bx + 1) * q.block_w; ++x) {
            sum += image[(y * g.width + x) * g.channels + ch];
          }
        }
        const std::size_t code = nearest_level(q.levels, sum * inv_area);
        out.codes.push_back(static_cast<std::uint32_t>(code));
        for (std::size_t y = by * q.block_h; y < (by + 1) * q.block_h; ++y) {
          for (std::size_t x = bx * q.block_w; x < (bx + 1) * q.block_w; ++x) {
            out.reconstruction[(y * g.width + x) * g.channels + ch] = q.levels[code];
          }
        }
      }
    }
  }
  out.bit_cost = out.codes.size() * q.bits;
  out.rate = q.rate();
  out.packed.assign((out.bit_cost + 7) / 8, 0);
  std::size_t bit = 0;
  for (auto code : out.codes) {
    for (int b = static_cast<int>(q.bits) - 1; b >= 0; --b, ++bit) {
      if ((code >> b) & 1u) out.packed[bit / 8] |= static_cast<std::uint8_t>(0x80u >> (bit % 8));
    }
  }
  out.distortion = per_symbol_distortion(image, out.reconstruction);
  return out;
}

// Mean of every h x w block of every image (per channel): the population the
// scalar levels are fitted to.
inline std::vector<double> block_means(const Dataset& images, std::size_t block_h,
                                       std::size_t block_w) {
  enforce<InvalidArgument>(images.image_geometry().has_value(), "block_means: not an image set");
  const auto& g = *images.image_geometry();
  enforce<InvalidConfig>(block_h >= 1 && block_w >= 1 && g.height % block_h == 0 &&
                             g.width % block_w == 0,
                         "block_means: block dims must divide the image dims");
  std::vector<double> out;
  const double inv_area = 1.0 / static_cast<double>(block_h * block_w);
  for (std::size_t l = 0; l < images.num_samples(); ++l) {
    for (std::size_t m = 0; m < images.num_files(); ++m) {
      auto img = images.file(l, m);
      for (std::size_t ch = 0; ch < g.channels; ++ch) {
        for (std::size_t by = 0; by < g.height; by += block_h) {
          for (std::size_t bx = 0; bx < g.width; bx += block_w) {
            double sum = 0;
            for (std::size_t y = by; y < by + block_h; ++y) {
              for (std::size_t x = bx; x < bx + block_w; ++x) {
                sum += img[(y * g.width + x) * g.channels + ch];
              }
            }
            out.push_back(sum * inv_area);
          }
        }
      }
    }
  }
  return out;
}

// Mean squared error of snapping every population value to its nearest level.
inline double scalar_quantization_mse(std::span<const double> population,
                                      std::span<const double> levels) {
  enforce<InvalidArgument>(!population.empty(), "scalar_quantization_mse: empty population");
  double acc = 0;
  for (double v : population) {
    const double e = v - levels[nearest_level(levels, v)];
    acc += e * e;
  }
  return acc / static_cast<double>(population.size());
}

struct ScalarLevelOptions {
  std::size_t restarts = 8;
  std::size_t max_iters = 1000;
  double rel_threshold = 1e-12;
  // Range for the uniform-placement starting point; defaults to the
  // population's own [min, max].
  std::optional<std::pair<double, double>> uniform_range;
};

namespace detail {

// Weighted 1-D Lloyd over sorted distinct values. Cells are intervals, so
// cell statistics come from prefix sums.
struct ScalarPopulation {
  std::vector<double> values;  // distinct, ascending
  std::vector<double> w, s, q;  // prefix sums of weight, weight*v, weight*v^2

  explicit ScalarPopulation(std::span<const double> population) {
    std::vector<double> sorted(population.begin(), population.end());
    std::sort(sorted.begin(), sorted.end());
    w.push_back(0);
    s.push_back(0);
    q.push_back(0);
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double v = sorted[i], cnt = static_cast<double>(j - i);
      values.push_back(v);
      w.push_back(w.back() + cnt);
      s.push_back(s.back() + cnt * v);
      q.push_back(q.back() + cnt * v * v);
      i = j;
    }
  }

  // Sum of squared error of the distinct-value range [a, b) around level c.
  double sse(std::size_t a, std::size_t b, double c) const {
    const double ww = w[b] - w[a], ss = s[b] - s[a], qq = q[b] - q[a];
    return std::max(0.0, qq - 2 * c * ss + c * c * ww);
  }
};

inline std::pair<std::vector<double>, double> scalar_lloyd(const ScalarPopulation& pop,
                                                           std::vector<double> levels,
                                                           const ScalarLevelOptions& opt) {
  const std::size_t k = levels.size(), u = pop.values.size();
  const double total_w = pop.w.back();
  std::vector<std::size_t> edge(k + 1);
  double prev = std::numeric_limits<double>::infinity(), mse = prev;
  for (std::size_t iter = 0; iter < opt.max_iters; ++iter) {
    std::sort(levels.begin(), levels.end());
    // Cell j covers distinct values [edge[j], edge[j+1]).
    edge[0] = 0;
    edge[k] = u;
    for (std::size_t j = 1; j < k; ++j) {
      const double mid = 0.5 * (levels[j - 1] + levels[j]);
      // Values exactly at a midpoint go to the lower level.
      edge[j] = static_cast<std::size_t>(
          std::upper_bound(pop.values.begin(), pop.values.end(), mid) - pop.values.begin());
      edge[j] = std::max(edge[j], edge[j - 1]);
    }
    double sse = 0;
    for (std::size_t j = 0; j < k; ++j) sse += pop.sse(edge[j], edge[j + 1], levels[j]);
    mse = sse / total_w;
    if (mse == 0 || (std::isfinite(prev) && prev - mse <= opt.rel_threshold * prev)) break;
    prev = mse;
    for (std::size_t j = 0; j < k; ++j) {
      const double ww = pop.w[edge[j + 1]] - pop.w[edge[j]];
      if (ww > 0) {
        levels[j] = (pop.s[edge[j + 1]] - pop.s[edge[j]]) / ww;
        continue;
      }
      // Empty cell: move the level onto the value farthest from its level.
      double far_err = -1, far_v = levels[j];
      for (std::size_t jj = 0; jj < k; ++jj) {
        if (edge[jj + 1] - edge[jj] < 2) continue;
        for (std::size_t idx : {edge[jj], edge[jj + 1] - 1}) {
          const double e = std::abs(pop.values[idx] - levels[jj]);
          if (e > far_err) far_err = e, far_v = pop.values[idx];
        }
      }
      levels[j] = far_v;
    }
  }
  std::sort(levels.begin(), levels.end());
  return {levels, mse};
}

}  // namespace detail

// Lloyd-optimized scalar levels for a population of block means. One restart
// starts from uniform placement, so the result never does worse than uniform
// levels over the same range.
inline std::vector<double> optimize_scalar_levels(std::span<const double> population,
                                                  unsigned bits, std::uint64_t seed,
                                                  const ScalarLevelOptions& opt = {}) {
  enforce<InvalidConfig>(bits >= 1 && bits <= 24, "optimize_scalar_levels: bits must be in [1, 24]");
  enforce<InvalidConfig>(!population.empty(), "optimize_scalar_levels: empty population");
  const detail::ScalarPopulation pop(population);
  const std::size_t k = std::size_t{1} << bits;
  if (pop.values.size() < k) {
    throw InvalidConfig("optimize_scalar_levels: 2^" + std::to_string(bits) +
                        " levels exceed the " + std::to_string(pop.values.size()) +
                        " distinct population values");
  }
  const auto [lo, hi] = opt.uniform_range.value_or(
      std::make_pair(pop.values.front(), pop.values.back()));
  auto best = detail::scalar_lloyd(pop, uniform_levels(bits, lo, hi), opt);
  auto rng = make_rng(seed, 0x5ca1a);
  for (std::size_t r = 1; r < std::max<std::size_t>(opt.restarts, 1); ++r) {
    std::vector<double> init;
    std::sample(pop.values.begin(), pop.values.end(), std::back_inserter(init), k, rng);
    auto cand = detail::scalar_lloyd(pop, std::move(init), opt);
    if (cand.second < best.second) best = std::move(cand);
  }
  return best.first;
}

}  // namespace lossypir
