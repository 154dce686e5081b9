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
#include <future>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "lossypir/config.hpp"
#include "lossypir/core.hpp"
#include "lossypir/leakage.hpp"
#include "lossypir/schemes.hpp"

// Numerical evaluation of the optimal rate R(D, L) for a finite prototype
// source: the minimum of I(X; Xhat | Q) over query mechanisms P(q|m) and
// reconstruction channels P(xhat | x, q), subject to an expected distortion
// of the requested file at most D and a leakage of the query mechanism at
// most L. Rates are in bits per source symbol.

namespace lossypir {

// Joint pmf of one symbol of every file. Tuples are indexed with file 0 as
// the most significant digit. values[m][a] is the real number carried by
// symbol a of file m; distortion is the squared difference.
struct PrototypePmf {
  std::size_t num_files = 0;
  std::vector<std::size_t> alphabet;
  std::vector<std::vector<double>> values;
  std::vector<double> joint;

  std::size_t tuples() const {
    std::size_t t = 1;
    for (auto a : alphabet) t *= a;
    return t;
  }

  // Symbol of file m in tuple x.
  std::size_t symbol(std::size_t x, std::size_t m) const {
    for (std::size_t j = num_files; j-- > m + 1;) x /= alphabet[j];
    return x % alphabet[m];
  }

  void validate() const {
    enforce(num_files >= 1 && num_files <= 8, "pmf: M must be in [1, 8]");
    enforce(alphabet.size() == num_files && values.size() == num_files,
            "pmf: need one alphabet size and one value list per file");
    for (std::size_t m = 0; m < num_files; ++m) {
      enforce(alphabet[m] >= 1 && alphabet[m] <= 16, "pmf: alphabet sizes must be in [1, 16]");
      enforce(values[m].size() == alphabet[m], "pmf: value list length must match the alphabet");
      for (double v : values[m]) enforce(std::isfinite(v), "pmf: non-finite symbol value");
    }
    enforce(tuples() <= 256, "pmf: joint alphabet above 256 tuples is not supported");
    enforce(joint.size() == tuples(), "pmf: joint table has " + std::to_string(joint.size()) +
                                          " entries, expected " + std::to_string(tuples()));
    double total = 0;
    for (double p : joint) {
      enforce(p >= 0 && std::isfinite(p), "pmf: negative or non-finite probability");
      total += p;
    }
    enforce(std::abs(total - 1.0) <= 1e-12, "pmf: probabilities must sum to 1 (within 1e-12)");
  }
};

// M independent uniform binary files with symbols embedded as 0 and 1, so
// that squared error is Hamming distortion.
inline PrototypePmf binary_uniform_pmf(std::size_t num_files) {
  PrototypePmf p;
  p.num_files = num_files;
  p.alphabet.assign(num_files, 2);
  p.values.assign(num_files, {0.0, 1.0});
  p.joint.assign(std::size_t{1} << num_files, 1.0 / static_cast<double>(std::size_t{1} << num_files));
  return p;
}

inline double binary_entropy(double p) {
  if (p <= 0 || p >= 1) return 0;
  return -p * std::log2(p) - (1 - p) * std::log2(1 - p);
}

// Leakage of a query table P(q|m) (rows m) under the uniform prior.
inline double query_leakage(const std::vector<std::vector<double>>& query, LeakageKind metric) {
  return metric == LeakageKind::kMutualInfo ? mutual_info_exact(query) : map_accuracy_exact(query);
}

inline double leakage_floor(LeakageKind metric, std::size_t num_files) {
  return metric == LeakageKind::kMutualInfo ? 0.0 : 1.0 / static_cast<double>(num_files);
}

struct RdlConfig {
  std::size_t restarts = 32;  // random starts, on top of two fixed ones
  double penalty = 1e4;
  double d_tol_rel = 1e-4;  // distortion tolerance relative to the largest distortion
  std::size_t max_evals = 1500;  // per restart
  double ba_tol = 1e-11;
  std::size_t ba_max_iters = 20000;
  std::size_t query_letters = 0;  // 0 means M + 3
  std::uint64_t seed = 0;
};

struct RdlSolution {
  double rate = 0;
  std::vector<std::vector<double>> query_dist;            // [m][q]
  std::vector<std::vector<std::vector<double>>> channel;  // [q][x][xhat]
  double achieved_distortion = 0;
  double achieved_leakage = 0;
  std::size_t evaluations = 0;
  std::size_t restarts = 0;
  double gap = 0;  // Blahut-Arimoto convergence proxy, bits
};

struct RdlEvaluation {
  double rate = 0, distortion = 0, leakage = 0;
};

// Recomputes rate, distortion and leakage from the tables alone.
inline RdlEvaluation evaluate_rdl_tables(const PrototypePmf& pmf,
                                         const std::vector<std::vector<double>>& query,
                                         const std::vector<std::vector<std::vector<double>>>& channel,
                                         LeakageKind metric) {
  pmf.validate();
  const std::size_t files = pmf.num_files, x_count = pmf.tuples();
  enforce<DimensionError>(query.size() == files, "rdl tables: query table needs M rows");
  const std::size_t q_count = query.front().size();
  enforce<DimensionError>(channel.size() == q_count, "rdl tables: one channel per query letter");
  RdlEvaluation ev;
  ev.leakage = query_leakage(query, metric);
  for (std::size_t q = 0; q < q_count; ++q) {
    double pq = 0;
    for (std::size_t m = 0; m < files; ++m) pq += query[m][q] / static_cast<double>(files);
    const auto& w = channel[q];
    enforce<DimensionError>(w.size() == x_count, "rdl tables: channel rows must cover the source");
    std::vector<double> out(x_count, 0.0);
    for (std::size_t x = 0; x < x_count; ++x) {
      enforce<DimensionError>(w[x].size() == x_count, "rdl tables: channel columns must cover the source");
      double total = 0;
      for (std::size_t y = 0; y < x_count; ++y) {
        enforce(w[x][y] >= 0, "rdl tables: negative channel entry");
        total += w[x][y];
        out[y] += pmf.joint[x] * w[x][y];
      }
      enforce(std::abs(total - 1) <= 1e-9, "rdl tables: channel row does not sum to 1");
    }
    if (pq <= 0) continue;
    for (std::size_t x = 0; x < x_count; ++x) {
      for (std::size_t y = 0; y < x_count; ++y) {
        const double pxy = pmf.joint[x] * w[x][y];
        if (pxy > 0) ev.rate += pq * pxy * std::log2(w[x][y] / out[y]);
        double d = 0;
        for (std::size_t m = 0; m < files; ++m) {
          const double e = pmf.values[m][pmf.symbol(x, m)] - pmf.values[m][pmf.symbol(y, m)];
          d += query[m][q] / static_cast<double>(files) * e * e;
        }
        ev.distortion += pxy * d;
      }
    }
  }
  ev.rate = std::max(0.0, ev.rate);
  return ev;
}

namespace detail {

// Rate-distortion problem at a fixed query table: for each letter q an
// ordinary rate-distortion problem whose distortion weighs file m by
// P(m | q); all letters share one Lagrange slope.
class InnerRdl {
 public:
  InnerRdl(const PrototypePmf& pmf, const RdlConfig& cfg) : pmf_(pmf), cfg_(cfg) {
    x_ = pmf.tuples();
    const std::size_t files = pmf.num_files;
    sq_.assign(files, std::vector<double>(x_ * x_));
    for (std::size_t m = 0; m < files; ++m) {
      for (std::size_t x = 0; x < x_; ++x) {
        for (std::size_t y = 0; y < x_; ++y) {
          const double e = pmf.values[m][pmf.symbol(x, m)] - pmf.values[m][pmf.symbol(y, m)];
          sq_[m][x * x_ + y] = e * e;
          max_d_ = std::max(max_d_, e * e);
        }
      }
    }
  }

  double max_distortion() const { return max_d_; }

  struct Result {
    double rate = 0, distortion = 0, gap = 0;
    std::vector<std::vector<std::vector<double>>> channel;
  };

  // Minimum rate at expected distortion at most D for the query table.
  Result solve(const std::vector<std::vector<double>>& query, double target, bool keep_channel) {
    setup(query);
    Result res;
    // Zero rate: the best constant reconstruction per letter.
    double d0 = 0;
    for (std::size_t q = 0; q < pq_.size(); ++q) {
      if (pq_[q] > 0) d0 += pq_[q] * zero_rate_[q].second;
    }
    if (target >= d0) {
      res.distortion = d0;
      if (keep_channel) {
        for (std::size_t q = 0; q < pq_.size(); ++q) {
          std::vector<std::vector<double>> w(x_, std::vector<double>(x_, 0.0));
          for (auto& row : w) row[zero_rate_[q].first] = 1.0;
          res.channel.push_back(std::move(w));
        }
      }
      return res;
    }
    const double d_tol = cfg_.d_tol_rel * max_d_;
    double s_hi = slope_ > 0 ? slope_ : 1.0 / max_d_;
    Result hi = at_slope(s_hi);
    while (hi.distortion > target && s_hi < s_cap_) {
      s_hi = std::min(s_hi * 4, s_cap_);
      hi = at_slope(s_hi);
    }
    double s_lo = s_hi / 4;
    Result lo = at_slope(s_lo);
    for (int guard = 0; lo.distortion <= target && guard < 60; ++guard) {
      s_hi = s_lo;
      hi = lo;
      s_lo /= 4;
      lo = at_slope(s_lo);
    }
    for (int it = 0; it < 200 && lo.distortion > target; ++it) {
      if (lo.distortion - hi.distortion <= d_tol || s_hi / s_lo < 1 + 1e-12) break;
      const double mid = std::sqrt(s_lo * s_hi);
      Result r = at_slope(mid);
      if (r.distortion <= target) {
        s_hi = mid;
        hi = std::move(r);
      } else {
        s_lo = mid;
        lo = std::move(r);
      }
    }
    slope_ = s_hi;
    if (keep_channel) hi = at_slope(s_hi, true);
    return hi;
  }

 private:
  void setup(const std::vector<std::vector<double>>& query) {
    const std::size_t files = pmf_.num_files, q_count = query.front().size();
    pq_.assign(q_count, 0.0);
    dq_.assign(q_count, std::vector<double>(x_ * x_, 0.0));
    zero_rate_.assign(q_count, {0, 0.0});
    if (r_.size() != q_count) r_.assign(q_count, std::vector<double>(x_, 1.0 / static_cast<double>(x_)));
    double min_pos = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < q_count; ++q) {
      for (std::size_t m = 0; m < files; ++m) pq_[q] += query[m][q] / static_cast<double>(files);
      if (pq_[q] <= 0) continue;
      for (std::size_t m = 0; m < files; ++m) {
        const double w = query[m][q] / static_cast<double>(files) / pq_[q];
        if (w <= 0) continue;
        for (std::size_t i = 0; i < x_ * x_; ++i) dq_[q][i] += w * sq_[m][i];
      }
      for (double v : dq_[q]) {
        if (v > 0) min_pos = std::min(min_pos, v);
      }
      std::pair<std::size_t, double> best{0, std::numeric_limits<double>::infinity()};
      for (std::size_t y = 0; y < x_; ++y) {
        double e = 0;
        for (std::size_t x = 0; x < x_; ++x) e += pmf_.joint[x] * dq_[q][x * x_ + y];
        if (e < best.second) best = {y, e};
      }
      zero_rate_[q] = best;
    }
    // Beyond this slope every positive-distortion weight underflows to zero.
    s_cap_ = std::isfinite(min_pos) ? 800.0 / min_pos : 1.0;
  }

  // Blahut-Arimoto at slope s for every active letter.
  Result at_slope(double s, bool keep_channel = false) {
    Result res;
    std::vector<double> e(x_ * x_), z(x_), next(x_);
    for (std::size_t q = 0; q < pq_.size(); ++q) {
      if (pq_[q] <= 0) {
        if (keep_channel) {
          std::vector<std::vector<double>> w(x_, std::vector<double>(x_, 0.0));
          for (std::size_t x = 0; x < x_; ++x) w[x][x] = 1.0;
          res.channel.push_back(std::move(w));
        }
        continue;
      }
      for (std::size_t i = 0; i < x_ * x_; ++i) e[i] = std::exp(-s * dq_[q][i]);
      auto& r = r_[q];
      // Letters whose reconstruction mass collapsed are revived so that
      // warm starts cannot pin the iteration to a poor support.
      for (auto& v : r) v = std::max(v, 1e-9);
      normalize(r);
      for (std::size_t it = 0; it < cfg_.ba_max_iters; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t x = 0; x < x_; ++x) {
          if (pmf_.joint[x] <= 0) continue;
          double zx = 0;
          for (std::size_t y = 0; y < x_; ++y) zx += r[y] * e[x * x_ + y];
          z[x] = zx;
          const double f = pmf_.joint[x] / zx;
          for (std::size_t y = 0; y < x_; ++y) next[y] += f * r[y] * e[x * x_ + y];
        }
        double change = 0;
        for (std::size_t y = 0; y < x_; ++y) change = std::max(change, std::abs(next[y] - r[y]));
        r = next;
        if (change < cfg_.ba_tol) break;
      }
      // Channel, rate and distortion of the final output distribution.
      std::vector<std::vector<double>> w(x_, std::vector<double>(x_, 0.0));
      std::vector<double> out(x_, 0.0);
      for (std::size_t x = 0; x < x_; ++x) {
        double zx = 0;
        for (std::size_t y = 0; y < x_; ++y) zx += r[y] * e[x * x_ + y];
        for (std::size_t y = 0; y < x_; ++y) {
          w[x][y] = zx > 0 ? r[y] * e[x * x_ + y] / zx : (y == x ? 1.0 : 0.0);
          out[y] += pmf_.joint[x] * w[x][y];
        }
      }
      double rate = 0, dist = 0, cmax = -std::numeric_limits<double>::infinity(), cavg = 0;
      for (std::size_t x = 0; x < x_; ++x) {
        for (std::size_t y = 0; y < x_; ++y) {
          const double pxy = pmf_.joint[x] * w[x][y];
          if (pxy > 0) rate += pxy * std::log2(w[x][y] / out[y]);
          dist += pxy * dq_[q][x * x_ + y];
        }
      }
      for (std::size_t y = 0; y < x_; ++y) {
        double c = 0;
        for (std::size_t x = 0; x < x_; ++x) {
          if (pmf_.joint[x] <= 0) continue;
          double zx = 0;
          for (std::size_t yy = 0; yy < x_; ++yy) zx += out[yy] * e[x * x_ + yy];
          if (zx > 0) c += pmf_.joint[x] * e[x * x_ + y] / zx;
        }
        if (c > 0) {
          cmax = std::max(cmax, std::log2(c));
          cavg += out[y] * std::log2(c);
        }
      }
      res.rate += pq_[q] * std::max(0.0, rate);
      res.distortion += pq_[q] * dist;
      res.gap += pq_[q] * std::max(0.0, cmax - cavg);
      if (keep_channel) res.channel.push_back(std::move(w));
    }
    return res;
  }

  static void normalize(std::vector<double>& v) {
    const double t = std::accumulate(v.begin(), v.end(), 0.0);
    for (auto& x : v) x /= t;
  }

  const PrototypePmf& pmf_;
  const RdlConfig& cfg_;
  std::size_t x_ = 0;
  double max_d_ = 0;
  double slope_ = 0;
  double s_cap_ = 1;
  std::vector<std::vector<double>> sq_;  // per file squared error table
  std::vector<double> pq_;
  std::vector<std::vector<double>> dq_;
  std::vector<std::pair<std::size_t, double>> zero_rate_;
  std::vector<std::vector<double>> r_;  // warm-start output distributions
};

// Plain Nelder-Mead simplex descent.
inline std::pair<std::vector<double>, double> nelder_mead(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
    double step, std::size_t max_evals, double ftol, std::size_t* evals) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> pts(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step;
  std::vector<double> vals(n + 1);
  std::size_t used = 0;
  auto eval = [&](const std::vector<double>& p) {
    ++used;
    return f(p);
  };
  for (std::size_t i = 0; i <= n; ++i) vals[i] = eval(pts[i]);
  std::vector<std::size_t> order(n + 1);
  while (used < max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
    if (std::abs(vals[worst] - vals[best]) <= ftol) break;
    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j] / static_cast<double>(n);
    }
    auto along = [&](double t) {
      std::vector<double> p(n);
      for (std::size_t j = 0; j < n; ++j) p[j] = centroid[j] + t * (pts[worst][j] - centroid[j]);
      return p;
    };
    auto xr = along(-1.0);
    const double fr = eval(xr);
    if (fr < vals[best]) {
      auto xe = along(-2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = std::move(xe), vals[worst] = fe;
      } else {
        pts[worst] = std::move(xr), vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = std::move(xr), vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    auto xc = along(outside ? -0.5 : 0.5);
    const double fc = eval(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = std::move(xc), vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < n; ++j) pts[i][j] = pts[best][j] + 0.5 * (pts[i][j] - pts[best][j]);
      vals[i] = eval(pts[i]);
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  if (evals) *evals += used;
  return {pts[static_cast<std::size_t>(it - vals.begin())], *it};
}

// Row-wise softmax of logits; the last letter's logit is pinned at zero.
inline std::vector<std::vector<double>> softmax_rows(const std::vector<double>& theta,
                                                     std::size_t rows, std::size_t letters) {
  std::vector<std::vector<double>> p(rows, std::vector<double>(letters));
  for (std::size_t m = 0; m < rows; ++m) {
    double mx = 0;
    for (std::size_t q = 0; q + 1 < letters; ++q) mx = std::max(mx, theta[m * (letters - 1) + q]);
    double total = 0;
    for (std::size_t q = 0; q < letters; ++q) {
      const double t = q + 1 < letters ? theta[m * (letters - 1) + q] : 0.0;
      p[m][q] = std::exp(t - mx);
      total += p[m][q];
    }
    // Snap negligible mass to zero: exact zeros matter at D = 0, where any
    // weight on a second file forces it to be reproduced too.
    double kept = 0;
    for (auto& v : p[m]) {
      v /= total;
      if (v < 1e-9) v = 0;
      kept += v;
    }
    for (auto& v : p[m]) v /= kept;
  }
  return p;
}

inline std::vector<double> logits_of(const std::vector<std::vector<double>>& p) {
  std::vector<double> theta;
  for (const auto& row : p) {
    const double last = std::max(row.back(), 1e-12);
    for (std::size_t q = 0; q + 1 < row.size(); ++q) {
      theta.push_back(std::log(std::max(row[q], 1e-12) / last));
    }
  }
  return theta;
}

// Time-shares the table with a query that always sends the least used
// letter, until the leakage budget holds. When that letter is unused the
// mixture leaks exactly (1 - t) times the original excess over the floor.
inline std::vector<std::vector<double>> repair_leakage(std::vector<std::vector<double>> p,
                                                       double budget, LeakageKind metric) {
  const double rho = query_leakage(p, metric);
  if (rho <= budget) return p;
  const std::size_t files = p.size(), letters = p.front().size();
  std::size_t quiet = 0;
  double quiet_mass = std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < letters; ++q) {
    double mass = 0;
    for (const auto& row : p) mass += row[q];
    if (mass < quiet_mass) quiet = q, quiet_mass = mass;
  }
  const double floor = leakage_floor(metric, files);
  double t = metric == LeakageKind::kMutualInfo ? 1.0 - budget / rho : (rho - budget) / (rho - floor);
  t = std::clamp(t, 0.0, 1.0);
  auto mix = [&](double w) {
    for (auto& row : p) {
      for (auto& v : row) v *= 1 - w;
      row[quiet] += w;
    }
  };
  mix(t);
  // Rounding, or a letter that was not quite unused, can leave the bound a
  // hair above the budget.
  for (int guard = 0; guard < 200 && query_leakage(p, metric) > budget; ++guard) mix(0.001);
  return p;
}

}  // namespace detail

// Estimate of R(D, L). The query mechanism is searched by restarted simplex
// descent over softmax logits with a quadratic penalty on excess leakage;
// for each candidate the reconstruction channels come from Blahut-Arimoto
// at a common slope bisected onto the distortion target. Every returned
// solution is feasible, so the rate is achievable: an upper estimate.
inline RdlSolution solve_rdl(const PrototypePmf& pmf, double d_max, double l_max, LeakageKind metric,
                             const RdlConfig& cfg = {}) {
  pmf.validate();
  const std::size_t files = pmf.num_files;
  if (!(d_max >= 0) || !std::isfinite(d_max)) throw InfeasibleError("rdl: distortion target must be >= 0");
  if (!(l_max >= leakage_floor(metric, files) - 1e-12)) {
    throw InfeasibleError("rdl: leakage " + fmt9(l_max) + " is below the minimum " +
                          fmt9(leakage_floor(metric, files)) + " of " + to_string(metric));
  }
  const std::size_t letters = cfg.query_letters ? cfg.query_letters : files + 3;
  enforce(letters >= 1, "rdl: need at least one query letter");
  RdlSolution best;
  best.rate = std::numeric_limits<double>::infinity();
  // Repairs leakage, solves the channels and keeps the candidate if it wins.
  auto consider = [&](std::vector<std::vector<double>> p, detail::InnerRdl& inner) {
    p = detail::repair_leakage(std::move(p), l_max, metric);
    auto r = inner.solve(p, d_max, true);
    const auto ev = evaluate_rdl_tables(pmf, p, r.channel, metric);
    RdlSolution s;
    s.rate = ev.rate;
    s.query_dist = std::move(p);
    s.channel = std::move(r.channel);
    s.achieved_distortion = ev.distortion;
    s.achieved_leakage = ev.leakage;
    s.gap = r.gap;
    return s;
  };

  if (files == 1 || letters == 1) {
    // A single file leaves nothing to hide; the query is irrelevant.
    std::vector<std::vector<double>> p(files, std::vector<double>(letters, 0.0));
    for (auto& row : p) row[0] = 1.0;
    detail::InnerRdl inner(pmf, cfg);
    best = consider(std::move(p), inner);
    best.restarts = 1;
    return best;
  }

  std::vector<std::vector<std::vector<double>>> starts;
  {
    // Reveal the index, and hide it completely.
    std::vector<std::vector<double>> reveal(files, std::vector<double>(letters, 0.0));
    for (std::size_t m = 0; m < files; ++m) reveal[m][m % letters] = 1.0;
    starts.push_back(reveal);
    starts.emplace_back(files, std::vector<double>(letters, 1.0 / static_cast<double>(letters)));
  }
  auto rng = make_rng(cfg.seed, 0xd1c4);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    std::vector<std::vector<double>> p(files, std::vector<double>(letters));
    for (auto& row : p) {
      double t = 0;
      for (auto& v : row) t += (v = gamma(rng) + 1e-12);
      for (auto& v : row) v /= t;
    }
    starts.push_back(std::move(p));
  }

  auto descend = [&](std::size_t i) {
    detail::InnerRdl inner(pmf, cfg);
    auto objective = [&](const std::vector<double>& theta) {
      const auto p = detail::softmax_rows(theta, files, letters);
      const double excess = std::max(0.0, query_leakage(p, metric) - l_max);
      return inner.solve(p, d_max, false).rate + cfg.penalty * excess * excess;
    };
    std::size_t evals = 0;
    auto found = detail::nelder_mead(objective, detail::logits_of(starts[i]), 1.0, cfg.max_evals, 1e-10, &evals);
    auto s = consider(detail::softmax_rows(found.first, files, letters), inner);
    // The start itself, time-shared down to the budget, can beat the descent
    // where the rate jumps (as at D = 0).
    auto direct = consider(starts[i], inner);
    if (direct.rate < s.rate) s = std::move(direct);
    s.evaluations = evals;
    return s;
  };
  std::vector<RdlSolution> runs(starts.size());
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (hw > 1) {
    std::vector<std::future<RdlSolution>> jobs;
    for (std::size_t i = 0; i < starts.size(); ++i) jobs.push_back(std::async(std::launch::async, descend, i));
    for (std::size_t i = 0; i < starts.size(); ++i) runs[i] = jobs[i].get();
  } else {
    for (std::size_t i = 0; i < starts.size(); ++i) runs[i] = descend(i);
  }
  std::size_t evaluations = 0;
  for (auto& s : runs) {
    evaluations += s.evaluations;
    if (s.rate < best.rate) best = std::move(s);
  }
  best.evaluations = evaluations;
  best.restarts = starts.size();
  return best;
}

// ---------------------------------------------------------------------------
// Brute-force oracle.

struct BruteForceConfig {
  std::size_t query_letters = 3;
  std::size_t output_resolution = 24;  // grid step 1/this for output distributions
  std::size_t slope_points = 400;
  double budget = 2e10;  // elementary operations
};

namespace detail {

// All vectors of `parts` nonnegative multiples of 1/res summing to 1.
inline std::vector<std::vector<double>> simplex_grid(std::size_t parts, std::size_t res) {
  std::vector<std::vector<double>> out;
  std::vector<std::size_t> c(parts, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t left) {
    if (i + 1 == parts) {
      c[i] = left;
      std::vector<double> v(parts);
      for (std::size_t j = 0; j < parts; ++j) v[j] = static_cast<double>(c[j]) / static_cast<double>(res);
      out.push_back(std::move(v));
      return;
    }
    for (std::size_t k = 0; k <= left; ++k) {
      c[i] = k;
      rec(i + 1, left - k);
    }
  };
  rec(0, res);
  return out;
}

}  // namespace detail

// Minimum over a grid of query tables of the rate-distortion function of
// each table, evaluated through its dual
//   R = max_s [ sum_q P(q) min_r -E log sum_xhat r(xhat) exp(-s d_q) - s D ]
// with r on a simplex grid and s on a fixed grid.
inline double brute_force_rdl(const PrototypePmf& pmf, double d_max, double l_max, LeakageKind metric,
                              std::size_t grid_resolution, const BruteForceConfig& cfg = {}) {
  pmf.validate();
  const std::size_t files = pmf.num_files, x_count = pmf.tuples(), letters = cfg.query_letters;
  enforce(grid_resolution >= 1, "brute force: grid resolution must be >= 1");
  if (!(d_max >= 0)) throw InfeasibleError("brute force: distortion target must be >= 0");
  if (!(l_max >= leakage_floor(metric, files) - 1e-12)) throw InfeasibleError("brute force: leakage below the minimum");

  const double rows = static_cast<double>(binomial(grid_resolution + letters - 1, letters - 1));
  const double tables = std::pow(rows, static_cast<double>(files));
  const double outputs = static_cast<double>(binomial(cfg.output_resolution + x_count - 1, x_count - 1));
  // Distinct weightings are bounded by the number of tables times letters.
  const double cost = tables * static_cast<double>(letters * cfg.slope_points) +
                      std::min(tables * letters, std::pow(grid_resolution + 1.0, files)) *
                          static_cast<double>(cfg.slope_points) * outputs * static_cast<double>(x_count * x_count);
  if (cost > cfg.budget) {
    throw BudgetExceeded("brute force: estimated " + fmt9(cost) + " operations exceed the budget of " +
                         fmt9(cfg.budget));
  }

  std::vector<double> slopes{0.0};
  for (std::size_t i = 0; i + 1 < cfg.slope_points; ++i) {
    slopes.push_back(0.01 * std::pow(1e4, static_cast<double>(i) / static_cast<double>(cfg.slope_points - 2)));
  }
  const auto row_grid = detail::simplex_grid(letters, grid_resolution);
  const auto out_grid = detail::simplex_grid(x_count, cfg.output_resolution);

  std::vector<std::vector<double>> sq(files, std::vector<double>(x_count * x_count));
  for (std::size_t m = 0; m < files; ++m) {
    for (std::size_t x = 0; x < x_count; ++x) {
      for (std::size_t y = 0; y < x_count; ++y) {
        const double e = pmf.values[m][pmf.symbol(x, m)] - pmf.values[m][pmf.symbol(y, m)];
        sq[m][x * x_count + y] = e * e;
      }
    }
  }
  // F(s) for one weighting of the files, in nats.
  std::map<std::vector<std::int64_t>, std::vector<double>> cache;
  auto dual = [&](const std::vector<double>& w) -> const std::vector<double>& {
    std::vector<std::int64_t> key(files);
    for (std::size_t m = 0; m < files; ++m) key[m] = std::llround(w[m] * 1e12);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    std::vector<double> d(x_count * x_count, 0.0);
    for (std::size_t m = 0; m < files; ++m) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += w[m] * sq[m][i];
    }
    std::vector<double> f(slopes.size()), e(d.size());
    for (std::size_t k = 0; k < slopes.size(); ++k) {
      for (std::size_t i = 0; i < d.size(); ++i) e[i] = std::exp(-slopes[k] * d[i]);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& r : out_grid) {
        double v = 0;
        for (std::size_t x = 0; x < x_count && v < best; ++x) {
          if (pmf.joint[x] <= 0) continue;
          double z = 0;
          for (std::size_t y = 0; y < x_count; ++y) z += r[y] * e[x * x_count + y];
          v -= pmf.joint[x] * std::log(z);
        }
        best = std::min(best, v);
      }
      f[k] = best;
    }
    return cache.emplace(std::move(key), std::move(f)).first->second;
  };

  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(files, 0);
  std::vector<std::vector<double>> table(files);
  std::vector<double> total(slopes.size());
  while (true) {
    for (std::size_t m = 0; m < files; ++m) table[m] = row_grid[pick[m]];
    if (query_leakage(table, metric) <= l_max + 1e-12) {
      std::fill(total.begin(), total.end(), 0.0);
      for (std::size_t q = 0; q < letters; ++q) {
        double pq = 0;
        for (std::size_t m = 0; m < files; ++m) pq += table[m][q] / static_cast<double>(files);
        if (pq <= 0) continue;
        std::vector<double> w(files);
        for (std::size_t m = 0; m < files; ++m) w[m] = table[m][q] / static_cast<double>(files) / pq;
        const auto& f = dual(w);
        for (std::size_t k = 0; k < slopes.size(); ++k) total[k] += pq * f[k];
      }
      double rate = 0;
      for (std::size_t k = 0; k < slopes.size(); ++k) rate = std::max(rate, total[k] - slopes[k] * d_max);
      best = std::min(best, rate / std::log(2.0));
    }
    std::size_t m = 0;
    while (m < files && ++pick[m] == row_grid.size()) pick[m++] = 0;
    if (m == files) break;
  }
  if (!std::isfinite(best)) throw InfeasibleError("brute force: no grid table meets the leakage budget");
  return best;
}

// ---------------------------------------------------------------------------
// Grid property checks.

struct RdlGrid {
  std::vector<double> d_values;           // ascending
  std::vector<double> l_values;           // ascending
  std::vector<std::vector<double>> rate;  // [i over D][j over L]; NaN marks infeasible
};

struct PropertyReport {
  std::size_t checks = 0;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Nonincreasing in D and in L, and midpoint convex on every grid line and
// diagonal whose midpoint is itself a grid node.
inline PropertyReport rdl_properties_check(const RdlGrid& g, double tol) {
  PropertyReport rep;
  const std::size_t nd = g.d_values.size(), nl = g.l_values.size();
  enforce<DimensionError>(g.rate.size() == nd, "property check: rate rows must match D values");
  for (const auto& row : g.rate) enforce<DimensionError>(row.size() == nl, "property check: ragged grid");
  auto at = [&](std::size_t i, std::size_t j) { return g.rate[i][j]; };
  auto name = [&](std::size_t i, std::size_t j) {
    return "(D=" + fmt9(g.d_values[i]) + ", L=" + fmt9(g.l_values[j]) + ")";
  };
  for (std::size_t i = 0; i < nd; ++i) {
    for (std::size_t j = 0; j < nl; ++j) {
      if (std::isnan(at(i, j))) continue;
      if (i + 1 < nd && !std::isnan(at(i + 1, j))) {
        ++rep.checks;
        if (at(i + 1, j) > at(i, j) + tol) {
          rep.violations.push_back("rate increases in D from " + name(i, j) + " to " + name(i + 1, j));
        }
      }
      if (j + 1 < nl && !std::isnan(at(i, j + 1))) {
        ++rep.checks;
        if (at(i, j + 1) > at(i, j) + tol) {
          rep.violations.push_back("rate increases in L from " + name(i, j) + " to " + name(i, j + 1));
        }
      }
    }
  }
  auto midpoint_index = [](const std::vector<double>& v, std::size_t a, std::size_t b) -> std::ptrdiff_t {
    const double mid = 0.5 * (v[a] + v[b]);
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (std::abs(v[k] - mid) <= 1e-9 * std::max(1.0, std::abs(mid))) return static_cast<std::ptrdiff_t>(k);
    }
    return -1;
  };
  for (std::size_t i1 = 0; i1 < nd; ++i1) {
    for (std::size_t j1 = 0; j1 < nl; ++j1) {
      for (std::size_t i2 = i1; i2 < nd; ++i2) {
        for (std::size_t j2 = 0; j2 < nl; ++j2) {
          if (i2 == i1 && j2 <= j1) continue;
          const auto im = midpoint_index(g.d_values, i1, i2);
          const auto jm = midpoint_index(g.l_values, j1, j2);
          if (im < 0 || jm < 0) continue;
          const double a = at(i1, j1), b = at(i2, j2), c = at(static_cast<std::size_t>(im), static_cast<std::size_t>(jm));
          if (std::isnan(a) || std::isnan(b) || std::isnan(c)) continue;
          ++rep.checks;
          if (c > 0.5 * (a + b) + tol) {
            rep.violations.push_back("midpoint convexity fails between " + name(i1, j1) + " and " + name(i2, j2));
          }
        }
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Problem files.
//
//   M = 2
//   alphabet = 2 2
//   values.1 = 0 1
//   values.2 = 0 1
//   pmf = 0.25 0.25 0.25 0.25
//   metric = mutual_info
//   D = 0.1            (optional when a grid file is used)
//   L = 1              (optional when a grid file is used)
//
// Solver keys: solver (solve | brute_force), restarts, seed, max_evals,
// query_letters, grid_resolution, output_resolution, check_tol.

struct RdlProblem {
  PrototypePmf pmf;
  LeakageKind metric = LeakageKind::kMutualInfo;
  std::optional<double> d_max, l_max;
};

inline const std::set<std::string>& rdl_problem_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k{"M",        "alphabet", "pmf",       "metric",          "D",
                            "L",        "solver",   "restarts",  "seed",            "max_evals",
                            "query_letters", "grid_resolution", "output_resolution", "check_tol"};
    for (int m = 1; m <= 8; ++m) k.insert("values." + std::to_string(m));
    return k;
  }();
  return keys;
}

inline RdlProblem rdl_problem_from_config(const RunConfig& cfg) {
  RdlProblem p;
  const auto files = cfg.get_int("M");
  if (files < 1 || files > 8) throw ConfigError("key 'M' must be in [1, 8]");
  p.pmf.num_files = static_cast<std::size_t>(files);
  for (auto a : cfg.get_ints("alphabet")) {
    if (a < 1) throw ConfigError("key 'alphabet': sizes must be positive");
    p.pmf.alphabet.push_back(static_cast<std::size_t>(a));
  }
  for (std::size_t m = 1; m <= p.pmf.num_files; ++m) p.pmf.values.push_back(cfg.get_doubles("values." + std::to_string(m)));
  p.pmf.joint = cfg.get_doubles("pmf");
  try {
    p.metric = parse_leakage_kind(cfg.get_string("metric", "mutual_info"));
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("key 'metric': ") + e.what());
  }
  if (cfg.has("D")) p.d_max = cfg.get_double("D");
  if (cfg.has("L")) p.l_max = cfg.get_double("L");
  try {
    p.pmf.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return p;
}

inline RdlGrid rdl_grid_from_config(const RunConfig& cfg) {
  RdlGrid g;
  g.d_values = cfg.get_doubles("D");
  g.l_values = cfg.get_doubles("L");
  if (!std::is_sorted(g.d_values.begin(), g.d_values.end()) ||
      !std::is_sorted(g.l_values.begin(), g.l_values.end())) {
    throw ConfigError("grid: D and L values must be ascending");
  }
  return g;
}

inline std::string rdl_grid_csv(const RdlGrid& g) {
  std::string out = "D,L,rate,feasible\n";
  for (std::size_t i = 0; i < g.d_values.size(); ++i) {
    for (std::size_t j = 0; j < g.l_values.size(); ++j) {
      const double r = g.rate[i][j];
      out += fmt9(g.d_values[i]) + "," + fmt9(g.l_values[j]) + "," + (std::isnan(r) ? "" : fmt9(r)) + "," +
             (std::isnan(r) ? "0" : "1") + "\n";
    }
  }
  return out;
}

// Human-readable dump of a solution's tables.
inline std::string format_rdl_solution(const RdlSolution& s) {
  std::string out = "rate = " + fmt9(s.rate) + "\n";
  out += "distortion = " + fmt9(s.achieved_distortion) + "\n";
  out += "leakage = " + fmt9(s.achieved_leakage) + "\n";
  for (std::size_t m = 0; m < s.query_dist.size(); ++m) {
    out += "query." + std::to_string(m + 1) + " =";
    for (double v : s.query_dist[m]) out += " " + fmt9(v);
    out += "\n";
  }
  for (std::size_t q = 0; q < s.channel.size(); ++q) {
    for (std::size_t x = 0; x < s.channel[q].size(); ++x) {
      out += "channel." + std::to_string(q + 1) + "." + std::to_string(x + 1) + " =";
      for (double v : s.channel[q][x]) out += " " + fmt9(v);
      out += "\n";
    }
  }
  return out;
}

}  // namespace lossypir
