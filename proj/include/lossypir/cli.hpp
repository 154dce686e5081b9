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

#include <chrono>
#include <filesystem>
#include <iostream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lossypir/config.hpp"
#include "lossypir/dataset_io.hpp"
#include "lossypir/leakage.hpp"
#include "lossypir/protocol.hpp"
#include "lossypir/quantizer.hpp"
#include "lossypir/rdl.hpp"
#include "lossypir/schemes.hpp"

// Batch front end. Exit codes: 0 success, 2 configuration or usage error,
// 3 runtime error. Messages go to standard error.

namespace lossypir {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

namespace cli {

namespace fs = std::filesystem;

inline std::set<std::string> gaussian_spec_keys(std::size_t max_files = 64) {
  std::set<std::string> keys{"num_files", "dim", "sigma"};
  for (std::size_t m = 1; m <= max_files; ++m) keys.insert("mean." + std::to_string(m));
  return keys;
}

inline GaussianSourceSpec gaussian_spec_from_config(const RunConfig& cfg) {
  GaussianSourceSpec spec;
  const auto files = cfg.get_int("num_files");
  const auto dim = cfg.get_int("dim");
  if (files < 1 || files > 64) throw ConfigError("key 'num_files' must be in [1, 64]");
  if (dim < 1) throw ConfigError("key 'dim' must be >= 1");
  spec.num_files = static_cast<std::size_t>(files);
  spec.dim = static_cast<std::size_t>(dim);
  spec.sigma = cfg.get_double("sigma");
  for (std::size_t m = 1; m <= spec.num_files; ++m) spec.means.push_back(cfg.get_doubles("mean." + std::to_string(m)));
  try {
    spec.validate();
  } catch (const InvalidConfig& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

inline std::string read_text(const fs::path& p) {
  const auto bytes = read_file_bytes(p);
  return std::string(bytes.begin(), bytes.end());
}

inline DatasetFormat parse_format(const std::string& s) {
  if (s == "raw_f64") return DatasetFormat::kRawF64;
  if (s == "idx") return DatasetFormat::kIdxImages;
  throw ConfigError("unknown dataset format '" + s + "' (expected raw_f64 or idx)");
}

inline void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text_atomic(out, text);
  }
}

inline void progress(const std::string& msg) { std::cerr << msg << std::endl; }

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string spec, out;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

inline int cmd_gen(const GenArgs& a) {
  const auto cfg = RunConfig::load(a.spec, gaussian_spec_keys());
  const auto spec = gaussian_spec_from_config(cfg);
  if (a.n < 1) throw ConfigError("--n must be >= 1");
  fs::create_directories(a.out);
  save_raw_f64(generate_gaussian_dataset(spec, a.n, a.seed), fs::path(a.out) / "dataset.f64");
  write_text_atomic(fs::path(a.out) / "resolved.cfg", cfg.resolved_text() + "n = " + std::to_string(a.n) +
                                                          "\nseed = " + std::to_string(a.seed) + "\n");
  progress("wrote " + (fs::path(a.out) / "dataset.f64").string());
  return kExitOk;
}

struct BuildArgs {
  std::string dataset, out, format = "raw_f64";
  std::size_t subset_size = 1;
  unsigned bits = 0;
  std::size_t restarts = 8, max_iters = 500;
  double rel_threshold = 1e-6;
  std::uint64_t seed = 0;
  std::uint32_t scheme_id = 0;
  bool per_subset = false;
};

inline int cmd_build(const BuildArgs& a) {
  const auto train = load_dataset(a.dataset, parse_format(a.format));
  LloydConfig cfg;
  cfg.restarts = a.restarts;
  cfg.rel_threshold = a.rel_threshold;
  cfg.max_iters = a.max_iters;
  cfg.seed = a.seed;
  BuildOptions opt;
  opt.per_subset = a.per_subset;
  opt.scheme_id = a.scheme_id;
  if (a.bits > 32) throw ConfigError("--bits must be <= 32");
  if (a.subset_size < 1 || a.subset_size > train.num_files()) {
    throw ConfigError("--subset-size must be in [1, " + std::to_string(train.num_files()) + "]");
  }
  if (a.restarts < 1) throw ConfigError("--restarts must be >= 1");
  const auto scheme = build_compression_scheme(train, a.subset_size, a.bits, cfg, opt);
  write_file_atomic(a.out, encode_scheme(scheme));
  std::string resolved = "dataset = " + a.dataset + "\nformat = " + a.format +
                         "\nsubset_size = " + std::to_string(a.subset_size) + "\nbits = " + std::to_string(a.bits) +
                         "\nrestarts = " + std::to_string(a.restarts) + "\nrel_threshold = " +
                         RunConfig::fmt17(a.rel_threshold) + "\nmax_iters = " + std::to_string(a.max_iters) +
                         "\nseed = " + std::to_string(a.seed) + "\nscheme_id = " + std::to_string(a.scheme_id) +
                         "\nper_subset = " + (a.per_subset ? "true" : "false") + "\n";
  write_text_atomic(a.out + ".resolved.cfg", resolved);
  progress("wrote " + a.out + " (rate " + fmt9(scheme.rate()) + ", leakage " + fmt9(scheme.leakage()) + ")");
  return kExitOk;
}

struct EvalArgs {
  std::string scheme, test, format = "raw_f64", out, transcript, queries;
  std::size_t trials = 10000;
  std::uint64_t seed = 0;
};

inline int cmd_eval(const EvalArgs& a) {
  const auto scheme = decode_scheme(read_file_bytes(a.scheme));
  const auto test = load_dataset(a.test, parse_format(a.format));
  if (a.trials < 1) throw ConfigError("--trials must be >= 1");
  if (test.num_files() != scheme.num_files || test.dim() != scheme.dim) {
    throw ConfigError("--test: dataset shape does not match the scheme");
  }
  const auto res = run_experiment(test, scheme, a.trials, a.seed);
  emit(to_csv(std::vector<SchemePoint>{res.measured}), a.out);
  if (!a.transcript.empty()) write_text_atomic(a.transcript, transcript_csv(res.transcript));
  if (!a.queries.empty()) write_text_atomic(a.queries, to_csv(res.queries));
  if (!a.out.empty()) {
    write_text_atomic(a.out + ".resolved.cfg", "scheme = " + a.scheme + "\ntest = " + a.test + "\nformat = " +
                                                   a.format + "\ntrials = " + std::to_string(a.trials) +
                                                   "\nseed = " + std::to_string(a.seed) + "\n");
  }
  progress("distortion " + fmt9(res.measured.distortion) + " +- " + fmt9(res.distortion_stderr));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Frontier sweep.

inline std::set<std::string> frontier_keys() {
  auto keys = gaussian_spec_keys();
  for (const char* k : {"n_train", "n_test", "data_seed", "subset_sizes", "bits", "restarts", "rel_threshold",
                        "max_iters", "lloyd_seed", "trials", "eval_seed", "out_dir", "shannon",
                        "shannon_points_per_segment", "per_subset"}) {
    keys.insert(k);
  }
  return keys;
}

struct FrontierResult {
  std::vector<SchemePoint> raw;       // one per (bits, N) cell
  std::vector<SchemePoint> frontier;  // hull per rate, then Shannon curves
};

// Trains and evaluates every (N, bits) cell, then convexifies per rate.
// The training set uses data_seed, the test set data_seed + 1.
inline FrontierResult run_frontier(const RunConfig& cfg) {
  const auto spec = gaussian_spec_from_config(cfg);
  const auto n_train = cfg.get_uint("n_train", 100000);
  const auto n_test = cfg.get_uint("n_test", 100000);
  const auto data_seed = cfg.get_uint("data_seed", 1);
  const auto subset_sizes = cfg.get_ints("subset_sizes", "1 2 3 4");
  const auto bits_list = cfg.get_ints("bits", "6 12");
  LloydConfig lloyd;
  lloyd.restarts = cfg.get_uint("restarts", 1);
  lloyd.rel_threshold = cfg.get_double("rel_threshold", 1e-3);
  lloyd.max_iters = cfg.get_uint("max_iters", 500);
  lloyd.seed = cfg.get_uint("lloyd_seed", 0);
  const auto trials = cfg.get_uint("trials", 100000);
  const auto eval_seed = cfg.get_uint("eval_seed", 0);
  const bool shannon = cfg.get_bool("shannon", true);
  const auto per_segment = cfg.get_uint("shannon_points_per_segment", 20);
  BuildOptions opt;
  opt.per_subset = cfg.get_bool("per_subset", false);
  if (n_train < 1 || n_test < 1 || trials < 1) throw ConfigError("n_train, n_test and trials must be >= 1");
  if (lloyd.restarts < 1) throw ConfigError("key 'restarts' must be >= 1");
  if (per_segment < 2) throw ConfigError("key 'shannon_points_per_segment' must be >= 2");
  for (auto n : subset_sizes) {
    if (n < 1 || static_cast<std::size_t>(n) > spec.num_files) {
      throw ConfigError("key 'subset_sizes': " + std::to_string(n) + " outside [1, " +
                        std::to_string(spec.num_files) + "]");
    }
  }
  for (auto b : bits_list) {
    if (b < 0 || b > 32) throw ConfigError("key 'bits': " + std::to_string(b) + " outside [0, 32]");
  }

  const auto train = generate_gaussian_dataset(spec, n_train, data_seed);
  const auto test = generate_gaussian_dataset(spec, n_test, data_seed + 1);
  FrontierResult out;
  for (auto b : bits_list) {
    std::vector<SchemePoint> cell_points;
    for (auto n : subset_sizes) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto scheme = build_compression_scheme(train, static_cast<std::size_t>(n), static_cast<unsigned>(b), lloyd, opt);
      auto p = eval_scheme(scheme, test, trials, eval_seed);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      progress("cell N=" + std::to_string(n) + " bits=" + std::to_string(b) + ": D = " + fmt9(p.distortion) +
               " (" + fmt9(secs) + " s)");
      cell_points.push_back(p);
      out.raw.push_back(p);
    }
    const double rate = static_cast<double>(b) / static_cast<double>(spec.dim);
    for (auto p : lower_hull(cell_points, rate).points) {
      p.scheme = "compression_hull";
      out.frontier.push_back(std::move(p));
    }
    if (shannon) {
      for (const auto& p : shannon_curve(spec.sigma, rate, spec.num_files, per_segment)) out.frontier.push_back(p);
    }
  }
  return out;
}

inline int cmd_frontier(const std::string& config_path, const std::string& out_override) {
  auto cfg = RunConfig::load(config_path, frontier_keys());
  if (!out_override.empty()) cfg.set("out_dir", out_override);
  const fs::path dir = cfg.get_string("out_dir");
  const auto res = run_frontier(cfg);
  fs::create_directories(dir);
  write_text_atomic(dir / "frontier.csv", to_csv(res.frontier));
  write_text_atomic(dir / "raw_points.csv", to_csv(res.raw));
  write_text_atomic(dir / "resolved.cfg", cfg.resolved_text());
  progress("wrote " + (dir / "frontier.csv").string());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// R(D, L) runs.

struct RdlRun {
  RdlProblem problem;
  RdlConfig solver;
  BruteForceConfig brute;
  bool use_brute = false;
  std::size_t grid_resolution = 12;
  double check_tol = 1e-3;
};

inline RdlRun rdl_run_from_config(const RunConfig& cfg) {
  RdlRun run;
  run.problem = rdl_problem_from_config(cfg);
  const auto solver = cfg.get_string("solver", "solve");
  if (solver != "solve" && solver != "brute_force") {
    throw ConfigError("key 'solver': expected solve or brute_force, got '" + solver + "'");
  }
  run.use_brute = solver == "brute_force";
  run.solver.restarts = cfg.get_uint("restarts", run.solver.restarts);
  run.solver.seed = cfg.get_uint("seed", 0);
  run.solver.max_evals = cfg.get_uint("max_evals", run.solver.max_evals);
  run.solver.query_letters = cfg.get_uint("query_letters", 0);
  run.grid_resolution = cfg.get_uint("grid_resolution", run.grid_resolution);
  run.brute.output_resolution = cfg.get_uint("output_resolution", run.brute.output_resolution);
  run.check_tol = cfg.get_double("check_tol", run.check_tol);
  if (run.grid_resolution < 1) throw ConfigError("key 'grid_resolution' must be >= 1");
  return run;
}

// Rate at one (D, L); NaN when infeasible.
inline double rdl_rate(const RdlRun& run, double d, double l) {
  try {
    return run.use_brute
               ? brute_force_rdl(run.problem.pmf, d, l, run.problem.metric, run.grid_resolution, run.brute)
               : solve_rdl(run.problem.pmf, d, l, run.problem.metric, run.solver).rate;
  } catch (const InfeasibleError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

inline int cmd_rdl(const std::string& problem_path, const std::string& grid_path, const std::string& out) {
  const auto cfg = RunConfig::load(problem_path, rdl_problem_keys());
  const auto run = rdl_run_from_config(cfg);
  std::string resolved = cfg.resolved_text();
  std::string text;
  if (grid_path.empty()) {
    if (!run.problem.d_max || !run.problem.l_max) throw ConfigError("problem needs D and L when no --grid is given");
    if (run.use_brute) {
      text = "rate = " + fmt9(brute_force_rdl(run.problem.pmf, *run.problem.d_max, *run.problem.l_max,
                                              run.problem.metric, run.grid_resolution, run.brute)) + "\n";
    } else {
      text = format_rdl_solution(
          solve_rdl(run.problem.pmf, *run.problem.d_max, *run.problem.l_max, run.problem.metric, run.solver));
    }
  } else {
    const auto gcfg = RunConfig::load(grid_path, {"D", "L"});
    auto grid = rdl_grid_from_config(gcfg);
    resolved += "grid.D = " + gcfg.get_string("D") + "\ngrid.L = " + gcfg.get_string("L") + "\n";
    grid.rate.assign(grid.d_values.size(), std::vector<double>(grid.l_values.size()));
    for (std::size_t i = 0; i < grid.d_values.size(); ++i) {
      for (std::size_t j = 0; j < grid.l_values.size(); ++j) {
        grid.rate[i][j] = rdl_rate(run, grid.d_values[i], grid.l_values[j]);
      }
    }
    text = rdl_grid_csv(grid);
    const auto report = rdl_properties_check(grid, run.check_tol);
    progress("property checks: " + std::to_string(report.checks) + ", violations: " +
             std::to_string(report.violations.size()));
    for (const auto& v : report.violations) progress("  " + v);
  }
  emit(text, out);
  if (!out.empty()) write_text_atomic(out + ".resolved.cfg", resolved);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Leakage audits.

struct AuditArgs {
  std::string queries, estimator = "empirical", metric = "map", out;
  std::size_t num_files = 0;
  std::uint64_t seed = 0;
  double holdout = 0.2;
};

inline int cmd_audit(const AuditArgs& a) {
  DensityEstimator est;
  try {
    est = parse_density_estimator(a.estimator);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("--estimator: ") + e.what());
  }
  if (a.metric != "map" && a.metric != "mi" && a.metric != "variance") {
    throw ConfigError("--metric: expected map, mi or variance, got '" + a.metric + "'");
  }
  if (a.metric == "mi" && est != DensityEstimator::kEmpiricalDiscrete) {
    throw ConfigError("--metric mi supports only the empirical estimator");
  }
  const auto qs = parse_query_csv(read_text(a.queries), a.num_files, a.queries);
  std::string text;
  if (a.metric == "map") {
    MapOptions opt;
    opt.seed = a.seed;
    opt.holdout_fraction = a.holdout;
    text = "map_accuracy = " + fmt9(map_accuracy(qs, est, opt)) + "\n";
  } else if (a.metric == "mi") {
    text = "mutual_info_bits = " + fmt9(mutual_info_discrete(qs)) + "\n";
  } else {
    const auto var = query_variance(qs);
    text = "m";
    for (std::size_t j = 0; j < qs.dim(); ++j) text += ",var_q" + std::to_string(j + 1);
    text += "\n";
    for (std::size_t m = 0; m < var.size(); ++m) {
      text += std::to_string(m + 1);
      for (double v : var[m]) text += "," + fmt9(v);
      text += "\n";
    }
  }
  emit(text, a.out);
  if (!a.out.empty()) {
    write_text_atomic(a.out + ".resolved.cfg", "queries = " + a.queries + "\nestimator = " + a.estimator +
                                                   "\nmetric = " + a.metric + "\nnum_files = " +
                                                   std::to_string(a.num_files) + "\nseed = " +
                                                   std::to_string(a.seed) + "\nholdout = " +
                                                   RunConfig::fmt17(a.holdout) + "\n");
  }
  return kExitOk;
}

}  // namespace cli

// Parses argv, runs one subcommand and maps failures onto exit codes.
inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Lossy private information retrieval toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  cli::GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a Gaussian dataset (raw_f64)");
  g->add_option("--spec", gen.spec, "Gaussian source spec file")->required()->check(CLI::ExistingFile);
  g->add_option("--n", gen.n, "Samples")->required();
  g->add_option("--seed", gen.seed, "Seed")->required();
  g->add_option("--out", gen.out, "Output directory")->required();

  cli::BuildArgs build;
  auto* b = app.add_subcommand("build", "Train and serialize an N-subset compression scheme");
  b->add_option("--dataset", build.dataset, "Training dataset")->required()->check(CLI::ExistingFile);
  b->add_option("--subset-size", build.subset_size, "N")->required();
  b->add_option("--bits", build.bits, "Answer bits (codebook size 2^bits)")->required();
  b->add_option("--restarts", build.restarts, "Lloyd restarts");
  b->add_option("--out", build.out, "Scheme file")->required();
  b->add_option("--format", build.format, "raw_f64 or idx");
  b->add_option("--rel-threshold", build.rel_threshold, "Lloyd stopping threshold");
  b->add_option("--max-iters", build.max_iters, "Lloyd iteration cap");
  b->add_option("--seed", build.seed, "Lloyd seed");
  b->add_option("--scheme-id", build.scheme_id, "Scheme id on the wire");
  b->add_flag("--per-subset", build.per_subset, "One codebook per subset");

  cli::EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Simulate the protocol and emit a SchemePoint CSV row");
  e->add_option("--scheme", eval.scheme, "Scheme file")->required()->check(CLI::ExistingFile);
  e->add_option("--test", eval.test, "Test dataset")->required()->check(CLI::ExistingFile);
  e->add_option("--trials", eval.trials, "Trials")->required();
  e->add_option("--seed", eval.seed, "Seed")->required();
  e->add_option("--format", eval.format, "raw_f64 or idx");
  e->add_option("--out", eval.out, "CSV output (default stdout)");
  e->add_option("--transcript", eval.transcript, "Transcript CSV output");
  e->add_option("--queries", eval.queries, "Query sample CSV output");

  std::string frontier_config, frontier_out;
  auto* f = app.add_subcommand("frontier", "Sweep (N, bits), convexify, add the Shannon curve");
  f->add_option("--config", frontier_config, "Run config")->required()->check(CLI::ExistingFile);
  f->add_option("--out", frontier_out, "Override out_dir");

  std::string problem, grid, rdl_out;
  auto* r = app.add_subcommand("rdl", "Evaluate R(D, L) for a finite prototype source");
  r->add_option("--problem", problem, "Problem file")->required()->check(CLI::ExistingFile);
  r->add_option("--grid", grid, "Grid file with D and L lists")->check(CLI::ExistingFile);
  r->add_option("--out", rdl_out, "Output (default stdout)");

  cli::AuditArgs audit;
  auto* a = app.add_subcommand("audit", "Leakage estimates from a query sample CSV");
  a->add_option("--queries", audit.queries, "Query sample CSV")->required()->check(CLI::ExistingFile);
  a->add_option("--estimator", audit.estimator, "empirical or kde");
  a->add_option("--metric", audit.metric, "map, mi or variance");
  a->add_option("--num-files", audit.num_files, "M (default: largest label)");
  a->add_option("--seed", audit.seed, "Holdout split seed");
  a->add_option("--holdout", audit.holdout, "Holdout fraction for map");
  a->add_option("--out", audit.out, "Output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitConfig;
  }

  try {
    if (*g) return cli::cmd_gen(gen);
    if (*b) return cli::cmd_build(build);
    if (*e) return cli::cmd_eval(eval);
    if (*f) return cli::cmd_frontier(frontier_config, frontier_out);
    if (*r) return cli::cmd_rdl(problem, grid, rdl_out);
    if (*a) return cli::cmd_audit(audit);
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << std::endl;
    return kExitConfig;
  } catch (const InvalidConfig& ex) {
    std::cerr << "config error: " << ex.what() << std::endl;
    return kExitConfig;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << std::endl;
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace lossypir
