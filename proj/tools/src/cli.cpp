#include "adabatch/cli.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "adabatch/dataset.hpp"
#include "adabatch/objectives.hpp"
#include "adabatch/optimizer.hpp"
#include "adabatch/rng.hpp"
#include "adabatch/sampling.hpp"
#include "adabatch/theory.hpp"

namespace adabatch {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string data;
  std::size_t synth_n = 0;
  std::size_t synth_d = 20;
  double synth_noise = 0.0;
  double synth_signal = 1.0;
  std::uint64_t synth_seed = 0;
  bool normalize = false;

  std::string objective = "ridge";
  double lambda = 0.1;
  std::size_t partitions = 1;
  std::vector<double> q;
  std::string sampling = "nice";
  std::size_t tau = 0;
  std::vector<std::size_t> taus;

  double eps = 1e-3;
  double cap = 0.0;
  std::uint64_t seed = 0;
  double max_epochs = 1000.0;
  std::size_t trace_every = 1;
  std::string out;

  std::string mode = "adaptive";
  std::size_t points = 20;
  bool corrupt_formula = false;
};

struct Problem {
  std::shared_ptr<const Dataset> data;
  std::unique_ptr<Objective> obj;
  Partitioning part = Partitioning::single(1);
  SmoothnessProfile profile;
  Eigen::VectorXd x_star;
  NoiseAggregates agg_star;
};

bool is_partition_variant(SamplingVariant v) {
  return v == SamplingVariant::partition_nice || v == SamplingVariant::partition_independent;
}

Dataset load_dataset(const Options& o) {
  const bool from_file = !o.data.empty();
  const bool synthetic = o.synth_n > 0;
  if (from_file == synthetic)
    throw std::invalid_argument("give exactly one data source: --data FILE or --synth-n N");
  if (synthetic) {
    SyntheticSpec spec{o.synth_n, o.synth_d, o.synth_noise, o.synth_signal, o.synth_seed, o.normalize};
    return make_synthetic(spec).data;
  }
  Dataset ds = read_libsvm_file(o.data);
  return o.normalize ? normalize_rows(ds) : ds;
}

Partitioning build_partitioning(const Options& o, std::size_t n, SamplingVariant v) {
  if (!is_partition_variant(v)) {
    if (o.partitions != 1 || !o.q.empty())
      throw std::invalid_argument(fmt::format(
          "--partitions/--q only apply to pnice and pindependent sampling (got {})", to_string(v)));
    return Partitioning::single(n);
  }
  PartitionSpec spec;
  spec.blocks = o.partitions;
  spec.probs = o.q;
  return make_partitioning(n, spec);
}

Problem load_problem(const Options& o, SamplingVariant v) {
  Problem p;
  p.data = std::make_shared<const Dataset>(load_dataset(o));
  p.obj = std::make_unique<Objective>(loss_from_string(o.objective), o.lambda, p.data);
  p.part = build_partitioning(o, p.data->n(), v);
  p.profile = smoothness_profile(*p.obj, p.part);
  p.x_star = solve_reference(*p.obj, 1e-10);
  p.agg_star = noise_aggregates_exact(*p.obj, p.part, p.x_star);
  return p;
}

RunConfig run_config(const Options& o) {
  RunConfig cfg;
  cfg.epsilon = o.eps;
  cfg.cap = o.cap;
  cfg.seed = o.seed;
  cfg.max_epochs = o.max_epochs;
  cfg.trace_every = o.trace_every;
  cfg.validate();
  return cfg;
}

void check_tau(std::size_t tau, const SamplingStrategy& family) {
  if (tau < 1 || tau > family.max_tau())
    throw std::invalid_argument(
        fmt::format("tau={} is infeasible: valid range is [1, {}]", tau, family.max_tau()));
}

std::vector<std::size_t> tau_grid(const Options& o, const SamplingStrategy& family) {
  std::vector<std::size_t> taus = o.taus;
  if (taus.empty())
    for (std::size_t t = 1; t <= family.max_tau(); ++t) taus.push_back(t);
  for (std::size_t t : taus) check_tau(t, family);
  return taus;
}

fs::path output_dir(const Options& o) {
  if (o.out.empty()) throw std::invalid_argument("--out DIR is required");
  fs::create_directories(o.out);
  return o.out;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  return f;
}

void write_trace(const fs::path& path, const std::vector<TraceRecord>& trace) {
  auto f = open_output(path);
  f << "iter,epochs,rel_error,tau,gamma,sigma,L\n";
  for (const auto& r : trace)
    fmt::print(f, "{},{},{},{},{},{},{}\n", r.iter, r.epochs, r.rel_error, r.tau, r.gamma, r.sigma, r.L);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  auto f = open_output(path);
  f << j.dump(2) << '\n';
}

nlohmann::json run_summary(const RunResult& r, const std::string& mode, const Options& o,
                           const TauChoice& star) {
  nlohmann::json j;
  j["mode"] = mode;
  j["sampling"] = o.sampling;
  j["objective"] = o.objective;
  j["epsilon"] = o.eps;
  j["seed"] = o.seed;
  j["reached"] = r.reached;
  j["epochs_to_target"] = r.reached ? nlohmann::json(r.epochs) : nlohmann::json(nullptr);
  j["epochs"] = r.epochs;
  j["iterations"] = r.iterations;
  j["final_rel_error"] = r.rel_error;
  j["tau_star"] = star.tau;
  j["tau_star_real"] = star.tau_real;
  return j;
}

int cmd_run(const Options& o, const std::string& mode, std::ostream& out) {
  if (mode != "adaptive" && mode != "fixed" && mode != "grid")
    throw std::invalid_argument(fmt::format("unknown mode '{}' (adaptive, fixed, grid)", mode));
  const auto variant = variant_from_string(o.sampling);
  const Problem p = load_problem(o, variant);
  const auto family = SamplingStrategy::make(variant, p.part, 1);
  const auto cfg = run_config(o);
  const auto dir = output_dir(o);
  const auto star = optimal_tau(family, p.profile, p.agg_star, o.eps, p.profile.mu);
  const auto grid_taus = mode == "grid" ? tau_grid(o, family) : std::vector<std::size_t>{};

  RunResult r;
  try {
    if (mode == "fixed") {
      const std::size_t tau = o.tau ? o.tau : star.tau;
      check_tau(tau, family);
      r = run_fixed(*p.obj, family.with_tau(tau), p.profile, cfg, p.x_star, p.agg_star);
    } else {
      r = run_adaptive(*p.obj, family, p.profile, cfg, p.x_star);
    }
  } catch (const DivergenceError& e) {
    write_trace(dir / "trace.csv", e.trace());
    throw;
  }
  write_trace(dir / "trace.csv", r.trace);
  auto summary = run_summary(r, mode, o, star);

  if (mode == "grid") {
    const auto grid = grid_search(*p.obj, family, p.profile, grid_taus, cfg, p.x_star, p.agg_star);
    auto f = open_output(dir / "grid.csv");
    f << "tau,epochs,reached\n";
    nlohmann::json g = nlohmann::json::array();
    for (const auto& [tau, e] : grid) {
      fmt::print(f, "{},{},{}\n", tau, e.epochs, e.reached ? 1 : 0);
      g.push_back({{"tau", tau}, {"epochs", e.epochs}, {"reached", e.reached}});
    }
    const double adaptive_epochs = r.reached ? r.epochs : cfg.max_epochs;
    summary["grid"] = g;
    summary["grid_percentile"] = grid_percentile(grid, adaptive_epochs);
  }
  write_json(dir / "summary.json", summary);
  fmt::print(out, "{}: reached={} epochs={:.4g} rel_error={:.3e} tau*={}\n", mode, r.reached,
             r.epochs, r.rel_error, star.tau);
  if (summary.contains("grid_percentile"))
    fmt::print(out, "grid entries faster than adaptive: {:.1f}%\n",
               summary["grid_percentile"].get<double>());
  return kExitOk;
}

int cmd_estimate(const Options& o, std::ostream& out) {
  const auto variant = variant_from_string(o.sampling);
  const Problem p = load_problem(o, variant);
  const auto family = SamplingStrategy::make(variant, p.part, 1);
  const auto taus = tau_grid(o, family);
  const double mu = p.profile.mu;
  const double d2 = (initial_point(run_config(o), p.obj->d()) - p.x_star).squaredNorm();

  std::ofstream file;
  if (!o.out.empty()) file = open_output(o.out);
  std::ostream& sink = o.out.empty() ? out : file;
  sink << "tau,L,sigma,tau_L,noise_term,T\n";
  for (std::size_t tau : taus) {
    const auto s = family.with_tau(tau);
    const auto t = total_complexity(s, p.profile, p.agg_star, o.eps, mu, d2);
    fmt::print(sink, "{},{},{},{},{},{}\n", tau, expected_smoothness(s, p.profile),
               gradient_noise(s, p.agg_star), t.smoothness_term, t.noise_term, t.value);
  }
  const auto star = optimal_tau(family, p.profile, p.agg_star, o.eps, mu);
  const auto at_star = total_complexity(family.with_tau(star.tau), p.profile, p.agg_star, o.eps, mu, d2);
  fmt::print(sink, "# tau_star={} tau_real={} binding={}{}{}\n", star.tau, star.tau_real,
             at_star.noise_binding() ? "noise" : "smoothness", star.gated ? " gated" : "",
             star.fallback ? " fallback" : "");
  return kExitOk;
}

int cmd_verify(const Options& o, std::ostream& out) {
  Options base = o;
  base.partitions = 1;
  base.q.clear();
  const Problem single = load_problem(base, SamplingVariant::nice);
  Options parted = o;
  const Problem partitioned = load_problem(parted, SamplingVariant::partition_nice);

  const std::size_t d = single.obj->d();
  Rng rng(mix_seed(o.seed, 0x7e57));
  std::vector<Eigen::VectorXd> points{single.x_star};
  for (std::size_t k = 0; k < o.points; ++k) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(d));
    for (Eigen::Index c = 0; c < x.size(); ++c) x[c] = single.x_star[c] + rng.normal();
    points.push_back(std::move(x));
  }

  std::size_t checks = 0, failures = 0;
  for (auto v : {SamplingVariant::nice, SamplingVariant::independent, SamplingVariant::partition_nice,
                 SamplingVariant::partition_independent}) {
    const Problem& p = is_partition_variant(v) ? partitioned : single;
    const auto family = SamplingStrategy::make(v, p.part, 1);
    for (std::size_t tau = 1; tau <= family.max_tau(); ++tau) {
      const auto s = family.with_tau(tau);
      double worst_diff = 0.0, worst_slack = -std::numeric_limits<double>::infinity();
      bool ok = true;
      for (const auto& x : points) {
        auto c = verify_noise_formula(s, *p.obj, p.profile, x, p.x_star);
        if (o.corrupt_formula) c.formula *= 1.0 + 1e-3;
        const double diff = std::abs(c.formula - c.enumerated);
        worst_diff = std::max(worst_diff, diff);
        worst_slack = std::max(worst_slack, c.smoothness_lhs - c.smoothness_rhs);
        ok = ok && diff <= 1e-9 * (1.0 + c.enumerated) && c.smoothness_lhs <= c.smoothness_rhs + 1e-9;
      }
      ++checks;
      failures += ok ? 0 : 1;
      fmt::print(out, "{} {} tau={} max_abs_diff={:.3e} max_bound_excess={:.3e}\n", ok ? "PASS" : "FAIL",
                 to_string(v), tau, worst_diff, worst_slack);
    }
  }
  fmt::print(out, "{} checks, {} failed\n", checks, failures);
  return failures ? kExitVerification : kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
  if (o.synth_n == 0) throw std::invalid_argument("--synth-n N is required");
  if (o.out.empty()) throw std::invalid_argument("--out FILE is required");
  SyntheticSpec spec{o.synth_n, o.synth_d, o.synth_noise, o.synth_signal, o.synth_seed, o.normalize};
  const auto syn = make_synthetic(spec);
  const fs::path path(o.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  {
    auto f = open_output(path);
    write_libsvm(f, syn.data);
  }
  auto f = open_output(fs::path(o.out + ".xbar"));
  for (Eigen::Index k = 0; k < syn.x_bar.size(); ++k) fmt::print(f, "{}\n", syn.x_bar[k]);
  fmt::print(out, "wrote {} (n={}, d={}) and {}.xbar\n", o.out, syn.data.n(), syn.data.d(), o.out);
  return kExitOk;
}

void add_common_options(CLI::App& app, Options& o) {
  app.add_option("--data", o.data, "LIBSVM data file");
  app.add_option("--synth-n", o.synth_n, "Generate a synthetic instance with N examples");
  app.add_option("--synth-d", o.synth_d, "Synthetic feature dimension");
  app.add_option("--synth-noise", o.synth_noise, "Synthetic label noise level");
  app.add_option("--synth-signal", o.synth_signal, "Scale of the synthetic generating model");
  app.add_option("--synth-seed", o.synth_seed, "Seed of the synthetic generator");
  app.add_flag("--normalize", o.normalize, "Scale rows to unit norm");
  app.add_option("--objective", o.objective, "Loss: ridge or logistic")
      ->check(CLI::IsMember({"ridge", "logistic"}));
  app.add_option("--lambda", o.lambda, "L2 regularization (also the strong convexity constant)");
  app.add_option("--partitions", o.partitions, "Number of contiguous partitions");
  app.add_option("--q", o.q, "Partition selection probabilities")->delimiter(',');
  app.add_option("--sampling", o.sampling, "nice, independent, pnice or pindependent")
      ->check(CLI::IsMember({"nice", "independent", "pnice", "pindependent"}));
  app.add_option("--tau", o.tau, "Batch size for fixed runs (default: theoretical optimum)");
  app.add_option("--taus", o.taus, "Batch sizes for grid and estimate (default: all)")->delimiter(',');
  app.add_option("--eps", o.eps, "Target neighborhood epsilon");
  app.add_option("--cap", o.cap, "Variance cap C (0 disables)");
  app.add_option("--seed", o.seed, "Seed for x0 and sampling");
  app.add_option("--max-epochs", o.max_epochs, "Epoch budget per run");
  app.add_option("--trace-every", o.trace_every, "Iterations between trace rows");
  app.add_option("--out", o.out, "Output directory (run, grid) or file (estimate, synth)");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Adaptive mini-batch SGD experiments"};
  app.name("adabatch");
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key = value file; command-line flags take precedence");
  add_common_options(app, o);

  auto* run = app.add_subcommand("run", "Run adaptive, fixed or grid experiments");
  run->fallthrough();
  run->add_option("--mode", o.mode, "adaptive, fixed or grid")
      ->check(CLI::IsMember({"adaptive", "fixed", "grid"}));
  auto* grid = app.add_subcommand("grid", "Grid over tau plus an adaptive run (run --mode grid)");
  grid->fallthrough();
  auto* estimate = app.add_subcommand("estimate", "Print the tau -> (L, sigma, T) table");
  estimate->fallthrough();
  auto* verify = app.add_subcommand("verify", "Check noise formulas against enumeration");
  verify->fallthrough();
  verify->add_option("--points", o.points, "Random points besides x*");
  verify->add_flag("--corrupt-formula", o.corrupt_formula)->group("");
  auto* synth = app.add_subcommand("synth", "Write a synthetic LIBSVM instance");
  synth->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) return cmd_run(o, o.mode, out);
    if (*grid) return cmd_run(o, "grid", out);
    if (*estimate) return cmd_estimate(o, out);
    if (*verify) return cmd_verify(o, out);
    if (*synth) return cmd_synth(o, out);
  } catch (const DivergenceError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitDivergence;
  } catch (const ParseError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitValidation;
  } catch (const EnumerationLimitError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitValidation;
  } catch (const std::domain_error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace adabatch
