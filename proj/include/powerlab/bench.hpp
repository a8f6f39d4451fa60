#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "clustering.hpp"
#include "core.hpp"
#include "matgen.hpp"
#include "rng.hpp"
#include "solvers.hpp"
#include "streaming.hpp"

namespace powerlab {

enum class Experiment { beta_sweep, lambda2_accuracy, iteration_grid, walltime_grid, stream_logerr, cluster_grid };

inline std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::beta_sweep: return "beta-sweep";
    case Experiment::lambda2_accuracy: return "lambda2-accuracy";
    case Experiment::iteration_grid: return "iteration-grid";
    case Experiment::walltime_grid: return "walltime-grid";
    case Experiment::stream_logerr: return "stream-logerr";
    case Experiment::cluster_grid: return "cluster-grid";
  }
  return "unknown";
}

inline Experiment parse_experiment(const std::string& s) {
  for (Experiment e : {Experiment::beta_sweep, Experiment::lambda2_accuracy, Experiment::iteration_grid,
                       Experiment::walltime_grid, Experiment::stream_logerr, Experiment::cluster_grid}) {
    if (to_string(e) == s) return e;
  }
  throw std::invalid_argument("unknown experiment '" + s + "'");
}

inline std::vector<std::string> default_methods(Experiment e) {
  switch (e) {
    case Experiment::beta_sweep: return {"powerm"};
    case Experiment::lambda2_accuracy: return {"dmpower", "simultaneous"};
    case Experiment::stream_logerr: return {"sgd-power", "minibatch-m", "oja", "dmstream"};
    default: return {"power", "powerm", "dmpower"};
  }
}

/// Maps the momentum-phase threshold eps to the pre-momentum precision rho.
struct RhoPolicy {
  enum class Kind { eps, sqrt, cbrt, fourth, fixed };

  Kind kind = Kind::eps;
  double value = 0.0;  // fixed only

  double apply(double eps) const {
    switch (kind) {
      case Kind::eps: return eps;
      case Kind::sqrt: return std::sqrt(eps);
      case Kind::cbrt: return std::cbrt(eps);
      case Kind::fourth: return std::sqrt(std::sqrt(eps));
      case Kind::fixed: return value;
    }
    return eps;
  }

  std::string tag() const {
    switch (kind) {
      case Kind::eps: return "eps";
      case Kind::sqrt: return "sqrt";
      case Kind::cbrt: return "cbrt";
      case Kind::fourth: return "fourth";
      case Kind::fixed: {
        std::ostringstream out;
        out.imbue(std::locale::classic());
        out << value;
        return out.str();
      }
    }
    return "eps";
  }

  static RhoPolicy parse(const std::string& s) {
    if (s == "eps") return {Kind::eps, 0.0};
    if (s == "sqrt") return {Kind::sqrt, 0.0};
    if (s == "cbrt") return {Kind::cbrt, 0.0};
    if (s == "fourth") return {Kind::fourth, 0.0};
    std::istringstream in(s);
    in.imbue(std::locale::classic());
    double v = 0.0;
    if (!(in >> v) || !in.eof() || !(v > 0.0 && v < 1.0)) {
      throw std::invalid_argument("rho policy must be eps, sqrt, cbrt, fourth or a number in (0,1): '" + s + "'");
    }
    return {Kind::fixed, v};
  }
};

struct ExperimentSpec {
  std::string name;  // written to the experiment column; defaults to the experiment kind
  Experiment experiment = Experiment::iteration_grid;
  std::vector<std::string> spectra{"step:10:0.1"};
  std::vector<double> epsilons{1e-3};
  std::vector<RhoPolicy> rho_policies{RhoPolicy{}};
  std::vector<std::optional<double>> betas;  // empty optional = lambda2^2/4 of the instance
  std::vector<std::string> methods;
  int trials = 50;
  std::uint64_t seed = 1;
  int n_samples = 1000;
  StopRule::Kind stop_kind = StopRule::Kind::iterate_distance;
  int max_iter = 100000;
  bool timing = false;
  MomentumScaling scaling = MomentumScaling::consistent;
  int threads = 1;
  // streaming
  std::vector<int> batch_sizes{500};
  std::vector<int> rounds{50};
  std::vector<double> oja_c{3.0, 9.0, 27.0, 81.0};
  OjaTimeIndex oja_index = OjaTimeIndex::samples;
  // clustering
  std::vector<std::string> datasets{"circles"};
  int circles_n = 1000;
  int moons_n = 500;
  double noise = 0.05;
  double circles_factor = 0.5;
  double sigma_fraction = 0.11;

  std::string label() const { return name.empty() ? to_string(experiment) : name; }

  void validate() const {
    detail::require(trials >= 1, "ExperimentSpec: trials must be at least 1");
    detail::require(!epsilons.empty(), "ExperimentSpec: need at least one epsilon");
    for (double e : epsilons) detail::require(e > 0.0 && e < 1.0, "ExperimentSpec: epsilon values must lie in (0,1)");
    detail::require(max_iter >= 1, "ExperimentSpec: max_iter must be positive");
    detail::require(threads >= 1, "ExperimentSpec: threads must be positive");
    detail::require(!methods.empty(), "ExperimentSpec: need at least one method");
    for (int r : rounds) detail::require(r >= 1, "ExperimentSpec: rounds must be positive");
    for (int b : batch_sizes) detail::require(b >= 1, "ExperimentSpec: batch sizes must be positive");
  }
};

/// One raw CSV row. Optional fields print as empty cells.
struct ResultRow {
  std::string experiment;
  std::string method;
  int d = 0;
  std::string spectrum_tag;
  double epsilon = 0.0;
  std::optional<double> rho;
  std::optional<double> beta;
  int trial = 0;
  std::uint64_t seed = 0;
  long long iterations_total = 0;
  long long iterations_pre = 0;
  long long iterations_mom = 0;
  long long walltime_ns = 0;
  std::optional<double> lambda2_abs_err;
  std::optional<double> sin2_final;
  std::optional<double> accuracy;
  std::optional<double> log_err;
};

inline const char* kCsvHeader =
    "experiment,method,d,spectrum-tag,epsilon,rho,beta,trial,seed,iterations_total,iterations_pre,iterations_mom,"
    "walltime_ns,lambda2_abs_err,sin2_final,accuracy,log_err";

namespace detail {

inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string format_optional(const std::optional<double>& x) { return x ? format_double(*x) : std::string(); }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace detail

inline void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kCsvHeader << '\n';
  for (const ResultRow& r : rows) {
    out << detail::csv_field(r.experiment) << ',' << detail::csv_field(r.method) << ',' << r.d << ','
        << detail::csv_field(r.spectrum_tag) << ',' << detail::format_double(r.epsilon) << ','
        << detail::format_optional(r.rho) << ',' << detail::format_optional(r.beta) << ',' << r.trial << ','
        << r.seed << ',' << r.iterations_total << ',' << r.iterations_pre << ',' << r.iterations_mom << ','
        << r.walltime_ns << ',' << detail::format_optional(r.lambda2_abs_err) << ','
        << detail::format_optional(r.sin2_final) << ',' << detail::format_optional(r.accuracy) << ','
        << detail::format_optional(r.log_err) << '\n';
  }
}

/// Wall time of one call in nanoseconds on the monotonic clock.
template <class Fn>
long long timeit(Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start).count();
}

struct CellSummary {
  std::string experiment;
  std::string method;
  int d = 0;
  std::string spectrum_tag;
  double epsilon = 0.0;
  std::optional<double> rho;
  std::optional<double> beta;
  int count = 0;
  double mean_iterations = 0.0;
  double median_iterations = 0.0;
  double mean_iterations_pre = 0.0;
  double mean_iterations_mom = 0.0;
  double mean_walltime_ns = 0.0;
  std::optional<double> mean_lambda2_abs_err;
  std::optional<double> mean_sin2_final;
  std::optional<double> mean_accuracy;
  std::optional<double> median_accuracy;
  std::optional<double> mean_log_err;
  std::optional<double> median_log_err;
};

inline double median_of(std::vector<double> v) {
  detail::require(!v.empty(), "median_of: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double mean_of(const std::vector<double>& v) {
  detail::require(!v.empty(), "mean_of: empty input");
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

/// Per-cell means and medians, cells in order of first appearance.
inline std::vector<CellSummary> summarize(const std::vector<ResultRow>& rows) {
  using Key = std::tuple<std::string, std::string, int, std::string, double, std::optional<double>,
                         std::optional<double>>;
  std::map<Key, std::size_t> index;
  std::vector<std::vector<const ResultRow*>> groups;
  for (const ResultRow& r : rows) {
    const Key key{r.experiment, r.method, r.d, r.spectrum_tag, r.epsilon, r.rho, r.beta};
    auto [it, fresh] = index.try_emplace(key, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(&r);
  }
  std::vector<CellSummary> out;
  for (const auto& g : groups) {
    CellSummary s;
    const ResultRow& f = *g.front();
    s.experiment = f.experiment;
    s.method = f.method;
    s.d = f.d;
    s.spectrum_tag = f.spectrum_tag;
    s.epsilon = f.epsilon;
    s.rho = f.rho;
    s.beta = f.beta;
    s.count = static_cast<int>(g.size());
    std::vector<double> it, pre, mom, wall, l2, sin2, acc, loge;
    for (const ResultRow* r : g) {
      it.push_back(double(r->iterations_total));
      pre.push_back(double(r->iterations_pre));
      mom.push_back(double(r->iterations_mom));
      wall.push_back(double(r->walltime_ns));
      if (r->lambda2_abs_err) l2.push_back(*r->lambda2_abs_err);
      if (r->sin2_final) sin2.push_back(*r->sin2_final);
      if (r->accuracy) acc.push_back(*r->accuracy);
      if (r->log_err) loge.push_back(*r->log_err);
    }
    s.mean_iterations = mean_of(it);
    s.median_iterations = median_of(it);
    s.mean_iterations_pre = mean_of(pre);
    s.mean_iterations_mom = mean_of(mom);
    s.mean_walltime_ns = mean_of(wall);
    if (!l2.empty()) s.mean_lambda2_abs_err = mean_of(l2);
    if (!sin2.empty()) s.mean_sin2_final = mean_of(sin2);
    if (!acc.empty()) {
      s.mean_accuracy = mean_of(acc);
      s.median_accuracy = median_of(acc);
    }
    if (!loge.empty()) {
      s.mean_log_err = mean_of(loge);
      s.median_log_err = median_of(loge);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_summary_csv(std::ostream& out, const std::vector<CellSummary>& cells) {
  out << "experiment,method,d,spectrum-tag,epsilon,rho,beta,count,mean_iterations,median_iterations,"
         "mean_iterations_pre,mean_iterations_mom,mean_walltime_ns,mean_lambda2_abs_err,mean_sin2_final,"
         "mean_accuracy,median_accuracy,mean_log_err,median_log_err\n";
  for (const CellSummary& c : cells) {
    out << detail::csv_field(c.experiment) << ',' << detail::csv_field(c.method) << ',' << c.d << ','
        << detail::csv_field(c.spectrum_tag) << ',' << detail::format_double(c.epsilon) << ','
        << detail::format_optional(c.rho) << ',' << detail::format_optional(c.beta) << ',' << c.count << ','
        << detail::format_double(c.mean_iterations) << ',' << detail::format_double(c.median_iterations) << ','
        << detail::format_double(c.mean_iterations_pre) << ',' << detail::format_double(c.mean_iterations_mom)
        << ',' << detail::format_double(c.mean_walltime_ns) << ','
        << detail::format_optional(c.mean_lambda2_abs_err) << ',' << detail::format_optional(c.mean_sin2_final)
        << ',' << detail::format_optional(c.mean_accuracy) << ',' << detail::format_optional(c.median_accuracy)
        << ',' << detail::format_optional(c.mean_log_err) << ',' << detail::format_optional(c.median_log_err)
        << '\n';
  }
}

namespace detail {

struct TrialContext {
  const ExperimentSpec& spec;
  std::size_t cell;  // spectrum or dataset index
  int trial;
  std::uint64_t seed;
};

inline StopRule make_stop(const ExperimentSpec& spec, double eps) {
  StopRule rule;
  rule.kind = spec.stop_kind;
  rule.threshold = eps;
  rule.max_iter = spec.max_iter;
  rule.validate();
  return rule;
}

inline ResultRow base_row(const TrialContext& ctx, const std::string& method, int d, const std::string& tag,
                          double eps) {
  ResultRow r;
  r.experiment = ctx.spec.label();
  r.method = method;
  r.d = d;
  r.spectrum_tag = tag;
  r.epsilon = eps;
  r.trial = ctx.trial;
  r.seed = ctx.seed;
  return r;
}

template <class Fn>
SolveReport timed(const ExperimentSpec& spec, ResultRow& row, Fn&& fn) {
  SolveReport report;
  const long long ns = timeit([&] { report = fn(); });
  row.walltime_ns = spec.timing ? ns : 0;
  return report;
}

inline void fill_counts(ResultRow& row, const SolveReport& report) {
  row.iterations_total = report.iterations_total;
  row.iterations_pre = report.iterations_pre_momentum;
  row.iterations_mom = report.iterations_momentum;
}

inline std::vector<ResultRow> run_matrix_trial(const TrialContext& ctx) {
  const ExperimentSpec& spec = ctx.spec;
  const std::string& tag = spec.spectra[ctx.cell];
  const Spectrum spectrum = parse_spectrum(tag);
  const GeneratedInstance inst = synth_covariance(spectrum, std::max(spec.n_samples, spectrum.dim()), ctx.seed);
  const int d = inst.dim();
  Rng start_rng(derive_seed(ctx.seed, {1}));
  const UnitVector q0 = random_unit_vector(d, start_rng);
  const UnitVector w0 = random_unit_vector(d, start_rng);
  const Vector v1 = inst.eigenvectors.col(0);
  const double lambda2 = spectrum[1];
  const double oracle_beta = lambda2 * lambda2 / 4.0;

  std::vector<ResultRow> rows;
  for (double eps : spec.epsilons) {
    const StopRule stop = make_stop(spec, eps);
    for (const std::string& method : spec.methods) {
      if (method == "power") {
        ResultRow row = base_row(ctx, method, d, tag, eps);
        const SolveReport rep = timed(spec, row, [&] { return power_method(inst.covariance, q0, stop); });
        fill_counts(row, rep);
        row.sin2_final = sin2_error(rep.estimate.vector.vector(), v1);
        rows.push_back(std::move(row));
      } else if (method == "powerm") {
        std::vector<std::optional<double>> betas = spec.betas;
        if (betas.empty()) betas.push_back(std::nullopt);
        for (const auto& b : betas) {
          const double beta = b.value_or(oracle_beta);
          ResultRow row = base_row(ctx, method, d, tag, eps);
          row.beta = beta;
          const SolveReport rep = timed(spec, row, [&] {
            return power_momentum(inst.covariance, q0, MomentumConfig{beta, spec.scaling}, stop);
          });
          fill_counts(row, rep);
          row.sin2_final = sin2_error(rep.estimate.vector.vector(), v1);
          rows.push_back(std::move(row));
        }
      } else if (method == "dmpower") {
        for (const RhoPolicy& policy : spec.rho_policies) {
          DMPowerConfig cfg;
          cfg.rho = policy.apply(eps);
          cfg.momentum_stop = stop;
          cfg.max_pre_iter = spec.max_iter;
          cfg.scaling = spec.scaling;
          ResultRow row = base_row(ctx, method, d, tag, eps);
          row.rho = cfg.rho;
          const SolveReport rep = timed(spec, row, [&] { return dmpower(inst.covariance, q0, w0, cfg); });
          fill_counts(row, rep);
          row.beta = rep.beta_used;
          row.lambda2_abs_err = std::abs(*rep.lambda2_estimate - lambda2);
          row.sin2_final = sin2_error(rep.estimate.vector.vector(), v1);
          rows.push_back(std::move(row));
        }
      } else if (method == "simultaneous") {
        ResultRow row = base_row(ctx, method, d, tag, eps);
        Rng block_rng(derive_seed(ctx.seed, {2}));
        const Matrix block = random_start_block(q0, 2, block_rng);
        SimultaneousReport rep;
        const long long ns = timeit([&] { rep = simultaneous_iteration(inst.covariance, block, stop); });
        row.walltime_ns = spec.timing ? ns : 0;
        row.iterations_total = row.iterations_mom = rep.iterations;
        row.lambda2_abs_err = std::abs(rep.estimates[1].value - lambda2);
        row.sin2_final = sin2_error(rep.estimates[0].vector.vector(), v1);
        rows.push_back(std::move(row));
      } else if (method == "lanczos") {
        ResultRow row = base_row(ctx, method, d, tag, eps);
        LanczosReport rep;
        const long long ns = timeit([&] { rep = lanczos(inst.covariance, q0, d, true, eps); });
        row.walltime_ns = spec.timing ? ns : 0;
        row.iterations_total = row.iterations_mom = rep.iterations;
        row.sin2_final = sin2_error(rep.estimate.vector.vector(), v1);
        rows.push_back(std::move(row));
      } else {
        throw std::invalid_argument("unknown method '" + method + "' for " + to_string(spec.experiment));
      }
    }
  }
  return rows;
}

inline std::vector<ResultRow> run_stream_trial(const TrialContext& ctx) {
  const ExperimentSpec& spec = ctx.spec;
  const std::string& tag = spec.spectra[ctx.cell];
  const Spectrum spectrum = parse_spectrum(tag);
  const GeneratedInstance inst = synth_covariance(spectrum, std::max(spec.n_samples, spectrum.dim()), ctx.seed);
  const int d = inst.dim();
  Rng start_rng(derive_seed(ctx.seed, {1}));
  const UnitVector q0 = random_unit_vector(d, start_rng);
  const UnitVector w0 = random_unit_vector(d, start_rng);
  const UnitVector v1 = inst.top_vector();
  const double oracle_beta = spectrum[1] * spectrum[1] / 4.0;
  const std::uint64_t stream_seed = derive_seed(ctx.seed, {3});
  const double eps = spec.epsilons.front();

  std::vector<ResultRow> rows;
  for (int batch : spec.batch_sizes) {
    for (int rounds : spec.rounds) {
      StreamConfig cfg;
      cfg.batch_size = batch;
      cfg.rounds = rounds;
      cfg.scaling = spec.scaling;
      cfg.oja_index = spec.oja_index;
      const std::string cell_tag = tag + "/batch=" + std::to_string(batch) + "/rounds=" + std::to_string(rounds);
      auto run = [&](const std::string& method, const StreamConfig& c, std::optional<double> rho, auto&& solve) {
        SampleStream stream = SampleStream::gaussian(inst.covariance, stream_seed);
        ResultRow row = base_row(ctx, method, d, cell_tag, eps);
        row.rho = rho;
        const SolveReport rep = timed(spec, row, [&] { return solve(stream, c); });
        fill_counts(row, rep);
        row.beta = rep.beta_used;
        if (rep.lambda2_estimate) row.lambda2_abs_err = std::abs(*rep.lambda2_estimate - spectrum[1]);
        row.log_err = log_error_metric(inst.data, rep.estimate.vector, v1);
        row.sin2_final = sin2_error(rep.estimate.vector, v1);
        rows.push_back(std::move(row));
      };
      for (const std::string& method : spec.methods) {
        if (method == "sgd-power") {
          run(method, cfg, std::nullopt,
              [&](SampleStream& s, const StreamConfig& c) { return stochastic_power(s, q0, c); });
        } else if (method == "minibatch-m") {
          std::vector<std::optional<double>> betas = spec.betas;
          if (betas.empty()) betas.push_back(std::nullopt);
          for (const auto& b : betas) {
            StreamConfig c = cfg;
            c.beta = b.value_or(oracle_beta);
            run(method, c, std::nullopt,
                [&](SampleStream& s, const StreamConfig& cc) { return minibatch_power_momentum(s, q0, cc); });
          }
        } else if (method == "oja") {
          for (double c_value : spec.oja_c) {
            StreamConfig c = cfg;
            c.oja_c = c_value;
            run("oja-" + format_double(c_value), c, std::nullopt,
                [&](SampleStream& s, const StreamConfig& cc) { return oja(s, q0, cc); });
          }
        } else if (method == "dmstream") {
          for (const RhoPolicy& policy : spec.rho_policies) {
            StreamConfig c = cfg;
            c.rho = policy.apply(eps);
            run(method, c, c.rho,
                [&](SampleStream& s, const StreamConfig& cc) { return dmstream(s, q0, w0, cc); });
          }
        } else {
          throw std::invalid_argument("unknown method '" + method + "' for stream-logerr");
        }
      }
    }
  }
  return rows;
}

inline PointSet make_dataset(const ExperimentSpec& spec, const std::string& name, std::uint64_t seed) {
  if (name == "circles") return make_circles(spec.circles_n, spec.circles_factor, spec.noise, seed);
  if (name == "moons") return make_moons(spec.moons_n, spec.noise, seed);
  throw std::invalid_argument("unknown dataset '" + name + "'");
}

inline std::vector<ResultRow> run_cluster_trial(const TrialContext& ctx) {
  const ExperimentSpec& spec = ctx.spec;
  const std::string& name = spec.datasets[ctx.cell];
  const PointSet points = make_dataset(spec, name, ctx.seed);
  DpicOptions opts;
  opts.similarity = Similarity::gaussian_median_fraction(spec.sigma_fraction);
  opts.max_iter = spec.max_iter;
  opts.scaling = spec.scaling;
  const std::uint64_t dpic_seed = derive_seed(ctx.seed, {4});

  std::vector<ResultRow> rows;
  for (double eps : spec.epsilons) {
    auto run = [&](const std::string& method, const DpicSolver& solver, std::optional<double> rho) {
      ResultRow row = base_row(ctx, method, points.size(), name, eps);
      row.rho = rho;
      row.beta = solver.beta;
      ClusterResult res;
      const long long ns = timeit([&] { res = dpic(points, solver, eps, dpic_seed, opts); });
      row.walltime_ns = spec.timing ? ns : 0;
      row.iterations_total = row.iterations_mom = res.solver_iterations;
      row.accuracy = res.accuracy;
      rows.push_back(std::move(row));
    };
    for (const std::string& method : spec.methods) {
      if (method == "power") {
        run(method, DpicSolver::power(), std::nullopt);
      } else if (method == "powerm") {
        std::vector<std::optional<double>> betas = spec.betas;
        if (betas.empty()) betas.push_back(std::nullopt);
        for (const auto& b : betas) run(method, DpicSolver::momentum(b), std::nullopt);
      } else if (method == "dmpower") {
        for (const RhoPolicy& policy : spec.rho_policies) {
          const double rho = policy.apply(eps);
          run(method, DpicSolver::dm(rho), rho);
        }
      } else {
        throw std::invalid_argument("unknown method '" + method + "' for cluster-grid");
      }
    }
  }
  return rows;
}

}  // namespace detail

/// Runs every (cell, trial) unit of the grid and returns raw rows in a fixed
/// order. Units may execute on several threads; the output does not depend on it.
inline std::vector<ResultRow> run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const bool clustering = spec.experiment == Experiment::cluster_grid;
  const std::size_t cells = clustering ? spec.datasets.size() : spec.spectra.size();
  detail::require(cells >= 1, "run_experiment: nothing to run");
  std::function<std::vector<ResultRow>(const detail::TrialContext&)> unit;
  switch (spec.experiment) {
    case Experiment::stream_logerr: unit = detail::run_stream_trial; break;
    case Experiment::cluster_grid: unit = detail::run_cluster_trial; break;
    default: unit = detail::run_matrix_trial; break;
  }

  const std::size_t total = cells * static_cast<std::size_t>(spec.trials);
  std::vector<std::vector<ResultRow>> slots(total);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      const std::size_t cell = i / spec.trials;
      const int trial = static_cast<int>(i % spec.trials);
      try {
        const std::uint64_t seed = derive_seed(spec.seed, {cell, static_cast<std::uint64_t>(trial)});
        slots[i] = unit(detail::TrialContext{spec, cell, trial, seed});
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int workers = std::min<int>(spec.threads, static_cast<int>(total));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<ResultRow> rows;
  for (auto& slot : slots)
    for (ResultRow& r : slot) rows.push_back(std::move(r));
  return rows;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_number(const std::string& key, const std::string& s) {
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  double v = 0.0;
  if (!(in >> v) || !in.eof()) throw std::invalid_argument("config key '" + key + "': not a number: '" + s + "'");
  return v;
}

inline long long parse_integer(const std::string& key, const std::string& s) {
  const double v = parse_number(key, s);
  if (v != std::floor(v)) throw std::invalid_argument("config key '" + key + "': not an integer: '" + s + "'");
  return static_cast<long long>(v);
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("config key '" + key + "': expected true/false, got '" + s + "'");
}

}  // namespace detail

/// Parses a flat key=value config. Blank lines and lines starting with '#' are ignored.
/// Lists are comma-separated except `spectra`, which uses ';' since a spectrum may contain commas.
inline ExperimentSpec parse_config(std::istream& in) {
  ExperimentSpec spec;
  bool have_experiment = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    const std::vector<std::string> list = detail::split_list(value);
    if (key == "experiment") {
      spec.experiment = parse_experiment(value);
      have_experiment = true;
    } else if (key == "name") {
      spec.name = value;
    } else if (key == "spectra") {
      spec.spectra = detail::split_list(value, ';');
      for (const std::string& s : spec.spectra) parse_spectrum(s);
    } else if (key == "epsilons") {
      spec.epsilons.clear();
      for (const std::string& s : list) spec.epsilons.push_back(detail::parse_number(key, s));
    } else if (key == "rho_policies") {
      spec.rho_policies.clear();
      for (const std::string& s : list) spec.rho_policies.push_back(RhoPolicy::parse(s));
    } else if (key == "betas") {
      spec.betas.clear();
      for (const std::string& s : list) {
        if (s == "opt") spec.betas.push_back(std::nullopt);
        else spec.betas.push_back(detail::parse_number(key, s));
      }
    } else if (key == "methods") {
      spec.methods = list;
    } else if (key == "trials") {
      spec.trials = static_cast<int>(detail::parse_integer(key, value));
    } else if (key == "seed") {
      spec.seed = static_cast<std::uint64_t>(detail::parse_integer(key, value));
    } else if (key == "n_samples") {
      spec.n_samples = static_cast<int>(detail::parse_integer(key, value));
    } else if (key == "stop") {
      if (value == "iterate") spec.stop_kind = StopRule::Kind::iterate_distance;
      else if (value == "rayleigh") spec.stop_kind = StopRule::Kind::rayleigh_distance;
      else throw std::invalid_argument("config key 'stop': expected iterate or rayleigh");
    } else if (key == "max_iter") {
      spec.max_iter = static_cast<int>(detail::parse_integer(key, value));
    } else if (key == "timing") {
      spec.timing = detail::parse_bool(key, value);
    } else if (key == "momentum_scaling") {
      if (value == "consistent") spec.scaling = MomentumScaling::consistent;
      else if (value == "literal") spec.scaling = MomentumScaling::literal;
      else throw std::invalid_argument("config key 'momentum_scaling': expected consistent or literal");
    } else if (key == "threads") {
      spec.threads = static_cast<int>(detail::parse_integer(key, value));
    } else if (key == "batch_sizes") {
      spec.batch_sizes.clear();
      for (const std::string& s : list) spec.batch_sizes.push_back(static_cast<int>(detail::parse_integer(key, s)));
    } else if (key == "rounds") {
      spec.rounds.clear();
      for (const std::string& s : list) spec.rounds.push_back(static_cast<int>(detail::parse_integer(key, s)));
    } else if (key == "oja_c") {
      spec.oja_c.clear();
      for (const std::string& s : list) spec.oja_c.push_back(detail::parse_number(key, s));
    } else if (key == "oja_time_index") {
      if (value == "samples") spec.oja_index = OjaTimeIndex::samples;
      else if (value == "rounds") spec.oja_index = OjaTimeIndex::rounds;
      else throw std::invalid_argument("config key 'oja_time_index': expected samples or rounds");
    } else if (key == "datasets") {
      spec.datasets = list;
    } else if (key == "circles_n") {
      spec.circles_n = static_cast<int>(detail::parse_integer(key, value));
    } else if (key == "moons_n") {
      spec.moons_n = static_cast<int>(detail::parse_integer(key, value));
    } else if (key == "noise") {
      spec.noise = detail::parse_number(key, value);
    } else if (key == "circles_factor") {
      spec.circles_factor = detail::parse_number(key, value);
    } else if (key == "sigma_fraction") {
      spec.sigma_fraction = detail::parse_number(key, value);
    } else {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (!have_experiment) throw std::invalid_argument("config: missing 'experiment' key");
  if (spec.methods.empty()) spec.methods = default_methods(spec.experiment);
  spec.validate();
  return spec;
}

inline ExperimentSpec load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  return parse_config(in);
}

}  // namespace powerlab
