#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include "powerlab/bench.hpp"
#include "powerlab/bounds.hpp"
#include "powerlab/clustering.hpp"
#include "powerlab/core.hpp"
#include "powerlab/io.hpp"
#include "powerlab/matgen.hpp"
#include "powerlab/rng.hpp"
#include "powerlab/solvers.hpp"
#include "powerlab/streaming.hpp"

namespace {

using namespace powerlab;

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.imbue(std::locale::classic());
  return out;
}

MomentumScaling parse_scaling(const std::string& s) {
  if (s == "consistent") return MomentumScaling::consistent;
  if (s == "literal") return MomentumScaling::literal;
  throw std::invalid_argument("momentum scaling must be consistent or literal");
}

RhoMode parse_rho_mode(const std::string& s) {
  if (s == "mu-diff") return RhoMode::mu_diff;
  if (s == "w-diff") return RhoMode::w_diff;
  if (s == "fixed-j") return RhoMode::fixed_j;
  throw std::invalid_argument("rho mode must be mu-diff, w-diff or fixed-j");
}

void print_report(std::ostream& out, const SolveReport& r) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "eigenvalue " << r.estimate.value << '\n';
  out << "iterations_total " << r.iterations_total << '\n';
  out << "iterations_pre " << r.iterations_pre_momentum << '\n';
  out << "iterations_mom " << r.iterations_momentum << '\n';
  if (r.lambda2_estimate) out << "lambda2_estimate " << *r.lambda2_estimate << '\n';
  if (r.beta_used) out << "beta " << *r.beta_used << '\n';
  if (r.samples_consumed > 0) out << "samples " << r.samples_consumed << '\n';
  out << "converged " << (r.converged ? "true" : "false") << '\n';
}

void write_vector(const std::string& path, const Vector& v) {
  std::ofstream out = open_output(path);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << v.size() << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << v(i) << '\n';
}

struct GenArgs {
  std::string spectrum;
  int n = 1000;
  std::uint64_t seed = 1;
  std::string matrix_out;
  std::string samples_out;
};

int run_gen(const GenArgs& a) {
  const GeneratedInstance inst = synth_covariance(parse_spectrum(a.spectrum), a.n, a.seed);
  if (!a.matrix_out.empty()) {
    std::ofstream out = open_output(a.matrix_out);
    io::write_matrix(out, inst.covariance);
  }
  if (!a.samples_out.empty()) {
    std::ofstream out = open_output(a.samples_out);
    io::write_samples(out, inst.data);
  }
  if (a.matrix_out.empty() && a.samples_out.empty()) io::write_matrix(std::cout, inst.covariance);
  return 0;
}

struct SolveArgs {
  std::string matrix;
  std::string synthetic;
  std::string method = "dmpower";
  std::optional<double> beta;
  std::optional<double> rho;
  std::string rho_policy;
  std::string rho_mode = "mu-diff";
  int fixed_j = 0;
  double eps = 1e-9;
  std::string stop = "iterate";
  int max_iter = 100000;
  std::uint64_t seed = 1;
  std::string scaling = "consistent";
  std::string vector_out;
};

int run_solve(const SolveArgs& a) {
  SymmetricMatrix m;
  if (!a.matrix.empty()) {
    m = io::with_input_file(a.matrix, [](std::istream& in) { return io::read_matrix(in); });
  } else if (!a.synthetic.empty()) {
    const Spectrum s = parse_spectrum(a.synthetic);
    m = synth_covariance(s, std::max(1000, s.dim()), a.seed).covariance;
  } else {
    throw std::invalid_argument("solve: give --matrix or --synthetic");
  }
  const StopRule stop = a.stop == "rayleigh" ? StopRule::rayleigh(a.eps, a.max_iter) : StopRule::iterate(a.eps, a.max_iter);
  Rng rng(derive_seed(a.seed, {1}));
  const UnitVector q0 = random_unit_vector(m.dim(), rng);
  const UnitVector w0 = random_unit_vector(m.dim(), rng);
  const MomentumScaling scaling = parse_scaling(a.scaling);

  Vector final_vector;
  if (a.method == "power") {
    const SolveReport r = power_method(m, q0, stop);
    print_report(std::cout, r);
    final_vector = r.estimate.vector.vector();
  } else if (a.method == "powerm") {
    double beta = 0.0;
    if (a.beta) {
      beta = *a.beta;
    } else {
      const double second = oracle_eigh(m).spectrum[1];
      beta = second * second / 4.0;
    }
    const SolveReport r = power_momentum(m, q0, MomentumConfig{beta, scaling}, stop);
    print_report(std::cout, r);
    final_vector = r.estimate.vector.vector();
  } else if (a.method == "dmpower") {
    DMPowerConfig cfg;
    if (a.rho && !a.rho_policy.empty()) throw std::invalid_argument("solve: give --rho or --rho-policy, not both");
    cfg.rho = a.rho ? *a.rho : RhoPolicy::parse(a.rho_policy.empty() ? "eps" : a.rho_policy).apply(a.eps);
    cfg.rho_mode = parse_rho_mode(a.rho_mode);
    cfg.fixed_j = a.fixed_j;
    cfg.momentum_stop = stop;
    cfg.max_pre_iter = a.max_iter;
    cfg.scaling = scaling;
    const SolveReport r = dmpower(m, q0, w0, cfg);
    std::cout << "rho " << cfg.rho << '\n';
    print_report(std::cout, r);
    final_vector = r.estimate.vector.vector();
  } else if (a.method == "simultaneous") {
    const SimultaneousReport r = simultaneous_iteration(m, random_start_block(q0, 2, rng), stop);
    std::cout << std::setprecision(std::numeric_limits<double>::max_digits10);
    std::cout << "eigenvalue " << r.estimates[0].value << '\n';
    std::cout << "lambda2_estimate " << r.estimates[1].value << '\n';
    std::cout << "iterations_total " << r.iterations << '\n';
    std::cout << "converged " << (r.converged ? "true" : "false") << '\n';
    final_vector = r.estimates[0].vector.vector();
  } else if (a.method == "lanczos") {
    const LanczosReport r = lanczos(m, q0, std::min(m.dim(), a.max_iter));
    std::cout << std::setprecision(std::numeric_limits<double>::max_digits10);
    std::cout << "eigenvalue " << r.estimate.value << '\n';
    std::cout << "iterations_total " << r.iterations << '\n';
    std::cout << "residual " << r.residual << '\n';
    std::cout << "converged " << (r.converged ? "true" : "false") << '\n';
    final_vector = r.estimate.vector.vector();
  } else {
    throw std::invalid_argument("solve: unknown method '" + a.method + "'");
  }
  if (!a.vector_out.empty()) write_vector(a.vector_out, final_vector);
  return 0;
}

struct StreamArgs {
  std::string samples;
  std::string synthetic;
  int n = 1000;
  std::string method = "dmstream";
  int batch = 500;
  int rounds = 50;
  int max_pre_rounds = 0;
  double rho = 0.1;
  std::optional<double> beta;
  double oja_c = 27.0;
  std::string oja_index = "samples";
  std::string epochs = "reshuffle";
  std::uint64_t seed = 1;
  std::string scaling = "consistent";
};

int run_stream(const StreamArgs& a) {
  Matrix data;
  std::optional<SampleStream> stream;
  std::optional<SymmetricMatrix> truth;
  if (!a.samples.empty()) {
    data = io::with_input_file(a.samples, [](std::istream& in) { return io::read_samples(in); });
    const EpochPolicy policy = a.epochs == "one-pass" ? EpochPolicy::one_pass : EpochPolicy::reshuffle;
    if (a.epochs != "one-pass" && a.epochs != "reshuffle") throw std::invalid_argument("stream: --epochs must be reshuffle or one-pass");
    stream = SampleStream::from_matrix(data, derive_seed(a.seed, {3}), policy);
    truth = SymmetricMatrix::symmetrized(data.transpose() * data / double(data.rows()));
  } else if (!a.synthetic.empty()) {
    const GeneratedInstance inst = synth_covariance(parse_spectrum(a.synthetic), a.n, a.seed);
    data = inst.data;
    truth = inst.covariance;
    stream = SampleStream::gaussian(inst.covariance, derive_seed(a.seed, {3}));
  } else {
    throw std::invalid_argument("stream: give --samples or --synthetic");
  }
  const int d = stream->dim();
  Rng rng(derive_seed(a.seed, {1}));
  const UnitVector q0 = random_unit_vector(d, rng);
  const UnitVector w0 = random_unit_vector(d, rng);

  StreamConfig cfg;
  cfg.batch_size = a.batch;
  cfg.rounds = a.rounds;
  cfg.max_pre_rounds = a.max_pre_rounds;
  cfg.rho = a.rho;
  cfg.beta = a.beta;
  cfg.oja_c = a.oja_c;
  if (a.oja_index == "samples") cfg.oja_index = OjaTimeIndex::samples;
  else if (a.oja_index == "rounds") cfg.oja_index = OjaTimeIndex::rounds;
  else throw std::invalid_argument("stream: --oja-index must be samples or rounds");
  cfg.scaling = parse_scaling(a.scaling);

  const EigenDecomposition eig = oracle_eigh(*truth);
  SolveReport r;
  if (a.method == "sgd-power") {
    r = stochastic_power(*stream, q0, cfg);
  } else if (a.method == "minibatch-m") {
    if (!cfg.beta) cfg.beta = eig.spectrum[1] * eig.spectrum[1] / 4.0;
    r = minibatch_power_momentum(*stream, q0, cfg);
  } else if (a.method == "oja") {
    r = oja(*stream, q0, cfg);
  } else if (a.method == "dmstream") {
    r = dmstream(*stream, q0, w0, cfg);
  } else {
    throw std::invalid_argument("stream: unknown method '" + a.method + "'");
  }
  print_report(std::cout, r);
  const UnitVector v1(eig.vector(0));
  std::cout << "sin2 " << sin2_error(r.estimate.vector, v1) << '\n';
  std::cout << "log_err " << log_error_metric(data, r.estimate.vector, v1) << '\n';
  return 0;
}

struct ClusterArgs {
  std::string dataset = "circles";
  std::string points;
  int n = 0;
  double noise = 0.05;
  double factor = 0.5;
  std::string solver = "dmpower";
  std::optional<double> beta;
  std::optional<double> rho;
  std::string rho_policy = "cbrt";
  double eps = 1e-8;
  std::uint64_t seed = 1;
  std::string similarity = "gaussian";
  std::optional<double> sigma;
  double sigma_fraction = Similarity{}.sigma_fraction;
  int max_iter = 100000;
  std::string labels_out;
};

int run_cluster(const ClusterArgs& a) {
  PointSet set;
  if (a.dataset == "circles") {
    set = make_circles(a.n > 0 ? a.n : 1000, a.factor, a.noise, a.seed);
  } else if (a.dataset == "moons") {
    set = make_moons(a.n > 0 ? a.n : 500, a.noise, a.seed);
  } else if (a.dataset == "file") {
    if (a.points.empty()) throw std::invalid_argument("cluster: --dataset file needs --points");
    io::PointsFile f = io::with_input_file(a.points, [](std::istream& in) { return io::read_points(in); });
    set.points = std::move(f.points);
    set.labels = std::move(f.labels);
  } else {
    throw std::invalid_argument("cluster: unknown dataset '" + a.dataset + "'");
  }

  DpicOptions opts;
  if (a.similarity == "gaussian") {
    opts.similarity = a.sigma ? Similarity::gaussian(*a.sigma) : Similarity::gaussian_median_fraction(a.sigma_fraction);
  } else if (a.similarity == "l2") {
    opts.similarity = Similarity::l2_distance();
  } else {
    throw std::invalid_argument("cluster: --similarity must be gaussian or l2");
  }
  opts.max_iter = a.max_iter;

  DpicSolver solver;
  if (a.solver == "power") solver = DpicSolver::power();
  else if (a.solver == "powerm") solver = DpicSolver::momentum(a.beta);
  else if (a.solver == "dmpower") solver = DpicSolver::dm(a.rho ? *a.rho : RhoPolicy::parse(a.rho_policy).apply(a.eps));
  else throw std::invalid_argument("cluster: unknown solver '" + a.solver + "'");

  const ClusterResult r = dpic(set, solver, a.eps, a.seed, opts);
  std::cout << "points " << set.size() << '\n';
  std::cout << "iterations_total " << r.solver_iterations << '\n';
  std::cout << "converged " << (r.converged ? "true" : "false") << '\n';
  if (set.labels) std::cout << "accuracy " << r.accuracy << '\n';
  if (!a.labels_out.empty()) {
    std::ofstream out = open_output(a.labels_out);
    io::write_labels(out, r.labels);
  }
  return 0;
}

struct BenchArgs {
  std::string experiment;
  std::string config;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
  std::string summary;
  bool timing = false;
};

int run_bench(const BenchArgs& a) {
  ExperimentSpec spec;
  if (!a.config.empty()) {
    spec = load_config(a.config);
    if (!a.experiment.empty() && parse_experiment(a.experiment) != spec.experiment) {
      throw std::invalid_argument("bench: --experiment disagrees with the config file");
    }
  } else if (!a.experiment.empty()) {
    spec.experiment = parse_experiment(a.experiment);
    spec.methods = default_methods(spec.experiment);
  } else {
    throw std::invalid_argument("bench: give --experiment or --config");
  }
  if (a.trials) spec.trials = *a.trials;
  if (a.seed) spec.seed = *a.seed;
  if (a.threads) spec.threads = *a.threads;
  if (a.timing) spec.timing = true;
  spec.validate();

  std::ofstream out;
  if (!a.out.empty()) out = open_output(a.out);
  std::ofstream summary;
  if (!a.summary.empty()) summary = open_output(a.summary);

  const std::vector<ResultRow> rows = run_experiment(spec);
  write_csv(a.out.empty() ? std::cout : out, rows);
  const std::vector<CellSummary> cells = summarize(rows);
  if (!a.summary.empty()) {
    write_summary_csv(summary, cells);
  } else if (!a.out.empty()) {
    write_summary_csv(std::cout, cells);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::cout.imbue(std::locale::classic());
  CLI::App app{"Momentum-accelerated power methods: solvers, streaming PCA, spectral clustering, benchmarks"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "Generate a covariance matrix with a prescribed spectrum");
  gen_cmd->add_option("--spectrum", gen.spectrum, "step:d:gap, decay:d or list:v1,v2,... [:unit-trace]")->required();
  gen_cmd->add_option("--n", gen.n, "Number of samples");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out", gen.matrix_out, "Matrix file (header d)");
  gen_cmd->add_option("--samples-out", gen.samples_out, "Samples file (header n d)");

  SolveArgs solve;
  CLI::App* solve_cmd = app.add_subcommand("solve", "Top eigenpair of a dense symmetric matrix");
  solve_cmd->add_option("--matrix", solve.matrix, "Matrix file");
  solve_cmd->add_option("--synthetic", solve.synthetic, "Spectrum spec for a generated matrix");
  solve_cmd->add_option("--method", solve.method)
      ->check(CLI::IsMember({"power", "powerm", "dmpower", "lanczos", "simultaneous"}));
  solve_cmd->add_option("--beta", solve.beta, "Momentum; default lambda2^2/4 from the oracle");
  solve_cmd->add_option("--rho", solve.rho);
  solve_cmd->add_option("--rho-policy", solve.rho_policy, "eps, sqrt, cbrt, fourth or a number");
  solve_cmd->add_option("--rho-mode", solve.rho_mode)->check(CLI::IsMember({"mu-diff", "w-diff", "fixed-j"}));
  solve_cmd->add_option("--fixed-j", solve.fixed_j);
  solve_cmd->add_option("--eps", solve.eps);
  solve_cmd->add_option("--stop", solve.stop)->check(CLI::IsMember({"iterate", "rayleigh"}));
  solve_cmd->add_option("--max-iter", solve.max_iter);
  solve_cmd->add_option("--seed", solve.seed);
  solve_cmd->add_option("--momentum-scaling", solve.scaling)->check(CLI::IsMember({"consistent", "literal"}));
  solve_cmd->add_option("--vector-out", solve.vector_out);

  StreamArgs stream;
  CLI::App* stream_cmd = app.add_subcommand("stream", "Streaming top eigenvector estimation");
  stream_cmd->add_option("--samples", stream.samples, "Samples file (header n d)");
  stream_cmd->add_option("--synthetic", stream.synthetic, "Spectrum spec; samples drawn from N(0, A)");
  stream_cmd->add_option("--n", stream.n, "Rows of the reference data for --synthetic");
  stream_cmd->add_option("--method", stream.method)
      ->check(CLI::IsMember({"sgd-power", "minibatch-m", "oja", "dmstream"}));
  stream_cmd->add_option("--batch", stream.batch);
  stream_cmd->add_option("--rounds", stream.rounds);
  stream_cmd->add_option("--max-pre-rounds", stream.max_pre_rounds);
  stream_cmd->add_option("--rho", stream.rho);
  stream_cmd->add_option("--beta", stream.beta);
  stream_cmd->add_option("--oja-c", stream.oja_c);
  stream_cmd->add_option("--oja-index", stream.oja_index)->check(CLI::IsMember({"samples", "rounds"}));
  stream_cmd->add_option("--epochs", stream.epochs)->check(CLI::IsMember({"reshuffle", "one-pass"}));
  stream_cmd->add_option("--seed", stream.seed);
  stream_cmd->add_option("--momentum-scaling", stream.scaling)->check(CLI::IsMember({"consistent", "literal"}));

  ClusterArgs cluster;
  CLI::App* cluster_cmd = app.add_subcommand("cluster", "Two-way spectral clustering by deflated power iteration");
  cluster_cmd->add_option("--dataset", cluster.dataset)->check(CLI::IsMember({"circles", "moons", "file"}));
  cluster_cmd->add_option("--points", cluster.points, "Points file (header n 2)");
  cluster_cmd->add_option("--n", cluster.n);
  cluster_cmd->add_option("--noise", cluster.noise);
  cluster_cmd->add_option("--factor", cluster.factor);
  cluster_cmd->add_option("--solver", cluster.solver)->check(CLI::IsMember({"power", "powerm", "dmpower"}));
  cluster_cmd->add_option("--beta", cluster.beta);
  cluster_cmd->add_option("--rho", cluster.rho);
  cluster_cmd->add_option("--rho-policy", cluster.rho_policy);
  cluster_cmd->add_option("--eps", cluster.eps);
  cluster_cmd->add_option("--seed", cluster.seed);
  cluster_cmd->add_option("--similarity", cluster.similarity)->check(CLI::IsMember({"gaussian", "l2"}));
  cluster_cmd->add_option("--sigma", cluster.sigma);
  cluster_cmd->add_option("--sigma-fraction", cluster.sigma_fraction);
  cluster_cmd->add_option("--max-iter", cluster.max_iter);
  cluster_cmd->add_option("--labels-out", cluster.labels_out, "CSV of index,label");

  BenchArgs bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Run an experiment grid and write CSV");
  bench_cmd->add_option("--experiment", bench.experiment);
  bench_cmd->add_option("--config", bench.config, "key=value preset");
  bench_cmd->add_option("--trials", bench.trials);
  bench_cmd->add_option("--seed", bench.seed);
  bench_cmd->add_option("--threads", bench.threads);
  bench_cmd->add_option("--out", bench.out, "Raw rows CSV; stdout when omitted");
  bench_cmd->add_option("--summary", bench.summary, "Per-cell means CSV");
  bench_cmd->add_flag("--timing", bench.timing, "Record wall time per solve");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) return run_gen(gen);
    if (solve_cmd->parsed()) return run_solve(solve);
    if (stream_cmd->parsed()) return run_stream(stream);
    if (cluster_cmd->parsed()) return run_cluster(cluster);
    if (bench_cmd->parsed()) return run_bench(bench);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
