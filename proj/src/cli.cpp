#include "mte/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "mte/csv.hpp"
#include "mte/errors.hpp"
#include "mte/result_json.hpp"
#include "mte/simulation.hpp"

namespace mte::cli {

namespace {

using nlohmann::json;

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct EstimatorFlags {
  std::string method = "kernel";
  std::string kernel = "gaussian";
  std::string bandwidth = "auto";
  std::size_t grid_points = 512;
  int folds = 5;
  std::string learner_pi = "logistic";
  std::string learner_g = "ridge";
  double alpha = 0.05;
  double kappa = kDefaultClipKappa;
  std::uint64_t seed = 0;
};

void add_estimator_flags(CLI::App& cmd, EstimatorFlags& f) {
  cmd.add_option("--method", f.method, "kernel|dml")->check(CLI::IsMember({"kernel", "dml"}));
  cmd.add_option("--kernel", f.kernel, "gaussian|epanechnikov")
      ->check(CLI::IsMember({"gaussian", "epanechnikov"}));
  cmd.add_option("--bandwidth", f.bandwidth, "auto or a positive number");
  cmd.add_option("--grid-points", f.grid_points, "mode-search grid size");
  cmd.add_option("--folds", f.folds, "cross-fitting folds (dml)");
  cmd.add_option("--learner-pi", f.learner_pi, "logistic|knn|kernel")
      ->check(CLI::IsMember({"logistic", "knn", "kernel"}));
  cmd.add_option("--learner-g", f.learner_g, "ridge|knn")->check(CLI::IsMember({"ridge", "knn"}));
  cmd.add_option("--alpha", f.alpha, "1 - confidence level");
  cmd.add_option("--kappa", f.kappa, "propensity clipping bound");
  cmd.add_option("--seed", f.seed, "fold seed");
}

sim::EstimatorConfig to_config(const EstimatorFlags& f, bool keep_curves) {
  sim::EstimatorConfig cfg;
  cfg.method = parse_method(f.method);
  const KernelFamily family = parse_kernel_family(f.kernel);
  std::optional<double> h;
  if (f.bandwidth != "auto") {
    double v = 0.0;
    std::istringstream is(f.bandwidth);
    if (!(is >> v) || !is.eof() || !(v > 0.0) || !std::isfinite(v))
      throw UsageError("--bandwidth must be 'auto' or a positive number, got '" + f.bandwidth + "'");
    h = v;
  }
  if (f.grid_points < 3) throw UsageError("--grid-points must be at least 3");
  if (!(f.alpha > 0.0 && f.alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
  if (!(f.kappa > 0.0 && f.kappa < 0.5)) throw UsageError("--kappa must lie in (0, 0.5)");
  if (f.folds < 2) throw UsageError("--folds must be at least 2");

  cfg.kernel.family = family;
  cfg.kernel.bandwidth = h;
  cfg.kernel.grid_points = f.grid_points;
  cfg.kernel.alpha = f.alpha;
  cfg.kernel.kappa = f.kappa;
  cfg.kernel.keep_curves = keep_curves;

  cfg.dml.family = family;
  cfg.dml.bandwidth = h;
  cfg.dml.grid_points = f.grid_points;
  cfg.dml.alpha = f.alpha;
  cfg.dml.kappa = f.kappa;
  cfg.dml.folds = f.folds;
  cfg.dml.seed = f.seed;
  cfg.dml.nuisance.pi_learner = parse_propensity_learner(f.learner_pi);
  cfg.dml.nuisance.g_learner = parse_outcome_learner(f.learner_g);
  cfg.dml.keep_curves = keep_curves;
  return cfg;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

void print_table(std::ostream& out, const ResultRecord& r) {
  std::vector<std::pair<std::string, std::string>> rows;
  auto num = [](double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
  };
  auto ci = [&](const Interval& i) { return "[" + num(i.low) + ", " + num(i.high) + "]"; };
  rows.emplace_back("method", r.method);
  rows.emplace_back("n", std::to_string(r.n));
  rows.emplace_back("kernel", r.kernel);
  rows.emplace_back("h", num(r.h));
  if (r.folds) rows.emplace_back("K", std::to_string(*r.folds));
  rows.emplace_back("theta1", num(r.theta1));
  rows.emplace_back("theta0", num(r.theta0));
  rows.emplace_back("delta", num(r.delta));
  rows.emplace_back("se(theta1)", num(r.se1));
  rows.emplace_back("se(theta0)", num(r.se0));
  rows.emplace_back("se(delta)", num(r.se_delta));
  rows.emplace_back("ci(theta1)", ci(r.ci1));
  rows.emplace_back("ci(theta0)", ci(r.ci0));
  rows.emplace_back("ci(delta)", ci(r.ci_delta));
  rows.emplace_back("m1_hat", num(r.components.m1));
  rows.emplace_back("m0_hat", num(r.components.m0));
  rows.emplace_back("v1_hat", num(r.components.v1));
  rows.emplace_back("v0_hat", num(r.components.v0));
  std::size_t width = 0;
  for (const auto& [k, v] : rows) width = std::max(width, k.size());
  for (const auto& [k, v] : rows) out << std::left << std::setw(static_cast<int>(width + 2)) << k << v << '\n';
}

void write_curves(const std::string& path, const MTEResult& r) {
  std::ofstream out(path);
  if (!out) throw CsvError("cannot write curves to '" + path + "'");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "arm,y,value\n";
  for (std::size_t j = 0; j < r.grid.size(); ++j) out << "1," << r.grid[j] << ',' << r.curve1[j] << '\n';
  for (std::size_t j = 0; j < r.grid.size(); ++j) out << "0," << r.grid[j] << ',' << r.curve0[j] << '\n';
  if (!out) throw CsvError("failed writing curves to '" + path + "'");
}

void report_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mode treatment effect estimation"};
  app.require_subcommand(1);

  EstimatorFlags est_flags;
  std::string input, y_col, d_col, x_cols, emit_curves, output = "json";
  auto* estimate = app.add_subcommand("estimate", "estimate the mode treatment effect from a CSV");
  estimate->add_option("--input", input, "CSV file")->required();
  estimate->add_option("--y", y_col, "outcome column")->required();
  estimate->add_option("--d", d_col, "treatment column")->required();
  estimate->add_option("--x", x_cols, "comma-separated covariate columns")->required();
  estimate->add_option("--emit-curves", emit_curves, "write arm,y,value curve CSV here");
  estimate->add_option("--output", output, "json|table")->check(CLI::IsMember({"json", "table"}));
  add_estimator_flags(*estimate, est_flags);

  EstimatorFlags sim_flags;
  std::string dgp_name;
  std::size_t n = 0, reps = 0;
  unsigned threads = 0;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study on a named DGP");
  simulate->add_option("--dgp", dgp_name, "DGP name")->required();
  simulate->add_option("--n", n, "sample size")->required();
  simulate->add_option("--reps", reps, "replications")->required();
  simulate->add_option("--threads", threads, "worker threads (0 = all cores)");
  add_estimator_flags(*simulate, sim_flags);
  // --seed on simulate seeds the replications.
  simulate->get_option("--seed")->description("replication seed");

  std::vector<const char*> argv{"mte"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << (estimate->parsed() ? estimate->help() : simulate->parsed() ? simulate->help() : app.help());
    return kOk;
  } catch (const CLI::Success&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    return kUsageError;
  }

  try {
    if (estimate->parsed()) {
      const auto cfg = to_config(est_flags, !emit_curves.empty());
      const ColumnMap columns{y_col, d_col, split_commas(x_cols)};
      if (columns.x.empty()) throw UsageError("--x needs at least one column");
      const Sample sample = load_csv(input, columns);
      const auto start = std::chrono::steady_clock::now();
      const MTEResult result = sim::run_estimator(sample, cfg);
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      for (const auto& w : result.diagnostics.warnings) err << "warning: " << w << '\n';
      if (!emit_curves.empty()) write_curves(emit_curves, result);
      const ResultRecord rec = make_record(result, ms);
      if (output == "table") print_table(out, rec);
      else out << json(rec).dump(2) << '\n';
      return kOk;
    }

    const auto cfg = to_config(sim_flags, false);
    sim::DGPSpec dgp;
    try {
      dgp = sim::named_dgp(dgp_name);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (n < 2) throw UsageError("--n must be at least 2");
    if (reps < 2) throw UsageError("--reps must be at least 2");
    const auto report = sim::run_monte_carlo(dgp, n, reps, cfg, sim_flags.seed, threads);
    if (report.failures > 0)
      err << "warning: " << report.failures << " replication(s) failed\n";
    out << report_to_json(report).dump(2) << '\n';
    return kOk;
  } catch (const UsageError& e) {
    report_error(err, "usage", e.what());
    return kUsageError;
  } catch (const CsvError& e) {
    report_error(err, "io", e.what());
    return kIoError;
  } catch (const EstimationError& e) {
    report_error(err, e.kind(), e.what());
    return kEstimationError;
  } catch (const std::exception& e) {
    report_error(err, "estimation", e.what());
    return kEstimationError;
  }
}

}  // namespace mte::cli
