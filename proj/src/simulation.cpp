#include "mte/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "mte/errors.hpp"
#include "mte/normal.hpp"

namespace mte::sim {

namespace {

double uniform01(std::mt19937_64& rng) {
  // 53 random bits in (0, 1).
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(std::mt19937_64& rng) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double normal_pdf(double z) { return 0.39894228040143267794 * std::exp(-0.5 * z * z); }

}  // namespace

double OutcomeLaw::location(std::span<const double> x) const {
  double mu = intercept;
  for (std::size_t k = 0; k < slopes.size() && k < x.size(); ++k) mu += slopes[k] * x[k];
  return mu;
}

double OutcomeLaw::density(double y, std::span<const double> x) const {
  const double mu = location(x);
  switch (family) {
    case OutcomeFamily::Normal:
      return normal_pdf((y - mu) / sigma) / sigma;
    case OutcomeFamily::LogNormal:
      if (!(y > 0.0)) return 0.0;
      return normal_pdf((std::log(y) - mu) / sigma) / (sigma * y);
    case OutcomeFamily::SkewMixture: {
      double f = 0.0;
      for (const auto& c : components)
        f += c.weight * normal_pdf((y - mu - c.offset) / c.sigma) / c.sigma;
      return f;
    }
  }
  return 0.0;
}

double OutcomeLaw::draw(std::span<const double> x, std::mt19937_64& rng) const {
  const double mu = location(x);
  switch (family) {
    case OutcomeFamily::Normal:
      return mu + sigma * standard_normal(rng);
    case OutcomeFamily::LogNormal:
      return std::exp(mu + sigma * standard_normal(rng));
    case OutcomeFamily::SkewMixture: {
      double u = uniform01(rng);
      const MixtureComponent* pick = &components.back();
      for (const auto& c : components) {
        if (u < c.weight) {
          pick = &c;
          break;
        }
        u -= c.weight;
      }
      return mu + pick->offset + pick->sigma * standard_normal(rng);
    }
  }
  return mu;
}

double DGPSpec::propensity(std::span<const double> x) const {
  double eta = logit_intercept;
  for (std::size_t k = 0; k < logit_slopes.size() && k < x.size(); ++k) eta += logit_slopes[k] * x[k];
  return std::clamp(1.0 / (1.0 + std::exp(-eta)), 0.05, 0.95);
}

std::vector<std::string> dgp_names() {
  return {"lognormal-plain", "lognormal-confounded", "normal-confounded", "skew-mixture"};
}

DGPSpec named_dgp(const std::string& name) {
  DGPSpec d;
  d.id = name;
  if (name == "lognormal-plain") {
    d.dim = 1;
    d.logit_slopes = {0.0};
    d.treated = {OutcomeFamily::LogNormal, 0.5, {0.0}, 0.6, {}};
    d.control = {OutcomeFamily::LogNormal, 0.0, {0.0}, 0.6, {}};
  } else if (name == "lognormal-confounded") {
    d.dim = 1;
    d.logit_intercept = -1.0;
    d.logit_slopes = {2.0};
    d.treated = {OutcomeFamily::LogNormal, 0.5, {0.5}, 0.6, {}};
    d.control = {OutcomeFamily::LogNormal, 0.0, {0.5}, 0.6, {}};
  } else if (name == "normal-confounded") {
    d.dim = 1;
    d.logit_intercept = -1.0;
    d.logit_slopes = {2.0};
    d.treated = {OutcomeFamily::Normal, 2.0, {1.0}, 1.0, {}};
    d.control = {OutcomeFamily::Normal, 1.0, {1.0}, 1.0, {}};
  } else if (name == "skew-mixture") {
    d.dim = 2;
    d.logit_intercept = -1.0;
    d.logit_slopes = {1.0, 1.0};
    const std::vector<MixtureComponent> skew{{0.6, 0.0, 0.5}, {0.3, 1.0, 1.0}, {0.1, 3.0, 2.0}};
    d.treated = {OutcomeFamily::SkewMixture, 1.0, {0.5, 0.0}, 1.0, skew};
    d.control = {OutcomeFamily::SkewMixture, 0.0, {0.5, 0.0}, 1.0, skew};
  } else {
    std::string names;
    for (const auto& n : dgp_names()) names += (names.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown DGP '" + name + "' (available: " + names + ")");
  }
  return d;
}

Sample generate(const DGPSpec& dgp, std::size_t n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("generate needs n >= 2");
  std::mt19937_64 rng(seed);
  std::vector<double> y(n), x(n * dgp.dim);
  std::vector<int> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < dgp.dim; ++k) x[i * dgp.dim + k] = uniform01(rng);
    const std::span<const double> xi(x.data() + i * dgp.dim, dgp.dim);
    d[i] = uniform01(rng) < dgp.propensity(xi) ? 1 : 0;
    y[i] = dgp.law(d[i]).draw(xi, rng);
  }
  return Sample(std::move(y), std::move(d), std::move(x), dgp.dim);
}

Quadrature gauss_legendre_unit(std::size_t points) {
  if (points == 0) throw std::invalid_argument("quadrature needs at least one point");
  Quadrature q{std::vector<double>(points), std::vector<double>(points)};
  const std::size_t half = (points + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    // Newton iteration on P_n from the Chebyshev-style initial guess.
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(points) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (std::size_t j = 1; j <= points; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * static_cast<double>(j) - 1.0) * z * p1 - (static_cast<double>(j) - 1.0) * p2) /
             static_cast<double>(j);
      }
      dp = static_cast<double>(points) * (z * p0 - p1) / (z * z - 1.0);
      const double step = p0 / dp;
      z -= step;
      if (std::abs(step) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    // Map [-1, 1] to [0, 1].
    q.nodes[i] = 0.5 * (1.0 - z);
    q.nodes[points - 1 - i] = 0.5 * (1.0 + z);
    q.weights[i] = q.weights[points - 1 - i] = 0.5 * w;
  }
  return q;
}

namespace {

constexpr std::size_t kQuadraturePoints = 201;
constexpr std::size_t kOracleGrid = 10000;

/// Covariate integration nodes for one law. Coordinates the law ignores are
/// integrated out exactly and do not enter the tensor product.
struct CovariateNodes {
  std::vector<std::vector<double>> points;
  std::vector<double> weights;
};

CovariateNodes covariate_nodes(const DGPSpec& dgp, const OutcomeLaw& law) {
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < law.slopes.size() && k < dgp.dim; ++k)
    if (law.slopes[k] != 0.0) active.push_back(k);
  CovariateNodes out;
  out.points.push_back(std::vector<double>(dgp.dim, 0.5));
  out.weights.push_back(1.0);
  if (active.empty()) return out;
  const Quadrature q = gauss_legendre_unit(kQuadraturePoints);
  for (std::size_t k : active) {
    CovariateNodes next;
    for (std::size_t p = 0; p < out.points.size(); ++p) {
      for (std::size_t j = 0; j < q.nodes.size(); ++j) {
        auto pt = out.points[p];
        pt[k] = q.nodes[j];
        next.points.push_back(std::move(pt));
        next.weights.push_back(out.weights[p] * q.weights[j]);
      }
    }
    out = std::move(next);
  }
  return out;
}

double marginal_from_nodes(const OutcomeLaw& law, const CovariateNodes& nodes, double y) {
  double f = 0.0;
  for (std::size_t p = 0; p < nodes.points.size(); ++p)
    f += nodes.weights[p] * law.density(y, nodes.points[p]);
  return f;
}

std::pair<double, double> search_range(const DGPSpec& dgp, const OutcomeLaw& law) {
  double lo = law.intercept, hi = law.intercept;
  for (std::size_t k = 0; k < law.slopes.size() && k < dgp.dim; ++k) {
    lo += std::min(0.0, law.slopes[k]);
    hi += std::max(0.0, law.slopes[k]);
  }
  switch (law.family) {
    case OutcomeFamily::Normal:
      return {lo - 8.0 * law.sigma, hi + 8.0 * law.sigma};
    case OutcomeFamily::LogNormal:
      return {std::exp(lo - 6.0 * law.sigma), std::exp(hi + 3.0 * law.sigma)};
    case OutcomeFamily::SkewMixture: {
      double a = lo, b = hi;
      for (const auto& c : law.components) {
        a = std::min(a, lo + c.offset - 8.0 * c.sigma);
        b = std::max(b, hi + c.offset + 8.0 * c.sigma);
      }
      return {a, b};
    }
  }
  return {lo, hi};
}

}  // namespace

double marginal_density(const DGPSpec& dgp, int arm, double y) {
  const auto& law = dgp.law(arm);
  return marginal_from_nodes(law, covariate_nodes(dgp, law), y);
}

std::optional<double> analytic_mode(const DGPSpec& dgp, int arm) {
  const auto& law = dgp.law(arm);
  const bool covariate_free =
      std::all_of(law.slopes.begin(), law.slopes.end(), [](double b) { return b == 0.0; });
  switch (law.family) {
    case OutcomeFamily::Normal: {
      // Normal noise plus a uniform index is symmetric and unimodal about
      // the mean location.
      double mu = law.intercept;
      for (std::size_t k = 0; k < law.slopes.size() && k < dgp.dim; ++k) mu += 0.5 * law.slopes[k];
      return mu;
    }
    case OutcomeFamily::LogNormal:
      if (covariate_free) return std::exp(law.intercept - law.sigma * law.sigma);
      return std::nullopt;
    case OutcomeFamily::SkewMixture:
      return std::nullopt;
  }
  return std::nullopt;
}

double numerical_mode(const DGPSpec& dgp, int arm) {
  const auto& law = dgp.law(arm);
  const CovariateNodes nodes = covariate_nodes(dgp, law);
  const auto [lo, hi] = search_range(dgp, law);
  const double step = (hi - lo) / static_cast<double>(kOracleGrid - 1);
  std::vector<double> f(kOracleGrid);
  for (std::size_t j = 0; j < kOracleGrid; ++j)
    f[j] = marginal_from_nodes(law, nodes, lo + step * static_cast<double>(j));

  const std::size_t best =
      static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
  for (std::size_t j = 1; j + 1 < kOracleGrid; ++j) {
    if (j == best) continue;
    if (f[j] > f[j - 1] && f[j] >= f[j + 1] && f[j] >= 0.01 * f[best])
      throw UnimodalityError("marginal density of arm " + std::to_string(arm) + " in DGP '" +
                             dgp.id + "' has a second local maximum near y=" +
                             std::to_string(lo + step * static_cast<double>(j)));
  }
  if (best == 0 || best + 1 == kOracleGrid)
    throw UnimodalityError("oracle mode lies on the search boundary");

  // Golden-section search on the bracketing cells.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo + step * static_cast<double>(best - 1);
  double b = lo + step * static_cast<double>(best + 1);
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = marginal_from_nodes(law, nodes, c);
  double fd = marginal_from_nodes(law, nodes, d);
  while (b - a > 1e-8) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = marginal_from_nodes(law, nodes, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = marginal_from_nodes(law, nodes, d);
    }
  }
  return 0.5 * (a + b);
}

double true_mode(const DGPSpec& dgp, int arm) {
  if (auto m = analytic_mode(dgp, arm)) return *m;
  return numerical_mode(dgp, arm);
}

MTEResult run_estimator(const Sample& sample, const EstimatorConfig& config) {
  return config.method == Method::Kernel ? estimate_kernel_mte(sample, config.kernel)
                                         : estimate_dml_mte(sample, config.dml);
}

namespace {

TargetSummary summarize(const std::vector<RepRecord>& records, double truth, double z,
                        double RepRecord::*est, double RepRecord::*se) {
  TargetSummary s;
  s.truth = truth;
  std::size_t count = 0;
  double sum = 0.0;
  for (const auto& r : records)
    if (r.ok) {
      sum += r.*est;
      ++count;
    }
  if (count == 0) return s;
  const double inv = 1.0 / static_cast<double>(count);
  const double mean = sum * inv;
  double var = 0.0, mse = 0.0, covered = 0.0, width = 0.0;
  for (const auto& r : records) {
    if (!r.ok) continue;
    var += (r.*est - mean) * (r.*est - mean);
    mse += (r.*est - truth) * (r.*est - truth);
    if (std::abs(r.*est - truth) <= z * r.*se) covered += 1.0;
    width += 2.0 * z * r.*se;
  }
  s.bias = mean - truth;
  s.sd = std::sqrt(var * inv);
  s.rmse = std::sqrt(mse * inv);
  s.coverage_95 = covered * inv;
  s.mean_ci_width = width * inv;
  return s;
}

}  // namespace

MonteCarloReport run_monte_carlo(const DGPSpec& dgp, std::size_t n, std::size_t reps,
                                 const EstimatorConfig& config, std::uint64_t seed,
                                 unsigned threads) {
  if (reps < 2) throw std::invalid_argument("Monte Carlo needs reps >= 2");
  const double truth1 = true_mode(dgp, 1);
  const double truth0 = true_mode(dgp, 0);

  MonteCarloReport report;
  report.dgp = dgp.id;
  report.n = n;
  report.reps = reps;
  report.method = config.method;
  report.seed = seed;
  report.records.resize(reps);

  auto run_one = [&](std::size_t rep) {
    RepRecord& rec = report.records[rep];
    rec.rep = rep;
    rec.seed = mix_seed(seed, rep);
    try {
      const Sample sample = generate(dgp, n, rec.seed);
      EstimatorConfig cfg = config;
      cfg.dml.seed = mix_seed(rec.seed, 1);
      const MTEResult r = run_estimator(sample, cfg);
      rec.theta1 = r.theta1;
      rec.theta0 = r.theta0;
      rec.delta = r.delta;
      rec.se1 = r.se1;
      rec.se0 = r.se0;
      rec.se_delta = r.se_delta;
      rec.h = r.h;
      rec.ok = std::isfinite(r.se_delta);
      if (!rec.ok) rec.error = "non-finite standard error";
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, reps));
  if (threads <= 1) {
    for (std::size_t rep = 0; rep < reps; ++rep) run_one(rep);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t rep = next++; rep < reps; rep = next++) run_one(rep);
      });
    for (auto& th : pool) th.join();
  }

  for (const auto& r : report.records)
    if (!r.ok) ++report.failures;
  if (report.failures * 10 > reps)
    throw HarnessError(std::to_string(report.failures) + " of " + std::to_string(reps) +
                       " replications failed (first error: " +
                       std::find_if(report.records.begin(), report.records.end(),
                                    [](const RepRecord& r) { return !r.ok; })
                           ->error +
                       ")");

  const double z = normal_quantile(0.975);
  report.theta1 = summarize(report.records, truth1, z, &RepRecord::theta1, &RepRecord::se1);
  report.theta0 = summarize(report.records, truth0, z, &RepRecord::theta0, &RepRecord::se0);
  report.delta =
      summarize(report.records, truth1 - truth0, z, &RepRecord::delta, &RepRecord::se_delta);
  return report;
}

}  // namespace mte::sim
