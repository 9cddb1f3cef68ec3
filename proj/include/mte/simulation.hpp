#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mte/dml_mte.hpp"
#include "mte/kernel_mte.hpp"
#include "mte/result.hpp"
#include "mte/sample.hpp"

namespace mte::sim {

enum class OutcomeFamily { Normal, LogNormal, SkewMixture };

/// One normal component of a mixture, located at mu(x) + offset.
struct MixtureComponent {
  double weight;
  double offset;
  double sigma;
};

/// Per-arm law of Y given X: location mu(x) = intercept + slopes . x.
/// LogNormal means log Y ~ Normal(mu(x), sigma).
struct OutcomeLaw {
  OutcomeFamily family = OutcomeFamily::Normal;
  double intercept = 0.0;
  std::vector<double> slopes;
  double sigma = 1.0;
  std::vector<MixtureComponent> components;  // SkewMixture only

  double location(std::span<const double> x) const;
  double density(double y, std::span<const double> x) const;
  double draw(std::span<const double> x, std::mt19937_64& rng) const;
};

/// Data-generating process with known truth. X ~ U(0,1)^dim,
/// P(D = 1 | X) = clamp(logistic(a + b . x), 0.05, 0.95).
struct DGPSpec {
  std::string id;
  std::size_t dim = 1;
  double logit_intercept = 0.0;
  std::vector<double> logit_slopes;
  OutcomeLaw treated;
  OutcomeLaw control;

  double propensity(std::span<const double> x) const;
  const OutcomeLaw& law(int arm) const { return arm == 1 ? treated : control; }
};

/// lognormal-plain, lognormal-confounded, normal-confounded, skew-mixture.
std::vector<std::string> dgp_names();
DGPSpec named_dgp(const std::string& name);

Sample generate(const DGPSpec& dgp, std::size_t n, std::uint64_t seed);

/// Closed form where the law allows it, otherwise the numerical oracle.
double true_mode(const DGPSpec& dgp, int arm);
/// Analytic mode; empty when the law has no closed form.
std::optional<double> analytic_mode(const DGPSpec& dgp, int arm);
/// Marginal density by Gauss-Legendre integration over the covariates,
/// fine-grid argmax, then golden-section refinement. Throws
/// UnimodalityError when a second local maximum reaches 1% of the peak.
double numerical_mode(const DGPSpec& dgp, int arm);
/// f_{Y_arm}(y) = E_X[f(y | X, D = arm)].
double marginal_density(const DGPSpec& dgp, int arm, double y);

/// Gauss-Legendre nodes and weights on [0, 1].
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
Quadrature gauss_legendre_unit(std::size_t points);

struct EstimatorConfig {
  Method method = Method::Kernel;
  KernelMteOptions kernel;
  DmlOptions dml;
};

struct TargetSummary {
  double truth = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
  double coverage_95 = 0.0;
  double mean_ci_width = 0.0;
};

struct RepRecord {
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double theta1 = 0.0, theta0 = 0.0, delta = 0.0;
  double se1 = 0.0, se0 = 0.0, se_delta = 0.0;
  double h = 0.0;
};

struct MonteCarloReport {
  std::string dgp;
  std::size_t n = 0;
  std::size_t reps = 0;
  Method method = Method::Kernel;
  std::uint64_t seed = 0;
  std::size_t failures = 0;
  TargetSummary theta1;
  TargetSummary theta0;
  TargetSummary delta;
  std::vector<RepRecord> records;
};

/// Runs `reps` generate-then-estimate cycles with seeds mix_seed(seed, rep).
/// Failed reps are recorded and excluded; more than 10% failures throws
/// HarnessError. Summaries use population moments, so rmse^2 = bias^2 + sd^2.
MonteCarloReport run_monte_carlo(const DGPSpec& dgp, std::size_t n, std::size_t reps,
                                 const EstimatorConfig& config, std::uint64_t seed,
                                 unsigned threads = 0);

MTEResult run_estimator(const Sample& sample, const EstimatorConfig& config);

}  // namespace mte::sim
