#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mte/kernel.hpp"
#include "mte/nuisance.hpp"
#include "mte/result.hpp"
#include "mte/sample.hpp"

namespace mte {

/// K-fold partition of {0..N-1}; assignments[i] is the fold of observation i.
struct FoldPartition {
  std::vector<int> assignments;
  int K = 0;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return assignments.size(); }
  /// Members of fold k, increasing.
  std::vector<std::size_t> fold(int k) const;
  /// Auxiliary sample of fold k: every index outside it, increasing.
  std::vector<std::size_t> complement(int k) const;

  friend bool operator==(const FoldPartition&, const FoldPartition&) = default;
};

/// Seeded uniform shuffle cut into K contiguous blocks; the first N mod K
/// folds get one extra element.
FoldPartition make_folds(std::size_t N, int K, std::uint64_t seed);

/// SplitMix64 finalizer, used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Neyman-orthogonal density score for `arm` at y with derivative `order`:
///   arm 1: d K_h^(s)(y - y_obs) / pi - (d - pi) / pi * g
///   arm 0: (1 - d) K_h^(s)(y - y_obs) / (1 - pi) - (pi - d) / (1 - pi) * g
/// `pi` must lie in [kappa, 1 - kappa]; kappa = 0 disables the bound.
double orthogonal_score(double y_obs, int d, double y, double pi, double g, int arm,
                        const KernelSpec& spec, int order, double kappa = kDefaultClipKappa);

struct FoldNuisance {
  PropensityFit pi;
  SmoothedOutcomeFit g1;
  SmoothedOutcomeFit g0;
};

/// One nuisance record per fold, each fitted on that fold's complement.
struct NuisanceBundle {
  std::vector<FoldNuisance> folds;
};

struct NuisanceConfig {
  PropensityLearner pi_learner = PropensityLearner::Logistic;
  PropensityHyper pi_hyper;
  OutcomeLearner g_learner = OutcomeLearner::Ridge;
  OutcomeHyper g_hyper;
};

NuisanceBundle fit_nuisances(const Sample& sample, const FoldPartition& partition,
                             std::span<const double> grid, const KernelSpec& spec,
                             const NuisanceConfig& config);

/// (1/K) sum_k mean_{i in I_k} m(Z_i, y, eta_k) on every grid point.
DensityCurve dml_density_curve(const Sample& sample, const FoldPartition& partition,
                               const NuisanceBundle& bundle, const KernelSpec& spec,
                               std::span<const double> grid, int arm, int order,
                               double kappa = kDefaultClipKappa);

/// Table-form M-hat and V-hat at (theta1, theta0); V rows carry kappa0^(1).
VarianceComponents dml_variance_components(const Sample& sample, const FoldPartition& partition,
                                           const NuisanceBundle& bundle, const KernelSpec& spec,
                                           double theta1, double theta0,
                                           double kappa = kDefaultClipKappa);

struct DmlOptions {
  int folds = 5;
  std::uint64_t seed = 0;
  NuisanceConfig nuisance;
  KernelFamily family = KernelFamily::Gaussian;
  std::optional<double> bandwidth;
  std::optional<std::vector<double>> grid;
  std::size_t grid_points = 512;
  double alpha = 0.05;
  double kappa = kDefaultClipKappa;
  /// Use this partition instead of drawing one.
  std::optional<FoldPartition> partition;
  bool keep_curves = false;
};

MTEResult estimate_dml_mte(const Sample& sample, const DmlOptions& options = {});

// ---------------------------------------------------------------------------
// Orthogonality diagnostics

/// Nuisance values as functions of x, evaluated at a fixed y.
struct NuisanceFunctions {
  std::function<double(std::span<const double>)> pi;
  std::function<double(std::span<const double>)> g;
};

enum class ScoreKind { Orthogonal, PlugIn };

struct OrthogonalityRow {
  double epsilon;
  /// |mean m(eta0 + eps * direction) - mean m(eta0)|.
  double shift;
  /// Standard error of that mean difference.
  double std_error;
};

/// Sensitivity of the arm-1 mean score at y to nuisance perturbations
/// eta0 + eps * direction. The plug-in score is d K_h / pi.
std::vector<OrthogonalityRow> orthogonality_check(const Sample& sample, double y,
                                                  const KernelSpec& spec,
                                                  const NuisanceFunctions& truth,
                                                  const NuisanceFunctions& direction,
                                                  std::span<const double> epsilons,
                                                  ScoreKind kind = ScoreKind::Orthogonal,
                                                  int order = 0);

/// Least-squares slope of log(shift) on log(epsilon), skipping zero entries.
double log_log_slope(std::span<const OrthogonalityRow> rows);

}  // namespace mte
