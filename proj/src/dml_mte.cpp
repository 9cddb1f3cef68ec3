#include "mte/dml_mte.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "mte/errors.hpp"
#include "mte/kernel_mte.hpp"
#include "mte/mode_search.hpp"

namespace mte {

std::vector<std::size_t> FoldPartition::fold(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == k) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPartition::complement(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] != k) out.push_back(i);
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

FoldPartition make_folds(std::size_t N, int K, std::uint64_t seed) {
  if (K < 2 || static_cast<std::size_t>(K) > N)
    throw std::invalid_argument("fold count must satisfy 2 <= K <= N (K=" + std::to_string(K) +
                                ", N=" + std::to_string(N) + ")");
  std::vector<std::size_t> perm(N);
  for (std::size_t i = 0; i < N; ++i) perm[i] = i;
  // Fisher-Yates with an explicit bounded draw so the permutation does not
  // depend on the standard library's distribution implementation.
  std::mt19937_64 rng(seed);
  for (std::size_t i = N - 1; i > 0; --i) {
    const std::uint64_t bound = i + 1;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do r = rng();
    while (r >= limit);
    std::swap(perm[i], perm[static_cast<std::size_t>(r % bound)]);
  }
  FoldPartition p{std::vector<int>(N), K, seed};
  const std::size_t base = N / static_cast<std::size_t>(K);
  const std::size_t extra = N % static_cast<std::size_t>(K);
  std::size_t pos = 0;
  for (int k = 0; k < K; ++k) {
    const std::size_t len = base + (static_cast<std::size_t>(k) < extra ? 1 : 0);
    for (std::size_t t = 0; t < len; ++t) p.assignments[perm[pos++]] = k;
  }
  return p;
}

namespace {

/// Score written in terms of the arm's own indicator and propensity p:
/// a K / p - (a - p) / p * g with a = 1{D = arm}.
double arm_score(double y_obs, int d, double y, double p, double g, int arm,
                 const KernelSpec& spec, int order, double kappa) {
  if (!(p >= kappa && p <= 1.0 - kappa) || !(p > 0.0))
    throw InvariantViolation("propensity " + std::to_string(p) + " outside the clipped range");
  const double a = d == arm ? 1.0 : 0.0;
  const double k = scaled_kernel(spec, y - y_obs, order);
  return a * k / p - (a - p) / p * g;
}

}  // namespace

double orthogonal_score(double y_obs, int d, double y, double pi, double g, int arm,
                        const KernelSpec& spec, int order, double kappa) {
  if (!(pi >= kappa && pi <= 1.0 - kappa))
    throw InvariantViolation("propensity " + std::to_string(pi) + " outside the clipped range");
  return arm_score(y_obs, d, y, arm == 1 ? pi : 1.0 - pi, g, arm, spec, order, 0.0);
}

namespace {

void check_partition(const Sample& sample, const FoldPartition& partition) {
  if (partition.size() != sample.size())
    throw ConfigurationError("fold partition does not match the sample size");
  if (partition.K < 2) throw std::invalid_argument("cross-fitting needs K >= 2");
  for (int a : partition.assignments)
    if (a < 0 || a >= partition.K) throw ConfigurationError("fold label out of range");
}

/// Fold members plus a label-independent reduction order (by smallest member).
struct FoldLayout {
  std::vector<std::vector<std::size_t>> members;
  std::vector<int> order;
};

FoldLayout layout_of(const FoldPartition& partition) {
  FoldLayout layout;
  layout.members.resize(static_cast<std::size_t>(partition.K));
  for (std::size_t i = 0; i < partition.size(); ++i)
    layout.members[static_cast<std::size_t>(partition.assignments[i])].push_back(i);
  for (int k = 0; k < partition.K; ++k)
    if (!layout.members[static_cast<std::size_t>(k)].empty()) layout.order.push_back(k);
  std::sort(layout.order.begin(), layout.order.end(), [&](int a, int b) {
    return layout.members[static_cast<std::size_t>(a)].front() <
           layout.members[static_cast<std::size_t>(b)].front();
  });
  return layout;
}

const SmoothedOutcomeFit& g_for(const FoldNuisance& f, int arm) { return arm == 1 ? f.g1 : f.g0; }

void check_bundle(const FoldPartition& partition, const NuisanceBundle& bundle,
                  std::span<const double> grid) {
  if (bundle.folds.size() != static_cast<std::size_t>(partition.K))
    throw ConfigurationError("nuisance bundle does not match the fold partition");
  for (const auto& f : bundle.folds) {
    if (!std::equal(grid.begin(), grid.end(), f.g1.grid().begin(), f.g1.grid().end()) ||
        !std::equal(grid.begin(), grid.end(), f.g0.grid().begin(), f.g0.grid().end()))
      throw ConfigurationError("evaluation grid differs from the nuisance grid");
  }
}

/// (1/K) sum_k n_k^-1 sum_{i in I_k} term(i, p_i, g_i(y)) with fold-k nuisances, where p_i is
/// the probability of receiving `arm`.
template <class Term>
double cross_fit_mean(const Sample& sample, const FoldLayout& layout, const NuisanceBundle& bundle,
                      int arm, double y, int g_order, Term&& term) {
  double total = 0.0;
  for (int k : layout.order) {
    const auto& nu = bundle.folds[static_cast<std::size_t>(k)];
    const auto& members = layout.members[static_cast<std::size_t>(k)];
    double s = 0.0;
    for (std::size_t i : members) {
      const double p = nu.pi.predict_arm(sample.x(i), arm);
      const double g = g_for(nu, arm).predict_at(sample.x(i), y, g_order);
      s += term(i, p, g);
    }
    total += s / static_cast<double>(members.size());
  }
  return total / static_cast<double>(layout.order.size());
}

double score_at(const Sample& sample, const FoldLayout& layout, const NuisanceBundle& bundle,
                const KernelSpec& spec, int arm, double y, int order, double kappa) {
  return cross_fit_mean(sample, layout, bundle, arm, y, order, [&](std::size_t i, double p, double g) {
    return arm_score(sample.y(i), sample.d(i), y, p, g, arm, spec, order, kappa);
  });
}

}  // namespace

NuisanceBundle fit_nuisances(const Sample& sample, const FoldPartition& partition,
                             std::span<const double> grid, const KernelSpec& spec,
                             const NuisanceConfig& config) {
  check_partition(sample, partition);
  NuisanceBundle bundle;
  bundle.folds.reserve(static_cast<std::size_t>(partition.K));
  for (int k = 0; k < partition.K; ++k) {
    const auto aux_idx = partition.complement(k);
    const Sample aux = sample.subset(aux_idx);
    std::vector<std::size_t> t_idx, c_idx;
    for (std::size_t i = 0; i < aux.size(); ++i) (aux.d(i) == 1 ? t_idx : c_idx).push_back(i);
    if (t_idx.empty() || c_idx.empty())
      throw StratificationError("auxiliary sample of fold " + std::to_string(k) +
                                " lacks one treatment arm; consider stratified folds");
    PropensityHyper pi_hyper = config.pi_hyper;
    if (pi_hyper.h <= 0.0) pi_hyper.h = spec.h();
    auto pi = fit_propensity(aux, config.pi_learner, pi_hyper);
    auto g1 = fit_smoothed_outcome(aux.subset(t_idx), 1, grid, spec, config.g_learner,
                                   config.g_hyper);
    auto g0 = fit_smoothed_outcome(aux.subset(c_idx), 0, grid, spec, config.g_learner,
                                   config.g_hyper);
    bundle.folds.push_back({std::move(pi), std::move(g1), std::move(g0)});
  }
  return bundle;
}

DensityCurve dml_density_curve(const Sample& sample, const FoldPartition& partition,
                               const NuisanceBundle& bundle, const KernelSpec& spec,
                               std::span<const double> grid, int arm, int order, double kappa) {
  check_partition(sample, partition);
  validate_grid(grid);
  check_bundle(partition, bundle, grid);
  if (arm != 0 && arm != 1) throw std::invalid_argument("arm must be 0 or 1");
  const FoldLayout layout = layout_of(partition);
  const std::size_t m = grid.size();

  DensityCurve curve{std::vector<double>(grid.begin(), grid.end()), std::vector<double>(m, 0.0),
                     arm, order, spec};
  std::vector<double> g(m);
  std::vector<double> fold_sum(m);
  for (int k : layout.order) {
    const auto& nu = bundle.folds[static_cast<std::size_t>(k)];
    const auto& members = layout.members[static_cast<std::size_t>(k)];
    std::fill(fold_sum.begin(), fold_sum.end(), 0.0);
    for (std::size_t i : members) {
      const auto x = sample.x(i);
      const double p = nu.pi.predict_arm(x, arm);
      g_for(nu, arm).predict_grid(x, order, g);
      for (std::size_t j = 0; j < m; ++j)
        fold_sum[j] += arm_score(sample.y(i), sample.d(i), grid[j], p, g[j], arm, spec, order, kappa);
    }
    const double inv = 1.0 / static_cast<double>(members.size());
    for (std::size_t j = 0; j < m; ++j) curve.values[j] += fold_sum[j] * inv;
  }
  const double inv_k = 1.0 / static_cast<double>(layout.order.size());
  for (double& v : curve.values) v *= inv_k;
  return curve;
}

VarianceComponents dml_variance_components(const Sample& sample, const FoldPartition& partition,
                                           const NuisanceBundle& bundle, const KernelSpec& spec,
                                           double theta1, double theta0, double kappa) {
  check_partition(sample, partition);
  if (bundle.folds.size() != static_cast<std::size_t>(partition.K))
    throw ConfigurationError("nuisance bundle does not match the fold partition");
  const FoldLayout layout = layout_of(partition);
  const double k01 = kernel_constants(spec.family()).kappa0_1;

  VarianceComponents vc;
  vc.m1 = score_at(sample, layout, bundle, spec, 1, theta1, 2, kappa);
  vc.m0 = score_at(sample, layout, bundle, spec, 0, theta0, 2, kappa);
  auto v_row = [&](int arm, double theta) {
    return k01 * cross_fit_mean(sample, layout, bundle, arm, theta, 0,
                                [&](std::size_t i, double p, double g) {
                                  const double a = sample.d(i) == arm ? 1.0 : 0.0;
                                  const double k = scaled_kernel(spec, theta - sample.y(i), 0);
                                  return a * k / (p * p) - 2.0 * (a - p) / (p * p) * g;
                                });
  };
  vc.v1 = v_row(1, theta1);
  vc.v0 = v_row(0, theta0);
  return vc;
}

MTEResult estimate_dml_mte(const Sample& raw, const DmlOptions& options) {
  raw.require_both_arms();
  if (raw.dim() == 0) throw std::invalid_argument("the DML estimator needs covariates");
  if (options.folds < 2) throw std::invalid_argument("cross-fitting needs K >= 2");
  const Sample sample = standardize_covariates(raw).first;
  const std::size_t N = sample.size();

  MTEResult r;
  r.method = Method::DML;
  r.family = options.family;
  r.n = N;
  r.alpha = options.alpha;
  r.h = options.bandwidth ? *options.bandwidth : auto_bandwidth(sample, BandwidthMethod::DML).h;
  const KernelSpec spec(options.family, r.h);
  r.grid = options.grid ? *options.grid : default_grid(sample.outcomes(), r.h, options.grid_points);
  validate_grid(r.grid);

  auto aux_has_both_arms = [&](const FoldPartition& p) {
    for (int k = 0; k < p.K; ++k) {
      bool t = false, c = false;
      for (std::size_t i = 0; i < N && !(t && c); ++i)
        if (p.assignments[i] != k) (sample.d(i) == 1 ? t : c) = true;
      if (!(t && c)) return false;
    }
    return true;
  };

  FoldPartition partition;
  if (options.partition) {
    partition = *options.partition;
    check_partition(sample, partition);
    if (!aux_has_both_arms(partition))
      throw StratificationError(
          "an auxiliary sample lacks one treatment arm; consider stratified folds");
  } else {
    constexpr int kMaxReseeds = 10;
    int attempt = 0;
    for (;; ++attempt) {
      const std::uint64_t seed = attempt == 0 ? options.seed : mix_seed(options.seed, attempt);
      partition = make_folds(N, options.folds, seed);
      if (aux_has_both_arms(partition)) break;
      if (attempt == kMaxReseeds)
        throw StratificationError("every auxiliary sample must contain both arms; failed after " +
                                  std::to_string(kMaxReseeds) +
                                  " reseeds, consider stratified folds");
    }
    r.diagnostics.fold_reseeds = attempt;
  }
  r.folds = partition.K;

  NuisanceConfig nc = options.nuisance;
  nc.pi_hyper.clip_kappa = options.kappa;
  const NuisanceBundle bundle = fit_nuisances(sample, partition, r.grid, spec, nc);
  const FoldLayout layout = layout_of(partition);

  const auto c1 = dml_density_curve(sample, partition, bundle, spec, r.grid, 1, 0, options.kappa);
  const auto c0 = dml_density_curve(sample, partition, bundle, spec, r.grid, 0, 0, options.kappa);
  auto evaluator = [&](int arm, int order) {
    return [&, arm, order](double y) {
      return score_at(sample, layout, bundle, spec, arm, y, order, options.kappa);
    };
  };
  const auto m1 = mode_of_curve(c1, evaluator(1, 0), evaluator(1, 1));
  const auto m0 = mode_of_curve(c0, evaluator(0, 0), evaluator(0, 1));

  r.theta1 = m1.theta;
  r.theta0 = m0.theta;
  r.diagnostics.flat_curve = m1.flat_curve || m0.flat_curve;
  r.diagnostics.multimodal = m1.multimodal || m0.multimodal;
  r.diagnostics.foc_residual1 = m1.foc_residual;
  r.diagnostics.foc_residual0 = m0.foc_residual;
  if (r.diagnostics.flat_curve) r.diagnostics.warnings.push_back("flat density curve");
  if (r.diagnostics.multimodal) r.diagnostics.warnings.push_back("multi-modal density curve");
  if (r.diagnostics.fold_reseeds > 0)
    r.diagnostics.warnings.push_back("fold partition reseeded " +
                                     std::to_string(r.diagnostics.fold_reseeds) + " time(s)");

  r.components =
      dml_variance_components(sample, partition, bundle, spec, r.theta1, r.theta0, options.kappa);
  finalize_inference(r);

  if (options.keep_curves) {
    r.curve1 = c1.values;
    r.curve0 = c0.values;
  } else {
    r.grid.clear();
  }
  return r;
}

std::vector<OrthogonalityRow> orthogonality_check(const Sample& sample, double y,
                                                  const KernelSpec& spec,
                                                  const NuisanceFunctions& truth,
                                                  const NuisanceFunctions& direction,
                                                  std::span<const double> epsilons,
                                                  ScoreKind kind, int order) {
  const std::size_t n = sample.size();
  if (n < 2) throw std::invalid_argument("orthogonality check needs at least two observations");
  std::vector<double> pi0(n), g0(n), dpi(n), dg(n), base(n);
  auto score = [&](std::size_t i, double pi, double g) {
    if (kind == ScoreKind::PlugIn)
      return sample.d(i) * scaled_kernel(spec, y - sample.y(i), order) / pi;
    return orthogonal_score(sample.y(i), sample.d(i), y, pi, g, 1, spec, order, 0.0);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = sample.x(i);
    pi0[i] = truth.pi(x);
    g0[i] = truth.g ? truth.g(x) : 0.0;
    dpi[i] = direction.pi ? direction.pi(x) : 0.0;
    dg[i] = direction.g ? direction.g(x) : 0.0;
    base[i] = score(i, pi0[i], g0[i]);
  }
  std::vector<OrthogonalityRow> rows;
  rows.reserve(epsilons.size());
  for (double eps : epsilons) {
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = score(i, pi0[i] + eps * dpi[i], g0[i] + eps * dg[i]) - base[i];
      sum += diff;
      sum_sq += diff * diff;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * mean * mean) /
                                         static_cast<double>(n - 1));
    rows.push_back({eps, std::abs(mean), std::sqrt(var / static_cast<double>(n))});
  }
  return rows;
}

double log_log_slope(std::span<const OrthogonalityRow> rows) {
  std::vector<double> lx, ly;
  for (const auto& r : rows) {
    if (r.epsilon > 0.0 && r.shift > 0.0) {
      lx.push_back(std::log(r.epsilon));
      ly.push_back(std::log(r.shift));
    }
  }
  if (lx.size() < 2) throw std::invalid_argument("slope needs at least two positive rows");
  const double mx = sample_mean(lx);
  const double my = sample_mean(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace mte
