#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <vector>

#include "mte/dml_mte.hpp"
#include "mte/errors.hpp"
#include "mte/kernel_mte.hpp"
#include "mte/simulation.hpp"
#include "test_support.hpp"

using namespace mte;
using mte::testing::linspace;

namespace {

// Outcome model returning the whole-sample arm average of the targets,
// whatever x is.
class ArmAverage final : public SmoothedOutcomeFit::Model {
public:
  ArmAverage(std::vector<double> y, std::vector<double> grid, KernelSpec spec)
      : y_(std::move(y)), grid_(std::move(grid)), spec_(spec) {}
  void predict(std::span<const double>, int order, std::size_t first,
               std::span<double> out) const override {
    for (std::size_t g = 0; g < out.size(); ++g) {
      double s = 0.0;
      for (double v : y_) s += scaled_kernel(spec_, grid_[first + g] - v, order);
      out[g] = s / static_cast<double>(y_.size());
    }
  }

private:
  std::vector<double> y_;
  std::vector<double> grid_;
  KernelSpec spec_;
};

SmoothedOutcomeFit oracle_g(const Sample& s, int arm, const std::vector<double>& grid,
                            const KernelSpec& spec) {
  std::vector<double> y;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.d(i) == arm) y.push_back(s.y(i));
  return SmoothedOutcomeFit(grid, arm, spec, {0, 1, 2}, "oracle",
                            std::make_shared<const ArmAverage>(y, grid, spec));
}

NuisanceBundle oracle_bundle(const Sample& s, int K, double pi, const std::vector<double>& grid,
                             const KernelSpec& spec, double kappa = kDefaultClipKappa) {
  NuisanceBundle b;
  for (int k = 0; k < K; ++k)
    b.folds.push_back({PropensityFit("const", kappa, [pi](auto) { return pi; }),
                       oracle_g(s, 1, grid, spec), oracle_g(s, 0, grid, spec)});
  return b;
}

}  // namespace

TEST_CASE("make_folds") {
  const auto p = make_folds(10, 5, 3);
  std::multiset<int> labels(p.assignments.begin(), p.assignments.end());
  for (int k = 0; k < 5; ++k) CHECK(labels.count(k) == 2);
  std::set<std::size_t> all;
  for (int k = 0; k < 5; ++k)
    for (auto i : p.fold(k)) CHECK(all.insert(i).second);
  CHECK(all.size() == 10);

  const auto q = make_folds(11, 5, 3);
  std::vector<std::size_t> sizes;
  for (int k = 0; k < 5; ++k) sizes.push_back(q.fold(k).size());
  CHECK(sizes == std::vector<std::size_t>{3, 2, 2, 2, 2});

  CHECK(make_folds(10, 5, 7) == make_folds(10, 5, 7));
  CHECK_FALSE(make_folds(100, 5, 7) == make_folds(100, 5, 8));
  CHECK_THROWS_AS(make_folds(10, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_folds(3, 4, 0), std::invalid_argument);

  for (std::size_t N : {7u, 50u, 101u})
    for (int K : {2, 3, 7}) {
      const auto r = make_folds(N, K, N * 31 + K);
      std::size_t lo = N, hi = 0;
      for (int k = 0; k < K; ++k) {
        lo = std::min(lo, r.fold(k).size());
        hi = std::max(hi, r.fold(k).size());
        CHECK(r.fold(k).size() + r.complement(k).size() == N);
      }
      CHECK(hi - lo <= 1);
    }
}

TEST_CASE("orthogonal_score values") {
  const KernelSpec spec(KernelFamily::Gaussian, 0.7);
  const double k = scaled_kernel(spec, 0.4 - 0.1, 0);
  CHECK(orthogonal_score(0.1, 1, 0.4, 1.0, 123.0, 1, spec, 0, 0.0) == k);
  CHECK(orthogonal_score(0.1, 1, 0.4, 0.5, 0.3, 1, spec, 0) == doctest::Approx(2 * k - 0.3));
  CHECK(orthogonal_score(0.1, 0, 0.4, 0.5, 0.3, 1, spec, 0) == doctest::Approx(0.3));
  // Arm 0 mirrors arm 1 under d -> 1 - d, pi -> 1 - pi.
  CHECK(orthogonal_score(0.1, 0, 0.4, 0.3, 0.2, 0, spec, 1) ==
        doctest::Approx(orthogonal_score(0.1, 1, 0.4, 0.7, 0.2, 1, spec, 1)));
  CHECK_THROWS_AS(orthogonal_score(0.1, 1, 0.4, 0.005, 0.3, 1, spec, 0), InvariantViolation);
  CHECK_THROWS_AS(orthogonal_score(0.1, 1, 0.4, 0.0, 0.3, 1, spec, 0, 0.0), InvariantViolation);
}

TEST_CASE("dml curve with oracle nuisances on duplicated arms") {
  const Sample s = mte::testing::duplicated_arms(mte::testing::random_sample(60, 1, 2));
  const KernelSpec spec(KernelFamily::Gaussian, 0.5);
  const auto grid = linspace(-2, 4, 25);
  const auto part = make_folds(s.size(), 4, 1);
  const auto b = oracle_bundle(s, 4, 0.5, grid, spec);
  for (int order = 0; order <= 2; ++order) {
    const auto c1 = dml_density_curve(s, part, b, spec, grid, 1, order);
    const auto c0 = dml_density_curve(s, part, b, spec, grid, 0, order);
    for (std::size_t j = 0; j < grid.size(); ++j) CHECK(std::abs(c1.values[j] - c0.values[j]) <= 1e-10);
  }
  const auto v = dml_variance_components(s, part, b, spec, 1.0, 1.0);
  CHECK(std::abs(v.v1 - v.v0) <= 1e-10);
}

TEST_CASE("dml curve with pi = 1 on an all-treated sample is the kernel average") {
  std::vector<double> y{0.1, 0.5, 0.9, 1.4, 2.0, 2.2};
  const Sample s(y, std::vector<int>(6, 1), {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}, 1);
  const KernelSpec spec(KernelFamily::Gaussian, 0.4);
  const auto grid = linspace(-1, 3, 9);
  const auto part = make_folds(6, 2, 5);
  NuisanceBundle b;
  for (int k = 0; k < 2; ++k)
    b.folds.push_back({PropensityFit("one", 0.0, [](auto) { return 1.0; }), oracle_g(s, 1, grid, spec),
                       oracle_g(s, 1, grid, spec)});
  const auto c = dml_density_curve(s, part, b, spec, grid, 1, 0, 0.0);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    // Equal fold sizes, so the fold-weighted mean is the plain mean.
    double avg = 0.0;
    for (double v : y) avg += scaled_kernel(spec, grid[j] - v, 0);
    CHECK(c.values[j] == doctest::Approx(avg / 6.0).epsilon(1e-13));
  }
}

TEST_CASE("dml curve matches a direct cross-fit average") {
  const Sample s = mte::testing::random_sample(150, 2, 3);
  const KernelSpec spec(KernelFamily::Gaussian, 0.5);
  const auto grid = linspace(-2, 4, 15);
  const auto part = make_folds(s.size(), 3, 9);
  const auto b = fit_nuisances(s, part, grid, spec, {});
  for (int arm : {0, 1}) {
    const auto c = dml_density_curve(s, part, b, spec, grid, arm, 0);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      double total = 0.0;
      for (int k = 0; k < 3; ++k) {
        const auto& nu = b.folds[k];
        const auto members = part.fold(k);
        double sum = 0.0;
        for (auto i : members) {
          const double pi = nu.pi.predict(s.x(i));
          const double g = (arm == 1 ? nu.g1 : nu.g0).predict(s.x(i), j, 0);
          const double d = s.d(i);
          const double kern = scaled_kernel(spec, grid[j] - s.y(i), 0);
          sum += arm == 1 ? d * kern / pi - (d - pi) / pi * g
                          : (1 - d) * kern / (1 - pi) - (pi - d) / (1 - pi) * g;
        }
        total += sum / members.size();
      }
      CHECK(c.values[j] == doctest::Approx(total / 3).epsilon(1e-11).scale(1e-12));
    }
  }
}

TEST_CASE("nuisances are fitted on the auxiliary sample only") {
  const Sample s = mte::testing::random_sample(120, 1, 4);
  const KernelSpec spec(KernelFamily::Gaussian, 0.5);
  const auto grid = linspace(-2, 4, 9);
  const auto part = make_folds(s.size(), 3, 2);
  NuisanceConfig cfg;
  cfg.g_learner = OutcomeLearner::KNN;
  cfg.g_hyper.k = 100000;  // every auxiliary arm member
  const auto b = fit_nuisances(s, part, grid, spec, cfg);
  for (int k = 0; k < 3; ++k) {
    double sum = 0.0;
    std::size_t count = 0;
    for (auto i : part.complement(k))
      if (s.d(i) == 1) {
        sum += scaled_kernel(spec, grid[4] - s.y(i), 0);
        ++count;
      }
    CHECK(b.folds[k].g1.predict(s.x(0), 4, 0) == doctest::Approx(sum / count).epsilon(1e-13));
  }
}

TEST_CASE("fold relabelling gives bit-identical results") {
  const Sample s = mte::testing::random_sample(200, 1, 5);
  DmlOptions opt;
  opt.grid_points = 128;
  opt.partition = make_folds(s.size(), 4, 11);
  const auto a = estimate_dml_mte(s, opt);
  auto relabelled = *opt.partition;
  for (int& label : relabelled.assignments) label = 3 - label;
  opt.partition = relabelled;
  const auto b = estimate_dml_mte(s, opt);
  CHECK(a == b);
}

TEST_CASE("same inputs and seed give identical results") {
  const Sample s = mte::testing::random_sample(200, 2, 6);
  DmlOptions opt;
  opt.grid_points = 128;
  opt.seed = 42;
  CHECK(estimate_dml_mte(s, opt) == estimate_dml_mte(s, opt));
}

TEST_CASE("duplicated arms with mirrored folds give zero delta") {
  const Sample base = mte::testing::random_sample(80, 1, 7);
  const Sample s = mte::testing::duplicated_arms(base);
  // Copy i and copy i + n share a fold.
  const auto half = make_folds(base.size(), 4, 3);
  FoldPartition part = half;
  part.assignments.insert(part.assignments.end(), half.assignments.begin(), half.assignments.end());
  DmlOptions opt;
  opt.grid_points = 128;
  opt.partition = part;
  opt.nuisance.g_learner = OutcomeLearner::Ridge;
  for (auto pl : {PropensityLearner::Logistic, PropensityLearner::KNN, PropensityLearner::KernelNW}) {
    opt.nuisance.pi_learner = pl;
    const auto r = estimate_dml_mte(s, opt);
    CHECK(std::abs(r.delta) <= 1e-10);
  }
}

TEST_CASE("arm swap under a mirrored configuration") {
  const Sample s = mte::testing::random_sample(200, 1, 8);
  DmlOptions opt;
  opt.grid_points = 128;
  opt.partition = make_folds(s.size(), 5, 1);
  opt.nuisance.pi_learner = PropensityLearner::KNN;
  opt.nuisance.g_learner = OutcomeLearner::KNN;
  const auto a = estimate_dml_mte(s, opt);
  const auto b = estimate_dml_mte(s.swapped_arms(), opt);
  CHECK(a.theta1 == b.theta0);
  CHECK(a.theta0 == b.theta1);
  CHECK(a.delta == -b.delta);
  CHECK(a.se1 == doctest::Approx(b.se0).epsilon(1e-12));
  CHECK(a.se0 == doctest::Approx(b.se1).epsilon(1e-12));
}

TEST_CASE("order-1 dml curve matches finite differences of order 0") {
  const Sample s = mte::testing::random_sample(300, 1, 9);
  const KernelSpec spec(KernelFamily::Gaussian, 0.5);
  const auto grid = linspace(-1, 3, 801);
  const auto part = make_folds(s.size(), 5, 2);
  const auto b = fit_nuisances(s, part, grid, spec, {});
  for (int arm : {0, 1}) {
    const auto c0 = dml_density_curve(s, part, b, spec, grid, arm, 0);
    const auto c1 = dml_density_curve(s, part, b, spec, grid, arm, 1);
    double worst = 0.0, scale = 0.0;
    for (std::size_t j = 1; j + 1 < grid.size(); ++j) {
      const double fd = (c0.values[j + 1] - c0.values[j - 1]) / (grid[j + 1] - grid[j - 1]);
      worst = std::max(worst, std::abs(fd - c1.values[j]));
      scale = std::max(scale, std::abs(c1.values[j]));
    }
    CHECK(worst / scale <= 5e-3);
  }
}

TEST_CASE("configuration errors") {
  const Sample s = mte::testing::random_sample(60, 1, 10);
  const KernelSpec spec(KernelFamily::Gaussian, 0.5);
  const auto grid = linspace(-2, 4, 9);
  const auto part = make_folds(s.size(), 3, 2);
  const auto b = fit_nuisances(s, part, grid, spec, {});
  CHECK_THROWS_AS(dml_density_curve(s, part, b, spec, linspace(-2, 4, 10), 1, 0), ConfigurationError);
  CHECK_THROWS_AS(dml_density_curve(s, make_folds(s.size(), 4, 2), b, spec, grid, 1, 0), ConfigurationError);

  DmlOptions opt;
  opt.folds = 1;
  CHECK_THROWS_AS(estimate_dml_mte(s, opt), std::invalid_argument);
}

TEST_CASE("persistent one-arm folds raise a stratification error") {
  // Two treated observations: some fold's complement misses arm 1 whenever
  // both fall into one fold; with K = N every complement drops one unit, so
  // force the problem with a single treated unit.
  std::vector<double> y{0, 1, 2, 3, 4, 5}, x{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  const Sample s(y, {1, 0, 0, 0, 0, 0}, x, 1);
  DmlOptions opt;
  opt.folds = 3;
  opt.grid_points = 16;
  try {
    estimate_dml_mte(s, opt);
    FAIL("expected an error");
  } catch (const StratificationError& e) {
    CHECK(std::string(e.what()).find("stratified") != std::string::npos);
  }
}

TEST_CASE("reseeding is recorded") {
  // Two treated units out of 8 with K = 2: a partition fails when both land
  // in the same fold, which some seeds do.
  std::vector<double> y{0, 1, 2, 3, 4, 5, 6, 7}, x{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  const Sample s(y, {1, 1, 0, 0, 0, 0, 0, 0}, x, 1);
  bool saw_reseed = false;
  for (std::uint64_t seed = 0; seed < 40 && !saw_reseed; ++seed) {
    const auto p = make_folds(8, 2, seed);
    if (p.assignments[0] != p.assignments[1]) continue;
    DmlOptions opt;
    opt.folds = 2;
    opt.seed = seed;
    opt.grid_points = 16;
    opt.nuisance.pi_learner = PropensityLearner::KNN;
    opt.nuisance.g_learner = OutcomeLearner::KNN;
    const auto r = estimate_dml_mte(s, opt);
    CHECK(r.diagnostics.fold_reseeds > 0);
    saw_reseed = true;
  }
  CHECK(saw_reseed);
}

TEST_CASE("orthogonality diagnostics") {
  const auto dgp = sim::named_dgp("lognormal-confounded");
  const Sample s = sim::generate(dgp, 5000, 1);
  const KernelSpec spec(KernelFamily::Gaussian, 0.3);
  const double y = 1.4;
  NuisanceFunctions truth{[&](auto x) { return dgp.propensity(x); },
                          [&](auto x) {
                            // E[K_h(y - Y) | x, D = 1] by quadrature of the arm law.
                            double total = 0.0;
                            const int m = 4000;
                            const double lo = 1e-4, hi = 12.0;
                            const double step = (hi - lo) / m;
                            for (int t = 0; t <= m; ++t) {
                              const double v = lo + t * step;
                              const double w = (t == 0 || t == m) ? 0.5 : 1.0;
                              total += w * scaled_kernel(spec, y - v, 0) * dgp.treated.density(v, x);
                            }
                            return total * step;
                          }};
  const std::vector<double> eps{0.0, 0.1, 0.2};

  SUBCASE("zero perturbation gives zero shift") {
    NuisanceFunctions dir{[](auto) { return 0.1; }, [](auto) { return 0.05; }};
    const auto rows = orthogonality_check(s, y, spec, truth, dir, eps);
    CHECK(rows[0].shift == 0.0);
  }
  SUBCASE("perturbing g alone leaves the mean score unbiased") {
    NuisanceFunctions dir{{}, [](auto x) { return 0.2 + x[0]; }};
    for (const auto& r : orthogonality_check(s, y, spec, truth, dir, eps))
      CHECK(r.shift <= 3.0 * r.std_error + 1e-15);
  }
  SUBCASE("log-log slope") {
    const std::vector<OrthogonalityRow> rows{{0.1, 0.01, 0}, {0.2, 0.04, 0}, {0.4, 0.16, 0}};
    CHECK(log_log_slope(rows) == doctest::Approx(2.0));
  }
}

TEST_CASE("dml estimates on the confounded lognormal design") {
  const auto dgp = sim::named_dgp("lognormal-confounded");
  const double truth = sim::true_mode(dgp, 1) - sim::true_mode(dgp, 0);
  const Sample s = sim::generate(dgp, 4000, 77);
  const auto r = estimate_dml_mte(s);
  CHECK(std::abs(r.delta - truth) <= 0.2);
  CHECK(r.folds == 5);
  CHECK(r.method == Method::DML);
  CHECK(r.h == doctest::Approx(robust_scale(s.outcomes()) * std::pow(4000.0, -0.2)));
  CHECK(r.components.m1 < 0.0);
  CHECK(r.components.m0 < 0.0);
}
