#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mte/errors.hpp"
#include "mte/nuisance.hpp"
#include "test_support.hpp"

using namespace mte;
using mte::testing::linspace;

namespace {

Sample arm_only(const Sample& s, int arm) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.d(i) == arm) idx.push_back(i);
  return s.subset(idx);
}

Sample coin_sample(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> y(n), x(n);
  std::vector<int> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = u(rng);
    y[i] = u(rng);
    d[i] = u(rng) < 0.5;
  }
  return Sample(y, d, x, 1);
}

}  // namespace

TEST_CASE("clip_propensity") {
  CHECK(clip_propensity(0.001, 0.01) == 0.01);
  CHECK(clip_propensity(0.5, 0.01) == 0.5);
  CHECK(clip_propensity(1.2, 0.01) == 0.99);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  for (int t = 0; t < 500; ++t) {
    const double a = u(rng);
    const double b = u(rng);
    const double once = clip_propensity(a, 0.05);
    CHECK(clip_propensity(once, 0.05) == once);
    if (a <= b) CHECK(clip_propensity(a, 0.05) <= clip_propensity(b, 0.05));
    CHECK(once >= 0.05);
    CHECK(once <= 0.95);
  }
}

TEST_CASE("learner names round-trip") {
  for (auto l : {PropensityLearner::Logistic, PropensityLearner::KNN, PropensityLearner::KernelNW})
    CHECK(parse_propensity_learner(to_string(l)) == l);
  for (auto l : {OutcomeLearner::Ridge, OutcomeLearner::KNN}) CHECK(parse_outcome_learner(to_string(l)) == l);
  CHECK_THROWS_AS(parse_propensity_learner("forest"), std::invalid_argument);
}

TEST_CASE("logistic stationarity") {
  const Sample s = mte::testing::random_sample(400, 2, 31);
  const double lambda = 0.04;
  const auto m = fit_logistic(s, lambda, 100, 1e-10);
  // Penalized score equations evaluated independently.
  std::vector<double> grad(3, 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double eta = m.coef[0] + m.coef[1] * s.x(i)[0] + m.coef[2] * s.x(i)[1];
    const double r = s.d(i) - 1.0 / (1.0 + std::exp(-eta));
    grad[0] += r;
    grad[1] += r * s.x(i)[0];
    grad[2] += r * s.x(i)[1];
  }
  grad[1] -= lambda * m.coef[1];
  grad[2] -= lambda * m.coef[2];
  for (double g : grad) CHECK(std::abs(g / s.size()) <= 1e-9);
  CHECK(m.coef[1] > 0.0);  // D rises with x1 in this design
}

TEST_CASE("logistic on an independent coin") {
  std::vector<double> dev;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Sample s = coin_sample(2000, 100 + seed);
    const auto fit = fit_propensity(s, PropensityLearner::Logistic);
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) total += std::abs(fit.predict(s.x(i)) - 0.5);
    dev.push_back(total / s.size());
  }
  std::nth_element(dev.begin(), dev.begin() + 10, dev.end());
  CHECK(dev[10] <= 0.05);
}

TEST_CASE("logistic convergence failure carries the iteration count") {
  const Sample s = mte::testing::random_sample(200, 1, 4);
  PropensityHyper hyper;
  hyper.max_iterations = 1;
  try {
    fit_propensity(s, PropensityLearner::Logistic, hyper);
    FAIL("expected an error");
  } catch (const ConvergenceError& e) {
    CHECK(e.iterations() == 1);
  }
}

TEST_CASE("one-arm subsets are rejected") {
  const Sample s({1, 2, 3}, {1, 1, 1}, {0.1, 0.2, 0.3}, 1);
  for (auto l : {PropensityLearner::Logistic, PropensityLearner::KNN, PropensityLearner::KernelNW}) {
    PropensityHyper hyper;
    hyper.h = 0.5;
    CHECK_THROWS_AS(fit_propensity(s, l, hyper), NoOverlapError);
  }
}

TEST_CASE("knn propensity on a balanced duplicated design") {
  const Sample s = mte::testing::duplicated_arms(mte::testing::random_sample(60, 2, 8));
  PropensityHyper hyper;
  hyper.k = 10;
  const auto fit = fit_propensity(s, PropensityLearner::KNN, hyper);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(fit.raw(s.x(i)) == 0.5);
}

TEST_CASE("propensity predictions respect the clip range") {
  const Sample s = mte::testing::random_sample(300, 1, 5);
  PropensityHyper hyper;
  hyper.h = 0.2;
  hyper.clip_kappa = 0.1;
  for (auto l : {PropensityLearner::Logistic, PropensityLearner::KNN, PropensityLearner::KernelNW}) {
    const auto fit = fit_propensity(s, l, hyper);
    for (double x = -1.0; x <= 2.0; x += 0.05) {
      const std::vector<double> q{x};
      if (l == PropensityLearner::KNN) {
        CHECK(fit.raw(q) >= 0.0);
        CHECK(fit.raw(q) <= 1.0);
      }
      CHECK(fit.predict(q) >= 0.1);
      CHECK(fit.predict(q) <= 0.9);
    }
  }
}

TEST_CASE("kernel propensity is the Nadaraya-Watson ratio") {
  const Sample s = mte::testing::random_sample(50, 1, 6);
  PropensityHyper hyper;
  hyper.h = 0.3;
  hyper.clip_kappa = 0.0;
  const auto fit = fit_propensity(s, PropensityLearner::KernelNW, hyper);
  for (double x : {0.1, 0.5, 0.77}) {
    double num = 0, den = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      const double u = (x - s.x(j)[0]) / 0.3;
      const double w = std::exp(-0.5 * u * u);
      num += w * s.d(j);
      den += w;
    }
    CHECK(fit.predict(std::vector<double>{x}) == doctest::Approx(num / den).epsilon(1e-12));
  }
}

TEST_CASE("nearest neighbours") {
  const Sample s({0, 0, 0, 0, 0}, {1, 1, 1, 1, 1}, {0.0, 1.0, -1.0, 2.0, 1.0}, 1);
  const std::vector<double> q{0.5};
  // Distances: 0.5, 0.5, 1.5, 1.5, 0.5; ties go to the lower index.
  CHECK(nearest_neighbours(s, q, 2) == std::vector<std::size_t>{0, 1});
  CHECK(nearest_neighbours(s, q, 3) == std::vector<std::size_t>{0, 1, 4});
  CHECK(nearest_neighbours(s, q, 4) == std::vector<std::size_t>{0, 1, 2, 4});
  CHECK(nearest_neighbours(s, q, 99).size() == 5);
}

TEST_CASE("smoothed outcome: single observation with knn") {
  const Sample s({0.0}, {1}, {0.4}, 1);
  const KernelSpec spec(KernelFamily::Gaussian, 1.0);
  OutcomeHyper hyper;
  hyper.k = 1;
  const auto fit = fit_smoothed_outcome(s, 1, std::vector<double>{-1, 0, 1}, spec, OutcomeLearner::KNN, hyper);
  CHECK(fit.predict(std::vector<double>{3.0}, 1, 0) == doctest::Approx(0.3989423).epsilon(1e-7));
  CHECK(fit.arm() == 1);
  CHECK(fit.h() == 1.0);
}

TEST_CASE("smoothed outcome: ridge with a constant covariate is the arm mean") {
  const Sample base = mte::testing::random_sample(80, 1, 7);
  const Sample arm1 = arm_only(base, 1);
  std::vector<double> x(arm1.size(), 0.3);
  const Sample flat(arm1.outcomes(), arm1.treatments(), x, 1);
  const KernelSpec spec(KernelFamily::Gaussian, 0.4);
  const auto grid = linspace(-1, 3, 9);
  OutcomeHyper hyper;
  hyper.lambda = 1e8;
  const auto fit = fit_smoothed_outcome(flat, 1, grid, spec, OutcomeLearner::Ridge, hyper);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    double mean = 0.0;
    for (double y : flat.outcomes()) mean += scaled_kernel(spec, grid[j] - y, 0);
    mean /= static_cast<double>(flat.size());
    for (double q : {-5.0, 0.3, 2.0}) CHECK(std::abs(fit.predict(std::vector<double>{q}, j, 0) - mean) <= 1e-8);
  }
}

TEST_CASE("smoothed outcome: ridge matches a direct penalized least-squares solve") {
  const Sample arm1 = arm_only(mte::testing::random_sample(200, 2, 9), 1);
  const KernelSpec spec(KernelFamily::Gaussian, 0.5);
  const auto grid = linspace(-1, 3, 7);
  OutcomeHyper hyper;
  hyper.lambda = 0.7;
  const auto fit = fit_smoothed_outcome(arm1, 1, grid, spec, OutcomeLearner::Ridge, hyper);
  const Eigen::Index n = static_cast<Eigen::Index>(arm1.size());
  // Augmented system with an unpenalized intercept, solved by QR.
  Eigen::MatrixXd z(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    z(i, 0) = 1.0;
    z(i, 1) = arm1.x(i)[0];
    z(i, 2) = arm1.x(i)[1];
  }
  Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(3, 3);
  pen(1, 1) = pen(2, 2) = 0.7;
  for (int order = 0; order <= 2; ++order)
    for (std::size_t j = 0; j < grid.size(); ++j) {
      Eigen::VectorXd t(n);
      for (Eigen::Index i = 0; i < n; ++i) t(i) = scaled_kernel(spec, grid[j] - arm1.y(i), order);
      const Eigen::VectorXd b = (z.transpose() * z + pen).colPivHouseholderQr().solve(z.transpose() * t);
      const std::vector<double> q{0.2, 0.9};
      const double expect = b(0) + b(1) * q[0] + b(2) * q[1];
      CHECK(fit.predict(q, j, order) == doctest::Approx(expect).epsilon(1e-9).scale(1e-9));
    }
}

TEST_CASE("smoothed outcome: knn with k = arm size is the arm average") {
  const Sample arm0 = arm_only(mte::testing::random_sample(90, 1, 10), 0);
  const KernelSpec spec(KernelFamily::Epanechnikov, 0.8);
  const auto grid = linspace(-1, 3, 11);
  OutcomeHyper hyper;
  hyper.k = arm0.size();
  const auto fit = fit_smoothed_outcome(arm0, 0, grid, spec, OutcomeLearner::KNN, hyper);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    double sum = 0.0;
    for (double y : arm0.outcomes()) sum += scaled_kernel(spec, grid[j] - y, 0);
    CHECK(fit.predict(arm0.x(0), j, 0) == sum / static_cast<double>(arm0.size()));
  }
}

TEST_CASE("smoothed outcome: order-1 predictions match finite differences") {
  const Sample arm1 = arm_only(mte::testing::random_sample(300, 1, 11), 1);
  const KernelSpec spec(KernelFamily::Gaussian, 0.5);
  const auto grid = linspace(-1, 3, 801);
  for (auto learner : {OutcomeLearner::Ridge, OutcomeLearner::KNN}) {
    const auto fit = fit_smoothed_outcome(arm1, 1, grid, spec, learner);
    const std::vector<double> q{0.6};
    std::vector<double> g0(grid.size()), g1(grid.size());
    fit.predict_grid(q, 0, g0);
    fit.predict_grid(q, 1, g1);
    double worst = 0.0, scale = 0.0;
    for (std::size_t j = 1; j + 1 < grid.size(); ++j) {
      const double fd = (g0[j + 1] - g0[j - 1]) / (grid[j + 1] - grid[j - 1]);
      worst = std::max(worst, std::abs(fd - g1[j]));
      scale = std::max(scale, std::abs(g1[j]));
    }
    CHECK(worst / scale <= 5e-3);
  }
}

TEST_CASE("smoothed outcome: interpolation and errors") {
  const Sample arm1 = arm_only(mte::testing::random_sample(100, 1, 12), 1);
  const KernelSpec spec(KernelFamily::Gaussian, 0.5);
  const auto grid = linspace(0, 2, 5);
  const auto fit = fit_smoothed_outcome(arm1, 1, grid, spec, OutcomeLearner::Ridge, {}, {0});
  const std::vector<double> q{0.5};
  const double a = fit.predict(q, 1, 0);
  const double b = fit.predict(q, 2, 0);
  CHECK(fit.predict_at(q, 0.6, 0) == doctest::Approx(a + 0.2 * (b - a)));
  CHECK(fit.predict_at(q, 0.5, 0) == a);
  CHECK(fit.predict_at(q, -3.0, 0) == fit.predict(q, 0, 0));
  CHECK(fit.predict_at(q, 9.0, 0) == fit.predict(q, 4, 0));
  CHECK_FALSE(fit.has_order(1));
  CHECK_THROWS_AS(fit.predict(q, 0, 1), std::invalid_argument);

  CHECK_THROWS_AS(fit_smoothed_outcome(Sample{}, 1, grid, spec, OutcomeLearner::Ridge), EmptyArmError);
  CHECK_THROWS_AS(fit_smoothed_outcome(mte::testing::random_sample(30, 1, 1), 1, grid, spec,
                                       OutcomeLearner::Ridge),
                  std::invalid_argument);
}

TEST_CASE("ridge fits are bit-reproducible") {
  const Sample arm1 = arm_only(mte::testing::random_sample(150, 2, 13), 1);
  const KernelSpec spec(KernelFamily::Gaussian, 0.5);
  const auto grid = linspace(-1, 3, 64);
  const auto a = fit_smoothed_outcome(arm1, 1, grid, spec, OutcomeLearner::Ridge);
  const auto b = fit_smoothed_outcome(arm1, 1, grid, spec, OutcomeLearner::Ridge);
  std::vector<double> pa(64), pb(64);
  for (int order = 0; order <= 2; ++order) {
    a.predict_grid(arm1.x(3), order, pa);
    b.predict_grid(arm1.x(3), order, pb);
    CHECK(pa == pb);
  }
}

TEST_CASE("arm probabilities mirror under flipped treatment") {
  const Sample s = mte::testing::random_sample(150, 2, 41);
  const Sample t = s.swapped_arms();
  PropensityHyper hyper;
  hyper.h = 0.4;
  for (auto learner : {PropensityLearner::KNN, PropensityLearner::KernelNW}) {
    const auto a = fit_propensity(s, learner, hyper);
    const auto b = fit_propensity(t, learner, hyper);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(a.predict_arm(s.x(i), 1) == b.predict_arm(s.x(i), 0));
      CHECK(a.predict_arm(s.x(i), 0) == b.predict_arm(s.x(i), 1));
      CHECK(a.predict_arm(s.x(i), 1) + a.predict_arm(s.x(i), 0) == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}
