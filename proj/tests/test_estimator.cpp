#include <doctest.h>

#include <random>

#include "estimator.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace twophase;

TEST_CASE("full-cohort fit matches the brute-force maximizer, p = 1") {
  const CohortData data = fixtures::random_cohort(1001, 20, 1, /*all_unit_weights=*/true);
  const CoxFit fit = fit_wl_cox(data);
  REQUIRE(fit.converged);
  const double brute = oracles::golden_max(
      [&](double b) { return oracles::brute_loglik(data, Eigen::VectorXd::Constant(1, b)); },
      -8.0, 8.0);
  CHECK(std::abs(fit.beta[0] - brute) <= 1e-6);
}

TEST_CASE("weighted two-phase fit matches the brute-force maximizer") {
  const CohortData data = fixtures::random_cohort(1002, 30, 1);
  const CoxFit fit = fit_wl_cox(data);
  REQUIRE(fit.converged);
  const double brute = oracles::golden_max(
      [&](double b) { return oracles::brute_loglik(data, Eigen::VectorXd::Constant(1, b)); },
      -8.0, 8.0);
  CHECK(std::abs(fit.beta[0] - brute) <= 1e-6);
}

TEST_CASE("full-cohort fit matches the nested golden-section maximizer, p = 2") {
  const CohortData data = fixtures::random_cohort(1003, 20, 2, /*all_unit_weights=*/true);
  const CoxFit fit = fit_wl_cox(data);
  REQUIRE(fit.converged);
  const Eigen::Vector2d brute = oracles::golden_max_2d(
      [&](double b1, double b2) {
        Eigen::VectorXd beta(2);
        beta << b1, b2;
        return oracles::brute_loglik(data, beta);
      },
      -6.0, 6.0);
  CHECK(std::abs(fit.beta[0] - brute[0]) <= 1e-5);
  CHECK(std::abs(fit.beta[1] - brute[1]) <= 1e-5);
}

TEST_CASE("solution properties: score at root, SPD information, centered dfbeta") {
  const CohortData data = fixtures::random_cohort(1004, 60, 2);
  const CoxFit fit = fit_wl_cox(data);
  REQUIRE(fit.converged);
  CHECK(partial_score(data, fit.beta).lpNorm<Eigen::Infinity>() <= 1e-9);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.information);
  CHECK(es.eigenvalues().minCoeff() > 0.0);

  CHECK(fit.dfbeta.colwise().mean().lpNorm<Eigen::Infinity>() <= 1e-7);
  for (Eigen::Index i = 0; i < data.n(); ++i)
    if (data.weights[i] == 0.0) CHECK(fit.dfbeta.row(i).norm() == 0.0);

  // weighted mean of the efficient-score rows vanishes at the root
  const Eigen::MatrixXd rows =
      efficient_score_contributions(data, fit.beta, fit.hazard);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  for (Eigen::Index i = 0; i < data.n(); ++i)
    mean += data.weights[i] * rows.row(i).transpose();
  mean /= static_cast<double>(data.n());
  CHECK(mean.lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("self-consistency of the profiled hazard at the solution") {
  const CohortData data = fixtures::random_cohort(1005, 40, 2);
  const CoxFit fit = fit_wl_cox(data);
  const double n = static_cast<double>(data.n());
  for (Eigen::Index k = 0; k < fit.hazard.jump_times.size(); ++k) {
    const double t = fit.hazard.jump_times[k];
    double lhs = 0.0, rhs = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      if (data.weights[i] <= 0.0) continue;
      if (data.status[i] == 1 && data.times[i] <= t) lhs += data.weights[i];
      rhs += data.weights[i] * std::exp(data.covariates.row(i).dot(fit.beta)) *
             fit.hazard.cumulative(std::min(data.times[i], t));
    }
    CHECK(std::abs(lhs / n - rhs / n) <= 1e-8);
  }
}

TEST_CASE("affine reparameterization: beta maps by the inverse, predictions invariant") {
  const CohortData data = fixtures::random_cohort(1006, 50, 2);
  const CoxFit fit = fit_wl_cox(data);

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Matrix2d a;
  a << 1.3 + u(rng), u(rng), u(rng), 0.8 + u(rng);
  REQUIRE(std::abs(a.determinant()) > 0.05);
  Eigen::RowVector2d b;
  b << u(rng), u(rng);

  CohortData mapped = data;
  mapped.covariates = (data.covariates * a).rowwise() + b;
  const CoxFit fit2 = fit_wl_cox(mapped);

  const Eigen::VectorXd expected = a.inverse() * fit.beta;
  CHECK((fit2.beta - expected).lpNorm<Eigen::Infinity>() <= 1e-6);

  // per-subject cumulative hazards agree
  for (Eigen::Index i = 0; i < data.n(); i += 7) {
    const double h1 = std::exp(data.covariates.row(i).dot(fit.beta)) *
                      fit.hazard.cumulative(data.times[i]);
    const double h2 = std::exp(mapped.covariates.row(i).dot(fit2.beta)) *
                      fit2.hazard.cumulative(data.times[i]);
    CHECK(h1 == doctest::Approx(h2).epsilon(1e-6));
  }

  // influence of the linear functional d'beta is parameterization-free
  Eigen::Vector2d d;
  d << 0.7, -1.1;
  const Eigen::VectorXd pred1 = fit.dfbeta * d;
  const Eigen::VectorXd pred2 = fit2.dfbeta * (a.transpose() * d);
  CHECK((pred1 - pred2).lpNorm<Eigen::Infinity>() <=
        1e-6 * std::max(1.0, pred1.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("rescaling all weights leaves the root unchanged") {
  CohortData data = fixtures::random_cohort(1007, 35, 2);
  const CoxFit fit = fit_wl_cox(data);
  data.weights *= 5.5;
  const CoxFit fit2 = fit_wl_cox(data);
  CHECK((fit.beta - fit2.beta).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("Newton iteration is quadratically convergent near the root") {
  const CohortData data = fixtures::random_cohort(1008, 50, 2, /*all_unit_weights=*/true);
  const CoxFit fit = fit_wl_cox(data);
  bool checked = false;
  for (size_t k = 0; k + 1 < fit.trace.size(); ++k) {
    const double s = fit.trace[k].score_norm;
    if (s < 1e-2 && s > 1e-7) {
      CHECK(fit.trace[k + 1].score_norm <= 100.0 * s * s);
      checked = true;
    }
  }
  CHECK(checked);
}

TEST_CASE("constant covariate raises a singular-information error") {
  CohortData data = fixtures::random_cohort(1009, 15, 1, /*all_unit_weights=*/true);
  data.covariates.setConstant(1.0);
  try {
    (void)fit_wl_cox(data);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::singular);
    CHECK(std::string(e.what()).find("null direction") != std::string::npos);
  }
}

TEST_CASE("monotone likelihood is reported as divergence") {
  const CohortData data = fixtures::two_subject_example();
  try {
    (void)fit_wl_cox(data);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::diverged);
  }
}

TEST_CASE("fewer weighted events than covariates is rejected") {
  CohortData data = fixtures::random_cohort(1010, 10, 2, /*all_unit_weights=*/true);
  for (Eigen::Index i = 0; i < data.n(); ++i) data.status[i] = 0;
  data.status[0] = 1;
  try {
    (void)fit_wl_cox(data);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::degenerate);
  }
}

TEST_CASE("refit_hazard: identity at the fit, Nelson-Aalen at zero, brute force") {
  const CohortData data = fixtures::five_subject_fixture();
  const CoxFit fit = fit_wl_cox(data);

  const StepHazard at_fit = refit_hazard(data, fit.beta);
  CHECK((at_fit.jumps - fit.hazard.jumps).lpNorm<Eigen::Infinity>() == 0.0);

  const StepHazard at_zero = refit_hazard(data, Eigen::VectorXd::Zero(1));
  const auto [times0, jumps0] = oracles::brute_breslow(data, Eigen::VectorXd::Zero(1));
  for (Eigen::Index k = 0; k < at_zero.jumps.size(); ++k)
    CHECK(at_zero.jumps[k] == doctest::Approx(jumps0[static_cast<size_t>(k)]).epsilon(1e-12));

  const Eigen::VectorXd beta_null = Eigen::VectorXd::Constant(1, 0.25);
  const StepHazard at_null = refit_hazard(data, beta_null);
  const auto [times1, jumps1] = oracles::brute_breslow(data, beta_null);
  for (Eigen::Index k = 0; k < at_null.jumps.size(); ++k)
    CHECK(at_null.jumps[k] == doctest::Approx(jumps1[static_cast<size_t>(k)]).epsilon(1e-12));
}
