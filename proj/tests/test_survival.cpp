#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "survival.hpp"

using namespace twophase;

namespace {
Eigen::VectorXd b1(double v) { return Eigen::VectorXd::Constant(1, v); }
}  // namespace

TEST_CASE("risk sums: two-subject hand example at beta 0") {
  const CohortData data = fixtures::two_subject_example();
  const RiskSetSums sums = compute_risk_sums(data, b1(0.0));
  REQUIRE(sums.event_times.size() == 1);
  CHECK(sums.event_times[0] == doctest::Approx(1.0));
  CHECK(sums.s0[0] == doctest::Approx(1.0));
  CHECK(sums.s1(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("risk sums: weights enter linearly") {
  CohortData data = fixtures::five_subject_fixture();
  const Eigen::VectorXd beta = b1(0.7);
  const RiskSetSums base = compute_risk_sums(data, beta);
  data.weights *= 2.0;
  const RiskSetSums doubled = compute_risk_sums(data, beta);
  for (Eigen::Index k = 0; k < base.s0.size(); ++k) {
    CHECK(doubled.s0[k] == doctest::Approx(2.0 * base.s0[k]));
    CHECK(doubled.s1(k, 0) == doctest::Approx(2.0 * base.s1(k, 0)));
    CHECK(doubled.s2[static_cast<size_t>(k)](0, 0) ==
          doctest::Approx(2.0 * base.s2[static_cast<size_t>(k)](0, 0)));
    CHECK(doubled.s1(k, 0) / doubled.s0[k] == doctest::Approx(base.s1(k, 0) / base.s0[k]));
  }
}

TEST_CASE("risk sums: five-subject weighted fixture matches direct summation") {
  const CohortData data = fixtures::five_subject_fixture();
  const Eigen::VectorXd beta = b1(0.5);
  const RiskSetSums sums = compute_risk_sums(data, beta);
  const oracles::BruteSums brute = oracles::brute_risk_sums(data, beta);
  REQUIRE(sums.event_times.size() == static_cast<Eigen::Index>(brute.event_times.size()));
  for (Eigen::Index k = 0; k < sums.event_times.size(); ++k) {
    const size_t kk = static_cast<size_t>(k);
    CHECK(sums.event_times[k] == doctest::Approx(brute.event_times[kk]));
    CHECK(sums.s0[k] == doctest::Approx(brute.s0[kk]).epsilon(1e-12));
    CHECK(sums.s1(k, 0) == doctest::Approx(brute.s1[kk][0]).epsilon(1e-12));
    CHECK(sums.s2[kk](0, 0) == doctest::Approx(brute.s2[kk](0, 0)).epsilon(1e-12));
  }
}

TEST_CASE("risk sums: centered second moment is PSD at every event time") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const CohortData data = fixtures::random_cohort(seed, 40, 3);
    Eigen::VectorXd beta(3);
    beta << 0.4, -0.3, 0.2;
    const RiskSetSums sums = compute_risk_sums(data, beta);
    for (Eigen::Index k = 0; k < sums.s0.size(); ++k) {
      const Eigen::VectorXd s1 = sums.s1.row(k).transpose();
      const Eigen::MatrixXd v =
          sums.s2[static_cast<size_t>(k)] - s1 * s1.transpose() / sums.s0[k];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (v + v.transpose()));
      CHECK(es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, v.norm()));
    }
  }
}

TEST_CASE("partial score: two-subject hand value") {
  const CohortData data = fixtures::two_subject_example();
  CHECK(partial_score(data, b1(0.0))[0] == doctest::Approx(0.25));
}

TEST_CASE("partial score: singleton weighted risk set is zero") {
  CohortData data = fixtures::random_cohort(5, 8, 1);
  data.weights.setZero();
  // only the last subject in time order carries weight and an event
  Eigen::Index latest = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i)
    if (data.times[i] > data.times[latest]) latest = i;
  data.weights[latest] = 2.5;
  data.status[latest] = 1;
  const Eigen::VectorXd score = partial_score(data, b1(0.3));
  CHECK(score.lpNorm<Eigen::Infinity>() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("partial score: matches finite differences of the log partial likelihood") {
  const CohortData data = fixtures::random_cohort(77, 10, 2);
  Eigen::VectorXd beta(2);
  beta << 0.3, -0.2;
  const Eigen::VectorXd score = partial_score(data, beta);
  const Eigen::VectorXd fd = oracles::finite_difference_gradient(
      [&](const Eigen::VectorXd& b) { return log_partial_likelihood(data, b); }, beta);
  CHECK((score - fd).norm() <= 1e-6 * std::max(1e-8, fd.norm()));
}

TEST_CASE("partial information: single-event singleton risk set is the zero matrix") {
  CohortData data;
  data.times = Eigen::VectorXd::Constant(1, 1.0);
  data.status = Eigen::VectorXi::Constant(1, 1);
  data.covariates = Eigen::MatrixXd::Constant(1, 1, 0.7);
  data.weights = Eigen::VectorXd::Constant(1, 1.0);
  CHECK(partial_information(data, b1(0.4))(0, 0) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("partial information: two-subject hand value 0.125") {
  const CohortData data = fixtures::two_subject_example();
  CHECK(partial_information(data, b1(0.0))(0, 0) == doctest::Approx(0.125));
}

TEST_CASE("partial information: matches the finite-difference score Jacobian") {
  const CohortData data = fixtures::random_cohort(99, 10, 2);
  Eigen::VectorXd beta(2);
  beta << 0.25, 0.1;
  const Eigen::MatrixXd info = partial_information(data, beta);
  const Eigen::MatrixXd jac = oracles::finite_difference_jacobian(
      [&](const Eigen::VectorXd& b) { return partial_score(data, b); }, beta);
  CHECK((info + jac).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("breslow: one subject, one event") {
  CohortData data;
  data.times = Eigen::VectorXd::Constant(1, 1.0);
  data.status = Eigen::VectorXi::Constant(1, 1);
  data.covariates = Eigen::MatrixXd::Zero(1, 1);
  data.weights = Eigen::VectorXd::Ones(1);
  const StepHazard hz = breslow_hazard(data, b1(0.0));
  REQUIRE(hz.jumps.size() == 1);
  CHECK(hz.cumulative(1.0) == doctest::Approx(1.0));
  CHECK(hz.cumulative(0.5) == doctest::Approx(0.0));
}

TEST_CASE("breslow: reduces to Nelson-Aalen at beta 0") {
  CohortData data;
  data.times.resize(2);
  data.times << 1.0, 2.0;
  data.status.resize(2);
  data.status << 1, 1;
  data.covariates = Eigen::MatrixXd::Zero(2, 1);
  data.weights = Eigen::VectorXd::Ones(2);
  const StepHazard hz = breslow_hazard(data, b1(0.0));
  REQUIRE(hz.jumps.size() == 2);
  CHECK(hz.jumps[0] == doctest::Approx(0.5));
  CHECK(hz.jumps[1] == doctest::Approx(1.0));
  CHECK(hz.cumulative(2.0) == doctest::Approx(1.5));
}

TEST_CASE("breslow: five-subject weighted fixture matches the displayed formula") {
  const CohortData data = fixtures::five_subject_fixture();
  const Eigen::VectorXd beta = b1(0.5);
  const StepHazard hz = breslow_hazard(data, beta);
  const auto [times, jumps] = oracles::brute_breslow(data, beta);
  REQUIRE(hz.jumps.size() == static_cast<Eigen::Index>(jumps.size()));
  for (Eigen::Index k = 0; k < hz.jumps.size(); ++k) {
    CHECK(hz.jump_times[k] == doctest::Approx(times[static_cast<size_t>(k)]));
    CHECK(hz.jumps[k] == doctest::Approx(jumps[static_cast<size_t>(k)]).epsilon(1e-12));
  }
}

TEST_CASE("breslow: jumps positive and cumulative nondecreasing") {
  const CohortData data = fixtures::random_cohort(123, 60, 2);
  Eigen::VectorXd beta(2);
  beta << -0.4, 0.6;
  const StepHazard hz = breslow_hazard(data, beta);
  double prev = 0.0;
  for (Eigen::Index k = 0; k < hz.jumps.size(); ++k) {
    CHECK(hz.jumps[k] > 0.0);
    const double cum = hz.cumulative(hz.jump_times[k]);
    CHECK(cum >= prev);
    prev = cum;
  }
}

TEST_CASE("efficient rows: censored subject before the first event has a zero row") {
  CohortData data = fixtures::two_subject_example();
  data.times.conservativeResize(3);
  data.status.conservativeResize(3);
  data.covariates.conservativeResize(3, 1);
  data.weights.conservativeResize(3);
  data.times[2] = 0.5;
  data.status[2] = 0;
  data.covariates(2, 0) = 2.0;
  data.weights[2] = 1.0;
  const Eigen::VectorXd beta = b1(0.2);
  const Eigen::MatrixXd rows =
      efficient_score_contributions(data, beta, breslow_hazard(data, beta));
  CHECK(rows.row(2).lpNorm<Eigen::Infinity>() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("efficient rows: weighted average reproduces the partial score") {
  const CohortData data = fixtures::random_cohort(321, 30, 2);
  Eigen::VectorXd beta(2);
  beta << 0.5, -0.1;
  const Eigen::MatrixXd rows =
      efficient_score_contributions(data, beta, breslow_hazard(data, beta));
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  for (Eigen::Index i = 0; i < data.n(); ++i)
    mean += data.weights[i] * rows.row(i).transpose();
  mean /= static_cast<double>(data.n());
  const Eigen::VectorXd score = partial_score(data, beta);
  CHECK((mean - score).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("efficient rows: five-subject fixture matches the two-term formula") {
  const CohortData data = fixtures::five_subject_fixture();
  const Eigen::VectorXd beta = b1(0.5);
  const Eigen::MatrixXd rows =
      efficient_score_contributions(data, beta, breslow_hazard(data, beta));
  const Eigen::MatrixXd brute = oracles::brute_efficient_rows(data, beta);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.weights[i] <= 0.0) continue;
    CHECK((rows.row(i) - brute.row(i)).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("weight rescaling: score and information scale, hazard and rows do not") {
  CohortData data = fixtures::random_cohort(555, 25, 2);
  Eigen::VectorXd beta(2);
  beta << 0.3, 0.3;
  const Eigen::VectorXd score = partial_score(data, beta);
  const Eigen::MatrixXd info = partial_information(data, beta);
  const StepHazard hz = breslow_hazard(data, beta);
  const Eigen::MatrixXd rows = efficient_score_contributions(data, beta, hz);

  const double c = 3.7;
  data.weights *= c;
  CHECK((partial_score(data, beta) - c * score).lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK((partial_information(data, beta) - c * info).lpNorm<Eigen::Infinity>() <= 1e-12);
  const StepHazard hz2 = breslow_hazard(data, beta);
  CHECK((hz2.jumps - hz.jumps).lpNorm<Eigen::Infinity>() <= 1e-12);
  const Eigen::MatrixXd rows2 = efficient_score_contributions(data, beta, hz2);
  CHECK((rows2 - rows).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("permutation of subjects leaves every output unchanged") {
  const CohortData data = fixtures::random_cohort(777, 20, 2);
  Eigen::VectorXd beta(2);
  beta << -0.2, 0.4;

  std::vector<Eigen::Index> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
  CohortData shuffled = data;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    shuffled.times[i] = data.times[perm[static_cast<size_t>(i)]];
    shuffled.status[i] = data.status[perm[static_cast<size_t>(i)]];
    shuffled.covariates.row(i) = data.covariates.row(perm[static_cast<size_t>(i)]);
    shuffled.weights[i] = data.weights[perm[static_cast<size_t>(i)]];
  }

  CHECK((partial_score(data, beta) - partial_score(shuffled, beta)).norm() <= 1e-13);
  CHECK((partial_information(data, beta) - partial_information(shuffled, beta)).norm() <=
        1e-13);
  const StepHazard a = breslow_hazard(data, beta), b = breslow_hazard(shuffled, beta);
  CHECK((a.jumps - b.jumps).norm() <= 1e-13);
  const Eigen::MatrixXd ra = efficient_score_contributions(data, beta, a);
  const Eigen::MatrixXd rb = efficient_score_contributions(shuffled, beta, b);
  for (Eigen::Index i = 0; i < data.n(); ++i)
    CHECK((ra.row(perm[static_cast<size_t>(i)]) - rb.row(i)).norm() <= 1e-12);
}

TEST_CASE("unit weights reproduce the naive full-cohort quantities, N = 50 with ties") {
  const CohortData data = fixtures::random_cohort(2024, 50, 3, /*all_unit_weights=*/true);
  Eigen::VectorXd beta(3);
  beta << 0.2, -0.5, 0.15;
  CHECK((partial_score(data, beta) - oracles::brute_score(data, beta)).norm() <= 1e-12);
  CHECK(log_partial_likelihood(data, beta) ==
        doctest::Approx(oracles::brute_loglik(data, beta)).epsilon(1e-12));
  const auto [times, jumps] = oracles::brute_breslow(data, beta);
  const StepHazard hz = breslow_hazard(data, beta);
  REQUIRE(hz.jumps.size() == static_cast<Eigen::Index>(jumps.size()));
  for (Eigen::Index k = 0; k < hz.jumps.size(); ++k)
    CHECK(hz.jumps[k] == doctest::Approx(jumps[static_cast<size_t>(k)]).epsilon(1e-12));
}

TEST_CASE("errors: ill-conditioned beta, empty fits, bad inputs") {
  CohortData data = fixtures::two_subject_example();
  CHECK_THROWS_AS((void)compute_risk_sums(data, b1(1000.0)), Error);

  data.weights.setZero();
  CHECK_THROWS_AS((void)partial_score(data, b1(0.0)), Error);

  CohortData bad = fixtures::two_subject_example();
  bad.status[0] = 2;
  CHECK_THROWS_AS((void)partial_score(bad, b1(0.0)), Error);

  CohortData negative = fixtures::two_subject_example();
  negative.times[0] = -1.0;
  CHECK_THROWS_AS((void)partial_score(negative, b1(0.0)), Error);
}
