#pragma once

#include <Eigen/Dense>
#include <vector>

#include "errors.hpp"

namespace twophase {

// One cohort row per phase-one subject. `weights` holds the composite
// sampling weight xi_i / pi_i; rows with weight zero (unsampled subjects)
// never enter any sum and may carry placeholder times/covariates.
struct CohortData {
  Eigen::VectorXd times;       // follow-up time T >= 0
  Eigen::VectorXi status;      // event indicator in {0,1}
  Eigen::MatrixXd covariates;  // N x p
  Eigen::VectorXd weights;     // >= 0, zero for unsampled subjects

  Eigen::Index n() const { return times.size(); }
  Eigen::Index p() const { return covariates.cols(); }

  // Throws Error{invalid|degenerate} on malformed input.
  void validate() const;
};

// Weighted risk-set moments at the distinct weighted event times,
//   s0(t) = (1/N) sum_i w_i exp(Z_i b) 1[T_i >= t]
//   s1(t) = (1/N) sum_i w_i exp(Z_i b) Z_i 1[T_i >= t]
//   s2(t) = (1/N) sum_i w_i exp(Z_i b) Z_i Z_i' 1[T_i >= t]
struct RiskSetSums {
  Eigen::VectorXd event_times;        // strictly increasing
  Eigen::VectorXd s0;                 // one per event time, > 0
  Eigen::MatrixXd s1;                 // K x p, row k is s1(t_k)'
  std::vector<Eigen::MatrixXd> s2;    // K matrices p x p
};

// Right-continuous step function, zero before the first jump.
struct StepHazard {
  Eigen::VectorXd jump_times;  // strictly increasing
  Eigen::VectorXd jumps;       // positive

  double cumulative(double t) const;
};

RiskSetSums compute_risk_sums(const CohortData& data, const Eigen::VectorXd& beta);

// (1/N) sum_i w_i D_i [Z_i - s1(T_i)/s0(T_i)]
Eigen::VectorXd partial_score(const CohortData& data, const Eigen::VectorXd& beta);

// (1/N) sum_i w_i D_i [s2/s0 - (s1/s0)^x2](T_i); minus the score Jacobian.
Eigen::MatrixXd partial_information(const CohortData& data, const Eigen::VectorXd& beta);

// (1/N) sum_i w_i D_i [Z_i beta - log(N s0(T_i; beta))]
double log_partial_likelihood(const CohortData& data, const Eigen::VectorXd& beta);

// Tied events pool into a single jump: d Lhat(t) = weighted events at t / (N s0(t)).
StepHazard breslow_hazard(const CohortData& data, const Eigen::VectorXd& beta);

// Row i: D_i [Z_i - m(T_i)] - exp(Z_i beta) * sum_{t_k <= T_i} [Z_i - m(t_k)] jump_k
// with m = s1/s0. The weighted row average reproduces partial_score. `hazard`
// must have been produced at the same beta. Rows with weight zero are forced
// to zero when their placeholder covariates are unusable.
Eigen::MatrixXd efficient_score_contributions(const CohortData& data,
                                              const Eigen::VectorXd& beta,
                                              const StepHazard& hazard);

// Score, minus-Jacobian and log partial likelihood from one sweep; the Newton
// loop in the estimator uses this instead of three separate passes.
struct ScoreInfo {
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
  double loglik = 0.0;
};
ScoreInfo score_information_loglik(const CohortData& data, const Eigen::VectorXd& beta);

}  // namespace twophase
