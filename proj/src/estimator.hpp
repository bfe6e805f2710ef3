#pragma once

#include <Eigen/Dense>
#include <vector>

#include "survival.hpp"

namespace twophase {

struct SolverOptions {
  double score_tol = 1e-9;   // max-norm of the partial score
  double beta_tol = 1e-8;    // relative change in beta
  int max_iterations = 25;
  int max_step_halvings = 10;
};

struct IterationRecord {
  int iteration = 0;
  double score_norm = 0.0;
  double step_size = 0.0;  // max-norm of the accepted step
  double loglik = 0.0;
};

struct CoxFit {
  Eigen::VectorXd beta;
  StepHazard hazard;            // Breslow cumulative hazard at beta
  Eigen::MatrixXd information;  // partial information at beta, 1/N-normalized
  long n_phase1 = 0;
  std::vector<IterationRecord> trace;
  Eigen::MatrixXd dfbeta;  // N x p influence contributions, zero when unsampled
  bool converged = false;
  double loglik = 0.0;
};

// Newton iteration with step halving on the weighted log partial likelihood,
// baseline hazard profiled out. Throws Error{singular | not_converged |
// diverged | degenerate} with the iteration trace in the message.
CoxFit fit_wl_cox(const CohortData& data, const SolverOptions& options = {});

// Breslow hazard at an externally supplied beta (e.g. a hypothesis null).
StepHazard refit_hazard(const CohortData& data, const Eigen::VectorXd& beta);

}  // namespace twophase
