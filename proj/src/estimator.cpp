#include "estimator.hpp"

#include <cmath>
#include <sstream>

namespace twophase {

namespace {

std::string format_trace(const std::vector<IterationRecord>& trace) {
  std::ostringstream os;
  for (const auto& r : trace)
    os << "  iter " << r.iteration << ": score " << r.score_norm << " step " << r.step_size
       << " loglik " << r.loglik << "\n";
  return os.str();
}

// Direction of (near) null space, reported when the information is singular.
std::string null_direction(const Eigen::MatrixXd& info) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info);
  std::ostringstream os;
  os << "[";
  const Eigen::VectorXd v = es.eigenvectors().col(0);
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << "]";
  return os.str();
}

}  // namespace

CoxFit fit_wl_cox(const CohortData& data, const SolverOptions& options) {
  data.validate();
  const Eigen::Index n = data.n(), p = data.p();

  double weighted_events = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (data.status[i] == 1 && data.weights[i] > 0.0) weighted_events += 1.0;
  if (weighted_events < static_cast<double>(p))
    throw Error(ErrorCode::degenerate,
                "fewer weighted events than covariates; information would be singular");

  CoxFit fit;
  fit.beta = Eigen::VectorXd::Zero(p);
  fit.n_phase1 = static_cast<long>(n);

  ScoreInfo cur = score_information_loglik(data, fit.beta);
  bool likelihood_increased_throughout = true;

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.information);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <=
            1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff()))
      throw Error(ErrorCode::singular,
                  "singular information (collinear covariates); null direction approx " +
                      null_direction(cur.information) + "\n" + format_trace(fit.trace));
    const Eigen::VectorXd step = ldlt.solve(cur.score);

    double lambda = 1.0;
    bool accepted = false;
    Eigen::VectorXd cand;
    ScoreInfo cand_si;
    for (int h = 0; h <= options.max_step_halvings; ++h) {
      cand = fit.beta + lambda * step;
      try {
        cand_si = score_information_loglik(data, cand);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::overflow) {
          lambda *= 0.5;
          continue;
        }
        throw;
      }
      if (std::isfinite(cand_si.loglik) &&
          cand_si.loglik >= cur.loglik - 1e-13 * (1.0 + std::abs(cur.loglik))) {
        accepted = true;
        break;
      }
      if (cand_si.loglik < cur.loglik) likelihood_increased_throughout = false;
      lambda *= 0.5;
    }
    if (!accepted)
      throw Error(ErrorCode::diverged,
                  "step halving exhausted " + std::to_string(options.max_step_halvings) +
                      " times; monotone-likelihood divergence suspected\n" +
                      format_trace(fit.trace));

    const double step_size = (lambda * step).lpNorm<Eigen::Infinity>();
    fit.beta = cand;
    cur = cand_si;
    fit.trace.push_back({iter, cur.score.lpNorm<Eigen::Infinity>(), step_size, cur.loglik});

    if (fit.beta.lpNorm<Eigen::Infinity>() > 500.0)
      throw Error(ErrorCode::diverged,
                  "beta runaway (|beta| > 500); monotone-likelihood divergence\n" +
                      format_trace(fit.trace));

    const double rel_change = step_size / (1.0 + fit.beta.lpNorm<Eigen::Infinity>());
    if (cur.score.lpNorm<Eigen::Infinity>() <= options.score_tol &&
        rel_change <= options.beta_tol) {
      fit.converged = true;
      break;
    }
  }

  if (!fit.converged) {
    // Score driven to zero while beta keeps marching with non-vanishing steps
    // is the signature of a partial likelihood increasing toward a supremum
    // at infinity rather than a hard-to-reach interior root.
    const bool runaway = likelihood_increased_throughout &&
                         fit.beta.lpNorm<Eigen::Infinity>() > 10.0 &&
                         !fit.trace.empty() && fit.trace.back().step_size > 0.1;
    throw Error(runaway ? ErrorCode::diverged : ErrorCode::not_converged,
                std::string(runaway ? "monotone-likelihood divergence detected"
                                    : "no convergence") +
                    " after " + std::to_string(options.max_iterations) + " iterations\n" +
                    format_trace(fit.trace));
  }

  fit.loglik = cur.loglik;
  fit.information = cur.information;
  fit.hazard = breslow_hazard(data, fit.beta);

  const Eigen::MatrixXd contrib = efficient_score_contributions(data, fit.beta, fit.hazard);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(fit.information);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw Error(ErrorCode::singular, "information singular at the solution");
  fit.dfbeta = ldlt.solve(contrib.transpose()).transpose();
  for (Eigen::Index i = 0; i < n; ++i) fit.dfbeta.row(i) *= data.weights[i];
  return fit;
}

StepHazard refit_hazard(const CohortData& data, const Eigen::VectorXd& beta) {
  return breslow_hazard(data, beta);
}

}  // namespace twophase
