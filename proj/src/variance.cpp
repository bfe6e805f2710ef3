#include "variance.hpp"

#include <cmath>

namespace twophase {

namespace {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

Eigen::MatrixXd inverse_information(const CoxFit& fit) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(fit.information);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw Error(ErrorCode::singular, "information matrix is singular");
  return ldlt.solve(Eigen::MatrixXd::Identity(fit.information.rows(), fit.information.cols()));
}

void check_alignment(const CoxFit& fit, const WeightFit& weights) {
  if (weights.n() != fit.n_phase1)
    throw Error(ErrorCode::invalid, "weight fit and cox fit cover different cohorts");
  for (Eigen::Index i = 0; i < weights.pi.size(); ++i) {
    if (weights.sampled[i] && !std::isfinite(weights.pi[i]))
      throw Error(ErrorCode::invalid,
                  "missing sampling probability for sampled subject " + std::to_string(i));
  }
}

}  // namespace

Eigen::MatrixXd var_model_based(const CoxFit& fit) {
  if (!fit.converged) throw Error(ErrorCode::invalid, "fit did not converge");
  return symmetrize(inverse_information(fit) / static_cast<double>(fit.n_phase1));
}

Eigen::MatrixXd var_bernoulli_known(const CoxFit& fit, const WeightFit& weights) {
  if (!fit.converged) throw Error(ErrorCode::invalid, "fit did not converge");
  check_alignment(fit, weights);
  const double n = static_cast<double>(fit.n_phase1);
  Eigen::MatrixXd total = inverse_information(fit);
  for (Eigen::Index i = 0; i < weights.pi.size(); ++i) {
    if (!weights.sampled[i]) continue;
    const Eigen::VectorXd d = fit.dfbeta.row(i).transpose();
    total += ((1.0 - weights.pi[i]) / n) * (d * d.transpose());
  }
  return symmetrize(total / n);
}

ResidualRegression residual_regression_detail(const CoxFit& fit, const WeightFit& weights) {
  if (!fit.converged) throw Error(ErrorCode::invalid, "fit did not converge");
  check_alignment(fit, weights);
  const double n = static_cast<double>(fit.n_phase1);
  const Eigen::MatrixXd& d = fit.dfbeta;
  const Eigen::MatrixXd& a = weights.alpha_influence;

  ResidualRegression out;
  if (a.cols() == 0) {
    out.cov = symmetrize((d.transpose() * d) / (n * n));
    out.r2 = Eigen::VectorXd::Zero(d.cols());
    return out;
  }

  long nonzero_rows = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    if (a.row(i).squaredNorm() > 0.0) ++nonzero_rows;
  if (nonzero_rows < a.cols() + 1)
    throw Error(ErrorCode::degenerate,
                "too few nonzero alpha-influence rows for the residual regression");

  const Eigen::MatrixXd ata = a.transpose() * a;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(ata);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff()))
    throw Error(ErrorCode::singular, "alpha-influence columns are rank deficient");

  const Eigen::MatrixXd atd = a.transpose() * d;
  const Eigen::MatrixXd gamma = ldlt.solve(atd);
  const Eigen::MatrixXd resid = d - a * gamma;
  const Eigen::MatrixXd via_residuals = symmetrize((resid.transpose() * resid) / (n * n));
  const Eigen::MatrixXd via_closed_form =
      symmetrize((d.transpose() * d - atd.transpose() * gamma) / (n * n));

  const double scale = std::max(via_residuals.norm(), 1e-300);
  if ((via_residuals - via_closed_form).norm() > 1e-10 * scale)
    throw Error(ErrorCode::internal,
                "residual-regression and closed-form variance routes disagree");

  out.cov = via_residuals;
  out.r2.resize(d.cols());
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    const double tot = d.col(j).squaredNorm();
    out.r2[j] = tot > 0.0 ? 1.0 - resid.col(j).squaredNorm() / tot : 0.0;
  }
  return out;
}

Eigen::MatrixXd var_residual_regression(const CoxFit& fit, const WeightFit& weights) {
  return residual_regression_detail(fit, weights).cov;
}

Eigen::MatrixXd var_stratified_closed_form(const CoxFit& fit, const WeightFit& weights,
                                           bool use_second_moment) {
  if (!fit.converged) throw Error(ErrorCode::invalid, "fit did not converge");
  check_alignment(fit, weights);
  const double n = static_cast<double>(fit.n_phase1);
  const Eigen::Index p = fit.beta.size();

  // Within-stratum moments of the influence contributions pi * dfbeta among
  // sampled subjects.
  struct Moments {
    long n_total = 0;
    long n_sampled = 0;
    Eigen::VectorXd sum;
    Eigen::MatrixXd sum2;
  };
  std::map<int, Moments> by_stratum;
  for (Eigen::Index i = 0; i < weights.stratum.size(); ++i) {
    auto& m = by_stratum[weights.stratum[i]];
    if (m.n_total == 0) {
      m.sum = Eigen::VectorXd::Zero(p);
      m.sum2 = Eigen::MatrixXd::Zero(p, p);
    }
    ++m.n_total;
    if (!weights.sampled[i]) continue;
    ++m.n_sampled;
    const Eigen::VectorXd ell = weights.pi[i] * fit.dfbeta.row(i).transpose();
    m.sum += ell;
    m.sum2 += ell * ell.transpose();
  }

  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(p, p);
  for (const auto& [stratum, m] : by_stratum) {
    if (m.n_sampled == 0)
      throw Error(ErrorCode::degenerate,
                  "stratum " + std::to_string(stratum) + " has no sampled subjects");
    const double nu = static_cast<double>(m.n_total) / n;
    const double pj = static_cast<double>(m.n_sampled) / static_cast<double>(m.n_total);
    const Eigen::MatrixXd m2 = m.sum2 / static_cast<double>(m.n_sampled);
    total += nu * m2;
    if (pj < 1.0) {
      const Eigen::VectorXd mean = m.sum / static_cast<double>(m.n_sampled);
      const Eigen::MatrixXd within =
          use_second_moment ? m2 : Eigen::MatrixXd(m2 - mean * mean.transpose());
      total += nu * (1.0 - pj) / pj * within;
    }
  }
  return symmetrize(total / n);
}

VarianceReport build_variance_report(const CoxFit& fit, const WeightFit& weights) {
  VarianceReport report;
  report.model_based = var_model_based(fit);
  report.method_labels["model_based"] = "inverse weighted information / N";

  switch (weights.mode) {
    case SamplingMode::bernoulli_known: {
      report.bernoulli_known = var_bernoulli_known(fit, weights);
      report.method_labels["bernoulli_known"] =
          "known-weights Bernoulli plug-in: information inverse plus weighted "
          "squared influence correction";
      const ResidualRegression rr = residual_regression_detail(fit, weights);
      report.fp_or_estimated = rr.cov;
      report.residual_r2 = rr.r2;
      report.method_labels["fp_or_estimated"] =
          "empirical total: mean squared IPW influence contributions";
      break;
    }
    case SamplingMode::finite_population:
    case SamplingMode::estimated_stratified: {
      report.bernoulli_known = var_bernoulli_known(fit, weights);
      report.method_labels["bernoulli_known"] =
          "known-weights Bernoulli plug-in (ignores stratum-frequency information)";
      const ResidualRegression rr = residual_regression_detail(fit, weights);
      report.fp_or_estimated = rr.cov;
      report.residual_r2 = rr.r2;
      report.method_labels["fp_or_estimated"] =
          "estimated-weights residual regression (finite-population equivalent)";
      report.stratified_second_moment = var_stratified_closed_form(fit, weights, true);
      report.method_labels["stratified_second_moment"] =
          "stratified Bernoulli closed form (within-stratum second moments)";
      report.stratified_variance = var_stratified_closed_form(fit, weights, false);
      report.method_labels["stratified_variance"] =
          "finite-population closed form (within-stratum variances)";
      break;
    }
    case SamplingMode::estimated_logistic: {
      report.bernoulli_known = var_bernoulli_known(fit, weights);
      report.method_labels["bernoulli_known"] =
          "known-weights Bernoulli plug-in at the fitted probabilities";
      const ResidualRegression rr = residual_regression_detail(fit, weights);
      report.fp_or_estimated = rr.cov;
      report.residual_r2 = rr.r2;
      report.method_labels["fp_or_estimated"] =
          "estimated-weights residual regression on the logistic influence";
      break;
    }
  }
  return report;
}

}  // namespace twophase
