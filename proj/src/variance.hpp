#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>

#include "design.hpp"
#include "estimator.hpp"

namespace twophase {

// Covariance estimates for beta-hat, each already divided by the phase-one N.
struct VarianceReport {
  Eigen::MatrixXd model_based;
  std::optional<Eigen::MatrixXd> bernoulli_known;
  std::optional<Eigen::MatrixXd> fp_or_estimated;
  std::optional<Eigen::MatrixXd> stratified_second_moment;
  std::optional<Eigen::MatrixXd> stratified_variance;
  std::map<std::string, std::string> method_labels;
  Eigen::VectorXd residual_r2;  // per-column R^2 of dfbeta on alpha influence
};

// information^{-1} / N
Eigen::MatrixXd var_model_based(const CoxFit& fit);

// [information^{-1} + (1/N) sum_sampled (1 - pi_i) dfbeta_i dfbeta_i'] / N;
// the plug-in estimate for Bernoulli sampling with known weights.
Eigen::MatrixXd var_bernoulli_known(const CoxFit& fit, const WeightFit& weights);

// Residual sums of squares and cross products from the no-intercept least
// squares regression of dfbeta columns on alpha-influence columns, / N^2.
// With no alpha columns this is the empirical total (1/N^2) sum D_i D_i'.
// Both the regression route and the algebraically equivalent closed form are
// computed and must agree to 1e-10 relative.
Eigen::MatrixXd var_residual_regression(const CoxFit& fit, const WeightFit& weights);

struct ResidualRegression {
  Eigen::MatrixXd cov;
  Eigen::VectorXd r2;
};
ResidualRegression residual_regression_detail(const CoxFit& fit, const WeightFit& weights);

// Stratified plug-in: sum_j nu_j M2_j + sum_j nu_j (1-p_j)/p_j * {M2_j or
// Var_j}, all / N, where M2_j and Var_j are the within-stratum second moment
// and covariance of the influence contributions pi_i * dfbeta_i among sampled
// subjects of stratum j. use_second_moment=true gives the stratified
// Bernoulli form, false the finite-population form.
Eigen::MatrixXd var_stratified_closed_form(const CoxFit& fit, const WeightFit& weights,
                                           bool use_second_moment);

// Assembles every estimator applicable under the design mode.
VarianceReport build_variance_report(const CoxFit& fit, const WeightFit& weights);

}  // namespace twophase
