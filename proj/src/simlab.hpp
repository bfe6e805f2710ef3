#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "design.hpp"
#include "estimator.hpp"
#include "variance.hpp"

namespace twophase {

struct BaselineSpec {
  enum class Family { exponential, weibull } family = Family::exponential;
  double rate = 1.0;   // exponential
  double shape = 1.0;  // weibull
  double scale = 1.0;  // weibull
};

struct CensoringSpec {
  double admin_time = std::numeric_limits<double>::infinity();  // point mass at tau
  double exponential_rate = 0.0;  // 0 = no continuous censoring
};

struct CovariateSpec {
  enum class Kind { bernoulli, normal } kind = Kind::bernoulli;
  double p = 0.5;     // bernoulli
  double mean = 0.0;  // normal
  double sd = 1.0;
};

// Auxiliary phase-one surrogate derived from one covariate column.
struct AuxSpec {
  enum class Kind { none, copy, flip, noise } kind = Kind::none;
  int source = 0;
  double param = 0.0;  // flip probability, or noise standard deviation
};

// Maps (event indicator, discretized aux level) to a stratum label.
// case_cohort sends every failure to the always-sampled stratum 0.
struct StrataRule {
  enum class Kind { case_cohort, delta_aux_table } kind = Kind::case_cohort;
  std::vector<std::vector<int>> table;  // [delta][aux_level]
};

struct ScenarioConfig {
  long n_subjects = 0;
  Eigen::VectorXd beta_true;
  BaselineSpec baseline;
  CensoringSpec censoring;
  std::vector<CovariateSpec> covariates;
  AuxSpec aux;
  std::vector<double> aux_cuts;  // discretization for continuous aux
  StrataRule strata_rule;
  SamplingDesign design;
  int replicates = 0;
  std::uint64_t master_seed = 0;
  int threads = 1;
  double max_failure_rate = 0.02;

  void validate() const;
};

struct GeneratedCohort {
  std::vector<PhaseOneRecord> records;  // stratum + aux, sampled flags unset
  CohortData full;                      // complete data, unit weights
};

// Phase-one cohort: i.i.d. subjects classified into strata afterwards.
GeneratedCohort generate_cohort(const ScenarioConfig& config, std::mt19937_64& rng);

// Same distribution realized the other way around: multinomial stratum labels
// first, then subjects drawn conditionally on their stratum (by rejection).
// stratum_probs[j] must be the marginal probability of stratum label j.
GeneratedCohort generate_cohort_stratified(const ScenarioConfig& config,
                                           const std::vector<double>& stratum_labels_probs,
                                           std::mt19937_64& rng);

struct ReplicateResult {
  Eigen::VectorXd beta;
  Eigen::VectorXd se_model;
  Eigen::VectorXd se_bernoulli;
  Eigen::VectorXd se_fp;
  bool converged = false;
  std::uint64_t seed_used = 0;
  std::string error;
};

struct StudySummary {
  int replicates = 0;
  int n_converged = 0;
  double failure_rate = 0.0;
  bool acceptable = true;  // failure rate within the configured bound

  Eigen::VectorXd mean_beta;
  Eigen::MatrixXd empirical_cov;  // across converged replicates
  Eigen::MatrixXd mean_cov_model;
  Eigen::MatrixXd mean_cov_bernoulli;
  Eigen::MatrixXd mean_cov_fp;
  std::optional<Eigen::MatrixXd> mean_cov_stratified_m2;
  std::optional<Eigen::MatrixXd> mean_cov_stratified_var;

  Eigen::VectorXd coverage_model;  // 95% Wald intervals containing beta_true
  Eigen::VectorXd coverage_bernoulli;
  Eigen::VectorXd coverage_fp;

  // Monte Carlo comparison of the empirical variance against the mean
  // fp/estimated formula value, per coordinate.
  Eigen::VectorXd var_band_halfwidth;   // 95% MC half width
  Eigen::VectorXd var_rel_discrepancy;  // |empirical - mean formula| / mean

  // Stratified designs only: per-replicate ordering diagnostics.
  double frac_m2_minus_var_psd = 0.0;      // second-moment minus variance form PSD
  double frac_bernoulli_above_fp = 1.0;    // bernoulli diag > fp diag, all coords

  std::vector<ReplicateResult> per_replicate;
};

StudySummary run_study(const ScenarioConfig& config);

// Regenerates one replicate's cohort and sampling indicators exactly as
// run_study saw them (same derived seed).
struct ReplicateData {
  GeneratedCohort cohort;
  std::uint64_t seed_used = 0;
};
ReplicateData regenerate_replicate(const ScenarioConfig& config, int replicate);

// First-order accuracy of the estimated-weights expansion: compares the
// reweighting effect of fitted vs true sampling probabilities against its
// linearization in (alpha_hat - alpha_0), per replicate.
struct LinearizationTerms {
  Eigen::VectorXd lhs;  // sqrt(N) * (reweighted - true-weighted) influence sum
  Eigen::VectorXd rhs;  // - plug-in gradient matrix * sqrt(N) (alpha_hat - alpha_0)
};
LinearizationTerms linearization_terms(const CoxFit& fit, const WeightFit& weights,
                                       const std::vector<PhaseOneRecord>& records,
                                       const SamplingDesign& design,
                                       const Eigen::VectorXd& alpha0,
                                       const Eigen::VectorXd& pi0);

struct LinearizationDiagnostic {
  long n_subjects = 0;
  int replicates_used = 0;
  double rms_lhs = 0.0;
  double rms_residual = 0.0;  // RMS of lhs - rhs
  double ratio = 0.0;         // rms_residual / rms_lhs
};
LinearizationDiagnostic weight_linearization_diagnostic(const ScenarioConfig& config);

}  // namespace twophase
