#pragma once

#include <Eigen/Dense>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "errors.hpp"

namespace twophase {

enum class SamplingMode {
  bernoulli_known,       // pi known a priori per stratum (or per record)
  finite_population,     // exactly n_j drawn without replacement per stratum
  estimated_stratified,  // Bernoulli draws, weights from realized fractions
  estimated_logistic     // Bernoulli draws, weights from a logistic model
};

const char* sampling_mode_name(SamplingMode mode);
SamplingMode sampling_mode_from_name(const std::string& name);

struct LogisticFormula {
  bool intercept = true;
  std::vector<int> aux_columns;  // indices into the record aux vector

  int n_terms() const { return static_cast<int>(aux_columns.size()) + (intercept ? 1 : 0); }
};

// Declaration of the phase-two sampling mechanism. Stratum 0 and every label
// in always_sampled_strata form the always-sampled stratum: those subjects
// carry pi = 1 and contribute no sampling variability.
struct SamplingDesign {
  SamplingMode mode = SamplingMode::bernoulli_known;
  std::set<int> always_sampled_strata;
  std::map<int, double> known_probs;         // bernoulli_known
  std::map<int, double> sampling_fractions;  // draw targets for the other modes
  LogisticFormula logistic_formula;          // estimated_logistic
  Eigen::VectorXd true_alpha;                // generative alpha for logistic draws
  double pi_floor = 1e-3;

  bool in_v0(int stratum) const {
    return stratum == 0 || always_sampled_strata.count(stratum) > 0;
  }
};

struct PhaseOneRecord {
  long subject_id = 0;
  int stratum = 0;
  bool sampled = false;
  Eigen::VectorXd aux;  // empty unless the design needs it
  double known_pi = std::numeric_limits<double>::quiet_NaN();  // optional per-record pi
};

struct StratumCount {
  int stratum = 0;
  long n_total = 0;
  long n_sampled = 0;
};

// Per-subject sampling probabilities plus everything the estimated-weights
// variance needs: alpha, its per-subject influence rows (zero on the
// always-sampled stratum) and the realized stratum table.
struct WeightFit {
  Eigen::VectorXd pi;               // length N, in (0,1]
  Eigen::VectorXd alpha;            // q entries; empty for bernoulli_known
  Eigen::MatrixXd alpha_influence;  // N x q; 0 x 0 when alpha is empty
  std::vector<StratumCount> stratum_counts;
  std::vector<int> alpha_strata;  // stratified modes: stratum label per column
  Eigen::VectorXi stratum;        // per-subject stratum label
  Eigen::VectorXi sampled;        // per-subject xi

  SamplingMode mode = SamplingMode::bernoulli_known;
  long n() const { return pi.size(); }
  int q() const { return static_cast<int>(alpha.size()); }
};

struct LogisticFit {
  Eigen::VectorXd alpha;
  Eigen::MatrixXd influence;  // N x q, zero rows outside the fitting subset
  int iterations = 0;
  double score_norm = 0.0;
  std::string trace;
};

WeightFit compute_weights(const std::vector<PhaseOneRecord>& records,
                          const SamplingDesign& design);

// Maximum likelihood for the logistic inclusion model, restricted to records
// outside the always-sampled stratum. Damped Newton, score tolerance 1e-10.
LogisticFit fit_logistic_alpha(const std::vector<PhaseOneRecord>& records,
                               const SamplingDesign& design);

// Realizes sampling indicators in simulation; always-sampled strata are set
// to sampled unconditionally. The caller owns the generator and its seeding.
void draw_phase_two(std::vector<PhaseOneRecord>& records, const SamplingDesign& design,
                    std::mt19937_64& rng);

}  // namespace twophase
