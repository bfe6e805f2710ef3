#pragma once

#include <random>

#include "survival.hpp"

namespace fixtures {

// Random weighted cohort; about 30% of the subjects carry weight zero and the
// times are rounded to force ties.
inline twophase::CohortData random_cohort(std::uint64_t seed, int n, int p,
                                          bool all_unit_weights = false, bool ties = true) {
  std::mt19937_64 rng(seed);
  twophase::CohortData data;
  data.times.resize(n);
  data.status.resize(n);
  data.covariates.resize(n, p);
  data.weights.resize(n);
  std::exponential_distribution<double> time_dist(1.0);
  std::bernoulli_distribution event_dist(0.6), zero_w(0.3);
  std::normal_distribution<double> z_dist(0.0, 1.0);
  std::uniform_real_distribution<double> w_dist(0.5, 3.0);
  for (;;) {
    bool any_event = false;
    for (int i = 0; i < n; ++i) {
      double t = time_dist(rng);
      if (ties) t = std::round(t * 8.0) / 8.0 + 0.125;
      data.times[i] = t;
      data.status[i] = event_dist(rng) ? 1 : 0;
      for (int j = 0; j < p; ++j) data.covariates(i, j) = z_dist(rng);
      data.weights[i] = all_unit_weights ? 1.0 : (zero_w(rng) ? 0.0 : w_dist(rng));
      if (data.status[i] == 1 && data.weights[i] > 0.0) any_event = true;
    }
    if (any_event) return data;
  }
}

inline twophase::CohortData two_subject_example() {
  twophase::CohortData data;
  data.times.resize(2);
  data.times << 1.0, 2.0;
  data.status.resize(2);
  data.status << 1, 0;
  data.covariates.resize(2, 1);
  data.covariates << 1.0, 0.0;
  data.weights = Eigen::VectorXd::Ones(2);
  return data;
}

// The five-subject weighted fixture with a zero-weight row and a tie.
inline twophase::CohortData five_subject_fixture() {
  twophase::CohortData data;
  data.times.resize(5);
  data.times << 2.0, 1.0, 2.0, 1.5, 3.0;
  data.status.resize(5);
  data.status << 1, 1, 1, 0, 0;
  data.covariates.resize(5, 1);
  data.covariates << 0.4, -1.1, 0.9, 2.0, -0.3;
  data.weights.resize(5);
  data.weights << 2.0, 1.0, 1.0, 0.0, 3.0;
  return data;
}

}  // namespace fixtures
