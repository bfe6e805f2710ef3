#include "survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace twophase {

namespace {

// Risk-set moments accumulated on the centered scale: covariates are shifted
// by their weighted mean before exponentiation so exp() stays in range, and
// the shift is undone only where the original scale is required.
struct Sweep {
  Eigen::VectorXd zbar;              // weighted covariate mean
  std::vector<double> etime;         // ascending distinct weighted event times
  std::vector<double> s0c;           // (1/N) sum w exp(c) over risk set
  std::vector<Eigen::VectorXd> s1c;
  std::vector<Eigen::MatrixXd> s2c;  // filled only when requested
  std::vector<double> d0;            // (1/N) sum w D over ties at etime[k]
  std::vector<Eigen::VectorXd> d1c;  // (1/N) sum w D (Z - zbar) over ties
};

Eigen::VectorXd weighted_covariate_mean(const CohortData& data) {
  const Eigen::Index n = data.n(), p = data.p();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  double wsum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = data.weights[i];
    if (w <= 0.0) continue;
    mean += w * data.covariates.row(i).transpose();
    wsum += w;
  }
  if (wsum > 0.0) mean /= wsum;
  return mean;
}

Sweep run_sweep(const CohortData& data, const Eigen::VectorXd& beta, bool need_s2) {
  data.validate();
  const Eigen::Index n = data.n(), p = data.p();
  if (beta.size() != p || !beta.allFinite())
    throw Error(ErrorCode::invalid, "beta must be a finite vector of length p");

  Sweep sw;
  sw.zbar = weighted_covariate_mean(data);

  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return data.times[a] < data.times[b];
  });

  const double inv_n = 1.0 / static_cast<double>(n);
  double r0 = 0.0;
  Eigen::VectorXd r1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd r2 = Eigen::MatrixXd::Zero(p, p);

  // Reverse-time sweep; each tie group enters the risk set before its own
  // event mass is recorded (Y(t) = 1[T >= t]).
  std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(n) - 1;
  while (pos >= 0) {
    const double t = data.times[order[static_cast<size_t>(pos)]];
    double ev0 = 0.0;
    Eigen::VectorXd ev1 = Eigen::VectorXd::Zero(p);
    while (pos >= 0 && data.times[order[static_cast<size_t>(pos)]] == t) {
      const Eigen::Index i = order[static_cast<size_t>(pos)];
      --pos;
      const double w = data.weights[i];
      if (w <= 0.0) continue;
      const Eigen::VectorXd zc = data.covariates.row(i).transpose() - sw.zbar;
      const double risk = w * std::exp(zc.dot(beta));
      if (!std::isfinite(risk))
        throw Error(ErrorCode::overflow,
                    "exp(Z beta) overflow at subject " + std::to_string(i) +
                        "; beta is ill-conditioned for these covariates");
      r0 += risk;
      r1 += risk * zc;
      if (need_s2) r2 += risk * (zc * zc.transpose());
      if (data.status[i] == 1) {
        ev0 += w;
        ev1 += w * zc;
      }
    }
    if (ev0 > 0.0) {
      if (r0 <= 0.0)
        throw Error(ErrorCode::overflow,
                    "risk-set sum underflowed to zero at time " + std::to_string(t));
      sw.etime.push_back(t);
      sw.s0c.push_back(r0 * inv_n);
      sw.s1c.push_back(r1 * inv_n);
      if (need_s2) sw.s2c.push_back(r2 * inv_n);
      sw.d0.push_back(ev0 * inv_n);
      sw.d1c.push_back(ev1 * inv_n);
    }
  }
  std::reverse(sw.etime.begin(), sw.etime.end());
  std::reverse(sw.s0c.begin(), sw.s0c.end());
  std::reverse(sw.s1c.begin(), sw.s1c.end());
  std::reverse(sw.s2c.begin(), sw.s2c.end());
  std::reverse(sw.d0.begin(), sw.d0.end());
  std::reverse(sw.d1c.begin(), sw.d1c.end());
  return sw;
}

}  // namespace

void CohortData::validate() const {
  const Eigen::Index nn = n();
  if (nn == 0) throw Error(ErrorCode::invalid, "cohort is empty");
  if (status.size() != nn || weights.size() != nn || covariates.rows() != nn)
    throw Error(ErrorCode::invalid, "cohort fields have inconsistent lengths");
  bool any_weighted_event = false;
  for (Eigen::Index i = 0; i < nn; ++i) {
    if (!(times[i] >= 0.0) || !std::isfinite(times[i]))
      throw Error(ErrorCode::invalid,
                  "times[" + std::to_string(i) + "] must be finite and nonnegative");
    if (status[i] != 0 && status[i] != 1)
      throw Error(ErrorCode::invalid, "status[" + std::to_string(i) + "] must be 0 or 1");
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i]))
      throw Error(ErrorCode::invalid,
                  "weights[" + std::to_string(i) + "] must be finite and nonnegative");
    if (weights[i] > 0.0 && !covariates.row(i).allFinite())
      throw Error(ErrorCode::invalid,
                  "covariates[" + std::to_string(i) + "] must be finite when weighted");
    if (weights[i] > 0.0 && status[i] == 1) any_weighted_event = true;
  }
  if (!any_weighted_event)
    throw Error(ErrorCode::degenerate, "no event with positive weight; nothing to fit");
}

double StepHazard::cumulative(double t) const {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < jump_times.size() && jump_times[k] <= t; ++k)
    acc += jumps[k];
  return acc;
}

RiskSetSums compute_risk_sums(const CohortData& data, const Eigen::VectorXd& beta) {
  const Sweep sw = run_sweep(data, beta, /*need_s2=*/true);
  const size_t k = sw.etime.size();
  const double shift = std::exp(sw.zbar.dot(beta));

  RiskSetSums out;
  out.event_times = Eigen::Map<const Eigen::VectorXd>(sw.etime.data(),
                                                      static_cast<Eigen::Index>(k));
  out.s0.resize(static_cast<Eigen::Index>(k));
  out.s1.resize(static_cast<Eigen::Index>(k), data.p());
  out.s2.reserve(k);
  for (size_t j = 0; j < k; ++j) {
    const double s0 = sw.s0c[j] * shift;
    const Eigen::VectorXd s1 = (sw.s1c[j] + sw.zbar * sw.s0c[j]) * shift;
    Eigen::MatrixXd s2 = (sw.s2c[j] + sw.s1c[j] * sw.zbar.transpose() +
                          sw.zbar * sw.s1c[j].transpose() +
                          sw.s0c[j] * sw.zbar * sw.zbar.transpose()) *
                         shift;
    if (!std::isfinite(s0) || !s1.allFinite() || !s2.allFinite())
      throw Error(ErrorCode::overflow, "risk-set sums overflow; beta is ill-conditioned");
    out.s0[static_cast<Eigen::Index>(j)] = s0;
    out.s1.row(static_cast<Eigen::Index>(j)) = s1.transpose();
    out.s2.push_back(std::move(s2));
  }
  return out;
}

ScoreInfo score_information_loglik(const CohortData& data, const Eigen::VectorXd& beta) {
  const Sweep sw = run_sweep(data, beta, /*need_s2=*/true);
  const Eigen::Index p = data.p();
  const double n = static_cast<double>(data.n());

  ScoreInfo out;
  out.score = Eigen::VectorXd::Zero(p);
  out.information = Eigen::MatrixXd::Zero(p, p);
  for (size_t k = 0; k < sw.etime.size(); ++k) {
    const Eigen::VectorXd m = sw.s1c[k] / sw.s0c[k];
    out.score += sw.d1c[k] - sw.d0[k] * m;
    out.information += sw.d0[k] * (sw.s2c[k] / sw.s0c[k] - m * m.transpose());
    out.loglik += sw.d1c[k].dot(beta) - sw.d0[k] * std::log(n * sw.s0c[k]);
  }
  out.information = 0.5 * (out.information + out.information.transpose()).eval();
  return out;
}

Eigen::VectorXd partial_score(const CohortData& data, const Eigen::VectorXd& beta) {
  return score_information_loglik(data, beta).score;
}

Eigen::MatrixXd partial_information(const CohortData& data, const Eigen::VectorXd& beta) {
  return score_information_loglik(data, beta).information;
}

double log_partial_likelihood(const CohortData& data, const Eigen::VectorXd& beta) {
  return score_information_loglik(data, beta).loglik;
}

StepHazard breslow_hazard(const CohortData& data, const Eigen::VectorXd& beta) {
  const Sweep sw = run_sweep(data, beta, /*need_s2=*/false);
  const size_t k = sw.etime.size();
  const double unshift = std::exp(-sw.zbar.dot(beta));

  StepHazard hz;
  hz.jump_times = Eigen::Map<const Eigen::VectorXd>(sw.etime.data(),
                                                    static_cast<Eigen::Index>(k));
  hz.jumps.resize(static_cast<Eigen::Index>(k));
  for (size_t j = 0; j < k; ++j) {
    const double jump = sw.d0[j] / sw.s0c[j] * unshift;
    if (!std::isfinite(jump) || jump <= 0.0)
      throw Error(ErrorCode::overflow, "hazard jump not representable; beta is ill-conditioned");
    hz.jumps[static_cast<Eigen::Index>(j)] = jump;
  }
  return hz;
}

Eigen::MatrixXd efficient_score_contributions(const CohortData& data,
                                              const Eigen::VectorXd& beta,
                                              const StepHazard& hazard) {
  const Sweep sw = run_sweep(data, beta, /*need_s2=*/false);
  const Eigen::Index n = data.n(), p = data.p();
  const Eigen::Index nk = hazard.jump_times.size();
  if (hazard.jumps.size() != nk)
    throw Error(ErrorCode::invalid, "hazard jump_times/jumps length mismatch");

  // m = s1/s0 at each hazard jump time; jump times must be event times of
  // the data (the hazard was produced at the same beta).
  const double zb = sw.zbar.dot(beta);
  std::vector<double> g(static_cast<size_t>(nk));          // jump * exp(zbar beta)
  std::vector<Eigen::VectorXd> mc(static_cast<size_t>(nk));  // centered m
  for (Eigen::Index k = 0; k < nk; ++k) {
    const auto it = std::lower_bound(sw.etime.begin(), sw.etime.end(), hazard.jump_times[k]);
    if (it == sw.etime.end() || *it != hazard.jump_times[k])
      throw Error(ErrorCode::invalid,
                  "hazard jump time is not a weighted event time of the data");
    const size_t j = static_cast<size_t>(it - sw.etime.begin());
    mc[static_cast<size_t>(k)] = sw.s1c[j] / sw.s0c[j];
    g[static_cast<size_t>(k)] = std::exp(std::log(hazard.jumps[k]) + zb);
  }

  // Prefix sums of g and m*g turn the inner integral into two lookups.
  std::vector<double> cumg(static_cast<size_t>(nk));
  std::vector<Eigen::VectorXd> cummg(static_cast<size_t>(nk));
  double acc = 0.0;
  Eigen::VectorXd accv = Eigen::VectorXd::Zero(p);
  for (Eigen::Index k = 0; k < nk; ++k) {
    acc += g[static_cast<size_t>(k)];
    accv += mc[static_cast<size_t>(k)] * g[static_cast<size_t>(k)];
    cumg[static_cast<size_t>(k)] = acc;
    cummg[static_cast<size_t>(k)] = accv;
  }

  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.weights[i] <= 0.0 && !data.covariates.row(i).allFinite()) continue;
    const Eigen::VectorXd zc = data.covariates.row(i).transpose() - sw.zbar;
    const double ezc = std::exp(zc.dot(beta));
    if (!std::isfinite(ezc)) {
      if (data.weights[i] > 0.0)
        throw Error(ErrorCode::overflow, "exp(Z beta) overflow in score contributions");
      continue;  // placeholder row, leave at zero
    }
    Eigen::VectorXd row = Eigen::VectorXd::Zero(p);
    // last hazard jump at or before T_i
    const auto it = std::upper_bound(hazard.jump_times.data(),
                                     hazard.jump_times.data() + nk, data.times[i]);
    const std::ptrdiff_t last = (it - hazard.jump_times.data()) - 1;
    if (data.status[i] == 1) {
      // exact match for weighted events; left-step extension for weight-zero rows
      Eigen::VectorXd m_at = Eigen::VectorXd::Zero(p);
      if (last >= 0) m_at = mc[static_cast<size_t>(last)];
      row += zc - m_at;
    }
    if (last >= 0) {
      const size_t j = static_cast<size_t>(last);
      row -= ezc * (zc * cumg[j] - cummg[j]);
    }
    rows.row(i) = row.transpose();
  }
  return rows;
}

}  // namespace twophase
