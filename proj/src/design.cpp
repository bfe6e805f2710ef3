#include "design.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace twophase {

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Rows of the logistic design matrix, ordered as [intercept?, aux columns].
Eigen::VectorXd logistic_row(const PhaseOneRecord& rec, const LogisticFormula& f) {
  Eigen::VectorXd v(f.n_terms());
  int k = 0;
  if (f.intercept) v[k++] = 1.0;
  for (int c : f.aux_columns) {
    if (c < 0 || c >= rec.aux.size())
      throw Error(ErrorCode::invalid,
                  "aux column " + std::to_string(c) + " missing on subject " +
                      std::to_string(rec.subject_id));
    v[k++] = rec.aux[c];
  }
  return v;
}

std::map<int, std::pair<long, long>> tally_strata(const std::vector<PhaseOneRecord>& records) {
  std::map<int, std::pair<long, long>> counts;  // stratum -> (N_j, n_j)
  for (const auto& r : records) {
    auto& c = counts[r.stratum];
    ++c.first;
    if (r.sampled) ++c.second;
  }
  return counts;
}

}  // namespace

const char* sampling_mode_name(SamplingMode mode) {
  switch (mode) {
    case SamplingMode::bernoulli_known: return "bernoulli_known";
    case SamplingMode::finite_population: return "finite_population";
    case SamplingMode::estimated_stratified: return "estimated_stratified";
    case SamplingMode::estimated_logistic: return "estimated_logistic";
  }
  return "unknown";
}

SamplingMode sampling_mode_from_name(const std::string& name) {
  if (name == "bernoulli_known") return SamplingMode::bernoulli_known;
  if (name == "finite_population") return SamplingMode::finite_population;
  if (name == "estimated_stratified") return SamplingMode::estimated_stratified;
  if (name == "estimated_logistic") return SamplingMode::estimated_logistic;
  throw Error(ErrorCode::schema, "unknown sampling mode '" + name + "'");
}

LogisticFit fit_logistic_alpha(const std::vector<PhaseOneRecord>& records,
                               const SamplingDesign& design) {
  const int q = design.logistic_formula.n_terms();
  if (q == 0) throw Error(ErrorCode::invalid, "logistic formula has no terms");

  std::vector<Eigen::Index> subset;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(records.size()); ++i)
    if (!design.in_v0(records[static_cast<size_t>(i)].stratum)) subset.push_back(i);
  if (static_cast<int>(subset.size()) <= q)
    throw Error(ErrorCode::degenerate, "too few records outside the always-sampled stratum");

  Eigen::MatrixXd x(static_cast<Eigen::Index>(subset.size()), q);
  Eigen::VectorXd y(static_cast<Eigen::Index>(subset.size()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto& rec = records[static_cast<size_t>(subset[static_cast<size_t>(r)])];
    x.row(r) = logistic_row(rec, design.logistic_formula).transpose();
    y[r] = rec.sampled ? 1.0 : 0.0;
  }

  const double tol = 1e-10;
  const int max_iter = 50;
  const double alpha_cap = 30.0;
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(q);
  std::ostringstream trace;

  auto loglik = [&](const Eigen::VectorXd& a) {
    double ll = 0.0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double eta = x.row(r).dot(a);
      ll += y[r] * eta - std::log1p(std::exp(eta));
    }
    return ll;
  };

  double ll = loglik(alpha);
  int iter = 0;
  double score_norm = 0.0;
  for (; iter < max_iter; ++iter) {
    Eigen::VectorXd score = Eigen::VectorXd::Zero(q);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(q, q);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double mu = expit(x.row(r).dot(alpha));
      score += (y[r] - mu) * x.row(r).transpose();
      info += mu * (1.0 - mu) * x.row(r).transpose() * x.row(r);
    }
    score_norm = score.lpNorm<Eigen::Infinity>();
    trace << "iter " << iter << " score " << score_norm << " ll " << ll << "\n";
    if (score_norm <= tol) break;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw Error(ErrorCode::singular,
                  "logistic information is singular (separation or collinear aux)\n" + trace.str());
    const Eigen::VectorXd step = ldlt.solve(score);

    double lambda = 1.0;
    bool accepted = false;
    for (int h = 0; h < 30; ++h) {
      const Eigen::VectorXd cand = alpha + lambda * step;
      const double cl = loglik(cand);
      if (std::isfinite(cl) && cl >= ll - 1e-12 * (1.0 + std::abs(ll))) {
        alpha = cand;
        ll = cl;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted)
      throw Error(ErrorCode::not_converged, "logistic step halving failed\n" + trace.str());
    if (alpha.lpNorm<Eigen::Infinity>() > alpha_cap)
      throw Error(ErrorCode::diverged,
                  "logistic coefficients diverging (perfect separation)\n" + trace.str());
  }
  if (score_norm > tol)
    throw Error(ErrorCode::not_converged,
                "logistic fit did not converge in " + std::to_string(max_iter) +
                    " iterations\n" + trace.str());

  // A perfectly separated fit converges in score norm while every fitted
  // probability is pinned at its indicator; a genuine probability model
  // always leaves interior residuals.
  double max_resid = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    max_resid = std::max(max_resid, std::abs(y[r] - expit(x.row(r).dot(alpha))));
  if (max_resid < 1e-8)
    throw Error(ErrorCode::diverged,
                "logistic fit is perfectly separated (all probabilities pinned)\n" +
                    trace.str());

  // Empirical information over V0^c, normalized by the full phase-one count:
  // the influence rows are Ihat^{-1} pidot (xi - pi) / (pi (1 - pi)), which
  // for the logistic model collapses to Ihat^{-1} v (xi - pi).
  const double n_all = static_cast<double>(records.size());
  Eigen::MatrixXd ihat = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = expit(x.row(r).dot(alpha));
    ihat += mu * (1.0 - mu) * x.row(r).transpose() * x.row(r);
  }
  ihat /= n_all;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(ihat);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw Error(ErrorCode::singular, "logistic influence information is singular");

  LogisticFit fit;
  fit.alpha = alpha;
  fit.influence = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(records.size()), q);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = expit(x.row(r).dot(alpha));
    fit.influence.row(subset[static_cast<size_t>(r)]) =
        ldlt.solve((y[r] - mu) * x.row(r).transpose()).transpose();
  }
  fit.iterations = iter;
  fit.score_norm = score_norm;
  fit.trace = trace.str();
  return fit;
}

WeightFit compute_weights(const std::vector<PhaseOneRecord>& records,
                          const SamplingDesign& design) {
  if (records.empty()) throw Error(ErrorCode::invalid, "no phase-one records");
  const Eigen::Index n = static_cast<Eigen::Index>(records.size());

  WeightFit fit;
  fit.mode = design.mode;
  fit.pi.resize(n);
  fit.stratum.resize(n);
  fit.sampled.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<size_t>(i)];
    fit.stratum[i] = r.stratum;
    fit.sampled[i] = r.sampled ? 1 : 0;
    if (design.in_v0(r.stratum) && !r.sampled)
      throw Error(ErrorCode::invalid,
                  "subject " + std::to_string(r.subject_id) +
                      " is in the always-sampled stratum but not sampled");
  }

  const auto counts = tally_strata(records);
  for (const auto& [stratum, c] : counts)
    fit.stratum_counts.push_back({stratum, c.first, c.second});

  switch (design.mode) {
    case SamplingMode::bernoulli_known: {
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = records[static_cast<size_t>(i)];
        double pi;
        if (design.in_v0(r.stratum)) {
          pi = 1.0;
        } else if (std::isfinite(r.known_pi)) {
          pi = r.known_pi;
        } else {
          const auto it = design.known_probs.find(r.stratum);
          if (it == design.known_probs.end())
            throw Error(ErrorCode::invalid,
                        "no known sampling probability for stratum " +
                            std::to_string(r.stratum));
          pi = it->second;
        }
        if (!(pi > 0.0) || pi > 1.0)
          throw Error(ErrorCode::invalid, "sampling probability outside (0,1] for subject " +
                                              std::to_string(r.subject_id));
        if (pi < design.pi_floor)
          throw Error(ErrorCode::invalid,
                      "sampling probability " + std::to_string(pi) + " below the floor " +
                          std::to_string(design.pi_floor));
        fit.pi[i] = pi;
      }
      break;
    }
    case SamplingMode::finite_population:
    case SamplingMode::estimated_stratified: {
      std::map<int, double> frac;
      for (const auto& [stratum, c] : counts) {
        if (design.in_v0(stratum)) {
          if (c.second != c.first)
            throw Error(ErrorCode::invalid, "always-sampled stratum " +
                                                std::to_string(stratum) + " not fully sampled");
          frac[stratum] = 1.0;
          continue;
        }
        if (c.second == 0)
          throw Error(ErrorCode::degenerate,
                      "stratum " + std::to_string(stratum) + " has no sampled subjects");
        const double f = static_cast<double>(c.second) / static_cast<double>(c.first);
        if (f < design.pi_floor)
          throw Error(ErrorCode::invalid,
                      "realized fraction " + std::to_string(f) + " in stratum " +
                          std::to_string(stratum) + " below the floor");
        frac[stratum] = f;
      }
      // alpha columns: non-degenerate strata outside V0, ascending label
      for (const auto& [stratum, c] : counts)
        if (!design.in_v0(stratum) && c.second < c.first)
          fit.alpha_strata.push_back(stratum);
      const int q = static_cast<int>(fit.alpha_strata.size());
      fit.alpha.resize(q);
      fit.alpha_influence = Eigen::MatrixXd::Zero(n, q);
      std::map<int, int> col_of;
      for (int j = 0; j < q; ++j) {
        const int s = fit.alpha_strata[static_cast<size_t>(j)];
        col_of[s] = j;
        fit.alpha[j] = frac[s];
      }
      const double n_all = static_cast<double>(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = records[static_cast<size_t>(i)];
        fit.pi[i] = frac[r.stratum];
        const auto it = col_of.find(r.stratum);
        if (it == col_of.end()) continue;  // V0 or degenerate stratum: zero row
        const double nu = static_cast<double>(counts.at(r.stratum).first) / n_all;
        fit.alpha_influence(i, it->second) =
            ((r.sampled ? 1.0 : 0.0) - fit.alpha[it->second]) / nu;
      }
      break;
    }
    case SamplingMode::estimated_logistic: {
      const LogisticFit lf = fit_logistic_alpha(records, design);
      fit.alpha = lf.alpha;
      fit.alpha_influence = lf.influence;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = records[static_cast<size_t>(i)];
        if (design.in_v0(r.stratum)) {
          fit.pi[i] = 1.0;
          continue;
        }
        const double pi =
            expit(logistic_row(r, design.logistic_formula).dot(lf.alpha));
        if (r.sampled && pi < design.pi_floor)
          throw Error(ErrorCode::invalid,
                      "fitted sampling probability " + std::to_string(pi) +
                          " below the floor for sampled subject " +
                          std::to_string(r.subject_id));
        fit.pi[i] = pi;
      }
      break;
    }
  }
  return fit;
}

void draw_phase_two(std::vector<PhaseOneRecord>& records, const SamplingDesign& design,
                    std::mt19937_64& rng) {
  switch (design.mode) {
    case SamplingMode::bernoulli_known:
    case SamplingMode::estimated_stratified: {
      const auto& probs = design.mode == SamplingMode::bernoulli_known
                              ? design.known_probs
                              : design.sampling_fractions;
      for (auto& r : records) {
        if (design.in_v0(r.stratum)) {
          r.sampled = true;
          continue;
        }
        const auto it = probs.find(r.stratum);
        if (it == probs.end())
          throw Error(ErrorCode::invalid,
                      "no draw probability for stratum " + std::to_string(r.stratum));
        if (it->second < 0.0 || it->second > 1.0)
          throw Error(ErrorCode::invalid, "draw probability outside [0,1]");
        r.sampled = std::bernoulli_distribution(it->second)(rng);
      }
      break;
    }
    case SamplingMode::estimated_logistic: {
      if (design.true_alpha.size() != design.logistic_formula.n_terms())
        throw Error(ErrorCode::invalid,
                    "true_alpha length does not match the logistic formula");
      for (auto& r : records) {
        if (design.in_v0(r.stratum)) {
          r.sampled = true;
          continue;
        }
        const double pi =
            1.0 / (1.0 + std::exp(-logistic_row(r, design.logistic_formula)
                                       .dot(design.true_alpha)));
        r.sampled = std::bernoulli_distribution(pi)(rng);
      }
      break;
    }
    case SamplingMode::finite_population: {
      std::map<int, std::vector<size_t>> members;
      for (size_t i = 0; i < records.size(); ++i) {
        auto& r = records[i];
        if (design.in_v0(r.stratum)) {
          r.sampled = true;
          continue;
        }
        r.sampled = false;
        members[r.stratum].push_back(i);
      }
      for (auto& [stratum, idx] : members) {
        const auto it = design.sampling_fractions.find(stratum);
        if (it == design.sampling_fractions.end())
          throw Error(ErrorCode::invalid,
                      "no sampling fraction for stratum " + std::to_string(stratum));
        if (it->second < 0.0 || it->second > 1.0)
          throw Error(ErrorCode::invalid, "sampling fraction outside [0,1]");
        const long nj = static_cast<long>(idx.size());
        const long take = std::lround(it->second * static_cast<double>(nj));
        if (take > nj)
          throw Error(ErrorCode::invalid,
                      "requested " + std::to_string(take) + " of " + std::to_string(nj) +
                          " subjects in stratum " + std::to_string(stratum));
        // partial Fisher-Yates: every n_j-subset equally likely
        for (long k = 0; k < take; ++k) {
          std::uniform_int_distribution<long> pick(k, nj - 1);
          std::swap(idx[static_cast<size_t>(k)], idx[static_cast<size_t>(pick(rng))]);
          records[idx[static_cast<size_t>(k)]].sampled = true;
        }
      }
      break;
    }
  }
}

}  // namespace twophase
