#include "simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include "rng.hpp"

namespace twophase {

namespace {

int aux_level(const ScenarioConfig& config, const Eigen::VectorXd& aux) {
  if (aux.size() == 0) return 0;
  const double v = aux[0];
  if (config.aux_cuts.empty()) {
    const long lv = std::lround(v);
    return lv < 0 ? 0 : static_cast<int>(lv);
  }
  return static_cast<int>(std::upper_bound(config.aux_cuts.begin(), config.aux_cuts.end(), v) -
                          config.aux_cuts.begin());
}

int stratum_label(const ScenarioConfig& config, int delta, int level) {
  switch (config.strata_rule.kind) {
    case StrataRule::Kind::case_cohort:
      return delta == 1 ? 0 : 1 + level;
    case StrataRule::Kind::delta_aux_table: {
      const auto& table = config.strata_rule.table;
      if (delta < 0 || delta > 1 || static_cast<size_t>(delta) >= table.size() ||
          level < 0 || static_cast<size_t>(level) >= table[static_cast<size_t>(delta)].size())
        throw Error(ErrorCode::invalid,
                    "strata table has no entry for delta=" + std::to_string(delta) +
                        ", aux level=" + std::to_string(level));
      return table[static_cast<size_t>(delta)][static_cast<size_t>(level)];
    }
  }
  throw Error(ErrorCode::internal, "unreachable strata rule");
}

struct Subject {
  Eigen::VectorXd z;
  Eigen::VectorXd aux;
  double time = 0.0;
  int status = 0;
  int stratum = 0;
};

Subject draw_subject(const ScenarioConfig& config, std::mt19937_64& rng) {
  Subject s;
  const int p = static_cast<int>(config.covariates.size());
  s.z.resize(p);
  for (int j = 0; j < p; ++j) {
    const auto& spec = config.covariates[static_cast<size_t>(j)];
    switch (spec.kind) {
      case CovariateSpec::Kind::bernoulli:
        s.z[j] = std::bernoulli_distribution(spec.p)(rng) ? 1.0 : 0.0;
        break;
      case CovariateSpec::Kind::normal:
        s.z[j] = std::normal_distribution<double>(spec.mean, spec.sd)(rng);
        break;
    }
  }

  const double eta = s.z.dot(config.beta_true);
  const double e = std::exponential_distribution<double>(1.0)(rng);
  double t_event;
  switch (config.baseline.family) {
    case BaselineSpec::Family::exponential:
      t_event = e / (config.baseline.rate * std::exp(eta));
      break;
    case BaselineSpec::Family::weibull:
      t_event = config.baseline.scale * std::pow(e * std::exp(-eta), 1.0 / config.baseline.shape);
      break;
    default:
      throw Error(ErrorCode::internal, "unreachable baseline family");
  }

  double c = config.censoring.admin_time;
  if (config.censoring.exponential_rate > 0.0)
    c = std::min(c, std::exponential_distribution<double>(config.censoring.exponential_rate)(rng));

  s.time = std::min(t_event, c);
  s.status = t_event <= c ? 1 : 0;

  switch (config.aux.kind) {
    case AuxSpec::Kind::none:
      break;
    case AuxSpec::Kind::copy:
      s.aux = s.z.segment(config.aux.source, 1);
      break;
    case AuxSpec::Kind::flip: {
      double v = s.z[config.aux.source];
      if (std::bernoulli_distribution(config.aux.param)(rng)) v = 1.0 - v;
      s.aux = Eigen::VectorXd::Constant(1, v);
      break;
    }
    case AuxSpec::Kind::noise:
      s.aux = Eigen::VectorXd::Constant(
          1, s.z[config.aux.source] + std::normal_distribution<double>(0.0, config.aux.param)(rng));
      break;
  }

  s.stratum = stratum_label(config, s.status, aux_level(config, s.aux));
  return s;
}

GeneratedCohort assemble(const ScenarioConfig& config, std::vector<Subject>&& subjects) {
  const Eigen::Index n = static_cast<Eigen::Index>(subjects.size());
  const Eigen::Index p = static_cast<Eigen::Index>(config.covariates.size());
  GeneratedCohort out;
  out.records.resize(subjects.size());
  out.full.times.resize(n);
  out.full.status.resize(n);
  out.full.covariates.resize(n, p);
  out.full.weights = Eigen::VectorXd::Ones(n);
  long events = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& s = subjects[static_cast<size_t>(i)];
    out.full.times[i] = s.time;
    out.full.status[i] = s.status;
    out.full.covariates.row(i) = s.z.transpose();
    events += s.status;
    auto& rec = out.records[static_cast<size_t>(i)];
    rec.subject_id = static_cast<long>(i);
    rec.stratum = s.stratum;
    rec.aux = std::move(s.aux);
    rec.sampled = false;
  }
  if (events == 0)
    throw Error(ErrorCode::degenerate, "scenario produced a cohort with zero events");
  return out;
}

// Runs fn(r) for r in [0, n) on up to `threads` workers; exceptions from a
// worker are rethrown on the calling thread.
void parallel_replicates(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::clamp(threads, 1, 64);
  if (threads == 1 || n <= 1) {
    for (int r = 0; r < n; ++r) fn(r);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= n) return;
      try {
        fn(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct RepInternal {
  ReplicateResult result;
  Eigen::MatrixXd cov_model, cov_bern, cov_fp;
  std::optional<Eigen::MatrixXd> cov_m2, cov_var;
};

RepInternal run_one(const ScenarioConfig& config, int r) {
  RepInternal rep;
  rep.result.seed_used = derive_seed(config.master_seed, static_cast<std::uint64_t>(r));
  std::mt19937_64 rng(rep.result.seed_used);
  try {
    GeneratedCohort cohort = generate_cohort(config, rng);
    draw_phase_two(cohort.records, config.design, rng);
    const WeightFit weights = compute_weights(cohort.records, config.design);

    CohortData data = std::move(cohort.full);
    for (Eigen::Index i = 0; i < data.n(); ++i)
      data.weights[i] = weights.sampled[i] ? 1.0 / weights.pi[i] : 0.0;

    const CoxFit fit = fit_wl_cox(data);
    const VarianceReport report = build_variance_report(fit, weights);

    rep.result.beta = fit.beta;
    rep.cov_model = report.model_based;
    rep.cov_bern = report.bernoulli_known.value();
    rep.cov_fp = report.fp_or_estimated.value();
    rep.cov_m2 = report.stratified_second_moment;
    rep.cov_var = report.stratified_variance;
    rep.result.se_model = report.model_based.diagonal().cwiseSqrt();
    rep.result.se_bernoulli = rep.cov_bern.diagonal().cwiseSqrt();
    rep.result.se_fp = rep.cov_fp.diagonal().cwiseSqrt();
    rep.result.converged = true;
  } catch (const Error& e) {
    rep.result.converged = false;
    rep.result.error = e.what();
  }
  return rep;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (n_subjects <= 0) throw Error(ErrorCode::invalid, "n_subjects must be positive");
  if (replicates <= 0) throw Error(ErrorCode::invalid, "replicates must be positive");
  if (covariates.empty()) throw Error(ErrorCode::invalid, "at least one covariate required");
  if (beta_true.size() != static_cast<Eigen::Index>(covariates.size()))
    throw Error(ErrorCode::invalid, "beta_true length must match the covariate count");
  if (baseline.family == BaselineSpec::Family::exponential && !(baseline.rate > 0.0))
    throw Error(ErrorCode::invalid, "exponential baseline rate must be positive");
  if (baseline.family == BaselineSpec::Family::weibull &&
      (!(baseline.shape > 0.0) || !(baseline.scale > 0.0)))
    throw Error(ErrorCode::invalid, "weibull shape and scale must be positive");
  if (!(censoring.admin_time > 0.0))
    throw Error(ErrorCode::invalid, "administrative censoring time must be positive");
  if (censoring.exponential_rate < 0.0)
    throw Error(ErrorCode::invalid, "censoring rate must be nonnegative");
  for (const auto& c : covariates) {
    if (c.kind == CovariateSpec::Kind::bernoulli && (c.p < 0.0 || c.p > 1.0))
      throw Error(ErrorCode::invalid, "bernoulli covariate probability outside [0,1]");
    if (c.kind == CovariateSpec::Kind::normal && !(c.sd >= 0.0))
      throw Error(ErrorCode::invalid, "normal covariate sd must be nonnegative");
  }
  if (aux.kind != AuxSpec::Kind::none) {
    if (aux.source < 0 || static_cast<size_t>(aux.source) >= covariates.size())
      throw Error(ErrorCode::invalid, "aux source column out of range");
    if (aux.kind == AuxSpec::Kind::flip) {
      if (aux.param < 0.0 || aux.param > 1.0)
        throw Error(ErrorCode::invalid, "flip probability outside [0,1]");
      if (covariates[static_cast<size_t>(aux.source)].kind != CovariateSpec::Kind::bernoulli)
        throw Error(ErrorCode::invalid, "flip aux requires a bernoulli source covariate");
    }
    if (aux.kind == AuxSpec::Kind::noise && !(aux.param >= 0.0))
      throw Error(ErrorCode::invalid, "noise sd must be nonnegative");
  }
  if (strata_rule.kind == StrataRule::Kind::delta_aux_table) {
    if (strata_rule.table.size() != 2 || strata_rule.table[0].empty() ||
        strata_rule.table[1].empty())
      throw Error(ErrorCode::invalid, "strata table must have rows for delta = 0 and 1");
    for (const auto& row : strata_rule.table)
      for (int label : row)
        if (label < 0) throw Error(ErrorCode::invalid, "stratum labels must be nonnegative");
  }
  if (design.mode == SamplingMode::estimated_logistic) {
    if (aux.kind == AuxSpec::Kind::none && !design.logistic_formula.aux_columns.empty())
      throw Error(ErrorCode::invalid, "logistic design needs an aux variable");
    if (design.true_alpha.size() != design.logistic_formula.n_terms())
      throw Error(ErrorCode::invalid, "true_alpha length must match the logistic formula");
  }
  if (max_failure_rate < 0.0 || max_failure_rate > 1.0)
    throw Error(ErrorCode::invalid, "max_failure_rate outside [0,1]");
}

GeneratedCohort generate_cohort(const ScenarioConfig& config, std::mt19937_64& rng) {
  config.validate();
  std::vector<Subject> subjects;
  subjects.reserve(static_cast<size_t>(config.n_subjects));
  for (long i = 0; i < config.n_subjects; ++i) subjects.push_back(draw_subject(config, rng));
  return assemble(config, std::move(subjects));
}

GeneratedCohort generate_cohort_stratified(const ScenarioConfig& config,
                                           const std::vector<double>& stratum_labels_probs,
                                           std::mt19937_64& rng) {
  config.validate();
  if (stratum_labels_probs.empty())
    throw Error(ErrorCode::invalid, "stratum probabilities required");
  std::discrete_distribution<int> pick(stratum_labels_probs.begin(),
                                       stratum_labels_probs.end());
  std::vector<Subject> subjects;
  subjects.reserve(static_cast<size_t>(config.n_subjects));
  const long max_tries = 1000000;
  for (long i = 0; i < config.n_subjects; ++i) {
    const int target = pick(rng);
    long tries = 0;
    for (;;) {
      Subject s = draw_subject(config, rng);
      if (s.stratum == target) {
        subjects.push_back(std::move(s));
        break;
      }
      if (++tries >= max_tries)
        throw Error(ErrorCode::invalid,
                    "conditional draw for stratum " + std::to_string(target) +
                        " did not terminate; check the stratum probabilities");
    }
  }
  return assemble(config, std::move(subjects));
}

StudySummary run_study(const ScenarioConfig& config) {
  config.validate();
  const int nrep = config.replicates;
  const Eigen::Index p = config.beta_true.size();

  std::vector<RepInternal> reps(static_cast<size_t>(nrep));
  parallel_replicates(nrep, config.threads,
                      [&](int r) { reps[static_cast<size_t>(r)] = run_one(config, r); });

  StudySummary out;
  out.replicates = nrep;
  out.per_replicate.reserve(static_cast<size_t>(nrep));
  for (auto& rep : reps) out.per_replicate.push_back(rep.result);

  std::vector<const RepInternal*> ok;
  for (const auto& rep : reps)
    if (rep.result.converged) ok.push_back(&rep);
  out.n_converged = static_cast<int>(ok.size());
  out.failure_rate = 1.0 - static_cast<double>(out.n_converged) / static_cast<double>(nrep);
  out.acceptable = out.failure_rate <= config.max_failure_rate;
  if (ok.empty()) {
    out.acceptable = false;
    return out;
  }
  const double rc = static_cast<double>(ok.size());

  out.mean_beta = Eigen::VectorXd::Zero(p);
  for (const auto* rep : ok) out.mean_beta += rep->result.beta;
  out.mean_beta /= rc;

  out.empirical_cov = Eigen::MatrixXd::Zero(p, p);
  for (const auto* rep : ok) {
    const Eigen::VectorXd d = rep->result.beta - out.mean_beta;
    out.empirical_cov += d * d.transpose();
  }
  if (ok.size() > 1) out.empirical_cov /= rc - 1.0;

  out.mean_cov_model = Eigen::MatrixXd::Zero(p, p);
  out.mean_cov_bernoulli = Eigen::MatrixXd::Zero(p, p);
  out.mean_cov_fp = Eigen::MatrixXd::Zero(p, p);
  const bool stratified = ok.front()->cov_m2.has_value();
  Eigen::MatrixXd mean_m2 = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd mean_var = Eigen::MatrixXd::Zero(p, p);
  long psd_count = 0, bern_above = 0;
  for (const auto* rep : ok) {
    out.mean_cov_model += rep->cov_model;
    out.mean_cov_bernoulli += rep->cov_bern;
    out.mean_cov_fp += rep->cov_fp;
    if (stratified) {
      mean_m2 += rep->cov_m2.value();
      mean_var += rep->cov_var.value();
      const Eigen::MatrixXd diff = rep->cov_m2.value() - rep->cov_var.value();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(diff);
      if (es.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, diff.norm())) ++psd_count;
    }
    bool above = true;
    for (Eigen::Index k = 0; k < p; ++k)
      if (!(rep->cov_bern(k, k) > rep->cov_fp(k, k))) above = false;
    if (above) ++bern_above;
  }
  out.mean_cov_model /= rc;
  out.mean_cov_bernoulli /= rc;
  out.mean_cov_fp /= rc;
  if (stratified) {
    out.mean_cov_stratified_m2 = mean_m2 / rc;
    out.mean_cov_stratified_var = mean_var / rc;
    out.frac_m2_minus_var_psd = static_cast<double>(psd_count) / rc;
  }
  out.frac_bernoulli_above_fp = static_cast<double>(bern_above) / rc;

  const double z95 = 1.959963984540054;
  out.coverage_model = Eigen::VectorXd::Zero(p);
  out.coverage_bernoulli = Eigen::VectorXd::Zero(p);
  out.coverage_fp = Eigen::VectorXd::Zero(p);
  for (const auto* rep : ok) {
    for (Eigen::Index k = 0; k < p; ++k) {
      const double err = std::abs(rep->result.beta[k] - config.beta_true[k]);
      if (err <= z95 * rep->result.se_model[k]) out.coverage_model[k] += 1.0;
      if (err <= z95 * rep->result.se_bernoulli[k]) out.coverage_bernoulli[k] += 1.0;
      if (err <= z95 * rep->result.se_fp[k]) out.coverage_fp[k] += 1.0;
    }
  }
  out.coverage_model /= rc;
  out.coverage_bernoulli /= rc;
  out.coverage_fp /= rc;

  // Monte Carlo band: variance of the sample variance via fourth central
  // moments, combined with the (much smaller) error of the mean formula value.
  out.var_band_halfwidth = Eigen::VectorXd::Zero(p);
  out.var_rel_discrepancy = Eigen::VectorXd::Zero(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    double m4 = 0.0;
    for (const auto* rep : ok) m4 += std::pow(rep->result.beta[k] - out.mean_beta[k], 4);
    m4 /= rc;
    const double s2 = out.empirical_cov(k, k);
    const double var_s2 =
        rc > 3 ? (m4 - (rc - 3.0) / (rc - 1.0) * s2 * s2) / rc : m4 / std::max(rc, 1.0);
    double mean_v = out.mean_cov_fp(k, k);
    double var_v = 0.0;
    for (const auto* rep : ok) var_v += std::pow(rep->cov_fp(k, k) - mean_v, 2);
    var_v /= rc * std::max(rc - 1.0, 1.0);
    out.var_band_halfwidth[k] = z95 * std::sqrt(std::max(var_s2, 0.0) + var_v);
    out.var_rel_discrepancy[k] = mean_v > 0.0 ? std::abs(s2 - mean_v) / mean_v : 0.0;
  }
  return out;
}

ReplicateData regenerate_replicate(const ScenarioConfig& config, int replicate) {
  config.validate();
  if (replicate < 0 || replicate >= config.replicates)
    throw Error(ErrorCode::invalid, "replicate index out of range");
  ReplicateData out;
  out.seed_used = derive_seed(config.master_seed, static_cast<std::uint64_t>(replicate));
  std::mt19937_64 rng(out.seed_used);
  out.cohort = generate_cohort(config, rng);
  draw_phase_two(out.cohort.records, config.design, rng);
  return out;
}

LinearizationTerms linearization_terms(const CoxFit& fit, const WeightFit& weights,
                                       const std::vector<PhaseOneRecord>& records,
                                       const SamplingDesign& design,
                                       const Eigen::VectorXd& alpha0,
                                       const Eigen::VectorXd& pi0) {
  const Eigen::Index n = fit.dfbeta.rows();
  const Eigen::Index p = fit.dfbeta.cols();
  const int q = weights.q();
  if (alpha0.size() != q || pi0.size() != n)
    throw Error(ErrorCode::invalid, "alpha0/pi0 dimensions do not match the weight fit");
  const double sqrt_n = std::sqrt(static_cast<double>(n));

  LinearizationTerms out;
  out.lhs = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!weights.sampled[i]) continue;
    out.lhs += fit.dfbeta.row(i).transpose() * (1.0 - weights.pi[i] / pi0[i]);
  }
  out.lhs /= sqrt_n;

  // gradient of pi in alpha, per subject: indicator columns for stratified
  // fractions, pi(1-pi) v for the logistic model
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(p, q);
  if (weights.mode == SamplingMode::estimated_logistic) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& rec = records[static_cast<size_t>(i)];
      if (design.in_v0(rec.stratum) || !weights.sampled[i]) continue;
      Eigen::VectorXd v(q);
      int k = 0;
      if (design.logistic_formula.intercept) v[k++] = 1.0;
      for (int c : design.logistic_formula.aux_columns) v[k++] = rec.aux[c];
      const double pidot = weights.pi[i] * (1.0 - weights.pi[i]);
      grad += (fit.dfbeta.row(i).transpose() / weights.pi[i]) * (pidot * v.transpose());
    }
  } else {
    std::map<int, int> col_of;
    for (int j = 0; j < q; ++j) col_of[weights.alpha_strata[static_cast<size_t>(j)]] = j;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!weights.sampled[i]) continue;
      const auto it = col_of.find(weights.stratum[i]);
      if (it == col_of.end()) continue;
      grad.col(it->second) += fit.dfbeta.row(i).transpose() / weights.pi[i];
    }
  }
  grad /= static_cast<double>(n);

  out.rhs = -grad * (sqrt_n * (weights.alpha - alpha0));
  return out;
}

LinearizationDiagnostic weight_linearization_diagnostic(const ScenarioConfig& config) {
  config.validate();
  if (config.design.mode != SamplingMode::estimated_stratified &&
      config.design.mode != SamplingMode::estimated_logistic)
    throw Error(ErrorCode::invalid,
                "the linearization diagnostic needs an estimated-weights design");

  const int nrep = config.replicates;
  std::vector<double> sq_lhs(static_cast<size_t>(nrep), -1.0);
  std::vector<double> sq_resid(static_cast<size_t>(nrep), -1.0);

  parallel_replicates(nrep, config.threads, [&](int r) {
    std::mt19937_64 rng(derive_seed(config.master_seed, static_cast<std::uint64_t>(r)));
    try {
      GeneratedCohort cohort = generate_cohort(config, rng);
      draw_phase_two(cohort.records, config.design, rng);
      const WeightFit weights = compute_weights(cohort.records, config.design);
      CohortData data = std::move(cohort.full);
      for (Eigen::Index i = 0; i < data.n(); ++i)
        data.weights[i] = weights.sampled[i] ? 1.0 / weights.pi[i] : 0.0;
      const CoxFit fit = fit_wl_cox(data);

      Eigen::VectorXd alpha0(weights.q());
      Eigen::VectorXd pi0(data.n());
      if (config.design.mode == SamplingMode::estimated_logistic) {
        alpha0 = config.design.true_alpha;
        for (Eigen::Index i = 0; i < data.n(); ++i) {
          const auto& rec = cohort.records[static_cast<size_t>(i)];
          if (config.design.in_v0(rec.stratum)) {
            pi0[i] = 1.0;
            continue;
          }
          double eta = config.design.logistic_formula.intercept ? alpha0[0] : 0.0;
          int k = config.design.logistic_formula.intercept ? 1 : 0;
          for (int c : config.design.logistic_formula.aux_columns) eta += alpha0[k++] * rec.aux[c];
          pi0[i] = 1.0 / (1.0 + std::exp(-eta));
        }
      } else {
        for (int j = 0; j < weights.q(); ++j)
          alpha0[j] = config.design.sampling_fractions.at(
              weights.alpha_strata[static_cast<size_t>(j)]);
        for (Eigen::Index i = 0; i < data.n(); ++i)
          pi0[i] = config.design.in_v0(weights.stratum[i])
                       ? 1.0
                       : config.design.sampling_fractions.at(weights.stratum[i]);
      }

      const LinearizationTerms terms =
          linearization_terms(fit, weights, cohort.records, config.design, alpha0, pi0);
      sq_lhs[static_cast<size_t>(r)] = terms.lhs.squaredNorm();
      sq_resid[static_cast<size_t>(r)] = (terms.lhs - terms.rhs).squaredNorm();
    } catch (const Error&) {
      // skipped; tracked through replicates_used
    }
  });

  LinearizationDiagnostic out;
  out.n_subjects = config.n_subjects;
  double sum_lhs = 0.0, sum_resid = 0.0;
  for (int r = 0; r < nrep; ++r) {
    if (sq_lhs[static_cast<size_t>(r)] < 0.0) continue;
    ++out.replicates_used;
    sum_lhs += sq_lhs[static_cast<size_t>(r)];
    sum_resid += sq_resid[static_cast<size_t>(r)];
  }
  if (out.replicates_used == 0)
    throw Error(ErrorCode::degenerate, "every diagnostic replicate failed");
  out.rms_lhs = std::sqrt(sum_lhs / out.replicates_used);
  out.rms_residual = std::sqrt(sum_resid / out.replicates_used);
  out.ratio = out.rms_lhs > 0.0 ? out.rms_residual / out.rms_lhs : 0.0;
  return out;
}

}  // namespace twophase
