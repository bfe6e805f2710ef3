#include "json_io.hpp"

#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include <json.hpp>

namespace twophase {

namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& source, const std::string& path,
                               const std::string& what) {
  throw Error(ErrorCode::schema, source + ": " + path + ": " + what);
}

void require_keys(const json& obj, const std::string& source, const std::string& path,
                  const std::set<std::string>& allowed) {
  if (!obj.is_object()) schema_error(source, path, "expected an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) schema_error(source, path + "/" + key, "unknown key");
}

double get_number(const json& obj, const std::string& source, const std::string& path,
                  const std::string& key, std::optional<double> fallback = {}) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    schema_error(source, path + "/" + key, "missing required number");
  }
  if (!obj[key].is_number()) schema_error(source, path + "/" + key, "expected a number");
  return obj[key].get<double>();
}

std::map<int, double> get_stratum_map(const json& obj, const std::string& source,
                                      const std::string& path) {
  if (!obj.is_object()) schema_error(source, path, "expected an object of stratum -> number");
  std::map<int, double> out;
  for (const auto& [key, value] : obj.items()) {
    int stratum = 0;
    try {
      stratum = std::stoi(key);
    } catch (...) {
      schema_error(source, path + "/" + key, "stratum keys must be integers");
    }
    if (!value.is_number()) schema_error(source, path + "/" + key, "expected a number");
    out[stratum] = value.get<double>();
  }
  return out;
}

json parse_text(const std::string& text, const std::string& source) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::schema, source + ": not valid JSON");
  return j;
}

// Seeds must round-trip exactly, so they bypass the double-valued getter.
std::uint64_t get_seed(const json& obj, const std::string& source, const std::string& path,
                       const std::string& key) {
  if (!obj.contains(key)) schema_error(source, path + "/" + key, "missing required integer");
  const json& v = obj[key];
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  schema_error(source, path + "/" + key, "expected a nonnegative integer");
}

SamplingDesign design_from_json(const json& j, const std::string& source,
                                const std::string& path) {
  require_keys(j, source, path,
               {"mode", "always_sampled_strata", "known_probs", "sampling_fractions",
                "logistic_formula", "true_alpha", "pi_floor"});
  SamplingDesign d;
  if (!j.contains("mode") || !j["mode"].is_string())
    schema_error(source, path + "/mode", "missing or non-string sampling mode");
  d.mode = sampling_mode_from_name(j["mode"].get<std::string>());
  if (j.contains("always_sampled_strata")) {
    if (!j["always_sampled_strata"].is_array())
      schema_error(source, path + "/always_sampled_strata", "expected an array");
    for (const auto& v : j["always_sampled_strata"]) {
      if (!v.is_number_integer())
        schema_error(source, path + "/always_sampled_strata", "expected integers");
      d.always_sampled_strata.insert(v.get<int>());
    }
  }
  if (j.contains("known_probs"))
    d.known_probs = get_stratum_map(j["known_probs"], source, path + "/known_probs");
  if (j.contains("sampling_fractions"))
    d.sampling_fractions =
        get_stratum_map(j["sampling_fractions"], source, path + "/sampling_fractions");
  if (j.contains("logistic_formula")) {
    const json& f = j["logistic_formula"];
    require_keys(f, source, path + "/logistic_formula", {"intercept", "aux_columns"});
    if (f.contains("intercept")) {
      if (!f["intercept"].is_boolean())
        schema_error(source, path + "/logistic_formula/intercept", "expected a boolean");
      d.logistic_formula.intercept = f["intercept"].get<bool>();
    }
    if (f.contains("aux_columns")) {
      if (!f["aux_columns"].is_array())
        schema_error(source, path + "/logistic_formula/aux_columns", "expected an array");
      for (const auto& v : f["aux_columns"]) {
        if (!v.is_number_integer())
          schema_error(source, path + "/logistic_formula/aux_columns", "expected integers");
        d.logistic_formula.aux_columns.push_back(v.get<int>());
      }
    }
  }
  if (j.contains("true_alpha")) {
    if (!j["true_alpha"].is_array())
      schema_error(source, path + "/true_alpha", "expected an array of numbers");
    d.true_alpha.resize(static_cast<Eigen::Index>(j["true_alpha"].size()));
    Eigen::Index k = 0;
    for (const auto& v : j["true_alpha"]) {
      if (!v.is_number()) schema_error(source, path + "/true_alpha", "expected numbers");
      d.true_alpha[k++] = v.get<double>();
    }
  }
  d.pi_floor = get_number(j, source, path, "pi_floor", 1e-3);
  if (!(d.pi_floor > 0.0) || d.pi_floor >= 1.0)
    schema_error(source, path + "/pi_floor", "must lie in (0,1)");
  return d;
}

Eigen::VectorXd vector_from_json(const json& arr, const std::string& source,
                                 const std::string& path) {
  if (!arr.is_array()) schema_error(source, path, "expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  Eigen::Index k = 0;
  for (const auto& x : arr) {
    if (!x.is_number()) schema_error(source, path, "expected numbers");
    v[k++] = x.get<double>();
  }
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json covariance_entry(const Eigen::MatrixXd& cov, const Eigen::VectorXd& beta,
                      const std::string& label) {
  json entry;
  entry["label"] = label;
  entry["matrix"] = matrix_to_json(cov);
  Eigen::VectorXd se = cov.diagonal().cwiseSqrt();
  entry["se"] = vector_to_json(se);
  json z = json::array();
  for (Eigen::Index k = 0; k < beta.size(); ++k)
    z.push_back(se[k] > 0.0 ? beta[k] / se[k] : 0.0);
  entry["wald_z"] = std::move(z);
  return entry;
}

}  // namespace

SamplingDesign parse_design_json(const std::string& text, const std::string& source_name) {
  return design_from_json(parse_text(text, source_name), source_name, "design");
}

SamplingDesign load_design_json(const std::string& path) {
  return parse_design_json(read_text_file(path), path);
}

ScenarioConfig parse_scenario_json(const std::string& text, const std::string& source_name) {
  const json j = parse_text(text, source_name);
  require_keys(j, source_name, "scenario",
               {"n_subjects", "beta_true", "baseline", "censoring", "covariates", "aux",
                "aux_cuts", "strata_rule", "design", "replicates", "master_seed", "threads",
                "max_failure_rate"});
  ScenarioConfig c;
  c.n_subjects = static_cast<long>(get_number(j, source_name, "scenario", "n_subjects"));
  if (!j.contains("beta_true"))
    schema_error(source_name, "scenario/beta_true", "missing required array");
  c.beta_true = vector_from_json(j["beta_true"], source_name, "scenario/beta_true");

  if (!j.contains("baseline")) schema_error(source_name, "scenario/baseline", "missing");
  {
    const json& b = j["baseline"];
    require_keys(b, source_name, "scenario/baseline", {"family", "rate", "shape", "scale"});
    if (!b.contains("family") || !b["family"].is_string())
      schema_error(source_name, "scenario/baseline/family", "missing or non-string");
    const std::string fam = b["family"].get<std::string>();
    if (fam == "exponential") {
      c.baseline.family = BaselineSpec::Family::exponential;
      c.baseline.rate = get_number(b, source_name, "scenario/baseline", "rate", 1.0);
    } else if (fam == "weibull") {
      c.baseline.family = BaselineSpec::Family::weibull;
      c.baseline.shape = get_number(b, source_name, "scenario/baseline", "shape");
      c.baseline.scale = get_number(b, source_name, "scenario/baseline", "scale");
    } else {
      schema_error(source_name, "scenario/baseline/family", "expected exponential or weibull");
    }
  }
  if (j.contains("censoring")) {
    const json& cen = j["censoring"];
    require_keys(cen, source_name, "scenario/censoring", {"admin_time", "exponential_rate"});
    c.censoring.admin_time =
        get_number(cen, source_name, "scenario/censoring", "admin_time",
                   std::numeric_limits<double>::infinity());
    c.censoring.exponential_rate =
        get_number(cen, source_name, "scenario/censoring", "exponential_rate", 0.0);
  }
  if (!j.contains("covariates") || !j["covariates"].is_array())
    schema_error(source_name, "scenario/covariates", "missing array");
  for (const auto& cov : j["covariates"]) {
    require_keys(cov, source_name, "scenario/covariates[]", {"kind", "p", "mean", "sd"});
    CovariateSpec spec;
    if (!cov.contains("kind") || !cov["kind"].is_string())
      schema_error(source_name, "scenario/covariates[]/kind", "missing or non-string");
    const std::string kind = cov["kind"].get<std::string>();
    if (kind == "bernoulli") {
      spec.kind = CovariateSpec::Kind::bernoulli;
      spec.p = get_number(cov, source_name, "scenario/covariates[]", "p", 0.5);
    } else if (kind == "normal") {
      spec.kind = CovariateSpec::Kind::normal;
      spec.mean = get_number(cov, source_name, "scenario/covariates[]", "mean", 0.0);
      spec.sd = get_number(cov, source_name, "scenario/covariates[]", "sd", 1.0);
    } else {
      schema_error(source_name, "scenario/covariates[]/kind", "expected bernoulli or normal");
    }
    c.covariates.push_back(spec);
  }
  if (j.contains("aux")) {
    const json& a = j["aux"];
    require_keys(a, source_name, "scenario/aux", {"kind", "source", "param"});
    if (!a.contains("kind") || !a["kind"].is_string())
      schema_error(source_name, "scenario/aux/kind", "missing or non-string");
    const std::string kind = a["kind"].get<std::string>();
    if (kind == "none") c.aux.kind = AuxSpec::Kind::none;
    else if (kind == "copy") c.aux.kind = AuxSpec::Kind::copy;
    else if (kind == "flip") c.aux.kind = AuxSpec::Kind::flip;
    else if (kind == "noise") c.aux.kind = AuxSpec::Kind::noise;
    else schema_error(source_name, "scenario/aux/kind", "expected none/copy/flip/noise");
    c.aux.source = static_cast<int>(get_number(a, source_name, "scenario/aux", "source", 0.0));
    c.aux.param = get_number(a, source_name, "scenario/aux", "param", 0.0);
  }
  if (j.contains("aux_cuts")) {
    const Eigen::VectorXd cuts = vector_from_json(j["aux_cuts"], source_name, "scenario/aux_cuts");
    for (Eigen::Index k = 0; k < cuts.size(); ++k) c.aux_cuts.push_back(cuts[k]);
  }
  if (!j.contains("strata_rule")) schema_error(source_name, "scenario/strata_rule", "missing");
  {
    const json& s = j["strata_rule"];
    require_keys(s, source_name, "scenario/strata_rule", {"kind", "table"});
    if (!s.contains("kind") || !s["kind"].is_string())
      schema_error(source_name, "scenario/strata_rule/kind", "missing or non-string");
    const std::string kind = s["kind"].get<std::string>();
    if (kind == "case_cohort") {
      c.strata_rule.kind = StrataRule::Kind::case_cohort;
    } else if (kind == "delta_aux_table") {
      c.strata_rule.kind = StrataRule::Kind::delta_aux_table;
      if (!s.contains("table") || !s["table"].is_array() || s["table"].size() != 2)
        schema_error(source_name, "scenario/strata_rule/table",
                     "expected two rows (delta = 0, delta = 1)");
      for (const auto& row : s["table"]) {
        std::vector<int> labels;
        if (!row.is_array())
          schema_error(source_name, "scenario/strata_rule/table", "expected arrays");
        for (const auto& v : row) {
          if (!v.is_number_integer())
            schema_error(source_name, "scenario/strata_rule/table", "expected integers");
          labels.push_back(v.get<int>());
        }
        c.strata_rule.table.push_back(std::move(labels));
      }
    } else {
      schema_error(source_name, "scenario/strata_rule/kind",
                   "expected case_cohort or delta_aux_table");
    }
  }
  if (!j.contains("design")) schema_error(source_name, "scenario/design", "missing");
  c.design = design_from_json(j["design"], source_name, "scenario/design");
  c.replicates = static_cast<int>(get_number(j, source_name, "scenario", "replicates"));
  c.master_seed = get_seed(j, source_name, "scenario", "master_seed");
  c.threads = static_cast<int>(get_number(j, source_name, "scenario", "threads", 1.0));
  c.max_failure_rate = get_number(j, source_name, "scenario", "max_failure_rate", 0.02);
  c.validate();
  return c;
}

ScenarioConfig load_scenario_json(const std::string& path) {
  return parse_scenario_json(read_text_file(path), path);
}

SolverOptions parse_solver_options_json(const std::string& text) {
  SolverOptions opts;
  if (text.empty()) return opts;
  const json j = parse_text(text, "options");
  require_keys(j, "options", "options",
               {"score_tol", "beta_tol", "max_iterations", "max_step_halvings"});
  opts.score_tol = get_number(j, "options", "options", "score_tol", opts.score_tol);
  opts.beta_tol = get_number(j, "options", "options", "beta_tol", opts.beta_tol);
  opts.max_iterations = static_cast<int>(
      get_number(j, "options", "options", "max_iterations", opts.max_iterations));
  opts.max_step_halvings = static_cast<int>(
      get_number(j, "options", "options", "max_step_halvings", opts.max_step_halvings));
  return opts;
}

SimulateOverrides parse_simulate_overrides_json(const std::string& text) {
  SimulateOverrides o;
  if (text.empty()) return o;
  const json j = parse_text(text, "overrides");
  require_keys(j, "overrides", "overrides",
               {"replicates", "seed", "threads", "dump_replicate"});
  if (j.contains("replicates"))
    o.replicates = static_cast<int>(get_number(j, "overrides", "overrides", "replicates"));
  if (j.contains("seed"))
    o.seed = static_cast<long long>(get_seed(j, "overrides", "overrides", "seed"));
  if (j.contains("threads"))
    o.threads = static_cast<int>(get_number(j, "overrides", "overrides", "threads"));
  if (j.contains("dump_replicate"))
    o.dump_replicate =
        static_cast<int>(get_number(j, "overrides", "overrides", "dump_replicate"));
  return o;
}

std::string format_fit_report_json(const InputTable& table, const WeightFit& weights,
                                   const CoxFit& fit, const VarianceReport& variances) {
  json j;
  j["schema_version"] = "1.0";
  j["n_phase1"] = fit.n_phase1;
  long n_sampled = 0;
  for (Eigen::Index i = 0; i < weights.sampled.size(); ++i) n_sampled += weights.sampled[i];
  j["n_sampled"] = n_sampled;
  j["mode"] = sampling_mode_name(weights.mode);
  j["converged"] = fit.converged;
  j["beta"] = vector_to_json(fit.beta);
  j["loglik"] = fit.loglik;

  json covs;
  covs["model_based"] = covariance_entry(variances.model_based, fit.beta,
                                         variances.method_labels.at("model_based"));
  if (variances.bernoulli_known)
    covs["bernoulli_known"] = covariance_entry(*variances.bernoulli_known, fit.beta,
                                               variances.method_labels.at("bernoulli_known"));
  if (variances.fp_or_estimated)
    covs["fp_or_estimated"] = covariance_entry(*variances.fp_or_estimated, fit.beta,
                                               variances.method_labels.at("fp_or_estimated"));
  if (variances.stratified_second_moment)
    covs["stratified_second_moment"] =
        covariance_entry(*variances.stratified_second_moment, fit.beta,
                         variances.method_labels.at("stratified_second_moment"));
  if (variances.stratified_variance)
    covs["stratified_variance"] =
        covariance_entry(*variances.stratified_variance, fit.beta,
                         variances.method_labels.at("stratified_variance"));
  j["covariances"] = std::move(covs);

  j["hazard"]["times"] = vector_to_json(fit.hazard.jump_times);
  j["hazard"]["jumps"] = vector_to_json(fit.hazard.jumps);

  json strata = json::array();
  for (const auto& s : weights.stratum_counts) {
    json row;
    row["stratum"] = s.stratum;
    row["n_total"] = s.n_total;
    row["n_sampled"] = s.n_sampled;
    strata.push_back(std::move(row));
  }
  j["strata"] = std::move(strata);

  if (weights.q() > 0) {
    j["alpha"]["values"] = vector_to_json(weights.alpha);
    if (!weights.alpha_strata.empty()) j["alpha"]["strata"] = weights.alpha_strata;
  }
  if (variances.residual_r2.size() > 0)
    j["residual_r2"] = vector_to_json(variances.residual_r2);

  json trace = json::array();
  for (const auto& it : fit.trace) {
    json row;
    row["iteration"] = it.iteration;
    row["score_norm"] = it.score_norm;
    row["step_size"] = it.step_size;
    row["loglik"] = it.loglik;
    trace.push_back(std::move(row));
  }
  j["iterations"] = std::move(trace);
  (void)table;
  return j.dump(2) + "\n";
}

std::string format_study_summary_json(const ScenarioConfig& config, const StudySummary& s) {
  json j;
  j["schema_version"] = "1.0";
  j["mode"] = sampling_mode_name(config.design.mode);
  j["n_subjects"] = config.n_subjects;
  j["master_seed"] = config.master_seed;
  j["replicates"] = s.replicates;
  j["n_converged"] = s.n_converged;
  j["failure_rate"] = s.failure_rate;
  j["acceptable"] = s.acceptable;
  if (s.n_converged > 0) {
    j["mean_beta"] = vector_to_json(s.mean_beta);
    j["empirical_cov"] = matrix_to_json(s.empirical_cov);
    j["mean_cov"]["model"] = matrix_to_json(s.mean_cov_model);
    j["mean_cov"]["bernoulli"] = matrix_to_json(s.mean_cov_bernoulli);
    j["mean_cov"]["fp_or_estimated"] = matrix_to_json(s.mean_cov_fp);
    if (s.mean_cov_stratified_m2)
      j["mean_cov"]["stratified_second_moment"] = matrix_to_json(*s.mean_cov_stratified_m2);
    if (s.mean_cov_stratified_var)
      j["mean_cov"]["stratified_variance"] = matrix_to_json(*s.mean_cov_stratified_var);
    j["coverage"]["model"] = vector_to_json(s.coverage_model);
    j["coverage"]["bernoulli"] = vector_to_json(s.coverage_bernoulli);
    j["coverage"]["fp_or_estimated"] = vector_to_json(s.coverage_fp);
    j["var_band_halfwidth"] = vector_to_json(s.var_band_halfwidth);
    j["var_rel_discrepancy"] = vector_to_json(s.var_rel_discrepancy);
    if (s.mean_cov_stratified_m2)
      j["frac_second_moment_minus_variance_psd"] = s.frac_m2_minus_var_psd;
    j["frac_bernoulli_above_fp"] = s.frac_bernoulli_above_fp;
  }
  return j.dump(2) + "\n";
}

std::string format_replicates_csv(const StudySummary& summary, Eigen::Index p) {
  std::ostringstream os;
  os << "replicate,seed,converged";
  for (Eigen::Index k = 0; k < p; ++k) os << ",beta." << (k + 1);
  for (Eigen::Index k = 0; k < p; ++k) os << ",se_model." << (k + 1);
  for (Eigen::Index k = 0; k < p; ++k) os << ",se_bernoulli." << (k + 1);
  for (Eigen::Index k = 0; k < p; ++k) os << ",se_fp." << (k + 1);
  os << ",error\n";
  for (size_t r = 0; r < summary.per_replicate.size(); ++r) {
    const auto& rep = summary.per_replicate[r];
    os << r << "," << rep.seed_used << "," << (rep.converged ? 1 : 0);
    auto emit = [&](const Eigen::VectorXd& v) {
      for (Eigen::Index k = 0; k < p; ++k)
        os << "," << (v.size() == p ? format_double(v[k]) : std::string());
    };
    emit(rep.beta);
    emit(rep.se_model);
    emit(rep.se_bernoulli);
    emit(rep.se_fp);
    std::string err = rep.error;
    for (auto& ch : err)
      if (ch == ',' || ch == '\n') ch = ';';
    os << "," << err << "\n";
  }
  return os.str();
}

std::string format_error_json(ErrorCode code, const std::string& message) {
  json j;
  j["schema_version"] = "1.0";
  j["error"]["code"] = error_code_name(code);
  j["error"]["message"] = message;
  return j.dump(2) + "\n";
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path + "'");
  out << text;
  if (!out) throw Error(ErrorCode::io, "write failed for '" + path + "'");
}

}  // namespace twophase
