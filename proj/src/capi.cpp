#include "twophase.h"

#include <new>
#include <sstream>
#include <string>

#include "pipeline.hpp"
#include "rng.hpp"

struct tp_result {
  tp_status status = TP_OK;
  std::string error;
  std::string report_json;
  std::string replicates_csv;
  std::string cohort_csv;
};

namespace {

using namespace twophase;

tp_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return TP_ERR_IO;
    case ErrorCode::schema: return TP_ERR_SCHEMA;
    case ErrorCode::invalid: return TP_ERR_INVALID;
    case ErrorCode::degenerate: return TP_ERR_DEGENERATE;
    case ErrorCode::singular: return TP_ERR_SINGULAR;
    case ErrorCode::not_converged: return TP_ERR_NOT_CONVERGED;
    case ErrorCode::diverged: return TP_ERR_DIVERGED;
    case ErrorCode::overflow: return TP_ERR_OVERFLOW;
    case ErrorCode::internal: return TP_ERR_INTERNAL;
  }
  return TP_ERR_INTERNAL;
}

template <typename Fn>
tp_status run_guarded(tp_result** out, Fn&& fn) {
  if (out == nullptr) return TP_ERR_INVALID;
  *out = nullptr;
  auto* result = new (std::nothrow) tp_result();
  if (result == nullptr) return TP_ERR_INTERNAL;
  try {
    fn(*result);
    result->status = TP_OK;
  } catch (const Error& e) {
    result->status = to_status(e.code());
    result->error = e.what();
    result->report_json = format_error_json(e.code(), e.what());
  } catch (const std::exception& e) {
    result->status = TP_ERR_INTERNAL;
    result->error = e.what();
    result->report_json = format_error_json(ErrorCode::internal, e.what());
  }
  *out = result;
  return result->status;
}

void do_fit(tp_result& result, InputTable table, const SamplingDesign& design,
            const char* options_json) {
  const SolverOptions options =
      parse_solver_options_json(options_json ? options_json : "");
  FitPipelineResult r = run_fit_pipeline(std::move(table), design, options);
  result.report_json = format_fit_report_json(r.table, r.weights, r.fit, r.variances);
}

void do_simulate(tp_result& result, ScenarioConfig config, const char* overrides_json) {
  const SimulateOverrides o =
      parse_simulate_overrides_json(overrides_json ? overrides_json : "");
  if (o.replicates >= 0) config.replicates = o.replicates;
  if (o.seed >= 0) config.master_seed = static_cast<std::uint64_t>(o.seed);
  if (o.threads >= 0) config.threads = o.threads;
  config.validate();

  const StudySummary summary = run_study(config);
  result.report_json = format_study_summary_json(config, summary);
  result.replicates_csv = format_replicates_csv(summary, config.beta_true.size());

  if (o.dump_replicate >= 0) {
    const ReplicateData rep = regenerate_replicate(config, o.dump_replicate);
    InputTable table;
    table.records = rep.cohort.records;
    table.cohort = rep.cohort.full;
    for (size_t i = 0; i < table.records.size(); ++i)
      table.ids.push_back(std::to_string(i));
    if (table.records.front().aux.size() > 0) table.aux_names = {"aux.v"};
    for (Eigen::Index j = 0; j < table.cohort.covariates.cols(); ++j)
      table.z_names.push_back("z." + std::to_string(j + 1));
    result.cohort_csv = format_input_table_csv(table, /*blank_unsampled_z=*/true);
  }
}

}  // namespace

extern "C" {

const char* tp_version(void) { return "1.0.0"; }

int tp_exit_code(tp_status status) {
  switch (status) {
    case TP_OK:
      return 0;
    case TP_ERR_IO:
    case TP_ERR_SCHEMA:
    case TP_ERR_INVALID:
    case TP_ERR_INTERNAL:
      return 1;
    default:
      return 2;
  }
}

tp_status tp_fit(const char* data_csv_path, const char* design_json_path,
                 const char* options_json, tp_result** out) {
  return run_guarded(out, [&](tp_result& result) {
    if (data_csv_path == nullptr || design_json_path == nullptr)
      throw Error(ErrorCode::invalid, "data and design paths are required");
    InputTable table = load_input_table(data_csv_path);
    const SamplingDesign design = load_design_json(design_json_path);
    do_fit(result, std::move(table), design, options_json);
  });
}

tp_status tp_fit_buffers(const char* data_csv, const char* design_json,
                         const char* options_json, tp_result** out) {
  return run_guarded(out, [&](tp_result& result) {
    if (data_csv == nullptr || design_json == nullptr)
      throw Error(ErrorCode::invalid, "data and design buffers are required");
    std::istringstream in{std::string(data_csv)};
    InputTable table = parse_input_table(in, "<data>");
    const SamplingDesign design = parse_design_json(design_json, "<design>");
    do_fit(result, std::move(table), design, options_json);
  });
}

tp_status tp_simulate(const char* scenario_json_path, const char* overrides_json,
                      tp_result** out) {
  return run_guarded(out, [&](tp_result& result) {
    if (scenario_json_path == nullptr)
      throw Error(ErrorCode::invalid, "scenario path is required");
    do_simulate(result, load_scenario_json(scenario_json_path), overrides_json);
  });
}

tp_status tp_simulate_buffer(const char* scenario_json, const char* overrides_json,
                             tp_result** out) {
  return run_guarded(out, [&](tp_result& result) {
    if (scenario_json == nullptr)
      throw Error(ErrorCode::invalid, "scenario buffer is required");
    do_simulate(result, parse_scenario_json(scenario_json, "<scenario>"), overrides_json);
  });
}

tp_status tp_result_status(const tp_result* result) {
  return result ? result->status : TP_ERR_INVALID;
}

const char* tp_result_error(const tp_result* result) {
  return (result && !result->error.empty()) ? result->error.c_str() : nullptr;
}

const char* tp_result_report_json(const tp_result* result) {
  return (result && !result->report_json.empty()) ? result->report_json.c_str() : nullptr;
}

const char* tp_result_replicates_csv(const tp_result* result) {
  return (result && !result->replicates_csv.empty()) ? result->replicates_csv.c_str()
                                                     : nullptr;
}

const char* tp_result_cohort_csv(const tp_result* result) {
  return (result && !result->cohort_csv.empty()) ? result->cohort_csv.c_str() : nullptr;
}

void tp_result_free(tp_result* result) { delete result; }

}  // extern "C"
