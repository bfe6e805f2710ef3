#pragma once

#include <string>

#include "design.hpp"
#include "simlab.hpp"
#include "table.hpp"
#include "variance.hpp"

namespace twophase {

// Strict parsers: unknown keys raise Error{schema} naming the offending path.
SamplingDesign parse_design_json(const std::string& text, const std::string& source_name);
SamplingDesign load_design_json(const std::string& path);

ScenarioConfig parse_scenario_json(const std::string& text, const std::string& source_name);
ScenarioConfig load_scenario_json(const std::string& path);

// Optional solver/report settings for fit: {"score_tol":..., "beta_tol":...,
// "max_iterations":..., "max_step_halvings":...}
SolverOptions parse_solver_options_json(const std::string& text);

// Overrides for simulate: {"replicates":..., "seed":..., "threads":...,
// "dump_replicate":...}; absent keys keep the scenario values.
struct SimulateOverrides {
  int replicates = -1;
  long long seed = -1;
  int threads = -1;
  int dump_replicate = -1;
};
SimulateOverrides parse_simulate_overrides_json(const std::string& text);

std::string format_fit_report_json(const InputTable& table, const WeightFit& weights,
                                   const CoxFit& fit, const VarianceReport& variances);
std::string format_study_summary_json(const ScenarioConfig& config, const StudySummary& summary);
std::string format_replicates_csv(const StudySummary& summary, Eigen::Index p);
std::string format_error_json(ErrorCode code, const std::string& message);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace twophase
