// Command-line front end. Talks to the library exclusively through the
// shared-library C interface in twophase.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "twophase.h"

namespace {

int write_file(const std::string& path, const char* text) {
  if (text == nullptr) return 0;
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "error: cannot write '" << path << "'\n";
    return 1;
  }
  out << text;
  return out ? 0 : 1;
}

int finish(tp_result* result, const std::string& report_path) {
  const tp_status status = tp_result_status(result);
  const char* report = tp_result_report_json(result);
  int rc = tp_exit_code(status);
  if (report != nullptr) {
    if (report_path.empty() || report_path == "-") {
      std::cout << report;
    } else if (write_file(report_path, report) != 0 && rc == 0) {
      rc = 1;
    }
  }
  if (status != TP_OK && tp_result_error(result) != nullptr)
    std::cerr << "error: " << tp_result_error(result) << "\n";
  tp_result_free(result);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weighted-likelihood Cox regression for two-phase stratified samples"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tp_version()));

  // fit
  std::string data_path, design_path, report_path;
  double score_tol = 1e-9, beta_tol = 1e-8;
  int max_iterations = 25;
  auto* fit = app.add_subcommand("fit", "Fit the IPW Cox model to a phase-one table");
  fit->add_option("--data", data_path, "phase-one table (CSV)")->required();
  fit->add_option("--design", design_path, "sampling design (JSON)")->required();
  fit->add_option("--out", report_path, "report destination ('-' for stdout)");
  fit->add_option("--score-tol", score_tol, "score max-norm tolerance");
  fit->add_option("--beta-tol", beta_tol, "relative beta-change tolerance");
  fit->add_option("--max-iterations", max_iterations, "Newton iteration budget");

  // simulate
  std::string scenario_path, summary_path, replicates_path, dump_path;
  int replicates = -1, threads = -1, dump_replicate = -1;
  long long seed = -1;
  auto* sim = app.add_subcommand("simulate", "Run the Monte Carlo study for a scenario");
  sim->add_option("--config", scenario_path, "scenario (JSON)")->required();
  sim->add_option("--out-summary", summary_path, "summary destination ('-' for stdout)");
  sim->add_option("--out-replicates", replicates_path, "per-replicate CSV destination");
  sim->add_option("--replicates", replicates, "override the replicate count");
  sim->add_option("--seed", seed, "override the master seed");
  sim->add_option("--threads", threads, "worker threads (results are order-fixed)");
  sim->add_option("--dump-replicate", dump_replicate,
                  "also emit one replicate's phase-one table");
  sim->add_option("--dump-to", dump_path, "destination for the dumped table");

  CLI11_PARSE(app, argc, argv);

  if (fit->parsed()) {
    std::ostringstream options;
    options << "{\"score_tol\":" << score_tol << ",\"beta_tol\":" << beta_tol
            << ",\"max_iterations\":" << max_iterations << "}";
    tp_result* result = nullptr;
    tp_fit(data_path.c_str(), design_path.c_str(), options.str().c_str(), &result);
    return finish(result, report_path);
  }

  std::ostringstream overrides;
  overrides << "{";
  bool first = true;
  auto add = [&](const char* key, long long value) {
    if (value < 0) return;
    overrides << (first ? "" : ",") << "\"" << key << "\":" << value;
    first = false;
  };
  add("replicates", replicates);
  add("seed", seed);
  add("threads", threads);
  add("dump_replicate", dump_replicate);
  overrides << "}";

  tp_result* result = nullptr;
  tp_simulate(scenario_path.c_str(), overrides.str().c_str(), &result);

  int rc = 0;
  if (!replicates_path.empty())
    rc = write_file(replicates_path, tp_result_replicates_csv(result));
  if (rc == 0 && dump_replicate >= 0 && !dump_path.empty())
    rc = write_file(dump_path, tp_result_cohort_csv(result));
  const int main_rc = finish(result, summary_path);
  return main_rc != 0 ? main_rc : rc;
}
