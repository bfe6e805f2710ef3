#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "json_io.hpp"
#include "pipeline.hpp"

using namespace twophase;

namespace {

const char* kSmallTable =
    "id,time,status,stratum,sampled,z.x\n"
    "a,1.0,1,1,1,0.5\n"
    "b,2.0,0,1,1,-0.25\n"
    "c,1.5,1,1,1,1.5\n"
    "d,,,1,0,\n"
    "e,3.0,1,2,1,0.75\n"
    "f,2.5,0,2,1,0.1\n"
    "g,,,2,0,\n";

}  // namespace

TEST_CASE("table: unsampled rows may leave phase-two fields empty") {
  std::istringstream in(
      "id,time,status,stratum,sampled,z.x\n"
      "s1,1.0,1,1,1,0.25\n"
      "s2,,,2,0,\n");
  const InputTable t = parse_input_table(in, "test");
  REQUIRE(t.ids.size() == 2);
  CHECK(t.records[1].sampled == false);
  CHECK(t.cohort.times[1] == 0.0);
  CHECK(t.cohort.covariates(1, 0) == 0.0);
}

TEST_CASE("table: sampled row with empty time is a row-numbered schema error") {
  std::istringstream in(
      "id,time,status,stratum,sampled,z.x\n"
      "s1,1.0,1,1,1,0.25\n"
      "s2,,1,1,1,0.5\n");
  try {
    (void)parse_input_table(in, "test");
    FAIL("expected schema error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::schema);
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
}

TEST_CASE("table: unknown columns, bad pi, ragged rows are rejected") {
  {
    std::istringstream in("id,time,status,stratum,sampled,z.x,mystery\n");
    CHECK_THROWS_AS((void)parse_input_table(in, "test"), Error);
  }
  {
    std::istringstream in(
        "id,time,status,stratum,sampled,pi,z.x\n"
        "a,1,1,1,1,1.5,0.2\n");
    CHECK_THROWS_AS((void)parse_input_table(in, "test"), Error);
  }
  {
    std::istringstream in(
        "id,time,status,stratum,sampled,z.x\n"
        "a,1,1,1,1\n");
    CHECK_THROWS_AS((void)parse_input_table(in, "test"), Error);
  }
  {
    std::istringstream in(
        "id,time,status,stratum,sampled,z.x\n"
        "a,1,1,,1,0.5\n");
    CHECK_THROWS_AS((void)parse_input_table(in, "test"), Error);
  }
}

TEST_CASE("table: emit/parse round trip is bit exact") {
  std::istringstream in(kSmallTable);
  InputTable t = parse_input_table(in, "test");
  t.cohort.times[0] = 0.1 + 0.2;  // not representable exactly in decimal
  t.records[2].known_pi = 1.0 / 3.0;
  const std::string csv = format_input_table_csv(t);
  std::istringstream again(csv);
  const InputTable t2 = parse_input_table(again, "roundtrip");
  REQUIRE(t2.ids.size() == t.ids.size());
  for (Eigen::Index i = 0; i < t.cohort.n(); ++i) {
    CHECK(t2.cohort.times[i] == t.cohort.times[i]);
    CHECK(t2.cohort.covariates(i, 0) == t.cohort.covariates(i, 0));
  }
  CHECK(t2.records[2].known_pi == t.records[2].known_pi);
}

TEST_CASE("design json: strict parsing with paths") {
  const SamplingDesign d = parse_design_json(
      R"({"mode":"finite_population","always_sampled_strata":[0],
          "sampling_fractions":{"1":0.5,"2":0.25}})",
      "d.json");
  CHECK(d.mode == SamplingMode::finite_population);
  CHECK(d.sampling_fractions.at(2) == doctest::Approx(0.25));

  try {
    (void)parse_design_json(R"({"mode":"finite_population","typo_key":1})", "d.json");
    FAIL("expected schema error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("typo_key") != std::string::npos);
  }
  CHECK_THROWS_AS((void)parse_design_json(R"({"mode":"nope"})", "d.json"), Error);
  CHECK_THROWS_AS((void)parse_design_json("{", "d.json"), Error);
}

TEST_CASE("scenario json: parses and validates") {
  const char* text = R"({
    "n_subjects": 200,
    "beta_true": [0.6931471805599453],
    "baseline": {"family": "exponential", "rate": 1.0},
    "censoring": {"admin_time": 0.25},
    "covariates": [{"kind": "bernoulli", "p": 0.5}],
    "aux": {"kind": "flip", "source": 0, "param": 0.15},
    "strata_rule": {"kind": "delta_aux_table", "table": [[2, 3], [0, 1]]},
    "design": {"mode": "finite_population",
               "sampling_fractions": {"1": 0.5, "2": 0.25, "3": 0.25}},
    "replicates": 4,
    "master_seed": 99
  })";
  const ScenarioConfig c = parse_scenario_json(text, "s.json");
  CHECK(c.n_subjects == 200);
  CHECK(c.strata_rule.table[1][0] == 0);
  CHECK(c.design.sampling_fractions.at(3) == doctest::Approx(0.25));

  // a config violation mentions where it came from
  std::string broken = text;
  broken.replace(broken.find("\"replicates\": 4"), 15, "\"replicates\": 0");
  CHECK_THROWS_AS((void)parse_scenario_json(broken, "s.json"), Error);
}

TEST_CASE("fit report json carries the full contract") {
  std::istringstream in(kSmallTable);
  InputTable t = parse_input_table(in, "test");
  SamplingDesign design;
  design.mode = SamplingMode::estimated_stratified;
  const FitPipelineResult r = run_fit_pipeline(std::move(t), design);
  const std::string text = format_fit_report_json(r.table, r.weights, r.fit, r.variances);

  const auto j = nlohmann::json::parse(text);
  CHECK(j["schema_version"] == "1.0");
  CHECK(j["n_phase1"] == 7);
  CHECK(j["converged"] == true);
  CHECK(j["beta"].size() == 1);
  CHECK(j["beta"][0].get<double>() == r.fit.beta[0]);
  CHECK(j["covariances"].contains("model_based"));
  CHECK(j["covariances"].contains("fp_or_estimated"));
  CHECK(j["covariances"]["model_based"].contains("se"));
  CHECK(j["covariances"]["model_based"].contains("wald_z"));
  CHECK(j["hazard"]["times"].size() == j["hazard"]["jumps"].size());
  CHECK(j["strata"].size() == 2);
  CHECK(j["iterations"].size() > 0);
}

TEST_CASE("error objects and override parsing") {
  const std::string e = format_error_json(ErrorCode::degenerate, "stratum 2 empty");
  const auto j = nlohmann::json::parse(e);
  CHECK(j["error"]["code"] == "degenerate");

  const SimulateOverrides o =
      parse_simulate_overrides_json(R"({"replicates":5,"seed":11,"threads":2})");
  CHECK(o.replicates == 5);
  CHECK(o.seed == 11);
  CHECK(o.threads == 2);
  CHECK(o.dump_replicate == -1);
  CHECK_THROWS_AS((void)parse_simulate_overrides_json(R"({"bogus":1})"), Error);

  const SolverOptions s = parse_solver_options_json(R"({"max_iterations":40})");
  CHECK(s.max_iterations == 40);
  CHECK(s.score_tol == doctest::Approx(1e-9));
}
