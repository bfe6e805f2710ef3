#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "design.hpp"
#include "survival.hpp"

namespace twophase {

// One row per phase-one subject. Required columns: id, time, status, stratum,
// sampled, and at least one z.* covariate column. Optional: pi, aux.*.
// time/status/z.* may be empty only on unsampled rows; placeholders are
// substituted there (the rows carry weight zero downstream).
struct InputTable {
  std::vector<std::string> ids;
  std::vector<PhaseOneRecord> records;
  CohortData cohort;  // weights left at zero; filled once pi is known
  std::vector<std::string> z_names;
  std::vector<std::string> aux_names;
};

InputTable parse_input_table(std::istream& in, const std::string& source_name);
InputTable load_input_table(const std::string& path);

// Full-precision emission; parsing the result reproduces every double bit
// for bit, which is what makes the simulate -> fit round trip exact.
// blank_unsampled_z empties the covariate cells of unsampled rows, matching
// the two-phase observability pattern when dumping simulated cohorts.
std::string format_input_table_csv(const InputTable& table, bool blank_unsampled_z = false);

std::string format_double(double v);  // shortest exact decimal

}  // namespace twophase
