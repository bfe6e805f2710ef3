#pragma once

#include "json_io.hpp"

namespace twophase {

struct FitPipelineResult {
  InputTable table;
  WeightFit weights;
  CoxFit fit;
  VarianceReport variances;
};

// weights -> WL fit -> every variance estimator the design admits.
FitPipelineResult run_fit_pipeline(InputTable table, const SamplingDesign& design,
                                   const SolverOptions& options = {});

}  // namespace twophase
