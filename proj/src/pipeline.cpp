#include "pipeline.hpp"

namespace twophase {

FitPipelineResult run_fit_pipeline(InputTable table, const SamplingDesign& design,
                                   const SolverOptions& options) {
  FitPipelineResult out;
  out.weights = compute_weights(table.records, design);
  for (Eigen::Index i = 0; i < table.cohort.n(); ++i)
    table.cohort.weights[i] = out.weights.sampled[i] ? 1.0 / out.weights.pi[i] : 0.0;
  out.table = std::move(table);
  out.fit = fit_wl_cox(out.table.cohort, options);
  out.variances = build_variance_report(out.fit, out.weights);
  return out;
}

}  // namespace twophase
