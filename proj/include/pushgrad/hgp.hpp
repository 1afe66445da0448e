#pragma once

#include <cstdint>
#include <vector>

#include "pushgrad/blockvec.hpp"
#include "pushgrad/innersolve.hpp"

namespace pushgrad::hgp {

// Knobs of the hyper-gradient fixed-point run. The number of mixing rounds
// per iteration and the carry-over of debias weights live on the problem's
// AveragingOperator, and the step size eta on the problem itself, so they are
// configured once rather than duplicated here.
struct HgpConfig {
  int iterations = 500;        // M
  int batch_size = 0;          // 0 = full batch
  bool single_sample = false;  // reuse one draw for both second-order products
  std::uint64_t seed = 0;
};

// Coupled iterates: u_i approximates the averaged outer gradient propagated
// through the inner dynamics, v_i accumulates the hyper-gradient estimate.
struct HgpState {
  BlockVector u;                       // n blocks of x_dim
  std::vector<std::vector<double>> v;  // per-client lambda_dim
  int m = 0;                           // iterations completed
};

// Per-(iteration, client) trace row; error_l2 is filled only when a
// reference hyper-gradient is supplied to hgp_run.
struct TraceRow {
  int m = 0;
  int client = 0;
  double error_l2 = 0.0;
  double norm_u = 0.0;
  double norm_v = 0.0;
};

struct HgpResult {
  std::vector<std::vector<double>> v;
  std::vector<TraceRow> trace;
};

// u_i = d f_i / d x_i and v_i = d f_i / d lambda_i at the problem's current
// iterate, each computed locally per client.
HgpState hgp_init(const innersolve::FederatedProblem& problem);

// One fixed-point update:
//   ubar   = averaging(u)            (consumes the operator's rounds)
//   v_i   -= eta * (d2 g_i / dx dlambda)(batch_a) ubar_i
//   u_i    = ubar_i - eta * (d2 g_i / dx2)(batch_b) ubar_i
// The two batches are drawn independently per (iteration, client) from the
// seed unless single_sample reuses batch_a for both products.
void hgp_iterate(innersolve::FederatedProblem& problem, const HgpConfig& config, HgpState& state);

// Runs hgp_init plus config.iterations updates. When `reference` (the exact
// per-client hyper-gradient) is given, each iteration's trace rows carry the
// per-client l2 error of v against it; keep_trace retains rows even without a
// reference.
HgpResult hgp_run(innersolve::FederatedProblem& problem, const HgpConfig& config,
                  const std::vector<std::vector<double>>* reference = nullptr,
                  bool keep_trace = false);

// l2 norm of the concatenated per-client differences; the scalar error used
// by sweeps and acceptance checks.
double stacked_error(const std::vector<std::vector<double>>& v,
                     const std::vector<std::vector<double>>& reference);

}  // namespace pushgrad::hgp
