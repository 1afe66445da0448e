#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pushgrad/innersolve.hpp"

namespace pushgrad::oracle {

// Exact hyper-gradient of the total validation cost F(lambda) =
// sum_k f_k(x*(lambda), lambda_k) at the pooled full-batch optimum. Solves
// x* with Newton, assembles the pooled Hessian H and per-client
// cross-Jacobians C_i explicitly (dimensions are small), and returns per
// client
//   v_i = d f_i / d lambda_i - C_i * H^{-1} * sum_k (d f_k / d x).
// Throws when the Hessian is not positive definite.
std::vector<std::vector<double>> ift_hypergradient(
    const innersolve::ClientSet& clients, const std::vector<std::vector<double>>& lambda,
    const innersolve::NewtonOptions& newton = {});

// Literal fixed-point (truncated series) evaluation with the idealized
// averaging operator and full batches, started from the consensus point
// x_star: the reference that the gossip-based estimator is measured against.
// Throws on divergence (||u|| growing for 10 consecutive iterations).
std::vector<std::vector<double>> fixed_point_reference(
    const innersolve::ClientSet& clients, const std::vector<std::vector<double>>& lambda,
    std::span<const double> x_star, int iterations, double eta);

// Central differences of F(lambda) with a Newton re-solve per perturbation,
// warm-started from the base optimum. Step per coordinate:
// max(h_rel * |lambda|, h_floor). Entirely independent of the analytic
// derivative code paths.
struct FiniteDiffOptions {
  double h_rel = 1e-5;
  double h_floor = 1e-7;
  innersolve::NewtonOptions newton;
};
std::vector<std::vector<double>> finite_difference_hypergradient(
    const innersolve::ClientSet& clients, const std::vector<std::vector<double>>& lambda,
    const FiniteDiffOptions& options = {});

// Empirical curvature and noise constants at the Newton optimum for a given
// lambda. alpha/beta come from the full-batch matrices; kappa_x and
// kappa_lambda are the largest deviation singular values of mini-batch
// Hessians and cross-Jacobians over sampled batches, and mu combines them
// into the error-floor constant sqrt(kappa_lambda^2 + kappa_x^2 beta^2 /
// alpha^2). A batch_size of zero (or at least the dataset size) reuses the
// full batch, making both kappas exactly zero.
struct BoundDiagnostics {
  double alpha_est = 0.0;
  double beta_est = 0.0;
  double kappa_x_est = 0.0;
  double kappa_lambda_est = 0.0;
  double mu_est = 0.0;
};
BoundDiagnostics estimate_bound_constants(const innersolve::ClientSet& clients,
                                          const std::vector<std::vector<double>>& lambda,
                                          int num_batch_samples, int batch_size,
                                          std::uint64_t seed);

}  // namespace pushgrad::oracle
