#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pushgrad/blockvec.hpp"
#include "pushgrad/consensus.hpp"
#include "pushgrad/objective.hpp"

namespace pushgrad::innersolve {

// Non-owning view of the per-client costs; callers keep the cost objects
// alive for the lifetime of the problem.
using ClientSet = std::vector<const objective::ClientCost*>;

// The federated training state: n clients with parameters x_i and
// hyper-parameters lambda_i, the mixing operator used for all communication,
// and the fixed-point step size eta. The operator advances its schedule
// cursor as training and hyper-gradient runs consume rounds, so one problem
// instance sees a single continuous stream of graphs.
struct FederatedProblem {
  ClientSet clients;
  BlockVector x;                            // n blocks of x_dim
  std::vector<std::vector<double>> lambda;  // per-client, sizes may differ
  consensus::AveragingOperator averaging = consensus::AveragingOperator::exact_average();
  double eta = 1.0;

  int n() const { return static_cast<int>(clients.size()); }
  int x_dim() const { return clients.empty() ? 0 : clients.front()->x_dim(); }

  // Throws std::invalid_argument when client count, x blocks, lambda sizes,
  // or eta disagree with each other.
  void validate() const;
};

// Piecewise-constant learning rate: `initial`, multiplied by each milestone
// factor once that fraction of the step budget is reached. The default cuts
// the rate by 10x at 80% and again at 90% of the budget, giving the final
// rate enough steps to settle to its own error floor.
struct LearningRateSchedule {
  double initial = 0.1;
  std::vector<std::pair<double, double>> milestones = {{0.8, 0.1}, {0.9, 0.1}};

  double rate_at(int step, int total_steps) const;

  static LearningRateSchedule constant(double value) { return {value, {}}; }
};

struct SgpOptions {
  int steps = 5000;
  LearningRateSchedule schedule;
  int batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  double divergence_norm = 1e6;
};

// Stochastic gradient push. Each step, every client forms its de-biased
// iterate y_i = z_i / omega_i, takes a local gradient step on the numerator
//   z_i <- z_i - rate * grad g_i(y_i, lambda_i; batch),
// then one mixing round updates (z, omega). The gradient enters unweighted:
// scaling it by omega_i would weight each client's stationary contribution
// by the long-run mean of omega_i, which differs across clients on
// heterogeneous random digraphs and drags the consensus limit away from the
// uniform optimum. Batches are drawn per (step, client) from the seed, so
// results do not depend on client evaluation order. problem.x is replaced
// by the final de-biased iterates and returned. Throws std::runtime_error
// if any ||y_i|| exceeds divergence_norm.
BlockVector& sgp_train(FederatedProblem& problem, const SgpOptions& options);

struct NewtonOptions {
  double tol = 1e-10;       // pooled-gradient norm target
  int max_iters = 100;
  std::vector<double> x0;   // warm start; empty = zeros
};

// Damped Newton on the pooled full-batch cost sum_k g_k(x, lambda_k): the
// exact solution of the consensus-constrained training problem. Step sizes
// backtrack by halving until the pooled cost decreases. Throws
// std::runtime_error when the Hessian is not positive definite or the
// gradient target is not met within max_iters.
std::vector<double> newton_consensus_solve(const ClientSet& clients,
                                           const std::vector<std::vector<double>>& lambda,
                                           const NewtonOptions& options = {});

// || x - avg(x - eta * grad g(x)) || with the idealized averaging operator
// (mean replicated to every block). Zero exactly when all clients agree and
// the pooled gradient vanishes; used to certify trained iterates.
double stationarity_residual(const ClientSet& clients,
                             const std::vector<std::vector<double>>& lambda,
                             const BlockVector& x, double eta);

// Checkpoint CSV: header `client,x1..xD`, one row per client, full double
// precision. load_checkpoint_csv validates rectangular shape and contiguous
// client ids starting at 0.
void save_checkpoint_csv(const std::string& path, const BlockVector& x);
BlockVector load_checkpoint_csv(const std::string& path);

}  // namespace pushgrad::innersolve
