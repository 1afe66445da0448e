#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "pushgrad/blockvec.hpp"
#include "pushgrad/netgraph.hpp"

namespace pushgrad::consensus {

// Gossip state: per-client numerator z, positive debias weight omega, and the
// de-biased estimate y = z / omega. Column-stochastic mixing preserves the
// totals of z (per coordinate) and of omega.
struct PushSumState {
  BlockVector z;
  std::vector<double> omega;
  BlockVector y;
};

// Called after every mixing round (and once with the initial state, round 0).
using RoundObserver = std::function<void(int round, const PushSumState&)>;

// Gossip averaging: starting from z = initial and omega = 1 (or the carried
// weights if given), run `rounds` steps of
//   z_i <- sum_{j in senders(i)} z_j / outdeg_j,   omega_i likewise,
// consuming steps [start_step, start_step + rounds) from the source, and
// return the final state with y = z / omega. Throws if any omega underflows
// below 1e-300.
PushSumState push_sum_average(const BlockVector& initial, const netgraph::ScheduleSource& source,
                              std::uint64_t start_step, int rounds,
                              const std::vector<double>* carried_omega = nullptr,
                              const RoundObserver& observer = nullptr);

// Convenience form running over an entire materialized schedule.
PushSumState push_sum_average(const BlockVector& initial, const netgraph::GraphSchedule& window,
                              const std::vector<double>* carried_omega = nullptr,
                              const RoundObserver& observer = nullptr);

// The averaging-operator family. All three act block-wise: vectors of any
// dimension d are mixed coordinate-wise by the same scalar weights (an n x n
// matrix applied Kronecker the d-identity).
//   - push_sum: S gossip rounds over a time-varying digraph; repeated apply()
//     calls consume fresh steps from a cursor. With persistent_weights the
//     debias weights carry over between calls instead of resetting to 1.
//   - exact_average: the idealized operator, mean replicated to every client.
//   - doubly_stochastic: S rounds of a fixed symmetric-mixing matrix W.
class AveragingOperator {
 public:
  enum class Kind { push_sum, exact_average, doubly_stochastic };

  static AveragingOperator push_sum(std::shared_ptr<const netgraph::ScheduleSource> source,
                                    int rounds, bool persistent_weights = false);
  static AveragingOperator exact_average();
  static AveragingOperator doubly_stochastic(Eigen::MatrixXd w, int rounds);

  Kind kind() const { return kind_; }
  int rounds() const { return rounds_; }
  bool persistent_weights() const { return persistent_weights_; }

  // Apply the full operator (S rounds for the mixing kinds). For push_sum this
  // consumes `rounds()` schedule steps from the cursor.
  BlockVector apply(const BlockVector& vectors);

  // One mixing round applied in place to a numerator/weight pair; this is the
  // per-step mixing used by decentralized training. Consumes one schedule step
  // for push_sum.
  void mix_round(BlockVector& z, std::vector<double>& omega);

  // Schedule position (meaningful for push_sum; 0 otherwise). Tests that need
  // to replay a window snapshot and restore this.
  std::uint64_t cursor() const { return cursor_; }
  void set_cursor(std::uint64_t c) { cursor_ = c; }

  // Carried debias weights (persistent push_sum only; empty until first apply).
  const std::vector<double>& carried_weights() const { return carried_omega_; }
  void set_carried_weights(std::vector<double> w) { carried_omega_ = std::move(w); }
  void reset_carried_weights() { carried_omega_.clear(); }

  const Eigen::MatrixXd& w() const { return w_; }
  const netgraph::ScheduleSource& source() const { return *source_; }

 private:
  AveragingOperator() = default;

  Kind kind_ = Kind::exact_average;
  std::shared_ptr<const netgraph::ScheduleSource> source_;
  int rounds_ = 1;
  bool persistent_weights_ = false;
  std::uint64_t cursor_ = 0;
  std::vector<double> carried_omega_;
  Eigen::MatrixXd w_;
};

// Metropolis mixing matrix for a connected undirected graph with self-loops:
// W_ij = 1/(1 + max(deg_i, deg_j)) on edges, W_ii absorbs the remainder.
// Degrees count distinct neighbours other than the node itself. Rejects
// disconnected graphs and missing self-loops.
Eigen::MatrixXd metropolis_weights(const std::vector<std::pair<int, int>>& undirected_edges, int n);

// Recover the operator's n x n matrix by probing with scalar (d=1) basis
// vectors, replaying the same schedule window for every probe. On return the
// cursor has advanced past exactly one window. Diagnostics/tests only.
Eigen::MatrixXd estimate_operator_matrix(AveragingOperator& op, int n);

}  // namespace pushgrad::consensus
