#include "pushgrad/consensus.hpp"

#include <cmath>
#include <stdexcept>

#include "pushgrad/kernels.hpp"

namespace pushgrad::consensus {

namespace {

// One synchronous gossip round: every client reads step-(s-1) state, all
// writes go to the double buffer.
void gossip_round(const netgraph::EdgeStep& step, const BlockVector& z_in,
                  const std::vector<double>& w_in, BlockVector& z_out,
                  std::vector<double>& w_out) {
  const int n = z_in.n;
  const int d = z_in.d;
  for (int i = 0; i < n; ++i) {
    auto acc = z_out.block(i);
    std::fill(acc.begin(), acc.end(), 0.0);
    double wacc = 0.0;
    for (int j : step.senders[i]) {
      const double share = 1.0 / static_cast<double>(step.out_degree[j]);
      kernels::axpy(share, z_in.block(j).data(), acc.data(), static_cast<std::size_t>(d));
      wacc += share * w_in[j];
    }
    w_out[i] = wacc;
  }
}

void debias(const BlockVector& z, const std::vector<double>& omega, BlockVector& y) {
  for (int i = 0; i < z.n; ++i) {
    if (!(omega[i] > 1e-300))
      throw std::runtime_error("push_sum_average: debias weight underflow at client " +
                               std::to_string(i));
    auto zi = z.block(i);
    auto yi = y.block(i);
    const double inv = 1.0 / omega[i];
    for (int a = 0; a < z.d; ++a) yi[a] = zi[a] * inv;
  }
}

}  // namespace

PushSumState push_sum_average(const BlockVector& initial, const netgraph::ScheduleSource& source,
                              std::uint64_t start_step, int rounds,
                              const std::vector<double>* carried_omega,
                              const RoundObserver& observer) {
  const int n = initial.n;
  if (n != source.n())
    throw std::invalid_argument("push_sum_average: vector count does not match schedule width");
  if (rounds <= 0) throw std::invalid_argument("push_sum_average: need at least one round");
  if (carried_omega) {
    if (static_cast<int>(carried_omega->size()) != n)
      throw std::invalid_argument("push_sum_average: carried omega has wrong length");
    for (double w : *carried_omega)
      if (!(w > 0.0)) throw std::invalid_argument("push_sum_average: carried omega must be positive");
  }

  PushSumState state;
  state.z = initial;
  state.omega = carried_omega ? *carried_omega : std::vector<double>(n, 1.0);
  state.y = BlockVector(n, initial.d);
  debias(state.z, state.omega, state.y);
  if (observer) observer(0, state);

  BlockVector z_next(n, initial.d);
  std::vector<double> w_next(n, 0.0);
  for (int s = 0; s < rounds; ++s) {
    const netgraph::EdgeStep step = source.step(start_step + static_cast<std::uint64_t>(s));
    gossip_round(step, state.z, state.omega, z_next, w_next);
    std::swap(state.z, z_next);
    std::swap(state.omega, w_next);
    debias(state.z, state.omega, state.y);
    if (observer) observer(s + 1, state);
  }
  return state;
}

PushSumState push_sum_average(const BlockVector& initial, const netgraph::GraphSchedule& window,
                              const std::vector<double>* carried_omega,
                              const RoundObserver& observer) {
  if (window.steps.empty()) throw std::invalid_argument("push_sum_average: empty schedule window");
  netgraph::FixedScheduleSource source(window);
  return push_sum_average(initial, source, 0, static_cast<int>(window.steps.size()), carried_omega,
                          observer);
}

AveragingOperator AveragingOperator::push_sum(
    std::shared_ptr<const netgraph::ScheduleSource> source, int rounds, bool persistent_weights) {
  if (!source) throw std::invalid_argument("AveragingOperator: null schedule source");
  if (rounds < 1) throw std::invalid_argument("AveragingOperator: push_sum needs S >= 1");
  AveragingOperator op;
  op.kind_ = Kind::push_sum;
  op.source_ = std::move(source);
  op.rounds_ = rounds;
  op.persistent_weights_ = persistent_weights;
  return op;
}

AveragingOperator AveragingOperator::exact_average() {
  AveragingOperator op;
  op.kind_ = Kind::exact_average;
  return op;
}

AveragingOperator AveragingOperator::doubly_stochastic(Eigen::MatrixXd w, int rounds) {
  if (w.rows() != w.cols()) throw std::invalid_argument("AveragingOperator: W must be square");
  if (rounds < 1) throw std::invalid_argument("AveragingOperator: doubly_stochastic needs S >= 1");
  const double tol = 1e-12;
  for (int i = 0; i < w.rows(); ++i) {
    for (int j = 0; j < w.cols(); ++j)
      if (w(i, j) < -tol)
        throw std::invalid_argument("AveragingOperator: W has a negative entry");
    if (std::abs(w.row(i).sum() - 1.0) > tol)
      throw std::invalid_argument("AveragingOperator: W row " + std::to_string(i) +
                                  " does not sum to 1");
    if (std::abs(w.col(i).sum() - 1.0) > tol)
      throw std::invalid_argument("AveragingOperator: W column " + std::to_string(i) +
                                  " does not sum to 1");
  }
  AveragingOperator op;
  op.kind_ = Kind::doubly_stochastic;
  op.w_ = std::move(w);
  op.rounds_ = rounds;
  return op;
}

BlockVector AveragingOperator::apply(const BlockVector& vectors) {
  const int n = vectors.n;
  const int d = vectors.d;
  switch (kind_) {
    case Kind::exact_average: {
      BlockVector out(n, d);
      std::vector<double> mean(d, 0.0);
      for (int i = 0; i < n; ++i)
        kernels::axpy(1.0 / n, vectors.block(i).data(), mean.data(), mean.size());
      for (int i = 0; i < n; ++i) std::copy(mean.begin(), mean.end(), out.block(i).begin());
      return out;
    }
    case Kind::doubly_stochastic: {
      if (w_.rows() != n) throw std::invalid_argument("apply: W size does not match vector count");
      BlockVector cur = vectors;
      BlockVector next(n, d);
      for (int s = 0; s < rounds_; ++s) {
        for (int i = 0; i < n; ++i) {
          auto acc = next.block(i);
          std::fill(acc.begin(), acc.end(), 0.0);
          for (int j = 0; j < n; ++j) {
            const double wij = w_(i, j);
            if (wij != 0.0) kernels::axpy(wij, cur.block(j).data(), acc.data(), acc.size());
          }
        }
        std::swap(cur, next);
      }
      return cur;
    }
    case Kind::push_sum: {
      const std::vector<double>* carried =
          (persistent_weights_ && !carried_omega_.empty()) ? &carried_omega_ : nullptr;
      PushSumState state = push_sum_average(vectors, *source_, cursor_, rounds_, carried);
      cursor_ += static_cast<std::uint64_t>(rounds_);
      if (persistent_weights_) carried_omega_ = state.omega;
      return std::move(state.y);
    }
  }
  throw std::logic_error("apply: unknown operator kind");
}

void AveragingOperator::mix_round(BlockVector& z, std::vector<double>& omega) {
  const int n = z.n;
  if (static_cast<int>(omega.size()) != n)
    throw std::invalid_argument("mix_round: omega length does not match vector count");
  switch (kind_) {
    case Kind::exact_average: {
      std::vector<double> mean(z.d, 0.0);
      for (int i = 0; i < n; ++i) kernels::axpy(1.0 / n, z.block(i).data(), mean.data(), mean.size());
      for (int i = 0; i < n; ++i) std::copy(mean.begin(), mean.end(), z.block(i).begin());
      double wmean = 0.0;
      for (double w : omega) wmean += w / n;
      std::fill(omega.begin(), omega.end(), wmean);
      return;
    }
    case Kind::doubly_stochastic: {
      if (w_.rows() != n) throw std::invalid_argument("mix_round: W size does not match");
      BlockVector next(n, z.d);
      std::vector<double> wnext(n, 0.0);
      for (int i = 0; i < n; ++i) {
        auto acc = next.block(i);
        for (int j = 0; j < n; ++j) {
          const double wij = w_(i, j);
          if (wij != 0.0) {
            kernels::axpy(wij, z.block(j).data(), acc.data(), acc.size());
            wnext[i] += wij * omega[j];
          }
        }
      }
      z = std::move(next);
      omega = std::move(wnext);
      return;
    }
    case Kind::push_sum: {
      const netgraph::EdgeStep step = source_->step(cursor_++);
      BlockVector next(n, z.d);
      std::vector<double> wnext(n, 0.0);
      for (int i = 0; i < n; ++i) {
        auto acc = next.block(i);
        for (int j : step.senders[i]) {
          const double share = 1.0 / static_cast<double>(step.out_degree[j]);
          kernels::axpy(share, z.block(j).data(), acc.data(), acc.size());
          wnext[i] += share * omega[j];
        }
        if (!(wnext[i] > 1e-300))
          throw std::runtime_error("mix_round: debias weight underflow at client " +
                                   std::to_string(i));
      }
      z = std::move(next);
      omega = std::move(wnext);
      return;
    }
  }
  throw std::logic_error("mix_round: unknown operator kind");
}

Eigen::MatrixXd metropolis_weights(const std::vector<std::pair<int, int>>& undirected_edges,
                                   int n) {
  if (n <= 0) throw std::invalid_argument("metropolis_weights: n must be positive");
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  std::vector<char> has_loop(n, 0);
  for (auto [a, b] : undirected_edges) {
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw std::invalid_argument("metropolis_weights: node id out of range");
    if (a == b) {
      has_loop[a] = 1;
    } else {
      adj[a][b] = adj[b][a] = 1;
    }
  }
  for (int i = 0; i < n; ++i)
    if (!has_loop[i])
      throw std::invalid_argument("metropolis_weights: missing self-loop at node " +
                                  std::to_string(i));
  // connectivity over the undirected edges
  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v = 0; v < n; ++v)
      if (adj[u][v] && !seen[v]) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
  }
  if (count != n) throw std::invalid_argument("metropolis_weights: graph is disconnected");

  std::vector<int> deg(n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (adj[i][j]) ++deg[i];

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i == j || !adj[i][j]) continue;
      w(i, j) = 1.0 / (1.0 + std::max(deg[i], deg[j]));
      off += w(i, j);
    }
    w(i, i) = 1.0 - off;
  }
  return w;
}

Eigen::MatrixXd estimate_operator_matrix(AveragingOperator& op, int n) {
  const std::uint64_t start = op.cursor();
  const std::vector<double> saved_omega = op.carried_weights();
  Eigen::MatrixXd theta(n, n);
  for (int k = 0; k < n; ++k) {
    op.set_cursor(start);
    // every probe must see the identical operator, including carried state
    if (op.persistent_weights()) op.set_carried_weights(saved_omega);
    BlockVector probe(n, 1);
    probe.block(k)[0] = 1.0;
    BlockVector out = op.apply(probe);
    for (int i = 0; i < n; ++i) theta(i, k) = out.block(i)[0];
  }
  // leave the operator one window ahead of where it started
  if (op.kind() == AveragingOperator::Kind::push_sum)
    op.set_cursor(start + static_cast<std::uint64_t>(op.rounds()));
  return theta;
}

}  // namespace pushgrad::consensus
