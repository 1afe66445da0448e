#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pushgrad::netgraph {

// Edge-presence probabilities for the time-varying digraph. rho(i, j) is the
// probability that i sends to j at any given step; the diagonal is forced to 1
// because every client always keeps its own value (self-loop).
class EdgeProbabilityMatrix {
 public:
  EdgeProbabilityMatrix(int n, std::vector<double> rho_row_major);

  // Off-diagonals drawn independently from U[lo, hi].
  static EdgeProbabilityMatrix uniform_offdiag(int n, double lo, double hi, std::uint64_t seed);
  static EdgeProbabilityMatrix constant_offdiag(int n, double p);

  int n() const { return n_; }
  double operator()(int i, int j) const { return rho_[static_cast<std::size_t>(i) * n_ + j]; }

 private:
  int n_;
  std::vector<double> rho_;
};

// One realized step graph, in the form the mixing recursion consumes:
// senders[i] lists the in-neighbours of i and out_degree[j] = |N_out_j|.
// Self-loops are always present, so out_degree >= 1 and i appears in senders[i].
struct EdgeStep {
  std::vector<std::vector<int>> senders;
  std::vector<int> out_degree;
};

// A materialized finite schedule: steps[s] holds the (from, to) edges of E(s),
// self-loops included.
struct GraphSchedule {
  int n = 0;
  std::vector<std::vector<std::pair<int, int>>> steps;

  EdgeStep step_view(std::size_t s) const;
};

// Step supplier shared by training and estimation. step(s) is a pure function
// of the index, so any window can be replayed and results cannot depend on
// which thread asks first.
class ScheduleSource {
 public:
  virtual ~ScheduleSource() = default;
  virtual int n() const = 0;
  virtual EdgeStep step(std::uint64_t s) const = 0;
  // nullopt for unbounded sources
  virtual std::optional<std::uint64_t> length() const = 0;
};

// Unbounded source; edge (i->j) at step s is present iff a counter-based
// uniform keyed on (seed, s, i, j) falls below rho(i, j).
class SampledScheduleSource final : public ScheduleSource {
 public:
  SampledScheduleSource(EdgeProbabilityMatrix prob, std::uint64_t seed);
  int n() const override { return prob_.n(); }
  EdgeStep step(std::uint64_t s) const override;
  std::optional<std::uint64_t> length() const override { return std::nullopt; }

 private:
  EdgeProbabilityMatrix prob_;
  std::uint64_t seed_;
};

// Finite source backed by a materialized schedule; throws when a step past the
// end is requested.
class FixedScheduleSource final : public ScheduleSource {
 public:
  explicit FixedScheduleSource(GraphSchedule schedule);
  int n() const override { return schedule_.n; }
  EdgeStep step(std::uint64_t s) const override;
  std::optional<std::uint64_t> length() const override { return schedule_.steps.size(); }

 private:
  GraphSchedule schedule_;
};

// Materialize num_steps step graphs. Pure function of its arguments.
GraphSchedule sample_schedule(const EdgeProbabilityMatrix& prob, int num_steps, std::uint64_t seed);

// True iff the union graph over every complete window [t*b, (t+1)*b) is
// strongly connected. A trailing partial window is ignored. Requires the
// schedule to contain at least b steps.
bool check_b_strong_connectivity(const GraphSchedule& schedule, int b);

// Text format, one line per step: space-separated "j>i" tokens meaning j sends
// to i. Self-loop tokens are written and required on read (they make each line
// a complete record of the step and let n be inferred). '#' lines are skipped.
void write_schedule(std::ostream& out, const GraphSchedule& schedule);
GraphSchedule read_schedule(std::istream& in);
void save_schedule_file(const std::string& path, const GraphSchedule& schedule);
GraphSchedule load_schedule_file(const std::string& path);

}  // namespace pushgrad::netgraph
