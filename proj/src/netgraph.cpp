#include "pushgrad/netgraph.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pushgrad/rng.hpp"

namespace pushgrad::netgraph {

EdgeProbabilityMatrix::EdgeProbabilityMatrix(int n, std::vector<double> rho_row_major)
    : n_(n), rho_(std::move(rho_row_major)) {
  if (n <= 0) throw std::invalid_argument("EdgeProbabilityMatrix: n must be positive");
  if (rho_.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("EdgeProbabilityMatrix: expected n*n entries");
  for (double p : rho_) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("EdgeProbabilityMatrix: entries must lie in [0,1]");
  }
  for (int i = 0; i < n; ++i) rho_[static_cast<std::size_t>(i) * n + i] = 1.0;
}

EdgeProbabilityMatrix EdgeProbabilityMatrix::uniform_offdiag(int n, double lo, double hi,
                                                             std::uint64_t seed) {
  if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi))
    throw std::invalid_argument("uniform_offdiag: need 0 <= lo <= hi <= 1");
  std::vector<double> rho(static_cast<std::size_t>(n) * n, 1.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      double u = rng::u01(rng::derive(seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)}));
      rho[static_cast<std::size_t>(i) * n + j] = lo + (hi - lo) * u;
    }
  }
  return {n, std::move(rho)};
}

EdgeProbabilityMatrix EdgeProbabilityMatrix::constant_offdiag(int n, double p) {
  std::vector<double> rho(static_cast<std::size_t>(n) * n, p);
  return {n, std::move(rho)};
}

EdgeStep GraphSchedule::step_view(std::size_t s) const {
  if (s >= steps.size()) throw std::out_of_range("GraphSchedule: step index past end");
  EdgeStep view;
  view.senders.assign(n, {});
  view.out_degree.assign(n, 0);
  for (auto [from, to] : steps[s]) {
    view.senders[to].push_back(from);
    ++view.out_degree[from];
  }
  return view;
}

SampledScheduleSource::SampledScheduleSource(EdgeProbabilityMatrix prob, std::uint64_t seed)
    : prob_(std::move(prob)), seed_(seed) {}

EdgeStep SampledScheduleSource::step(std::uint64_t s) const {
  const int n = prob_.n();
  EdgeStep view;
  view.senders.assign(n, {});
  view.out_degree.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      bool present;
      if (i == j) {
        present = true;
      } else {
        double u = rng::u01(rng::derive(
            seed_, {s, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)}));
        present = u < prob_(i, j);
      }
      if (present) {
        view.senders[j].push_back(i);
        ++view.out_degree[i];
      }
    }
  }
  return view;
}

FixedScheduleSource::FixedScheduleSource(GraphSchedule schedule) : schedule_(std::move(schedule)) {
  if (schedule_.n <= 0) throw std::invalid_argument("FixedScheduleSource: empty schedule");
}

EdgeStep FixedScheduleSource::step(std::uint64_t s) const {
  if (s >= schedule_.steps.size())
    throw std::out_of_range("FixedScheduleSource: schedule exhausted at step " + std::to_string(s) +
                            " (have " + std::to_string(schedule_.steps.size()) + ")");
  return schedule_.step_view(s);
}

GraphSchedule sample_schedule(const EdgeProbabilityMatrix& prob, int num_steps, std::uint64_t seed) {
  if (num_steps < 0) throw std::invalid_argument("sample_schedule: num_steps must be >= 0");
  SampledScheduleSource source(prob, seed);
  GraphSchedule schedule;
  schedule.n = prob.n();
  schedule.steps.reserve(num_steps);
  for (int s = 0; s < num_steps; ++s) {
    EdgeStep view = source.step(static_cast<std::uint64_t>(s));
    std::vector<std::pair<int, int>> edges;
    for (int to = 0; to < schedule.n; ++to)
      for (int from : view.senders[to]) edges.emplace_back(from, to);
    std::sort(edges.begin(), edges.end());
    schedule.steps.push_back(std::move(edges));
  }
  return schedule;
}

namespace {

// strongly connected iff node 0 reaches everyone along edges and along
// reversed edges
bool strongly_connected(int n, const std::vector<std::vector<int>>& fwd,
                        const std::vector<std::vector<int>>& rev) {
  auto covers_all = [n](const std::vector<std::vector<int>>& adj) {
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v : adj[u]) {
        if (!seen[v]) {
          seen[v] = 1;
          ++count;
          stack.push_back(v);
        }
      }
    }
    return count == n;
  };
  return covers_all(fwd) && covers_all(rev);
}

}  // namespace

bool check_b_strong_connectivity(const GraphSchedule& schedule, int b) {
  if (b <= 0) throw std::invalid_argument("check_b_strong_connectivity: b must be positive");
  if (schedule.steps.size() < static_cast<std::size_t>(b))
    throw std::invalid_argument("check_b_strong_connectivity: schedule shorter than one window");
  const int n = schedule.n;
  const std::size_t windows = schedule.steps.size() / b;
  for (std::size_t t = 0; t < windows; ++t) {
    std::vector<std::set<int>> out(n);
    for (std::size_t s = t * b; s < (t + 1) * b; ++s)
      for (auto [from, to] : schedule.steps[s])
        if (from != to) out[from].insert(to);
    std::vector<std::vector<int>> fwd(n), rev(n);
    for (int u = 0; u < n; ++u)
      for (int v : out[u]) {
        fwd[u].push_back(v);
        rev[v].push_back(u);
      }
    if (!strongly_connected(n, fwd, rev)) return false;
  }
  return true;
}

void write_schedule(std::ostream& out, const GraphSchedule& schedule) {
  for (const auto& edges : schedule.steps) {
    bool first = true;
    for (auto [from, to] : edges) {
      if (!first) out << ' ';
      out << from << '>' << to;
      first = false;
    }
    out << '\n';
  }
}

GraphSchedule read_schedule(std::istream& in) {
  std::vector<std::vector<std::pair<int, int>>> steps;
  int max_id = -1;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream tokens(line);
    std::string tok;
    std::vector<std::pair<int, int>> edges;
    while (tokens >> tok) {
      auto pos = tok.find('>');
      if (pos == std::string::npos || pos == 0 || pos + 1 == tok.size())
        throw std::runtime_error("graph file line " + std::to_string(lineno) +
                                 ": malformed token '" + tok + "' (expected j>i)");
      int from, to;
      try {
        std::size_t used = 0;
        from = std::stoi(tok.substr(0, pos), &used);
        if (used != pos) throw std::invalid_argument(tok);
        to = std::stoi(tok.substr(pos + 1), &used);
        if (used != tok.size() - pos - 1) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw std::runtime_error("graph file line " + std::to_string(lineno) +
                                 ": malformed token '" + tok + "' (expected j>i)");
      }
      if (from < 0 || to < 0)
        throw std::runtime_error("graph file line " + std::to_string(lineno) +
                                 ": negative node id in '" + tok + "'");
      max_id = std::max({max_id, from, to});
      edges.emplace_back(from, to);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    steps.push_back(std::move(edges));
  }
  if (steps.empty()) throw std::runtime_error("graph file: no steps found");
  const int n = max_id + 1;
  // every node must carry its self-loop on every line; this is what makes a
  // line a complete record of the step
  for (std::size_t s = 0; s < steps.size(); ++s) {
    std::vector<char> has_loop(n, 0);
    for (auto [from, to] : steps[s])
      if (from == to) has_loop[from] = 1;
    for (int i = 0; i < n; ++i)
      if (!has_loop[i])
        throw std::runtime_error("graph file step " + std::to_string(s) + ": missing self-loop " +
                                 std::to_string(i) + ">" + std::to_string(i));
  }
  GraphSchedule schedule;
  schedule.n = n;
  schedule.steps = std::move(steps);
  return schedule;
}

void save_schedule_file(const std::string& path, const GraphSchedule& schedule) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_schedule(out, schedule);
}

GraphSchedule load_schedule_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file: " + path);
  return read_schedule(in);
}

}  // namespace pushgrad::netgraph
