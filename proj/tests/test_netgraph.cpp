#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>

#include "pushgrad/netgraph.hpp"

using namespace pushgrad;
using netgraph::EdgeProbabilityMatrix;
using netgraph::GraphSchedule;

namespace {

// edges of step s as a set for easy comparison
std::set<std::pair<int, int>> edge_set(const GraphSchedule& sched, std::size_t s) {
  return {sched.steps[s].begin(), sched.steps[s].end()};
}

}  // namespace

TEST_CASE("probability matrix validation") {
  CHECK_THROWS_AS(EdgeProbabilityMatrix(2, {0.5, 1.5, 0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(EdgeProbabilityMatrix(2, {0.5, -0.1, 0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(EdgeProbabilityMatrix(2, {0.5, 0.5}), std::invalid_argument);

  // diagonal forced to one regardless of the given value
  EdgeProbabilityMatrix p(2, {0.0, 0.3, 0.7, 0.0});
  CHECK(p(0, 0) == 1.0);
  CHECK(p(1, 1) == 1.0);
  CHECK(p(0, 1) == 0.3);
}

TEST_CASE("probability-one edges give the complete digraph every step") {
  auto prob = EdgeProbabilityMatrix::constant_offdiag(3, 1.0);
  GraphSchedule sched = netgraph::sample_schedule(prob, 3, 42);
  REQUIRE(sched.steps.size() == 3);
  for (std::size_t s = 0; s < 3; ++s) CHECK(sched.steps[s].size() == 9);
}

TEST_CASE("probability-zero off-diagonals give self-loops only") {
  auto prob = EdgeProbabilityMatrix::constant_offdiag(4, 0.0);
  GraphSchedule sched = netgraph::sample_schedule(prob, 5, 1);
  for (std::size_t s = 0; s < 5; ++s) {
    REQUIRE(sched.steps[s].size() == 4);
    for (auto [from, to] : sched.steps[s]) CHECK(from == to);
  }
}

TEST_CASE("sampling is a pure function of (prob, seed)") {
  auto prob = EdgeProbabilityMatrix::uniform_offdiag(3, 0.4, 0.8, 99);
  GraphSchedule a = netgraph::sample_schedule(prob, 20, 7);
  GraphSchedule b = netgraph::sample_schedule(prob, 20, 7);
  GraphSchedule c = netgraph::sample_schedule(prob, 20, 8);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t s = 0; s < a.steps.size(); ++s) CHECK(edge_set(a, s) == edge_set(b, s));
  bool any_diff = false;
  for (std::size_t s = 0; s < a.steps.size(); ++s)
    if (edge_set(a, s) != edge_set(c, s)) any_diff = true;
  CHECK(any_diff);

  // the sampled-source view of the same seed matches the materialized schedule
  netgraph::SampledScheduleSource source(prob, 7);
  for (std::size_t s = 0; s < a.steps.size(); ++s) {
    netgraph::EdgeStep from_schedule = a.step_view(s);
    netgraph::EdgeStep from_source = source.step(s);
    CHECK(from_schedule.senders == from_source.senders);
    CHECK(from_schedule.out_degree == from_source.out_degree);
  }
}

TEST_CASE("every sampled step contains all self-loops") {
  auto prob = EdgeProbabilityMatrix::uniform_offdiag(6, 0.4, 0.8, 3);
  GraphSchedule sched = netgraph::sample_schedule(prob, 10, 5);
  for (std::size_t s = 0; s < sched.steps.size(); ++s) {
    auto edges = edge_set(sched, s);
    for (int i = 0; i < 6; ++i) CHECK(edges.count({i, i}) == 1);
  }
}

TEST_CASE("connectivity: complete graph passes any window") {
  auto prob = EdgeProbabilityMatrix::constant_offdiag(4, 1.0);
  GraphSchedule sched = netgraph::sample_schedule(prob, 6, 0);
  CHECK(netgraph::check_b_strong_connectivity(sched, 1));
  CHECK(netgraph::check_b_strong_connectivity(sched, 3));
}

TEST_CASE("connectivity: self-loops only never passes") {
  auto prob = EdgeProbabilityMatrix::constant_offdiag(3, 0.0);
  GraphSchedule sched = netgraph::sample_schedule(prob, 6, 0);
  CHECK_FALSE(netgraph::check_b_strong_connectivity(sched, 1));
  CHECK_FALSE(netgraph::check_b_strong_connectivity(sched, 2));
  CHECK_FALSE(netgraph::check_b_strong_connectivity(sched, 6));
}

TEST_CASE("connectivity: alternating half-rings whose union is the cycle") {
  // even steps wire i -> i+1 for even i, odd steps for odd i; the union over
  // any two consecutive steps is the full directed cycle
  const int n = 6;
  GraphSchedule sched;
  sched.n = n;
  for (int s = 0; s < 4; ++s) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) edges.emplace_back(i, i);
    for (int i = s % 2; i < n; i += 2) edges.emplace_back(i, (i + 1) % n);
    sched.steps.push_back(std::move(edges));
  }
  CHECK(netgraph::check_b_strong_connectivity(sched, 2));
  CHECK_FALSE(netgraph::check_b_strong_connectivity(sched, 1));  // half-rings alone do not connect
}

TEST_CASE("connectivity rejects bad window sizes") {
  auto prob = EdgeProbabilityMatrix::constant_offdiag(3, 1.0);
  GraphSchedule sched = netgraph::sample_schedule(prob, 4, 0);
  CHECK_THROWS_AS(netgraph::check_b_strong_connectivity(sched, 0), std::invalid_argument);
  CHECK_THROWS_AS(netgraph::check_b_strong_connectivity(sched, 5), std::invalid_argument);
}

TEST_CASE("statistical smoke: rho >= 0.4 schedules are 5-strongly-connected") {
  int pass = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    auto prob = EdgeProbabilityMatrix::uniform_offdiag(20, 0.4, 0.8, 1000 + t);
    GraphSchedule sched = netgraph::sample_schedule(prob, 10, 2000 + t);
    if (netgraph::check_b_strong_connectivity(sched, 5)) ++pass;
  }
  CHECK(pass >= 99);
}

TEST_CASE("schedule text round-trip") {
  auto prob = EdgeProbabilityMatrix::uniform_offdiag(5, 0.4, 0.8, 17);
  GraphSchedule sched = netgraph::sample_schedule(prob, 8, 23);

  std::stringstream buf;
  netgraph::write_schedule(buf, sched);
  GraphSchedule back = netgraph::read_schedule(buf);

  REQUIRE(back.n == sched.n);
  REQUIRE(back.steps.size() == sched.steps.size());
  for (std::size_t s = 0; s < sched.steps.size(); ++s) CHECK(edge_set(back, s) == edge_set(sched, s));
}

TEST_CASE("schedule reader rejects malformed input") {
  {
    std::stringstream buf("0>0 1>1 junk\n");
    CHECK_THROWS_AS(netgraph::read_schedule(buf), std::runtime_error);
  }
  {
    // node 1 appears but has no self-loop
    std::stringstream buf("0>0 0>1\n");
    CHECK_THROWS_AS(netgraph::read_schedule(buf), std::runtime_error);
  }
  {
    std::stringstream buf("");
    CHECK_THROWS_AS(netgraph::read_schedule(buf), std::runtime_error);
  }
  {
    // comments and blank lines are fine
    std::stringstream buf("# a comment\n\n0>0 1>1 0>1\n");
    GraphSchedule sched = netgraph::read_schedule(buf);
    CHECK(sched.n == 2);
    CHECK(sched.steps.size() == 1);
  }
}

TEST_CASE("fixed schedule source reports exhaustion") {
  auto prob = EdgeProbabilityMatrix::constant_offdiag(2, 1.0);
  netgraph::FixedScheduleSource source(netgraph::sample_schedule(prob, 3, 0));
  CHECK(source.length().value() == 3);
  CHECK_NOTHROW(source.step(2));
  CHECK_THROWS_AS(source.step(3), std::out_of_range);
}
