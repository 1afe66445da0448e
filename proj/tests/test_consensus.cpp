#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/SVD>
#include <cmath>
#include <random>

#include "pushgrad/consensus.hpp"
#include "pushgrad/netgraph.hpp"

using namespace pushgrad;
using consensus::AveragingOperator;
using netgraph::EdgeProbabilityMatrix;

namespace {

BlockVector make_blocks(const std::vector<std::vector<double>>& rows) {
  BlockVector v(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), v.block(static_cast<int>(i)).begin());
  return v;
}

double sigma_max(const Eigen::MatrixXd& m) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

std::shared_ptr<netgraph::SampledScheduleSource> sampled_source(int n, std::uint64_t seed) {
  return std::make_shared<netgraph::SampledScheduleSource>(
      EdgeProbabilityMatrix::uniform_offdiag(n, 0.4, 0.8, seed), seed + 1);
}

}  // namespace

TEST_CASE("single node is a fixed point") {
  auto prob = EdgeProbabilityMatrix::constant_offdiag(1, 0.0);
  netgraph::FixedScheduleSource source(netgraph::sample_schedule(prob, 10, 0));
  BlockVector v = make_blocks({{3.5, -2.0}});
  auto state = consensus::push_sum_average(v, source, 0, 10);
  CHECK(state.y.block(0)[0] == 3.5);
  CHECK(state.y.block(0)[1] == -2.0);
  CHECK(state.omega[0] == doctest::Approx(1.0));
}

TEST_CASE("consensus start stays at consensus") {
  auto source = sampled_source(4, 5);
  BlockVector v = make_blocks({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}});
  for (int rounds : {1, 3, 11}) {
    auto state = consensus::push_sum_average(v, *source, 0, rounds);
    for (int i = 0; i < 4; ++i) {
      CHECK(state.y.block(i)[0] == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(state.y.block(i)[1] == doctest::Approx(2.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("complete graph reaches the exact mean in one round") {
  // every sender has out-degree n, so z_i^(1) = (1/n) sum_j z_j and omega = 1
  auto prob = EdgeProbabilityMatrix::constant_offdiag(3, 1.0);
  netgraph::FixedScheduleSource source(netgraph::sample_schedule(prob, 1, 0));
  BlockVector v = make_blocks({{3.0, 0.0}, {0.0, 6.0}, {3.0, 3.0}});
  auto state = consensus::push_sum_average(v, source, 0, 1);
  for (int i = 0; i < 3; ++i) {
    CHECK(state.y.block(i)[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(state.y.block(i)[1] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(state.omega[i] == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("mass conservation at every round") {
  auto source = sampled_source(8, 21);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  BlockVector v(8, 3);
  for (double& x : v.data) x = normal(rng);

  std::vector<double> z0_total(3, 0.0);
  for (int i = 0; i < 8; ++i)
    for (int a = 0; a < 3; ++a) z0_total[a] += v.block(i)[a];

  consensus::push_sum_average(v, *source, 0, 40, nullptr,
                              [&](int, const consensus::PushSumState& state) {
                                double wtotal = 0.0;
                                for (double w : state.omega) {
                                  CHECK(w > 0.0);
                                  wtotal += w;
                                }
                                CHECK(wtotal == doctest::Approx(8.0).epsilon(1e-12));
                                for (int a = 0; a < 3; ++a) {
                                  double ztotal = 0.0;
                                  for (int i = 0; i < 8; ++i) ztotal += state.z.block(i)[a];
                                  CHECK(ztotal == doctest::Approx(z0_total[a]).epsilon(1e-10));
                                }
                              });
}

TEST_CASE("gossip converges to the true mean") {
  auto source = sampled_source(10, 77);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.0, 1.0);
  BlockVector v(10, 2);
  for (double& x : v.data) x = normal(rng);
  std::vector<double> mean(2, 0.0);
  for (int i = 0; i < 10; ++i)
    for (int a = 0; a < 2; ++a) mean[a] += v.block(i)[a] / 10.0;

  auto state = consensus::push_sum_average(v, *source, 0, 60);
  for (int i = 0; i < 10; ++i)
    for (int a = 0; a < 2; ++a) CHECK(state.y.block(i)[a] == doctest::Approx(mean[a]).epsilon(1e-9));
}

TEST_CASE("debias weight underflow is reported") {
  // node 1 sends to node 0 every step but never receives from anyone else, so
  // its weight halves per round and eventually underflows
  netgraph::GraphSchedule sched;
  sched.n = 2;
  for (int s = 0; s < 1100; ++s) sched.steps.push_back({{0, 0}, {1, 0}, {1, 1}});
  netgraph::FixedScheduleSource source(sched);
  BlockVector v = make_blocks({{1.0}, {1.0}});
  CHECK_THROWS_AS(consensus::push_sum_average(v, source, 0, 1100), std::runtime_error);
}

TEST_CASE("exact average operator") {
  auto op = AveragingOperator::exact_average();
  BlockVector v = make_blocks({{1.0, 0.0}, {0.0, 1.0}});
  BlockVector out = op.apply(v);
  for (int i = 0; i < 2; ++i) {
    CHECK(out.block(i)[0] == doctest::Approx(0.5));
    CHECK(out.block(i)[1] == doctest::Approx(0.5));
  }
}

TEST_CASE("rank-one doubly stochastic matrix averages in one round") {
  Eigen::MatrixXd w = Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0);
  auto op = AveragingOperator::doubly_stochastic(w, 1);
  BlockVector v = make_blocks({{3.0}, {6.0}, {0.0}});
  BlockVector out = op.apply(v);
  for (int i = 0; i < 3; ++i) CHECK(out.block(i)[0] == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("doubly stochastic validation") {
  Eigen::MatrixXd bad_row(2, 2);
  bad_row << 0.9, 0.2, 0.1, 0.8;
  CHECK_THROWS_AS(AveragingOperator::doubly_stochastic(bad_row, 1), std::invalid_argument);
  Eigen::MatrixXd negative(2, 2);
  negative << 1.2, -0.2, -0.2, 1.2;
  CHECK_THROWS_AS(AveragingOperator::doubly_stochastic(negative, 1), std::invalid_argument);
}

TEST_CASE("push-sum operator approaches exact averaging for large S") {
  auto source = sampled_source(6, 31);
  auto push = AveragingOperator::push_sum(source, 80);
  auto exact = AveragingOperator::exact_average();
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0.0, 1.0);
  BlockVector v(6, 4);
  for (double& x : v.data) x = normal(rng);
  BlockVector a = push.apply(v);
  BlockVector b = exact.apply(v);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-8));
}

TEST_CASE("metropolis weights: two nodes, one edge") {
  Eigen::MatrixXd w = consensus::metropolis_weights({{0, 0}, {1, 1}, {0, 1}}, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(w(i, j) == doctest::Approx(0.5));
}

TEST_CASE("metropolis weights: complete graph n=3") {
  Eigen::MatrixXd w =
      consensus::metropolis_weights({{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}}, 3);
  for (int i = 0; i < 3; ++i) {
    double row = 0.0;
    for (int j = 0; j < 3; ++j) {
      if (i != j) CHECK(w(i, j) == doctest::Approx(1.0 / 3.0));
      row += w(i, j);
    }
    CHECK(row == doctest::Approx(1.0));
  }
}

TEST_CASE("metropolis weights reject disconnected and loop-free graphs") {
  CHECK_THROWS_AS(consensus::metropolis_weights({{0, 0}, {1, 1}}, 2), std::invalid_argument);
  CHECK_THROWS_AS(consensus::metropolis_weights({{0, 1}}, 2), std::invalid_argument);
}

TEST_CASE("operator matrix: exact average is the rank-one projector") {
  auto op = AveragingOperator::exact_average();
  Eigen::MatrixXd theta = consensus::estimate_operator_matrix(op, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) CHECK(theta(i, j) == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("operator matrix: self-loop-only schedule is the identity") {
  auto prob = EdgeProbabilityMatrix::constant_offdiag(4, 0.0);
  auto source = std::make_shared<netgraph::SampledScheduleSource>(prob, 0);
  for (int rounds : {1, 7}) {
    auto op = AveragingOperator::push_sum(source, rounds);
    Eigen::MatrixXd theta = consensus::estimate_operator_matrix(op, 4);
    CHECK((theta - Eigen::MatrixXd::Identity(4, 4)).norm() == doctest::Approx(0.0));
  }
}

TEST_CASE("operator matrix: push-sum with large S is near 1/n") {
  auto source = sampled_source(5, 13);
  auto op = AveragingOperator::push_sum(source, 100);
  Eigen::MatrixXd theta = consensus::estimate_operator_matrix(op, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) CHECK(std::abs(theta(i, j) - 0.2) < 1e-6);
  // the probe consumed one window
  CHECK(op.cursor() == 100);
}

TEST_CASE("operator deviation decays with S on a fixed schedule") {
  const int n = 10;
  auto source = sampled_source(n, 4242);
  const Eigen::MatrixXd exact = Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  std::vector<double> dev;
  for (int s = 1; s <= 40; ++s) {
    auto op = AveragingOperator::push_sum(source, s);
    op.set_cursor(0);  // prefixes of one fixed schedule
    dev.push_back(sigma_max(exact - consensus::estimate_operator_matrix(op, n)));
  }
  for (std::size_t k = 1; k < dev.size(); ++k) CHECK(dev[k] <= dev[k - 1] + 1e-12);

  // least-squares slope of log(dev) against S must be negative
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (std::size_t k = 0; k < dev.size(); ++k) {
    if (dev[k] <= 0.0) break;  // exact zero would mean machine-perfect mixing
    const double x = static_cast<double>(k + 1), y = std::log(dev[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  REQUIRE(count >= 10);
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  CHECK(slope < 0.0);
}

TEST_CASE("operator application is linear when the window is replayed") {
  auto source = sampled_source(5, 55);
  auto op = AveragingOperator::push_sum(source, 6);
  std::mt19937_64 rng(15);
  std::normal_distribution<double> normal(0.0, 1.0);
  BlockVector u(5, 3), v(5, 3);
  for (double& x : u.data) x = normal(rng);
  for (double& x : v.data) x = normal(rng);
  const double a = 1.7, b = -0.4;

  const std::uint64_t mark = op.cursor();
  BlockVector au_bv(5, 3);
  for (std::size_t i = 0; i < au_bv.data.size(); ++i) au_bv.data[i] = a * u.data[i] + b * v.data[i];

  BlockVector lhs = op.apply(au_bv);
  op.set_cursor(mark);
  BlockVector ru = op.apply(u);
  op.set_cursor(mark);
  BlockVector rv = op.apply(v);

  for (std::size_t i = 0; i < lhs.data.size(); ++i)
    CHECK(lhs.data[i] == doctest::Approx(a * ru.data[i] + b * rv.data[i]).epsilon(1e-10));
}

TEST_CASE("apply consumes fresh schedule steps") {
  auto source = sampled_source(4, 61);
  auto op = AveragingOperator::push_sum(source, 5);
  BlockVector v = make_blocks({{1.0}, {2.0}, {3.0}, {4.0}});
  CHECK(op.cursor() == 0);
  BlockVector first = op.apply(v);
  CHECK(op.cursor() == 5);
  BlockVector second = op.apply(v);
  CHECK(op.cursor() == 10);
  // different windows, different (small) deviations from the mean
  bool differs = false;
  for (std::size_t i = 0; i < first.data.size(); ++i)
    if (first.data[i] != second.data[i]) differs = true;
  CHECK(differs);
}

TEST_CASE("persistent weights carry across applications") {
  auto source = sampled_source(4, 71);
  auto persistent = AveragingOperator::push_sum(source, 3, true);
  BlockVector v = make_blocks({{1.0}, {2.0}, {3.0}, {4.0}});

  CHECK(persistent.carried_weights().empty());
  BlockVector out1 = persistent.apply(v);
  const std::vector<double> carried = persistent.carried_weights();
  REQUIRE(carried.size() == 4);

  // second application must equal a fresh run seeded with those weights
  BlockVector out2 = persistent.apply(v);
  auto reference = consensus::push_sum_average(v, *source, 3, 3, &carried);
  for (int i = 0; i < 4; ++i)
    CHECK(out2.block(i)[0] == doctest::Approx(reference.y.block(i)[0]).epsilon(1e-14));

  // non-persistent operator resets to omega = 1 and so disagrees in general
  auto fresh = AveragingOperator::push_sum(source, 3, false);
  fresh.set_cursor(3);
  BlockVector out_fresh = fresh.apply(v);
  bool differs = false;
  for (int i = 0; i < 4; ++i)
    if (out_fresh.block(i)[0] != out2.block(i)[0]) differs = true;
  CHECK(differs);
}

TEST_CASE("mix_round preserves totals and matches one-round apply") {
  auto source = sampled_source(5, 81);
  auto op = AveragingOperator::push_sum(source, 1);
  BlockVector z = make_blocks({{1.0, 1.0}, {2.0, -1.0}, {3.0, 0.5}, {4.0, 2.0}, {5.0, 0.0}});
  std::vector<double> omega(5, 1.0);

  double z_total = 0.0;
  for (int i = 0; i < 5; ++i) z_total += z.block(i)[0];

  op.mix_round(z, omega);
  double z_after = 0.0, w_after = 0.0;
  for (int i = 0; i < 5; ++i) {
    z_after += z.block(i)[0];
    w_after += omega[i];
  }
  CHECK(z_after == doctest::Approx(z_total).epsilon(1e-12));
  CHECK(w_after == doctest::Approx(5.0).epsilon(1e-12));
}
