#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "pushgrad/innersolve.hpp"
#include "pushgrad/kernels.hpp"
#include "pushgrad/netgraph.hpp"
#include "support/federation.hpp"
#include "support/quadratic_cost.hpp"
#include "support/ring_source.hpp"

using namespace pushgrad;
using consensus::AveragingOperator;
using innersolve::ClientSet;
using innersolve::FederatedProblem;
using innersolve::LearningRateSchedule;
using innersolve::NewtonOptions;
using innersolve::SgpOptions;
using testsupport::QuadraticClientCost;

namespace {

std::shared_ptr<netgraph::SampledScheduleSource> sampled_source(int n, std::uint64_t seed) {
  return std::make_shared<netgraph::SampledScheduleSource>(
      netgraph::EdgeProbabilityMatrix::uniform_offdiag(n, 0.4, 0.8, seed), seed + 1);
}

// pooled full-batch gradient divided by n, the quantity one exact-averaging
// step descends along
std::vector<double> mean_gradient(const ClientSet& clients,
                                  const std::vector<std::vector<double>>& lambda,
                                  std::span<const double> x) {
  const int d = clients.front()->x_dim();
  std::vector<double> mean(d, 0.0), g(d);
  for (std::size_t k = 0; k < clients.size(); ++k) {
    clients[k]->inner_grad(x, lambda[k], clients[k]->full_batch(), g);
    for (int a = 0; a < d; ++a) mean[a] += g[a] / static_cast<double>(clients.size());
  }
  return mean;
}

}  // namespace

TEST_CASE("learning rate schedule applies milestones by budget fraction") {
  LearningRateSchedule sched;  // 0.1, cut 10x at 80% and 90%
  CHECK(sched.rate_at(0, 1000) == doctest::Approx(0.1));
  CHECK(sched.rate_at(799, 1000) == doctest::Approx(0.1));
  CHECK(sched.rate_at(800, 1000) == doctest::Approx(0.01));
  CHECK(sched.rate_at(899, 1000) == doctest::Approx(0.01));
  CHECK(sched.rate_at(900, 1000) == doctest::Approx(0.001));
  CHECK(sched.rate_at(999, 1000) == doctest::Approx(0.001));
  CHECK(LearningRateSchedule::constant(0.5).rate_at(999, 1000) == 0.5);
}

TEST_CASE("problem validation rejects shape mismatches") {
  auto fed = testsupport::make_logistic_federation(0, 2);
  FederatedProblem problem{fed.clients, BlockVector(2, 5), fed.lambda,
                           AveragingOperator::exact_average(), 1.0};
  CHECK_NOTHROW(problem.validate());

  FederatedProblem bad_x = problem;
  bad_x.x = BlockVector(3, 5);
  CHECK_THROWS_AS(bad_x.validate(), std::invalid_argument);

  FederatedProblem bad_lambda = problem;
  bad_lambda.lambda[1].pop_back();
  CHECK_THROWS_AS(bad_lambda.validate(), std::invalid_argument);

  FederatedProblem bad_eta = problem;
  bad_eta.eta = 0.0;
  CHECK_THROWS_AS(bad_eta.validate(), std::invalid_argument);
}

TEST_CASE("single client full batch converges to the regularized optimum") {
  auto fed = testsupport::make_logistic_federation(3, 1);
  FederatedProblem problem{fed.clients, BlockVector(1, 5), fed.lambda,
                           AveragingOperator::exact_average(), 1.0};
  SgpOptions options;
  options.steps = 3000;
  options.schedule = LearningRateSchedule::constant(0.5);
  innersolve::sgp_train(problem, options);

  auto grad = mean_gradient(fed.clients, fed.lambda, problem.x.block(0));
  CHECK(kernels::nrm2(grad.data(), grad.size()) <= 1e-6);
}

TEST_CASE("zero learning rate keeps a consensus start in place") {
  // mixing alone cannot move a consensus state, so with no gradient motion
  // the iterates are fixed
  auto fed = testsupport::make_logistic_federation(1, 2);
  FederatedProblem problem{fed.clients, BlockVector(2, 5), fed.lambda,
                           AveragingOperator::exact_average(), 1.0};
  for (int i = 0; i < 2; ++i) {
    problem.x.block(i)[0] = -0.25;
    problem.x.block(i)[3] = 1.5;
  }
  const std::vector<double> before = problem.x.data;

  SgpOptions options;
  options.steps = 25;
  options.schedule = LearningRateSchedule::constant(0.0);
  options.batch_size = 10;
  innersolve::sgp_train(problem, options);
  CHECK(problem.x.data == before);
}

TEST_CASE("exact averaging and full batches reproduce centralized descent") {
  auto fed = testsupport::make_logistic_federation(7, 3);
  FederatedProblem problem{fed.clients, BlockVector(3, 5), fed.lambda,
                           AveragingOperator::exact_average(), 1.0};
  std::vector<double> central(5, 0.0);

  SgpOptions one_step;
  one_step.steps = 1;
  one_step.schedule = LearningRateSchedule::constant(0.2);
  for (int step = 0; step < 40; ++step) {
    innersolve::sgp_train(problem, one_step);
    auto g = mean_gradient(fed.clients, fed.lambda, central);
    for (int a = 0; a < 5; ++a) central[a] -= 0.2 * g[a];
    for (int i = 0; i < 3; ++i)
      for (int a = 0; a < 5; ++a)
        CHECK(problem.x.block(i)[a] == doctest::Approx(central[a]).epsilon(1e-10));
  }
}

TEST_CASE("newton solves a quadratic in one step and meets its tolerance") {
  QuadraticClientCost cost({2.0, -3.0, 0.5}, {0.0, 0.0, 0.0});
  ClientSet clients{&cost};
  std::vector<std::vector<double>> lambda{{4.0, 2.0, 0.5}};
  auto x = innersolve::newton_consensus_solve(clients, lambda);
  CHECK(x[0] == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(x[1] == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(x[2] == doctest::Approx(-1.0).epsilon(1e-14));

  auto g = mean_gradient(clients, lambda, x);
  CHECK(kernels::nrm2(g.data(), g.size()) <= 1e-10);
}

TEST_CASE("newton rejects indefinite curvature and bad warm starts") {
  QuadraticClientCost cost({1.0, 1.0}, {0.0, 0.0});
  ClientSet clients{&cost};
  CHECK_THROWS_AS(innersolve::newton_consensus_solve(clients, {{-1.0, 1.0}}),
                  std::runtime_error);
  NewtonOptions options;
  options.x0 = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(innersolve::newton_consensus_solve(clients, {{1.0, 1.0}}, options),
                  std::invalid_argument);
}

TEST_CASE("newton agrees with a long first-order descent run") {
  auto fed = testsupport::make_logistic_federation(11, 3);
  auto x_newton = innersolve::newton_consensus_solve(fed.clients, fed.lambda);

  std::vector<double> x(5, 0.0);
  for (int step = 0; step < 20000; ++step) {
    auto g = mean_gradient(fed.clients, fed.lambda, x);
    if (kernels::nrm2(g.data(), g.size()) < 1e-13) break;
    for (int a = 0; a < 5; ++a) x[a] -= 0.5 * g[a];
  }
  for (int a = 0; a < 5; ++a) CHECK(x[a] == doctest::Approx(x_newton[a]).epsilon(1e-8));
}

TEST_CASE("sgp over a time-varying digraph lands near the newton solution") {
  auto fed = testsupport::make_logistic_federation(1, 3);
  auto ring = std::make_shared<testsupport::AlternatingRingSource>(3);
  FederatedProblem problem{fed.clients, BlockVector(3, 5), fed.lambda,
                           AveragingOperator::push_sum(ring, 1), 1.0};
  SgpOptions options;
  options.steps = 5000;
  options.seed = 17;
  innersolve::sgp_train(problem, options);

  auto x_newton = innersolve::newton_consensus_solve(fed.clients, fed.lambda);
  for (int i = 0; i < 3; ++i) {
    double err = 0.0;
    for (int a = 0; a < 5; ++a) {
      const double r = problem.x.block(i)[a] - x_newton[a];
      err += r * r;
    }
    CHECK(std::sqrt(err) <= 1e-3);
  }
  // consensus among clients is tighter than distance to the optimum
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      double gap = 0.0;
      for (int a = 0; a < 5; ++a) {
        const double r = problem.x.block(i)[a] - problem.x.block(j)[a];
        gap += r * r;
      }
      CHECK(std::sqrt(gap) <= 1e-3);
    }
}

TEST_CASE("sgp stays unbiased on heterogeneous random digraphs") {
  // Edge probabilities drawn from U[0.4, 0.8] give clients different
  // long-run push-sum weights; a gradient step weighted by omega_i would
  // settle at a weighted optimum ~2e-2 away from the Newton solution
  // instead of the rate-limited floor checked here.
  auto fed = testsupport::make_logistic_federation(1, 3);
  FederatedProblem problem{fed.clients, BlockVector(3, 5), fed.lambda,
                           AveragingOperator::push_sum(sampled_source(3, 23), 1), 1.0};
  SgpOptions options;
  options.steps = 5000;
  options.seed = 29;
  innersolve::sgp_train(problem, options);

  auto x_newton = innersolve::newton_consensus_solve(fed.clients, fed.lambda);
  for (int i = 0; i < 3; ++i) {
    double err = 0.0;
    for (int a = 0; a < 5; ++a) {
      const double r = problem.x.block(i)[a] - x_newton[a];
      err += r * r;
    }
    CHECK(std::sqrt(err) <= 3e-3);
  }
}

TEST_CASE("divergence is detected and reported") {
  QuadraticClientCost cost({1.0, 1.0}, {0.0, 0.0});
  ClientSet clients{&cost, &cost};
  FederatedProblem problem{clients, BlockVector(2, 2, 1.0),
                           {{5.0, 5.0}, {5.0, 5.0}},
                           AveragingOperator::exact_average(), 1.0};
  SgpOptions options;
  options.steps = 100;
  options.schedule = LearningRateSchedule::constant(10.0);
  CHECK_THROWS_AS(innersolve::sgp_train(problem, options), std::runtime_error);
}

TEST_CASE("stationarity residual vanishes only at the consensus optimum") {
  auto fed = testsupport::make_logistic_federation(23, 3);
  auto x_star = innersolve::newton_consensus_solve(fed.clients, fed.lambda);

  BlockVector at_optimum(3, 5);
  for (int i = 0; i < 3; ++i)
    std::copy(x_star.begin(), x_star.end(), at_optimum.block(i).begin());
  CHECK(innersolve::stationarity_residual(fed.clients, fed.lambda, at_optimum, 1.0) <= 1e-8);

  // consensus but away from the optimum: residual has a closed form
  BlockVector off_optimum = at_optimum;
  for (int i = 0; i < 3; ++i) off_optimum.block(i)[0] += 0.3;
  std::vector<double> probe(x_star);
  probe[0] += 0.3;
  auto g = mean_gradient(fed.clients, fed.lambda, probe);
  const double expected = 1.0 * kernels::nrm2(g.data(), g.size()) * std::sqrt(3.0);
  CHECK(innersolve::stationarity_residual(fed.clients, fed.lambda, off_optimum, 1.0) ==
        doctest::Approx(expected).epsilon(1e-12));
  CHECK(innersolve::stationarity_residual(fed.clients, fed.lambda, off_optimum, 1.0) > 1e-3);

  // non-consensus perturbation on a single client
  BlockVector perturbed = at_optimum;
  perturbed.block(1)[2] += 0.1;
  CHECK(innersolve::stationarity_residual(fed.clients, fed.lambda, perturbed, 1.0) > 1e-3);
}

TEST_CASE("checkpoint CSV round-trips bit for bit") {
  BlockVector x(3, 4);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : x.data) v = normal(rng);

  const std::string path = (std::filesystem::temp_directory_path() / "ckpt_test.csv").string();
  innersolve::save_checkpoint_csv(path, x);
  BlockVector back = innersolve::load_checkpoint_csv(path);
  CHECK(back.n == 3);
  CHECK(back.d == 4);
  CHECK(back.data == x.data);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects malformed files") {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "ckpt_bad.csv").string();
  {
    std::ofstream out(path);
    out << "node,x1\n0,1.0\n";
  }
  CHECK_THROWS_AS(innersolve::load_checkpoint_csv(path), std::runtime_error);
  {
    std::ofstream out(path);
    out << "client,x1\n0,1.0\n2,2.0\n";
  }
  CHECK_THROWS_AS(innersolve::load_checkpoint_csv(path), std::runtime_error);
  {
    std::ofstream out(path);
    out << "client,x1,x2\n0,1.0\n";
  }
  CHECK_THROWS_AS(innersolve::load_checkpoint_csv(path), std::runtime_error);
  std::filesystem::remove(path);
}
