#include "pushgrad/innersolve.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "pushgrad/kernels.hpp"
#include "pushgrad/rng.hpp"

namespace pushgrad::innersolve {

void FederatedProblem::validate() const {
  const int count = n();
  if (count == 0) throw std::invalid_argument("FederatedProblem: no clients");
  for (const objective::ClientCost* c : clients)
    if (c == nullptr) throw std::invalid_argument("FederatedProblem: null client");
  if (x.n != count || x.d != x_dim())
    throw std::invalid_argument("FederatedProblem: x shape does not match clients");
  if (static_cast<int>(lambda.size()) != count)
    throw std::invalid_argument("FederatedProblem: lambda count does not match clients");
  for (int i = 0; i < count; ++i) {
    if (clients[i]->x_dim() != x_dim())
      throw std::invalid_argument("FederatedProblem: clients disagree on x dimension");
    if (static_cast<int>(lambda[i].size()) != clients[i]->lambda_dim())
      throw std::invalid_argument("FederatedProblem: lambda size mismatch for client " +
                                  std::to_string(i));
  }
  if (!(eta > 0.0)) throw std::invalid_argument("FederatedProblem: eta must be positive");
}

double LearningRateSchedule::rate_at(int step, int total_steps) const {
  double rate = initial;
  for (const auto& [fraction, factor] : milestones)
    if (step >= static_cast<int>(fraction * total_steps)) rate *= factor;
  return rate;
}

BlockVector& sgp_train(FederatedProblem& problem, const SgpOptions& options) {
  problem.validate();
  if (options.steps < 0) throw std::invalid_argument("sgp_train: negative step count");
  if (options.batch_size < 0) throw std::invalid_argument("sgp_train: negative batch size");

  const int n = problem.n();
  const int d = problem.x_dim();

  BlockVector z = problem.x;
  std::vector<double> omega(n, 1.0);
  std::vector<double> y(d), grad(d);
  std::vector<int> batch(options.batch_size > 0 ? options.batch_size : 0);

  for (int step = 0; step < options.steps; ++step) {
    const double rate = options.schedule.rate_at(step, options.steps);
    for (int i = 0; i < n; ++i) {
      auto zi = z.block(i);
      for (int a = 0; a < d; ++a) y[a] = zi[a] / omega[i];
      objective::Batch indices = problem.clients[i]->full_batch();
      if (options.batch_size > 0) {
        // one sampler per (step, client) so client order never matters
        objective::BatchSampler sampler(rng::derive(options.seed, {static_cast<std::uint64_t>(step),
                                                                   static_cast<std::uint64_t>(i)}),
                                        static_cast<int>(problem.clients[i]->train().size()));
        sampler.sample(batch);
        indices = batch;
      }
      problem.clients[i]->inner_grad(y, problem.lambda[i], indices, grad);
      kernels::axpy(-rate, grad.data(), zi.data(), static_cast<std::size_t>(d));
    }
    problem.averaging.mix_round(z, omega);
    for (int i = 0; i < n; ++i) {
      const double norm = kernels::nrm2(z.block(i).data(), static_cast<std::size_t>(d)) / omega[i];
      if (!(norm <= options.divergence_norm))
        throw std::runtime_error("sgp_train: diverged at step " + std::to_string(step) +
                                 " (client " + std::to_string(i) + ")");
    }
  }

  for (int i = 0; i < n; ++i) {
    auto zi = z.block(i);
    auto xi = problem.x.block(i);
    for (int a = 0; a < d; ++a) xi[a] = zi[a] / omega[i];
  }
  return problem.x;
}

namespace {

double pooled_value(const ClientSet& clients, const std::vector<std::vector<double>>& lambda,
                    const Eigen::VectorXd& x) {
  std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
  double total = 0.0;
  for (std::size_t k = 0; k < clients.size(); ++k)
    total += clients[k]->inner_value(xs, lambda[k], clients[k]->full_batch());
  return total;
}

Eigen::VectorXd pooled_grad(const ClientSet& clients, const std::vector<std::vector<double>>& lambda,
                            const Eigen::VectorXd& x) {
  const int d = clients.front()->x_dim();
  std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
  Eigen::VectorXd total = Eigen::VectorXd::Zero(d);
  std::vector<double> g(d);
  for (std::size_t k = 0; k < clients.size(); ++k) {
    clients[k]->inner_grad(xs, lambda[k], clients[k]->full_batch(), g);
    for (int a = 0; a < d; ++a) total[a] += g[a];
  }
  return total;
}

// Costs only expose Hessian-vector products; the matrix is recovered by d
// basis probes (d is small throughout).
Eigen::MatrixXd pooled_hessian(const ClientSet& clients,
                               const std::vector<std::vector<double>>& lambda,
                               const Eigen::VectorXd& x) {
  const int d = clients.front()->x_dim();
  std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  std::vector<double> e(d, 0.0), col(d);
  for (int a = 0; a < d; ++a) {
    e[a] = 1.0;
    for (std::size_t k = 0; k < clients.size(); ++k) {
      clients[k]->hessian_vec(xs, lambda[k], clients[k]->full_batch(), e, col);
      for (int r = 0; r < d; ++r) h(r, a) += col[r];
    }
    e[a] = 0.0;
  }
  return h;
}

}  // namespace

std::vector<double> newton_consensus_solve(const ClientSet& clients,
                                           const std::vector<std::vector<double>>& lambda,
                                           const NewtonOptions& options) {
  if (clients.empty()) throw std::invalid_argument("newton_consensus_solve: no clients");
  if (lambda.size() != clients.size())
    throw std::invalid_argument("newton_consensus_solve: lambda count mismatch");
  const int d = clients.front()->x_dim();

  Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
  if (!options.x0.empty()) {
    if (static_cast<int>(options.x0.size()) != d)
      throw std::invalid_argument("newton_consensus_solve: warm start has wrong dimension");
    for (int a = 0; a < d; ++a) x[a] = options.x0[a];
  }

  for (int iter = 0; iter < options.max_iters; ++iter) {
    Eigen::VectorXd g = pooled_grad(clients, lambda, x);
    if (g.norm() <= options.tol) return {x.data(), x.data() + d};

    Eigen::LLT<Eigen::MatrixXd> llt(pooled_hessian(clients, lambda, x));
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("newton_consensus_solve: Hessian not positive definite");
    Eigen::VectorXd p = llt.solve(-g);

    // Backtrack only while the decrease is resolvable in double precision;
    // near the optimum the cost is flat to rounding but full Newton steps
    // still contract the gradient quadratically.
    if (g.norm() > 1e-6) {
      const double f0 = pooled_value(clients, lambda, x);
      double t = 1.0;
      while (t >= 1e-12 && !(pooled_value(clients, lambda, x + t * p) < f0)) t *= 0.5;
      if (t < 1e-12)
        throw std::runtime_error("newton_consensus_solve: line search found no decrease");
      x += t * p;
    } else {
      x += p;
    }
  }
  if (pooled_grad(clients, lambda, x).norm() <= options.tol) return {x.data(), x.data() + d};
  throw std::runtime_error("newton_consensus_solve: no convergence within max_iters");
}

double stationarity_residual(const ClientSet& clients,
                             const std::vector<std::vector<double>>& lambda,
                             const BlockVector& x, double eta) {
  const int n = static_cast<int>(clients.size());
  if (n == 0 || x.n != n || lambda.size() != clients.size())
    throw std::invalid_argument("stationarity_residual: shape mismatch");
  const int d = x.d;

  // mean over clients of (x_i - eta * grad g_i(x_i))
  std::vector<double> mean(d, 0.0), grad(d);
  for (int i = 0; i < n; ++i) {
    clients[i]->inner_grad(x.block(i), lambda[i], clients[i]->full_batch(), grad);
    auto xi = x.block(i);
    for (int a = 0; a < d; ++a) mean[a] += (xi[a] - eta * grad[a]) / n;
  }

  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    auto xi = x.block(i);
    for (int a = 0; a < d; ++a) {
      const double r = xi[a] - mean[a];
      sq += r * r;
    }
  }
  return std::sqrt(sq);
}

void save_checkpoint_csv(const std::string& path, const BlockVector& x) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "client";
  for (int a = 0; a < x.d; ++a) out << ",x" << (a + 1);
  out << '\n';
  char buf[64];
  for (int i = 0; i < x.n; ++i) {
    out << i;
    for (double v : x.block(i)) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

BlockVector load_checkpoint_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint CSV: missing header");
  int d = 0;
  {
    std::istringstream header(line);
    std::string field;
    if (!std::getline(header, field, ',') || field != "client")
      throw std::runtime_error("checkpoint CSV: malformed header");
    while (std::getline(header, field, ',')) ++d;
    if (d == 0) throw std::runtime_error("checkpoint CSV: no coordinate columns");
  }
  std::vector<double> values;
  int rows = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    for (int a = 0; a < d + 1; ++a) {
      if (!std::getline(row, field, ','))
        throw std::runtime_error("checkpoint CSV line " + std::to_string(lineno) +
                                 ": too few fields");
      try {
        if (a == 0) {
          if (std::stoi(field) != rows)
            throw std::runtime_error("checkpoint CSV line " + std::to_string(lineno) +
                                     ": client ids must be contiguous from 0");
        } else {
          values.push_back(std::stod(field));
        }
      } catch (const std::runtime_error&) {
        throw;
      } catch (const std::exception&) {
        throw std::runtime_error("checkpoint CSV line " + std::to_string(lineno) + ": bad field '" +
                                 field + "'");
      }
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("checkpoint CSV: no rows");
  BlockVector x(rows, d);
  x.data = std::move(values);
  return x;
}

}  // namespace pushgrad::innersolve
