#include "pushgrad/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pushgrad/rng.hpp"

namespace pushgrad::oracle {

namespace {

using objective::Batch;
using objective::ClientCost;

// d x d Hessian of one client's batch cost, via basis probes.
Eigen::MatrixXd client_hessian(const ClientCost& cost, std::span<const double> x,
                               std::span<const double> lambda, Batch batch) {
  const int d = cost.x_dim();
  Eigen::MatrixXd h(d, d);
  std::vector<double> e(d, 0.0), col(d);
  for (int a = 0; a < d; ++a) {
    e[a] = 1.0;
    cost.hessian_vec(x, lambda, batch, e, col);
    for (int r = 0; r < d; ++r) h(r, a) = col[r];
    e[a] = 0.0;
  }
  return h;
}

// lambda_dim x d cross-Jacobian of one client, via basis probes.
Eigen::MatrixXd client_cross_jacobian(const ClientCost& cost, std::span<const double> x,
                                      std::span<const double> lambda, Batch batch) {
  const int d = cost.x_dim();
  const int dl = static_cast<int>(lambda.size());
  Eigen::MatrixXd c(dl, d);
  std::vector<double> e(d, 0.0), col(dl);
  for (int a = 0; a < d; ++a) {
    e[a] = 1.0;
    cost.cross_jacobian_vec(x, lambda, batch, e, col);
    for (int r = 0; r < dl; ++r) c(r, a) = col[r];
    e[a] = 0.0;
  }
  return c;
}

double total_outer_value(const innersolve::ClientSet& clients,
                         const std::vector<std::vector<double>>& lambda,
                         std::span<const double> x) {
  double total = 0.0;
  for (std::size_t k = 0; k < clients.size(); ++k)
    total += clients[k]->outer_value(x, lambda[k]);
  return total;
}

}  // namespace

std::vector<std::vector<double>> ift_hypergradient(const innersolve::ClientSet& clients,
                                                   const std::vector<std::vector<double>>& lambda,
                                                   const innersolve::NewtonOptions& newton) {
  const std::vector<double> x_star = innersolve::newton_consensus_solve(clients, lambda, newton);
  const int d = clients.front()->x_dim();

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd gx_total = Eigen::VectorXd::Zero(d);
  std::vector<double> gx(d);
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const ClientCost& cost = *clients[k];
    h += client_hessian(cost, x_star, lambda[k], cost.full_batch());
    std::vector<double> glam(lambda[k].size());
    cost.outer_grads(x_star, lambda[k], gx, glam);
    for (int a = 0; a < d; ++a) gx_total[a] += gx[a];
  }

  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("ift_hypergradient: pooled Hessian not positive definite");
  const Eigen::VectorXd w = llt.solve(gx_total);

  std::vector<std::vector<double>> v(clients.size());
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const ClientCost& cost = *clients[k];
    std::vector<double> glam(lambda[k].size());
    cost.outer_grads(x_star, lambda[k], gx, glam);
    const Eigen::MatrixXd c = client_cross_jacobian(cost, x_star, lambda[k], cost.full_batch());
    const Eigen::VectorXd cw = c * w;
    v[k].resize(lambda[k].size());
    for (std::size_t a = 0; a < lambda[k].size(); ++a)
      v[k][a] = glam[a] - cw[static_cast<int>(a)];
  }
  return v;
}

std::vector<std::vector<double>> fixed_point_reference(
    const innersolve::ClientSet& clients, const std::vector<std::vector<double>>& lambda,
    std::span<const double> x_star, int iterations, double eta) {
  const int n = static_cast<int>(clients.size());
  if (n == 0 || lambda.size() != clients.size())
    throw std::invalid_argument("fixed_point_reference: shape mismatch");
  const int d = clients.front()->x_dim();
  if (static_cast<int>(x_star.size()) != d)
    throw std::invalid_argument("fixed_point_reference: x_star has wrong dimension");
  if (iterations < 0) throw std::invalid_argument("fixed_point_reference: negative iterations");

  BlockVector u(n, d);
  std::vector<std::vector<double>> v(n);
  for (int i = 0; i < n; ++i) {
    v[i].assign(lambda[i].size(), 0.0);
    clients[i]->outer_grads(x_star, lambda[i], u.block(i), v[i]);
  }

  std::vector<double> ubar(d), prod(d);
  double prev_norm = u.norm();
  int growth_streak = 0;
  for (int m = 0; m < iterations; ++m) {
    std::fill(ubar.begin(), ubar.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      auto ui = u.block(i);
      for (int a = 0; a < d; ++a) ubar[a] += ui[a] / n;
    }
    for (int i = 0; i < n; ++i) {
      const ClientCost& cost = *clients[i];
      std::vector<double> cprod(lambda[i].size());
      cost.cross_jacobian_vec(x_star, lambda[i], cost.full_batch(), ubar, cprod);
      for (std::size_t a = 0; a < cprod.size(); ++a) v[i][a] -= eta * cprod[a];
      cost.hessian_vec(x_star, lambda[i], cost.full_batch(), ubar, prod);
      auto ui = u.block(i);
      for (int a = 0; a < d; ++a) ui[a] = ubar[a] - eta * prod[a];
    }
    const double norm = u.norm();
    growth_streak = norm > prev_norm ? growth_streak + 1 : 0;
    if (growth_streak >= 10)
      throw std::runtime_error("fixed_point_reference: diverging (eta too large for curvature)");
    prev_norm = norm;
  }
  return v;
}

std::vector<std::vector<double>> finite_difference_hypergradient(
    const innersolve::ClientSet& clients, const std::vector<std::vector<double>>& lambda,
    const FiniteDiffOptions& options) {
  if (clients.empty() || lambda.size() != clients.size())
    throw std::invalid_argument("finite_difference_hypergradient: shape mismatch");

  innersolve::NewtonOptions base = options.newton;
  const std::vector<double> x_star = innersolve::newton_consensus_solve(clients, lambda, base);
  innersolve::NewtonOptions warm = base;
  warm.x0 = x_star;

  std::vector<std::vector<double>> v(clients.size());
  std::vector<std::vector<double>> perturbed = lambda;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    v[i].resize(lambda[i].size());
    for (std::size_t a = 0; a < lambda[i].size(); ++a) {
      const double h = std::max(options.h_rel * std::abs(lambda[i][a]), options.h_floor);
      perturbed[i][a] = lambda[i][a] + h;
      const std::vector<double> x_plus =
          innersolve::newton_consensus_solve(clients, perturbed, warm);
      const double f_plus = total_outer_value(clients, perturbed, x_plus);
      perturbed[i][a] = lambda[i][a] - h;
      const std::vector<double> x_minus =
          innersolve::newton_consensus_solve(clients, perturbed, warm);
      const double f_minus = total_outer_value(clients, perturbed, x_minus);
      perturbed[i][a] = lambda[i][a];
      v[i][a] = (f_plus - f_minus) / (2.0 * h);
    }
  }
  return v;
}

BoundDiagnostics estimate_bound_constants(const innersolve::ClientSet& clients,
                                          const std::vector<std::vector<double>>& lambda,
                                          int num_batch_samples, int batch_size,
                                          std::uint64_t seed) {
  if (clients.empty() || lambda.size() != clients.size())
    throw std::invalid_argument("estimate_bound_constants: shape mismatch");
  if (num_batch_samples < 0)
    throw std::invalid_argument("estimate_bound_constants: negative sample count");

  const std::vector<double> x_star = innersolve::newton_consensus_solve(clients, lambda);

  BoundDiagnostics out;
  out.alpha_est = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const ClientCost& cost = *clients[k];
    const Eigen::MatrixXd h_full = client_hessian(cost, x_star, lambda[k], cost.full_batch());
    const Eigen::MatrixXd c_full =
        client_cross_jacobian(cost, x_star, lambda[k], cost.full_batch());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h_full);
    out.alpha_est = std::min(out.alpha_est, eig.eigenvalues().minCoeff());
    out.beta_est =
        std::max(out.beta_est, c_full.jacobiSvd().singularValues().maxCoeff());

    const int data_size = static_cast<int>(cost.train().size());
    const bool resample = batch_size > 0 && batch_size < data_size;
    if (!resample) continue;  // the full batch deviates from itself by zero
    std::vector<int> batch(batch_size);
    for (int s = 0; s < num_batch_samples; ++s) {
      objective::BatchSampler sampler(
          rng::derive(seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(s)}),
          data_size);
      sampler.sample(batch);
      const Eigen::MatrixXd dh = client_hessian(cost, x_star, lambda[k], batch) - h_full;
      const Eigen::MatrixXd dc = client_cross_jacobian(cost, x_star, lambda[k], batch) - c_full;
      out.kappa_x_est = std::max(out.kappa_x_est, dh.jacobiSvd().singularValues().maxCoeff());
      out.kappa_lambda_est =
          std::max(out.kappa_lambda_est, dc.jacobiSvd().singularValues().maxCoeff());
    }
  }
  out.mu_est = std::sqrt(out.kappa_lambda_est * out.kappa_lambda_est +
                         out.kappa_x_est * out.kappa_x_est * out.beta_est * out.beta_est /
                             (out.alpha_est * out.alpha_est));
  return out;
}

}  // namespace pushgrad::oracle
