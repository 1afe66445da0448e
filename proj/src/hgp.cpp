#include "pushgrad/hgp.hpp"

#include <cmath>
#include <stdexcept>

#include "pushgrad/kernels.hpp"
#include "pushgrad/rng.hpp"

namespace pushgrad::hgp {

HgpState hgp_init(const innersolve::FederatedProblem& problem) {
  problem.validate();
  const int n = problem.n();
  const int d = problem.x_dim();

  HgpState state;
  state.u = BlockVector(n, d);
  state.v.resize(n);
  for (int i = 0; i < n; ++i) {
    state.v[i].assign(problem.lambda[i].size(), 0.0);
    problem.clients[i]->outer_grads(problem.x.block(i), problem.lambda[i], state.u.block(i),
                                    state.v[i]);
  }
  return state;
}

void hgp_iterate(innersolve::FederatedProblem& problem, const HgpConfig& config, HgpState& state) {
  const int n = problem.n();
  const int d = problem.x_dim();
  if (state.u.n != n || state.u.d != d || static_cast<int>(state.v.size()) != n)
    throw std::invalid_argument("hgp_iterate: state does not match problem");
  if (config.batch_size < 0) throw std::invalid_argument("hgp_iterate: negative batch size");

  BlockVector ubar = problem.averaging.apply(state.u);

  std::vector<int> batch_a(config.batch_size > 0 ? config.batch_size : 0);
  std::vector<int> batch_b(batch_a.size());
  std::vector<double> hprod(d);
  for (int i = 0; i < n; ++i) {
    const objective::ClientCost& cost = *problem.clients[i];
    objective::Batch cross_batch = cost.full_batch();
    objective::Batch hess_batch = cross_batch;
    if (config.batch_size > 0) {
      const auto draw = [&](std::uint64_t which, std::span<int> out) {
        objective::BatchSampler sampler(
            rng::derive(config.seed, {static_cast<std::uint64_t>(state.m),
                                      static_cast<std::uint64_t>(i), which}),
            static_cast<int>(cost.train().size()));
        sampler.sample(out);
      };
      draw(0, batch_a);
      cross_batch = batch_a;
      if (config.single_sample) {
        hess_batch = batch_a;
      } else {
        draw(1, batch_b);
        hess_batch = batch_b;
      }
    }

    auto ubar_i = ubar.block(i);
    std::vector<double> cprod(problem.lambda[i].size());
    cost.cross_jacobian_vec(problem.x.block(i), problem.lambda[i], cross_batch, ubar_i, cprod);
    kernels::axpy(-problem.eta, cprod.data(), state.v[i].data(), cprod.size());

    cost.hessian_vec(problem.x.block(i), problem.lambda[i], hess_batch, ubar_i, hprod);
    auto ui = state.u.block(i);
    for (int a = 0; a < d; ++a) ui[a] = ubar_i[a] - problem.eta * hprod[a];
  }
  state.m += 1;
}

HgpResult hgp_run(innersolve::FederatedProblem& problem, const HgpConfig& config,
                  const std::vector<std::vector<double>>* reference, bool keep_trace) {
  if (config.iterations < 0) throw std::invalid_argument("hgp_run: negative iteration count");
  HgpState state = hgp_init(problem);

  HgpResult result;
  const bool tracing = keep_trace || reference != nullptr;
  const auto record = [&] {
    if (!tracing) return;
    for (int i = 0; i < problem.n(); ++i) {
      TraceRow row;
      row.m = state.m;
      row.client = i;
      if (reference != nullptr) {
        double sq = 0.0;
        const std::vector<double>& ref = (*reference)[i];
        for (std::size_t a = 0; a < ref.size(); ++a) {
          const double r = state.v[i][a] - ref[a];
          sq += r * r;
        }
        row.error_l2 = std::sqrt(sq);
      }
      row.norm_u = kernels::nrm2(state.u.block(i).data(), state.u.block(i).size());
      row.norm_v = kernels::nrm2(state.v[i].data(), state.v[i].size());
      result.trace.push_back(row);
    }
  };

  record();
  for (int m = 0; m < config.iterations; ++m) {
    hgp_iterate(problem, config, state);
    record();
  }
  result.v = std::move(state.v);
  return result;
}

double stacked_error(const std::vector<std::vector<double>>& v,
                     const std::vector<std::vector<double>>& reference) {
  if (v.size() != reference.size())
    throw std::invalid_argument("stacked_error: client count mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i].size() != reference[i].size())
      throw std::invalid_argument("stacked_error: dimension mismatch");
    for (std::size_t a = 0; a < v[i].size(); ++a) {
      const double r = v[i][a] - reference[i][a];
      sq += r * r;
    }
  }
  return std::sqrt(sq);
}

}  // namespace pushgrad::hgp
