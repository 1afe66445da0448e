#pragma once

// Finite-difference oracles used to validate analytic derivatives. These are
// deliberately independent of the library's derivative code: they only call
// scalar cost evaluations.

#include <functional>
#include <vector>

namespace testsupport {

using ScalarFn = std::function<double(const std::vector<double>&)>;

// Central-difference gradient of f at x.
inline std::vector<double> fd_grad(const ScalarFn& f, std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t a = 0; a < x.size(); ++a) {
    const double saved = x[a];
    x[a] = saved + h;
    const double up = f(x);
    x[a] = saved - h;
    const double down = f(x);
    x[a] = saved;
    g[a] = (up - down) / (2.0 * h);
  }
  return g;
}

// Central difference of a vector-valued function along direction u:
// (F(x + h u) - F(x - h u)) / (2 h).
inline std::vector<double> fd_directional(
    const std::function<std::vector<double>(const std::vector<double>&)>& vec_fn,
    const std::vector<double>& x, const std::vector<double>& u, double h = 1e-6) {
  std::vector<double> xp = x, xm = x;
  for (std::size_t a = 0; a < x.size(); ++a) {
    xp[a] += h * u[a];
    xm[a] -= h * u[a];
  }
  std::vector<double> up = vec_fn(xp);
  const std::vector<double> down = vec_fn(xm);
  for (std::size_t a = 0; a < up.size(); ++a) up[a] = (up[a] - down[a]) / (2.0 * h);
  return up;
}

inline double rel_err(const std::vector<double>& got, const std::vector<double>& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t a = 0; a < got.size(); ++a) {
    num += (got[a] - want[a]) * (got[a] - want[a]);
    den += want[a] * want[a];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace testsupport
