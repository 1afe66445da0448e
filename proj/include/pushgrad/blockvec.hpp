#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "pushgrad/kernels.hpp"

namespace pushgrad {

// n client blocks of dimension d, stored contiguously (client-major). This is
// the state layout for consensus and the coupled-vector iterations.
struct BlockVector {
  int n = 0;
  int d = 0;
  std::vector<double> data;

  BlockVector() = default;
  BlockVector(int n_, int d_, double fill = 0.0)
      : n(n_), d(d_), data(static_cast<std::size_t>(n_) * d_, fill) {
    if (n_ < 0 || d_ < 0) throw std::invalid_argument("BlockVector: negative shape");
  }

  std::span<double> block(int i) { return {data.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)}; }
  std::span<const double> block(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)};
  }

  // l2 norm over the whole stacked vector
  double norm() const { return kernels::nrm2(data.data(), data.size()); }
};

}  // namespace pushgrad
