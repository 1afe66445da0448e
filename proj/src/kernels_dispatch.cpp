#include "pushgrad/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace pushgrad::kernels {

namespace {

struct Table {
  Lane lane;
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
};

Table resolve() {
  std::string mode = "auto";
  if (const char* env = std::getenv("PUSHGRAD_SIMD")) mode = env;

  bool want_avx2;
  if (mode == "scalar") {
    want_avx2 = false;
  } else if (mode == "avx2") {
    if (!avx2::supported())
      throw std::runtime_error("PUSHGRAD_SIMD=avx2 but AVX2 is unavailable");
    want_avx2 = true;
  } else if (mode == "auto") {
    want_avx2 = avx2::supported();
  } else {
    throw std::runtime_error("PUSHGRAD_SIMD must be scalar, avx2 or auto (got '" + mode + "')");
  }

  if (want_avx2) return {Lane::avx2, &avx2::dot, &avx2::axpy, &avx2::scale, &avx2::sum};
  return {Lane::scalar, &ref::dot, &ref::axpy, &ref::scale, &ref::sum};
}

const Table& table() {
  static const Table t = resolve();
  return t;
}

}  // namespace

Lane active_lane() { return table().lane; }

std::string_view lane_name(Lane lane) {
  switch (lane) {
    case Lane::scalar: return "scalar";
    case Lane::avx2: return "avx2";
  }
  return "unknown";
}

double dot(const double* x, const double* y, std::size_t n) { return table().dot(x, y, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { table().axpy(alpha, x, y, n); }
void scale(double alpha, double* x, std::size_t n) { table().scale(alpha, x, n); }
double sum(const double* x, std::size_t n) { return table().sum(x, n); }
double nrm2(const double* x, std::size_t n) { return std::sqrt(table().dot(x, x, n)); }

}  // namespace pushgrad::kernels
