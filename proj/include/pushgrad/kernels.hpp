#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Dense double-precision primitives used by the hot loops (consensus mixing,
// batch margin/gradient reductions). Each primitive has a scalar reference
// implementation and, on x86-64, an AVX2+FMA variant. The variant actually
// used is picked once at runtime: the PUSHGRAD_SIMD environment variable
// ("scalar", "avx2", "auto") wins, otherwise a CPUID probe decides.
namespace pushgrad::kernels {

enum class Lane { scalar, avx2 };

// Lane the dispatched entry points below are bound to.
Lane active_lane();
std::string_view lane_name(Lane lane);

// Dispatched entry points.
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);  // y += alpha*x
void scale(double alpha, double* x, std::size_t n);                  // x *= alpha
double sum(const double* x, std::size_t n);
double nrm2(const double* x, std::size_t n);

inline double dot(std::span<const double> x, std::span<const double> y) {
  return dot(x.data(), y.data(), x.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  axpy(alpha, x.data(), y.data(), x.size());
}
inline void scale(double alpha, std::span<double> x) { scale(alpha, x.data(), x.size()); }
inline double sum(std::span<const double> x) { return sum(x.data(), x.size()); }
inline double nrm2(std::span<const double> x) { return nrm2(x.data(), x.size()); }

// Scalar reference implementations. The dispatch table is equivalence-tested
// against these; they are also the fallback on CPUs without AVX2.
namespace ref {
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
double sum(const double* x, std::size_t n);
}  // namespace ref

// AVX2 variants. supported() reports whether this build carries them and the
// CPU can run them; calling the others when unsupported throws.
namespace avx2 {
bool supported();
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
double sum(const double* x, std::size_t n);
}  // namespace avx2

}  // namespace pushgrad::kernels
