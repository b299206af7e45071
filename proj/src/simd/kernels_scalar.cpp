#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

#include "exp_poly.hpp"
#include "wattnet/simd/kernels.hpp"

namespace wattnet::simd {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void mul_add_scalar(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

}  // namespace

namespace detail {

// Scalar twin of the vector exp: the same fma sequence, so results agree
// bit for bit with the AVX2 lanes.
double exp_one(double x) {
  if (std::isnan(x)) return x;
  if (x < kExpLow) return 0.0;
  if (x > kExpHigh) return std::numeric_limits<double>::infinity();
  const double k = std::nearbyint(x * kLog2eX64);
  double r = std::fma(-k, kLn2Hi64, x);
  r = std::fma(-k, kLn2Lo64, r);
  double q = kExpCoeff[0];
  for (int i = 1; i < 5; ++i) q = std::fma(q, r, kExpCoeff[i]);
  q *= r;
  const auto ki = static_cast<std::int32_t>(k);
  const double t = exp2_table()[static_cast<std::size_t>(ki & 63)];
  const auto bits = static_cast<std::uint64_t>(static_cast<std::int64_t>(ki >> 6) + 1023) << 52;
  return std::fma(t, q, t) * std::bit_cast<double>(bits);
}

}  // namespace detail

namespace {

void scaled_exp_scalar(const double* x, double scale, double shift, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = detail::exp_one(std::fma(scale, x[i], -shift));
}

double accurate_sum_scalar(const double* x, std::size_t n) {
  double s = 0.0, c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = s + x[i];
    const double z = t - s;
    c += (s - (t - z)) + (x[i] - z);
    s = t;
  }
  return s + c;
}

double accurate_dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0, c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = a[i] * b[i];
    const double pe = std::fma(a[i], b[i], -p);
    const double t = s + p;
    const double z = t - s;
    c += ((s - (t - z)) + (p - z)) + pe;
    s = t;
  }
  return s + c;
}

constexpr Kernels kScalar{Isa::scalar,        "scalar",           dot_scalar,          axpy_scalar,
                          mul_add_scalar,     scaled_exp_scalar,  accurate_sum_scalar, accurate_dot_scalar};

}  // namespace

const Kernels& scalar_kernels() { return kScalar; }

}  // namespace wattnet::simd
