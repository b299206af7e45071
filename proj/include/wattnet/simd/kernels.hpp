#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

// Data-parallel inner loops used by the model. Every kernel has a scalar
// reference implementation; wider variants are selected at runtime and are
// equivalence-tested against the reference.
namespace wattnet::simd {

enum class Isa { scalar, avx2 };

struct Kernels {
  Isa isa;
  std::string_view name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[i] += a[i] * b[i]
  void (*mul_add)(const double* a, const double* b, double* y, std::size_t n);
  // out[i] = exp(fma(scale, x[i], -shift)); inputs below -700 flush to 0.
  // Bit-identical across ISAs and independent of the element position.
  void (*scaled_exp)(const double* x, double scale, double shift, double* out, std::size_t n);
  // Compensated (doubled-precision) reductions. The result is the correctly
  // rounded value except in vanishingly rare near-tie cases, which makes it
  // independent of summation order in practice.
  double (*accurate_sum)(const double* x, std::size_t n);
  double (*accurate_dot)(const double* a, const double* b, std::size_t n);
};

const Kernels& scalar_kernels();
// nullptr when not compiled in or not supported by the running CPU.
const Kernels* avx2_kernels();

const Kernels& active();
// Throws ConfigError if the requested ISA is unavailable.
void select(Isa isa);
std::optional<Isa> parse_isa(std::string_view name);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void mul_add(const double* a, const double* b, double* y, std::size_t n) {
  active().mul_add(a, b, y, n);
}
inline void scaled_exp(const double* x, double scale, double shift, double* out, std::size_t n) {
  active().scaled_exp(x, scale, shift, out, n);
}
inline double accurate_sum(const double* x, std::size_t n) { return active().accurate_sum(x, n); }
inline double accurate_dot(const double* a, const double* b, std::size_t n) {
  return active().accurate_dot(a, b, n);
}

}  // namespace wattnet::simd
