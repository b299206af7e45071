// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <cmath>

#include "exp_poly.hpp"
#include "wattnet/simd/kernels.hpp"

namespace wattnet::simd {

namespace detail {
double exp_one(double x);
}

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd(), acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void mul_add_avx2(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(a[i], b[i], y[i]);
}

inline __m256d exp4(__m256d x) {
  using namespace detail;
  const __m256d nan_mask = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  const __m256d low_mask = _mm256_cmp_pd(x, _mm256_set1_pd(kExpLow), _CMP_LT_OQ);
  const __m256d high_mask = _mm256_cmp_pd(x, _mm256_set1_pd(kExpHigh), _CMP_GT_OQ);
  const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(kExpLow)), _mm256_set1_pd(kExpHigh));
  const __m256d k =
      _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(kLog2eX64)), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  const __m256d negk = _mm256_sub_pd(_mm256_setzero_pd(), k);
  __m256d r = _mm256_fmadd_pd(negk, _mm256_set1_pd(kLn2Hi64), xc);
  r = _mm256_fmadd_pd(negk, _mm256_set1_pd(kLn2Lo64), r);
  __m256d q = _mm256_set1_pd(kExpCoeff[0]);
  for (int i = 1; i < 5; ++i) q = _mm256_fmadd_pd(q, r, _mm256_set1_pd(kExpCoeff[i]));
  q = _mm256_mul_pd(q, r);
  const __m128i ki = _mm256_cvtpd_epi32(k);
  const __m256d t = _mm256_i32gather_pd(exp2_table().data(), _mm_and_si128(ki, _mm_set1_epi32(63)), 8);
  __m256i e = _mm256_cvtepi32_epi64(_mm_srai_epi32(ki, 6));
  e = _mm256_slli_epi64(_mm256_add_epi64(e, _mm256_set1_epi64x(1023)), 52);
  __m256d y = _mm256_mul_pd(_mm256_fmadd_pd(t, q, t), _mm256_castsi256_pd(e));
  y = _mm256_blendv_pd(y, _mm256_setzero_pd(), low_mask);
  y = _mm256_blendv_pd(y, _mm256_set1_pd(HUGE_VAL), high_mask);
  return _mm256_blendv_pd(y, x, nan_mask);
}

void scaled_exp_avx2(const double* x, double scale, double shift, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(scale);
  const __m256d vneg = _mm256_set1_pd(-shift);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp4(_mm256_fmadd_pd(vs, _mm256_loadu_pd(x + i), vneg)));
  for (; i < n; ++i) out[i] = detail::exp_one(std::fma(scale, x[i], -shift));
}

struct Compensated {
  double s = 0.0, c = 0.0;
  void add(double x) {
    const double t = s + x;
    const double z = t - s;
    c += (s - (t - z)) + (x - z);
    s = t;
  }
};

inline void two_sum4(__m256d& s, __m256d& c, __m256d x) {
  const __m256d t = _mm256_add_pd(s, x);
  const __m256d z = _mm256_sub_pd(t, s);
  const __m256d e = _mm256_add_pd(_mm256_sub_pd(s, _mm256_sub_pd(t, z)), _mm256_sub_pd(x, z));
  c = _mm256_add_pd(c, e);
  s = t;
}

Compensated fold_lanes(__m256d s, __m256d c) {
  alignas(32) double ls[4], lc[4];
  _mm256_store_pd(ls, s);
  _mm256_store_pd(lc, c);
  Compensated acc;
  for (int l = 0; l < 4; ++l) acc.add(ls[l]);
  acc.c += (lc[0] + lc[1]) + (lc[2] + lc[3]);
  return acc;
}

double accurate_sum_avx2(const double* x, std::size_t n) {
  __m256d s = _mm256_setzero_pd(), c = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) two_sum4(s, c, _mm256_loadu_pd(x + i));
  Compensated acc = fold_lanes(s, c);
  for (; i < n; ++i) acc.add(x[i]);
  return acc.s + acc.c;
}

double accurate_dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s = _mm256_setzero_pd(), c = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_loadu_pd(a + i), vb = _mm256_loadu_pd(b + i);
    const __m256d p = _mm256_mul_pd(va, vb);
    c = _mm256_add_pd(c, _mm256_fmsub_pd(va, vb, p));
    two_sum4(s, c, p);
  }
  Compensated acc = fold_lanes(s, c);
  for (; i < n; ++i) {
    const double p = a[i] * b[i];
    acc.c += std::fma(a[i], b[i], -p);
    acc.add(p);
  }
  return acc.s + acc.c;
}

}  // namespace

extern const Kernels kAvx2Kernels;
const Kernels kAvx2Kernels{Isa::avx2,     "avx2",          dot_avx2,          axpy_avx2,
                           mul_add_avx2,  scaled_exp_avx2, accurate_sum_avx2, accurate_dot_avx2};

}  // namespace wattnet::simd
