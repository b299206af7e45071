#pragma once

#include <array>
#include <cmath>

// Shared constants for the table-driven exp used by every kernel variant:
// x = (64e + j) ln2/64 + r, exp(x) = 2^e * 2^(j/64) * (1 + q(r)).
namespace wattnet::simd::detail {

inline constexpr double kLog2eX64 = 92.332482616893656877;  // 64 / ln 2
inline constexpr double kLn2Hi64 = 6.93147180369123816490e-01 / 64;
inline constexpr double kLn2Lo64 = 1.90821492927058770002e-10 / 64;
inline constexpr double kExpLow = -700.0;
inline constexpr double kExpHigh = 709.0;

// |r| <= ln2/128, so the truncation error of the degree-5 tail is below 4e-17.
inline constexpr double kExpCoeff[5] = {1.0 / 120.0, 1.0 / 24.0, 1.0 / 6.0, 0.5, 1.0};

inline const std::array<double, 64>& exp2_table() {
  static const std::array<double, 64> t = [] {
    std::array<double, 64> a{};
    for (int j = 0; j < 64; ++j) a[j] = static_cast<double>(std::exp2l(static_cast<long double>(j) / 64.0L));
    return a;
  }();
  return t;
}

}  // namespace wattnet::simd::detail
