#pragma once

#include <cmath>
#include <vector>

#include "wattnet/autodiff.hpp"
#include "wattnet/ingest.hpp"
#include "wattnet/rng.hpp"

namespace testing {

inline std::vector<double> random_vector(wattnet::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline wattnet::ad::Var random_param(wattnet::Rng& rng, wattnet::ad::Shape shape, double scale = 1.0) {
  auto v = random_vector(rng, wattnet::ad::numel(shape), -scale, scale);
  return wattnet::ad::Var::parameter(std::move(shape), std::move(v));
}

// Projects a tensor onto fixed random weights so every output element
// contributes to a scalar objective.
inline wattnet::ad::Var probe(const wattnet::ad::Var& y, const std::vector<double>& r) {
  using namespace wattnet::ad;
  return sum(mul(y, Var::constant(y.shape(), r)));
}

inline double max_abs_diff(const std::vector<double>& a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline wattnet::ingest::SpotSeries make_spot(std::vector<double> rates, std::string pair = "USDCNY") {
  wattnet::ingest::SpotSeries s;
  s.pair = std::move(pair);
  const auto start = wattnet::Date::from_ymd(2015, 1, 5);
  for (std::size_t i = 0; i < rates.size(); ++i) s.dates.push_back(start + static_cast<int>(i));
  s.rates = std::move(rates);
  return s;
}

// Positive random walk.
inline std::vector<double> random_walk(wattnet::Rng& rng, std::size_t n, double start = 6.5, double vol = 0.01) {
  std::vector<double> v(n);
  double x = start;
  for (double& r : v) {
    r = x;
    x *= std::exp(vol * rng.normal());
  }
  return v;
}

}  // namespace testing
