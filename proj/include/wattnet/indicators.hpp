#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wattnet/ingest.hpp"

// Technical indicators over a single spot series. Every indicator is causal:
// position t reads x[0..t] only. Unavailable (warm-up) positions hold NaN.
namespace wattnet::indicators {

using Series = std::vector<double>;

Series sma(std::span<const double> x, int n);
// alpha = 2 / (n + 1), seeded with the first observation.
Series ema(std::span<const double> x, int n);
// EMA(12) - EMA(26)
Series macd(std::span<const double> x);
// Population standard deviation of the trailing window.
Series rolling_std(std::span<const double> x, int n = 20);

struct Bands {
  Series upper, lower;
};
// SMA(21) +/- RSD(20)
Bands bollinger(std::span<const double> x);

struct ArFit {
  int order = 0;
  std::size_t train_end = 0;
  std::vector<double> coefficients;  // on lagged first differences, lag 1 first
  bool persistence_fallback = false;
};

struct ArForecast {
  Series forecasts;  // forecasts[t] predicts x[t+1]; NaN for t < train_end
  ArFit fit;
};

// AR(order) on first differences, least squares over x[0..train_end] only,
// coefficients frozen afterwards. A singular fit falls back to x̂[t+1] = x[t].
ArForecast ar_forecast(std::span<const double> x, int order, std::size_t train_end);

struct IndicatorConfig {
  int ar_order = 5;
  // Last index used to fit AR models. Rows before it have no AR feature and
  // are dropped as warm-up when the panel is aligned.
  std::size_t ar_train_end = 250;
};

struct IndicatorReport {
  std::vector<std::pair<std::string, ArFit>> ar_fits;
};

// AR targets used by the full feature set: the NDF pairs plus USDMYR.
std::vector<std::string> default_ar_targets(const std::vector<std::string>& ndf_pairs);

// Per pair: SMA 7/21, EMA 12/26, MACD, RSD 20, upper and lower Bollinger
// bands; plus one AR forecast column per target. Spots must share a calendar.
ingest::Panel build_indicator_panel(const std::vector<ingest::SpotSeries>& spots,
                                    const std::vector<std::string>& ar_targets, const IndicatorConfig& config = {},
                                    IndicatorReport* report = nullptr);

}  // namespace wattnet::indicators
