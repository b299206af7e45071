#include "wattnet/indicators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "wattnet/errors.hpp"

namespace wattnet::indicators {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_length(std::span<const double> x, int n, const char* what) {
  if (n < 1) throw ConfigError(std::string(what) + ": window must be >= 1");
  if (x.size() < static_cast<std::size_t>(n))
    throw ValidationError(std::string(what) + ": series of length " + std::to_string(x.size()) +
                          " is shorter than window " + std::to_string(n));
}

}  // namespace

Series sma(std::span<const double> x, int n) {
  require_length(x, n, "sma");
  const auto w = static_cast<std::size_t>(n);
  Series out(x.size(), kNaN);
  for (std::size_t t = w - 1; t < x.size(); ++t) {
    double s = 0.0;
    for (std::size_t i = t + 1 - w; i <= t; ++i) s += x[i];
    out[t] = s / static_cast<double>(w);
  }
  return out;
}

Series ema(std::span<const double> x, int n) {
  if (n < 1) throw ConfigError("ema: window must be >= 1");
  if (x.empty()) throw ValidationError("ema: empty series");
  const double alpha = 2.0 / (static_cast<double>(n) + 1.0);
  Series out(x.size());
  out[0] = x[0];
  for (std::size_t t = 1; t < x.size(); ++t) out[t] = alpha * x[t] + (1.0 - alpha) * out[t - 1];
  return out;
}

Series macd(std::span<const double> x) {
  Series fast = ema(x, 12);
  const Series slow = ema(x, 26);
  for (std::size_t t = 0; t < fast.size(); ++t) fast[t] -= slow[t];
  return fast;
}

Series rolling_std(std::span<const double> x, int n) {
  if (n < 2) throw ConfigError("rolling_std: window must be >= 2");
  require_length(x, n, "rolling_std");
  const auto w = static_cast<std::size_t>(n);
  Series out(x.size(), kNaN);
  for (std::size_t t = w - 1; t < x.size(); ++t) {
    const auto win = x.subspan(t + 1 - w, w);
    const auto [lo, hi] = std::minmax_element(win.begin(), win.end());
    if (*lo == *hi) {
      out[t] = 0.0;
      continue;
    }
    double mean = 0.0;
    for (double v : win) mean += v;
    mean /= static_cast<double>(w);
    double dev = 0.0, sq = 0.0;
    for (double v : win) {
      dev += v - mean;
      sq += (v - mean) * (v - mean);
    }
    out[t] = std::sqrt(std::max(0.0, (sq - dev * dev / static_cast<double>(w)) / static_cast<double>(w)));
  }
  return out;
}

Bands bollinger(std::span<const double> x) {
  const Series mid = sma(x, 21);
  const Series sd = rolling_std(x, 20);
  Bands b{Series(x.size()), Series(x.size())};
  for (std::size_t t = 0; t < x.size(); ++t) {
    b.upper[t] = mid[t] + sd[t];
    b.lower[t] = mid[t] - sd[t];
  }
  return b;
}

namespace {

// Solves the symmetric positive definite system in place via Cholesky.
// Returns false when a pivot is not safely positive.
bool solve_spd(std::vector<double>& a, std::vector<double>& b, std::size_t n) {
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a[i * n + i]);
  if (!(max_diag > 0.0)) return false;
  const double tol = 1e-12 * max_diag;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > tol)) return false;
    const double l = std::sqrt(d);
    a[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / l;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
    b[i] = s / a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
    b[i] = s / a[i * n + i];
  }
  return true;
}

}  // namespace

ArForecast ar_forecast(std::span<const double> x, int order, std::size_t train_end) {
  if (order < 1) throw ConfigError("ar_forecast: order must be >= 1");
  const auto p = static_cast<std::size_t>(order);
  if (train_end >= x.size()) throw ConfigError("ar_forecast: train_end beyond series");
  if (train_end < 10 * p)
    throw ConfigError("ar_forecast: need at least " + std::to_string(10 * p) + " differences before train_end");

  // Differences d[i] = x[i] - x[i-1], i = 1..train_end.
  std::vector<double> xtx(p * p, 0.0), xty(p, 0.0);
  for (std::size_t i = p + 1; i <= train_end; ++i) {
    const double y = x[i] - x[i - 1];
    for (std::size_t a = 0; a < p; ++a) {
      const double ra = x[i - 1 - a] - x[i - 2 - a];
      xty[a] += ra * y;
      for (std::size_t b = 0; b < p; ++b) xtx[a * p + b] += ra * (x[i - 1 - b] - x[i - 2 - b]);
    }
  }
  ArForecast res;
  res.fit.order = order;
  res.fit.train_end = train_end;
  if (solve_spd(xtx, xty, p)) {
    res.fit.coefficients = xty;
  } else {
    res.fit.coefficients.assign(p, 0.0);
    res.fit.persistence_fallback = true;
  }
  res.forecasts.assign(x.size(), kNaN);
  for (std::size_t t = train_end; t < x.size(); ++t) {
    double step = 0.0;
    for (std::size_t a = 0; a < p; ++a) step += res.fit.coefficients[a] * (x[t - a] - x[t - a - 1]);
    res.forecasts[t] = x[t] + step;
  }
  return res;
}

std::vector<std::string> default_ar_targets(const std::vector<std::string>& ndf_pairs) {
  std::vector<std::string> out = ndf_pairs;
  if (std::find(out.begin(), out.end(), "USDMYR") == out.end()) out.push_back("USDMYR");
  return out;
}

ingest::Panel build_indicator_panel(const std::vector<ingest::SpotSeries>& spots,
                                    const std::vector<std::string>& ar_targets, const IndicatorConfig& config,
                                    IndicatorReport* report) {
  if (spots.empty()) throw ValidationError("indicators: no spot series");
  for (const auto& s : spots)
    if (s.dates != spots.front().dates) throw ValidationError("indicators: spot series are not aligned");
  std::set<std::string> targets(ar_targets.begin(), ar_targets.end());
  for (const auto& t : targets)
    if (std::none_of(spots.begin(), spots.end(), [&](const auto& s) { return s.pair == t; }))
      throw ConfigError("indicators: AR target " + t + " has no spot series");

  ingest::Panel panel;
  panel.dates = spots.front().dates;
  std::vector<Series> cols;
  auto add = [&](const std::string& pair, const std::string& suffix, Series s) {
    panel.columns.push_back({pair + "_" + suffix, ingest::ColumnGroup::indicator});
    cols.push_back(std::move(s));
  };
  for (const auto& s : spots) {
    const std::span<const double> x(s.rates);
    add(s.pair, "SMA_7", sma(x, 7));
    add(s.pair, "SMA_21", sma(x, 21));
    add(s.pair, "EMA_12", ema(x, 12));
    add(s.pair, "EMA_26", ema(x, 26));
    add(s.pair, "MACD_12_26", macd(x));
    add(s.pair, "RSD_20", rolling_std(x, 20));
    Bands bb = bollinger(x);
    add(s.pair, "BBU_21", std::move(bb.upper));
    add(s.pair, "BBL_21", std::move(bb.lower));
    if (targets.count(s.pair)) {
      ArForecast f = ar_forecast(x, config.ar_order, config.ar_train_end);
      if (report) report->ar_fits.emplace_back(s.pair, f.fit);
      add(s.pair, "AR_" + std::to_string(config.ar_order), std::move(f.forecasts));
    }
  }
  std::set<std::string> names;
  for (const auto& c : panel.columns)
    if (!names.insert(c.name).second) throw ValidationError("indicators: duplicate column " + c.name);
  panel.values.resize(panel.rows() * panel.cols());
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (std::size_t r = 0; r < panel.rows(); ++r) panel.at(r, c) = cols[c][r];
  return panel;
}

}  // namespace wattnet::indicators
