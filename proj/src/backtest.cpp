#include "wattnet/backtest.hpp"

#include <algorithm>
#include <cmath>

#include "wattnet/errors.hpp"
#include "wattnet/io.hpp"

namespace wattnet::backtest {

double roi(double x_t, double x_ta, int a) {
  if (a < 0) throw ValidationError("negative tenor " + std::to_string(a));
  if (!(x_t > 0.0)) throw ValidationError("roi: spot rate must be positive");
  if (a == 0) return 0.0;
  if (!std::isfinite(x_ta)) throw ComputeError("roi: undefined trade, closing rate unavailable");
  return 100.0 * (x_ta - x_t) / x_t;
}

int PolicyTrace::find(Date d) const {
  auto it = std::lower_bound(dates.begin(), dates.end(), d);
  if (it == dates.end() || *it != d) return -1;
  return classes[static_cast<std::size_t>(it - dates.begin())];
}

namespace {

std::size_t spot_index(const ingest::SpotSeries& spot, Date d) {
  auto it = std::lower_bound(spot.dates.begin(), spot.dates.end(), d);
  if (it == spot.dates.end() || *it != d) throw ValidationError("no " + spot.pair + " rate on " + d.iso());
  return static_cast<std::size_t>(it - spot.dates.begin());
}

}  // namespace

void fill_roi(PolicyTrace& trace, const ingest::SpotSeries& spot) {
  trace.roi.assign(trace.size(), std::nan(""));
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const std::size_t t = spot_index(spot, trace.dates[i]);
    const auto a = static_cast<std::size_t>(trace.classes[i]);
    if (t + a < spot.size()) trace.roi[i] = roi(spot.rates[t], spot.rates[t + a], trace.classes[i]);
  }
}

double optimal_accuracy(std::span<const int> predictions, std::span<const int> optimal) {
  if (predictions.size() != optimal.size())
    throw ValidationError("optimal accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(optimal.size()) + " labels");
  if (predictions.empty()) throw ValidationError("optimal accuracy: no days");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == optimal[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double optimal_accuracy(const PolicyTrace& trace, const labels::LabelSeries& optimal) {
  std::vector<int> want;
  want.reserve(trace.size());
  for (Date d : trace.dates) {
    const int l = optimal.find(d);
    if (l < 0) throw ValidationError("optimal accuracy: no label on " + d.iso());
    want.push_back(l);
  }
  return optimal_accuracy(trace.classes, want);
}

double nonneg_accuracy(const PolicyTrace& trace, const ingest::SpotSeries& spot, labels::TenorSet tenors) {
  if (trace.size() == 0) throw ValidationError("non-negative accuracy: no days");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const int a = trace.classes[i];
    if (a < 0 || a > tenors.a_max) throw ValidationError("class " + std::to_string(a) + " outside the tenor set");
    const std::size_t t = spot_index(spot, trace.dates[i]);
    if (t + static_cast<std::size_t>(a) >= spot.size())
      throw ComputeError("undefined trade on " + trace.dates[i].iso() + ": closing rate beyond the data");
    ok += spot.rates[t + static_cast<std::size_t>(a)] - spot.rates[t] >= 0.0;
  }
  return 100.0 * static_cast<double>(ok) / static_cast<double>(trace.size());
}

PolicyTrace momentum1(const labels::LabelSeries& expert) {
  PolicyTrace p;
  p.source = "momentum1";
  p.dates = expert.dates;
  p.classes.assign(expert.size(), 0);
  p.flagged.assign(expert.size(), false);
  if (!p.flagged.empty()) p.flagged[0] = true;
  for (std::size_t i = 1; i < expert.size(); ++i) p.classes[i] = expert.labels[i - 1];
  return p;
}

PolicyTrace momentum90(const ingest::SpotSeries& spot, labels::TenorSet tenors, int lookback) {
  if (lookback < tenors.a_max)
    throw ConfigError("momentum lookback " + std::to_string(lookback) + " is shorter than a_max = " +
                      std::to_string(tenors.a_max) + " and would peek ahead");
  PolicyTrace p;
  p.source = "momentum90";
  p.dates = spot.dates;
  p.classes.assign(spot.size(), 0);
  p.flagged.assign(spot.size(), true);
  const auto lb = static_cast<std::size_t>(lookback);
  for (std::size_t t = lb; t < spot.size(); ++t) {
    p.classes[t] = labels::optimal_label_at(spot.rates, t - lb, tenors.a_max);
    p.flagged[t] = false;
  }
  return p;
}

Policy replay(const PolicyTrace& trace) {
  return [trace](std::size_t, Date d) {
    const int c = trace.find(d);
    if (c < 0) throw ValidationError(trace.source + " has no action on " + d.iso());
    return c;
  };
}

Policy replay(const labels::LabelSeries& labels) {
  return [labels](std::size_t, Date d) {
    const int c = labels.find(d);
    if (c < 0) throw ValidationError(std::string(labels::kind_name(labels.kind)) + " labels miss " + d.iso());
    return c;
  };
}

bool BacktestReport::consistent() const {
  double roi_sum = 0.0;
  std::size_t hits = 0, nn = 0, trades_seen = 0;
  for (const DayResult& d : days) {
    roi_sum += d.roi;
    hits += d.cls == d.optimal_label;
    nn += d.nn_correct;
    trades_seen += d.cls > 0;
    if (d.cls == 0 && d.roi != 0.0) return false;
  }
  if (days.empty()) return total_roi == 0.0 && trades == 0;
  const double n = static_cast<double>(days.size());
  return roi_sum == total_roi && trades_seen == trades && 100.0 * static_cast<double>(hits) / n == optimal_accuracy &&
         100.0 * static_cast<double>(nn) / n == nonneg_accuracy;
}

nlohmann::ordered_json BacktestReport::to_json() const {
  nlohmann::ordered_json j;
  j["policy"] = policy;
  j["split_date"] = split_date.iso();
  j["days"] = days.size();
  j["total_roi"] = total_roi;
  j["optimal_accuracy"] = optimal_accuracy;
  j["nonneg_accuracy"] = nonneg_accuracy;
  j["trades"] = trades;
  j["excluded_no_history"] = excluded_no_history;
  j["excluded_no_future"] = excluded_no_future;
  if (!days.empty()) {
    j["first_day"] = days.front().date.iso();
    j["last_day"] = days.back().date.iso();
  }
  return j;
}

std::string BacktestReport::to_csv() const {
  std::string out = "date,class,roi,optimal_label,nn_correct\n";
  for (const DayResult& d : days)
    out += d.date.iso() + "," + std::to_string(d.cls) + "," + io::format_double(d.roi) + "," +
           std::to_string(d.optimal_label) + "," + (d.nn_correct ? "1" : "0") + "\n";
  return out;
}

BacktestReport run_backtest(const Policy& policy, const std::string& name, const ingest::Panel& panel,
                            const ingest::SpotSeries& spot, Date split_date, labels::TenorSet tenors,
                            std::size_t t_len) {
  if (t_len < 1) throw ConfigError("backtest window length must be >= 1");
  BacktestReport rep;
  rep.policy = name;
  rep.split_date = split_date;
  const auto a_max = static_cast<std::size_t>(tenors.a_max);
  std::size_t hits = 0, nn = 0;
  for (std::size_t r = 0; r < panel.rows(); ++r) {
    const Date d = panel.dates[r];
    if (d < split_date) continue;
    if (r + 1 < t_len) {
      ++rep.excluded_no_history;
      continue;
    }
    auto it = std::lower_bound(spot.dates.begin(), spot.dates.end(), d);
    if (it == spot.dates.end() || *it != d) throw ValidationError("no " + spot.pair + " rate on " + d.iso());
    const auto t = static_cast<std::size_t>(it - spot.dates.begin());
    if (t + a_max >= spot.size()) {
      ++rep.excluded_no_future;
      continue;
    }
    int cls;
    try {
      cls = policy(r, d);
    } catch (const std::exception& e) {
      throw ComputeError("policy '" + name + "' failed on " + d.iso() + ": " + e.what());
    }
    if (cls < 0 || cls > tenors.a_max)
      throw ComputeError("policy '" + name + "' returned class " + std::to_string(cls) + " on " + d.iso());
    DayResult day;
    day.date = d;
    day.cls = cls;
    day.roi = roi(spot.rates[t], spot.rates[t + static_cast<std::size_t>(cls)], cls);
    day.optimal_label = labels::optimal_label_at(spot.rates, t, tenors.a_max);
    day.nn_correct = spot.rates[t + static_cast<std::size_t>(cls)] - spot.rates[t] >= 0.0;
    rep.total_roi += day.roi;
    rep.trades += cls > 0;
    hits += day.cls == day.optimal_label;
    nn += day.nn_correct;
    rep.days.push_back(day);
  }
  if (!rep.days.empty()) {
    const double n = static_cast<double>(rep.days.size());
    rep.optimal_accuracy = 100.0 * static_cast<double>(hits) / n;
    rep.nonneg_accuracy = 100.0 * static_cast<double>(nn) / n;
  }
  return rep;
}

}  // namespace wattnet::backtest
