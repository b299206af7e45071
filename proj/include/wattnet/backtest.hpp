#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wattnet/date.hpp"
#include "wattnet/ingest.hpp"
#include "wattnet/labels.hpp"

namespace wattnet::backtest {

// 100 * (x_ta - x_t) / x_t, and 0 for a = 0. Throws ValidationError for
// x_t <= 0 and ComputeError when x_ta is not a finite rate.
double roi(double x_t, double x_ta, int a);

struct PolicyTrace {
  std::string source;
  std::vector<Date> dates;
  std::vector<int> classes;
  std::vector<double> roi;    // NaN where t + a falls outside the data
  std::vector<bool> flagged;  // class forced to 0 for lack of history

  std::size_t size() const { return classes.size(); }
  // Class for a date, or -1.
  int find(Date d) const;
};

// Realized percent ROI of every (date, class) pair against `spot`, where a
// class a means a position held for a steps of the spot series.
void fill_roi(PolicyTrace& trace, const ingest::SpotSeries& spot);

// 100 * matches / days. Sizes must agree and be nonzero.
double optimal_accuracy(std::span<const int> predictions, std::span<const int> optimal);
// Date-aligned variant: every trace date must be labeled.
double optimal_accuracy(const PolicyTrace& trace, const labels::LabelSeries& optimal);

// 100 * (days whose realized return is >= 0) / days. Throws ComputeError if a
// trade's closing rate is outside the series.
double nonneg_accuracy(const PolicyTrace& trace, const ingest::SpotSeries& spot, labels::TenorSet tenors);

// Expert action of the previous day; the first day gets class 0.
PolicyTrace momentum1(const labels::LabelSeries& expert);

// Optimal label evaluated `lookback` steps earlier. Days without that much
// history get class 0 and are flagged. lookback must be >= a_max so the
// action only uses rates observed by day t.
PolicyTrace momentum90(const ingest::SpotSeries& spot, labels::TenorSet tenors, int lookback = 90);

// Maps (panel row, date) to a class.
using Policy = std::function<int(std::size_t row, Date date)>;

// Policy that replays a trace; throws for dates the trace does not cover.
Policy replay(const PolicyTrace& trace);
Policy replay(const labels::LabelSeries& labels);

struct DayResult {
  Date date;
  int cls = 0;
  double roi = 0.0;
  int optimal_label = 0;
  bool nn_correct = false;
};

struct BacktestReport {
  std::string policy;
  Date split_date;
  std::vector<DayResult> days;
  double total_roi = 0.0;
  double optimal_accuracy = 0.0;
  double nonneg_accuracy = 0.0;
  std::size_t trades = 0;
  // Test-period days skipped because the window or a_max-day future is missing.
  std::size_t excluded_no_history = 0;
  std::size_t excluded_no_future = 0;

  // Recomputes the totals from the per-day table.
  bool consistent() const;
  nlohmann::ordered_json to_json() const;
  std::string to_csv() const;
};

// Evaluates `policy` on every panel date >= split_date that has t_len rows of
// panel history and a_max future spot steps. Errors raised by the policy are
// rethrown as ComputeError naming the day.
BacktestReport run_backtest(const Policy& policy, const std::string& name, const ingest::Panel& panel,
                            const ingest::SpotSeries& spot, Date split_date, labels::TenorSet tenors,
                            std::size_t t_len);

}  // namespace wattnet::backtest
