#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wattnet/ingest.hpp"

namespace wattnet::labels {

// Classes 0..a_max; class 0 is "no trade", class a a tenor of a steps.
struct TenorSet {
  int a_max = 90;
  int classes() const { return a_max + 1; }
};

enum class LabelKind { optimal, expert, oracle };
std::string_view kind_name(LabelKind k);
LabelKind parse_kind(std::string_view name);

struct LabelSeries {
  LabelKind kind = LabelKind::optimal;
  std::vector<Date> dates;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  // Label for a date, or -1 when the date is unlabeled.
  int find(Date d) const;
};

// argmax_a (y[t+a] - y[t]) over 1..a_max, smallest a on ties, 0 when the best
// gain is not positive.
int optimal_label_at(std::span<const double> y, std::size_t t, int a_max);
// min{a : y[t+a] - y[t] > 0}, or 0.
int oracle_label_at(std::span<const double> y, std::size_t t, int a_max);

// The last a_max days have no label.
LabelSeries optimal_labels(const ingest::SpotSeries& y, TenorSet tenors);
LabelSeries oracle_labels(const ingest::SpotSeries& y, TenorSet tenors);
// Max-volume tenor per day, smallest on ties, 0 on days without volume.
LabelSeries expert_labels(const ingest::VolumeCube& cube);

std::string format_labels_csv(const LabelSeries& labels);
LabelSeries parse_labels_csv(std::string_view text);

struct Sample {
  std::size_t end_row;  // panel row of the label date (last row of the window)
  int label;
  Date date;
};

// Overlapping trailing windows over a shared panel; window i covers panel
// rows [end_row - t_len + 1, end_row].
struct WindowedDataset {
  std::shared_ptr<const ingest::Panel> panel;
  std::size_t t_len = 30;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t width() const { return panel->cols(); }
  std::span<const double> window(std::size_t i) const {
    const std::size_t first = samples[i].end_row + 1 - t_len;
    return {panel->row(first), t_len * panel->cols()};
  }
};

// One sample per labeled date that has t_len rows of history in the panel.
WindowedDataset window_dataset(std::shared_ptr<const ingest::Panel> panel, const LabelSeries& labels, int t_len);

// Keeps samples whose date falls in [from, to).
WindowedDataset filter_dates(const WindowedDataset& ds, Date from, Date to);

}  // namespace wattnet::labels
