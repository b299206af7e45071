#include "wattnet/labels.hpp"

#include <algorithm>

#include "wattnet/errors.hpp"
#include "wattnet/io.hpp"

namespace wattnet::labels {

std::string_view kind_name(LabelKind k) {
  switch (k) {
    case LabelKind::optimal: return "optimal";
    case LabelKind::expert: return "expert";
    case LabelKind::oracle: return "oracle";
  }
  return "?";
}

LabelKind parse_kind(std::string_view name) {
  if (name == "optimal") return LabelKind::optimal;
  if (name == "expert") return LabelKind::expert;
  if (name == "oracle") return LabelKind::oracle;
  throw ParseError("unknown label kind '" + std::string(name) + "'");
}

int LabelSeries::find(Date d) const {
  auto it = std::lower_bound(dates.begin(), dates.end(), d);
  if (it == dates.end() || *it != d) return -1;
  return labels[static_cast<std::size_t>(it - dates.begin())];
}

int optimal_label_at(std::span<const double> y, std::size_t t, int a_max) {
  int best = 0;
  double best_gain = 0.0;
  for (int a = 1; a <= a_max; ++a) {
    const double gain = y[t + static_cast<std::size_t>(a)] - y[t];
    if (gain > best_gain) {
      best_gain = gain;
      best = a;
    }
  }
  return best;
}

int oracle_label_at(std::span<const double> y, std::size_t t, int a_max) {
  for (int a = 1; a <= a_max; ++a)
    if (y[t + static_cast<std::size_t>(a)] - y[t] > 0.0) return a;
  return 0;
}

namespace {

template <typename Rule>
LabelSeries forward_labels(const ingest::SpotSeries& y, TenorSet tenors, LabelKind kind, Rule rule) {
  if (tenors.a_max < 1) throw ConfigError("a_max must be >= 1");
  const auto a_max = static_cast<std::size_t>(tenors.a_max);
  if (y.size() <= a_max)
    throw ValidationError("labels: series of length " + std::to_string(y.size()) + " needs more than a_max = " +
                          std::to_string(a_max) + " points");
  LabelSeries out;
  out.kind = kind;
  for (std::size_t t = 0; t + a_max < y.size(); ++t) {
    out.dates.push_back(y.dates[t]);
    out.labels.push_back(rule(std::span<const double>(y.rates), t, tenors.a_max));
  }
  return out;
}

}  // namespace

LabelSeries optimal_labels(const ingest::SpotSeries& y, TenorSet tenors) {
  return forward_labels(y, tenors, LabelKind::optimal, optimal_label_at);
}

LabelSeries oracle_labels(const ingest::SpotSeries& y, TenorSet tenors) {
  return forward_labels(y, tenors, LabelKind::oracle, oracle_label_at);
}

LabelSeries expert_labels(const ingest::VolumeCube& cube) {
  LabelSeries out;
  out.kind = LabelKind::expert;
  out.dates = cube.dates;
  for (std::size_t t = 0; t < cube.dates.size(); ++t) {
    int best = 0;
    double best_volume = 0.0;
    for (int a = 1; a <= cube.a_max; ++a)
      if (cube.at(t, a) > best_volume) {
        best_volume = cube.at(t, a);
        best = a;
      }
    out.labels.push_back(best);
  }
  return out;
}

std::string format_labels_csv(const LabelSeries& labels) {
  std::string out = "date,label,kind\n";
  const std::string kind(kind_name(labels.kind));
  for (std::size_t i = 0; i < labels.size(); ++i)
    out += labels.dates[i].iso() + "," + std::to_string(labels.labels[i]) + "," + kind + "\n";
  return out;
}

LabelSeries parse_labels_csv(std::string_view text) {
  LabelSeries out;
  bool header = false, kind_set = false;
  std::size_t start = 0, line_no = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header) {
      if (line != "date,label,kind") throw ParseError("labels csv: header must be date,label,kind");
      header = true;
      continue;
    }
    if (line.empty()) continue;
    const std::string where = "labels csv line " + std::to_string(line_no);
    const auto f = io::split_fields(line);
    if (f.size() != 3) throw ParseError(where + ": expected 3 fields");
    const LabelKind k = parse_kind(f[2]);
    if (kind_set && k != out.kind) throw ValidationError(where + ": mixed label kinds");
    out.kind = k;
    kind_set = true;
    const Date d = Date::parse(f[0]);
    if (!out.dates.empty() && d <= out.dates.back()) throw ValidationError(where + ": dates must increase");
    const long long label = io::parse_int(f[1], where);
    if (label < 0) throw ValidationError(where + ": negative label");
    out.dates.push_back(d);
    out.labels.push_back(static_cast<int>(label));
  }
  if (!header) throw ParseError("labels csv: empty file");
  return out;
}

WindowedDataset window_dataset(std::shared_ptr<const ingest::Panel> panel, const LabelSeries& labels, int t_len) {
  if (t_len < 1) throw ConfigError("window length must be >= 1");
  WindowedDataset ds;
  ds.panel = std::move(panel);
  ds.t_len = static_cast<std::size_t>(t_len);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t row = ds.panel->find_row(labels.dates[i]);
    if (row == ds.panel->rows() || row + 1 < ds.t_len) continue;
    ds.samples.push_back({row, labels.labels[i], labels.dates[i]});
  }
  if (ds.samples.empty()) throw ValidationError("window_dataset: no labeled date has a full window of history");
  return ds;
}

WindowedDataset filter_dates(const WindowedDataset& ds, Date from, Date to) {
  WindowedDataset out{ds.panel, ds.t_len, {}};
  for (const auto& s : ds.samples)
    if (s.date >= from && s.date < to) out.samples.push_back(s);
  return out;
}

}  // namespace wattnet::labels
