#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "wattnet/date.hpp"

namespace wattnet::ingest {

struct SpotSeries {
  std::string pair;
  std::vector<Date> dates;
  std::vector<double> rates;

  std::size_t size() const { return rates.size(); }
  bool operator==(const SpotSeries&) const = default;
};

struct NdfRecord {
  std::string pair;
  Date start_date;
  Date fix_date;
  double notional = 0.0;

  // Calendar days between start and fix.
  int tenor() const { return fix_date - start_date; }
  bool operator==(const NdfRecord&) const = default;
};

// Per-day, per-tenor notional volumes. Column a-1 holds tenor a.
struct VolumeCube {
  std::string pair;
  std::vector<Date> dates;
  int a_max = 90;
  std::vector<double> volumes;  // dates.size() x a_max, row-major
  std::size_t dropped_long_tenor = 0;
  std::size_t dropped_off_calendar = 0;

  double at(std::size_t day, int tenor) const { return volumes[day * a_max + (tenor - 1)]; }
  bool operator==(const VolumeCube&) const = default;
};

enum class ColumnGroup { spot, indicator, volume };
std::string_view group_name(ColumnGroup g);
ColumnGroup parse_group(std::string_view name);

struct Column {
  std::string name;
  ColumnGroup group;
  bool operator==(const Column&) const = default;
};

// T x M feature matrix over a trading calendar. Unavailable values are NaN
// (indicator warm-up); an aligned panel contains none.
struct Panel {
  std::vector<Date> dates;
  std::vector<Column> columns;
  std::vector<double> values;  // row-major

  std::size_t rows() const { return dates.size(); }
  std::size_t cols() const { return columns.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  const double* row(std::size_t r) const { return values.data() + r * cols(); }
  // Index of the row with this date, or rows() if absent.
  std::size_t find_row(Date d) const;
  std::size_t find_column(std::string_view name) const;
};

struct RollingStats {
  int window = 60;
  std::vector<double> means;  // same layout as the normalized panel
  std::vector<double> stds;
};

struct NormalizedPanel {
  Panel panel;
  RollingStats stats;
  std::size_t dropped_rows = 0;
};

// Spot CSV: `date,<PAIR1>,<PAIR2>,...`; an empty cell means no observation.
std::vector<SpotSeries> parse_spot_csv(const std::filesystem::path& path);
std::vector<SpotSeries> parse_spot_text(std::string_view text);
std::string format_spot_csv(const std::vector<SpotSeries>& spots);

// NDF CSV: `pair,start_date,fix_date,notional_usd`.
std::vector<NdfRecord> parse_ndf_records(const std::filesystem::path& path);
std::vector<NdfRecord> parse_ndf_text(std::string_view text);
std::string format_ndf_csv(const std::vector<NdfRecord>& records);

// All records must share one pair. Records starting off-calendar or with a
// tenor above a_max are dropped and counted.
VolumeCube aggregate_volumes(const std::vector<NdfRecord>& records, const std::vector<Date>& calendar, int a_max);
// One cube per requested pair, in the order given.
std::vector<VolumeCube> aggregate_by_pair(const std::vector<NdfRecord>& records, const std::vector<std::string>& pairs,
                                          const std::vector<Date>& calendar, int a_max);

inline constexpr int kMaxForwardFill = 5;

// Common calendar: every date any series observes inside the overlap of all
// series. Gaps are forward-filled up to kMaxForwardFill consecutive days.
std::vector<SpotSeries> align_spots(const std::vector<SpotSeries>& spots);

// Builds the feature panel: spots, then indicators, then volumes, each group
// sorted by column name. Leading rows with unavailable values are dropped.
Panel align_panel(const std::vector<SpotSeries>& spots, const Panel& indicators, const std::vector<VolumeCube>& cubes);

// Trailing, inclusive, population z-score. The first window-1 rows are
// dropped; a window with zero spread normalizes to 0.
NormalizedPanel rolling_normalize(const Panel& panel, int window);

struct PanelMetadata {
  int window = 0;
  std::size_t dropped_rows = 0;
  std::string extra_json = "{}";  // free-form object merged into the sidecar
};

void write_panel(const Panel& panel, const PanelMetadata& meta, const std::filesystem::path& csv_path);
Panel read_panel(const std::filesystem::path& csv_path);
std::filesystem::path metadata_path(const std::filesystem::path& csv_path);
std::string format_panel_csv(const Panel& panel);

}  // namespace wattnet::ingest
