#include "wattnet/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "json.hpp"
#include "wattnet/errors.hpp"
#include "wattnet/io.hpp"

namespace wattnet::ingest {

namespace {

std::string at_line(std::size_t line) { return "line " + std::to_string(line); }

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::string_view group_name(ColumnGroup g) {
  switch (g) {
    case ColumnGroup::spot: return "spot";
    case ColumnGroup::indicator: return "indicator";
    case ColumnGroup::volume: return "volume";
  }
  return "?";
}

ColumnGroup parse_group(std::string_view name) {
  if (name == "spot") return ColumnGroup::spot;
  if (name == "indicator") return ColumnGroup::indicator;
  if (name == "volume") return ColumnGroup::volume;
  throw ParseError("unknown column group '" + std::string(name) + "'");
}

std::size_t Panel::find_row(Date d) const {
  auto it = std::lower_bound(dates.begin(), dates.end(), d);
  if (it == dates.end() || *it != d) return rows();
  return static_cast<std::size_t>(it - dates.begin());
}

std::size_t Panel::find_column(std::string_view name) const {
  for (std::size_t c = 0; c < columns.size(); ++c)
    if (columns[c].name == name) return c;
  return cols();
}

// ---------------------------------------------------------------- spot CSV

std::vector<SpotSeries> parse_spot_text(std::string_view text) {
  std::vector<std::string> lines;
  {
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t nl = text.find('\n', start);
      if (nl == std::string_view::npos) nl = text.size();
      std::string line(text.substr(start, nl - start));
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(std::move(line));
      start = nl + 1;
    }
  }
  if (lines.empty()) throw ParseError("spot csv: empty file");
  const auto header = io::split_fields(lines[0]);
  if (header.size() < 2 || header[0] != "date") throw ParseError("spot csv: header must be date,<PAIR>,...");
  std::vector<SpotSeries> out;
  std::set<std::string> seen;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c].empty()) throw ParseError("spot csv: empty pair name in header");
    if (!seen.insert(std::string(header[c])).second)
      throw ParseError("spot csv: duplicate pair '" + std::string(header[c]) + "'");
    out.push_back(SpotSeries{std::string(header[c]), {}, {}});
  }

  struct Row {
    Date date;
    std::size_t line;
    std::vector<double> values;  // NaN = missing
  };
  std::vector<Row> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = io::split_fields(lines[i]);
    const std::string where = "spot csv " + at_line(i + 1);
    if (fields.size() != header.size())
      throw ParseError(where + ": expected " + std::to_string(header.size()) + " fields");
    Row row;
    try {
      row.date = Date::parse(fields[0]);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    row.line = i + 1;
    for (std::size_t c = 1; c < fields.size(); ++c) {
      if (fields[c].empty()) {
        row.values.push_back(kNaN);
        continue;
      }
      const double v = io::parse_double(fields[c], where);
      if (!(v > 0.0) || !std::isfinite(v))
        throw ValidationError(where + ": rate must be positive, got '" + std::string(fields[c]) + "'");
      row.values.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].date == rows[i - 1].date)
      throw ValidationError("spot csv " + at_line(rows[i].line) + ": duplicate date " + rows[i].date.iso());
  for (const Row& row : rows)
    for (std::size_t c = 0; c < out.size(); ++c)
      if (!std::isnan(row.values[c])) {
        out[c].dates.push_back(row.date);
        out[c].rates.push_back(row.values[c]);
      }
  return out;
}

std::vector<SpotSeries> parse_spot_csv(const std::filesystem::path& path) { return parse_spot_text(io::read_file(path)); }

std::string format_spot_csv(const std::vector<SpotSeries>& spots) {
  std::set<Date> all;
  for (const auto& s : spots) all.insert(s.dates.begin(), s.dates.end());
  std::string out = "date";
  for (const auto& s : spots) out += "," + s.pair;
  out += "\n";
  std::vector<std::size_t> cursor(spots.size(), 0);
  for (Date d : all) {
    out += d.iso();
    for (std::size_t c = 0; c < spots.size(); ++c) {
      out += ",";
      const auto& s = spots[c];
      if (cursor[c] < s.dates.size() && s.dates[cursor[c]] == d) out += io::format_double(s.rates[cursor[c]++]);
    }
    out += "\n";
  }
  return out;
}

// ----------------------------------------------------------------- NDF CSV

std::vector<NdfRecord> parse_ndf_text(std::string_view text) {
  std::vector<NdfRecord> out;
  std::size_t start = 0, line_no = 0;
  bool header_seen = false;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != "pair,start_date,fix_date,notional_usd")
        throw ParseError("ndf csv: header must be pair,start_date,fix_date,notional_usd");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const std::string where = "ndf csv " + at_line(line_no);
    const auto f = io::split_fields(line);
    if (f.size() != 4) throw ParseError(where + ": expected 4 fields");
    NdfRecord r;
    r.pair = std::string(f[0]);
    if (r.pair.empty()) throw ParseError(where + ": empty pair");
    try {
      r.start_date = Date::parse(f[1]);
      r.fix_date = Date::parse(f[2]);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    r.notional = io::parse_double(f[3], where);
    if (r.fix_date <= r.start_date) throw ValidationError(where + ": fix_date must be after start_date");
    if (!(r.notional >= 0.0) || !std::isfinite(r.notional))
      throw ValidationError(where + ": notional must be non-negative");
    out.push_back(std::move(r));
  }
  if (!header_seen) throw ParseError("ndf csv: empty file");
  return out;
}

std::vector<NdfRecord> parse_ndf_records(const std::filesystem::path& path) {
  return parse_ndf_text(io::read_file(path));
}

std::string format_ndf_csv(const std::vector<NdfRecord>& records) {
  std::string out = "pair,start_date,fix_date,notional_usd\n";
  for (const auto& r : records)
    out += r.pair + "," + r.start_date.iso() + "," + r.fix_date.iso() + "," + io::format_double(r.notional) + "\n";
  return out;
}

// ------------------------------------------------------------ aggregation

VolumeCube aggregate_volumes(const std::vector<NdfRecord>& records, const std::vector<Date>& calendar, int a_max) {
  if (a_max < 1) throw ConfigError("a_max must be >= 1");
  if (!std::is_sorted(calendar.begin(), calendar.end())) throw ValidationError("calendar must be sorted");
  VolumeCube cube;
  cube.pair = records.empty() ? std::string() : records.front().pair;
  cube.dates = calendar;
  cube.a_max = a_max;
  cube.volumes.assign(calendar.size() * static_cast<std::size_t>(a_max), 0.0);
  for (const auto& r : records) {
    if (r.pair != cube.pair) throw ValidationError("aggregate_volumes: mixed pairs " + cube.pair + " and " + r.pair);
    const int tenor = r.tenor();
    if (tenor < 1) throw ValidationError("aggregate_volumes: non-positive tenor");
    if (tenor > a_max) {
      ++cube.dropped_long_tenor;
      continue;
    }
    auto it = std::lower_bound(calendar.begin(), calendar.end(), r.start_date);
    if (it == calendar.end() || *it != r.start_date) {
      ++cube.dropped_off_calendar;
      continue;
    }
    const auto day = static_cast<std::size_t>(it - calendar.begin());
    cube.volumes[day * a_max + (tenor - 1)] += r.notional;
  }
  return cube;
}

std::vector<VolumeCube> aggregate_by_pair(const std::vector<NdfRecord>& records, const std::vector<std::string>& pairs,
                                          const std::vector<Date>& calendar, int a_max) {
  std::map<std::string, std::vector<NdfRecord>> by_pair;
  for (const auto& r : records) by_pair[r.pair].push_back(r);
  std::vector<VolumeCube> out;
  for (const auto& p : pairs) {
    VolumeCube cube = aggregate_volumes(by_pair[p], calendar, a_max);
    cube.pair = p;
    out.push_back(std::move(cube));
  }
  return out;
}

// --------------------------------------------------------------- alignment

std::vector<SpotSeries> align_spots(const std::vector<SpotSeries>& spots) {
  if (spots.empty()) throw ValidationError("align: no spot series");
  Date lo = Date(std::numeric_limits<std::int32_t>::min()), hi = Date(std::numeric_limits<std::int32_t>::max());
  for (const auto& s : spots) {
    if (s.dates.empty()) throw ValidationError("align: spot series " + s.pair + " is empty");
    if (s.dates.size() != s.rates.size()) throw ValidationError("align: " + s.pair + " dates/rates length mismatch");
    lo = std::max(lo, s.dates.front());
    hi = std::min(hi, s.dates.back());
  }
  if (lo > hi) throw ValidationError("align: spot series have no overlapping dates");
  std::set<Date> cal;
  for (const auto& s : spots)
    for (Date d : s.dates)
      if (d >= lo && d <= hi) cal.insert(d);
  std::vector<SpotSeries> out;
  for (const auto& s : spots) {
    SpotSeries a{s.pair, {}, {}};
    std::size_t j = 0;
    int run = 0;
    double last = 0.0;
    for (Date d : cal) {
      while (j < s.dates.size() && s.dates[j] < d) last = s.rates[j++];
      if (j < s.dates.size() && s.dates[j] == d) {
        last = s.rates[j++];
        run = 0;
      } else if (++run > kMaxForwardFill) {
        throw ValidationError("align: " + s.pair + " has more than " + std::to_string(kMaxForwardFill) +
                              " consecutive missing days ending " + d.iso());
      }
      a.dates.push_back(d);
      a.rates.push_back(last);
    }
    out.push_back(std::move(a));
  }
  return out;
}

Panel align_panel(const std::vector<SpotSeries>& spots, const Panel& indicators, const std::vector<VolumeCube>& cubes) {
  const std::vector<SpotSeries> aligned = align_spots(spots);
  std::vector<Date> cal = aligned.front().dates;
  // Restrict to dates every other input covers.
  auto covered = [](const std::vector<Date>& have, Date d) { return std::binary_search(have.begin(), have.end(), d); };
  if (indicators.cols() > 0)
    std::erase_if(cal, [&](Date d) { return !covered(indicators.dates, d); });
  for (const auto& c : cubes) std::erase_if(cal, [&](Date d) { return !covered(c.dates, d); });
  if (cal.empty()) throw ValidationError("align: empty calendar intersection");

  struct Source {
    Column column;
    std::vector<double> values;  // on `cal`
  };
  std::vector<Source> spot_cols, ind_cols, vol_cols;
  for (const auto& s : aligned) {
    Source src{{s.pair, ColumnGroup::spot}, {}};
    for (Date d : cal) src.values.push_back(s.rates[std::lower_bound(s.dates.begin(), s.dates.end(), d) - s.dates.begin()]);
    spot_cols.push_back(std::move(src));
  }
  for (std::size_t c = 0; c < indicators.cols(); ++c) {
    Source src{{indicators.columns[c].name, ColumnGroup::indicator}, {}};
    for (Date d : cal) src.values.push_back(indicators.at(indicators.find_row(d), c));
    ind_cols.push_back(std::move(src));
  }
  for (const auto& cube : cubes)
    for (int a = 1; a <= cube.a_max; ++a) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_VOL_%03d", cube.pair.c_str(), a);
      Source src{{name, ColumnGroup::volume}, {}};
      for (Date d : cal) {
        const auto day = static_cast<std::size_t>(std::lower_bound(cube.dates.begin(), cube.dates.end(), d) - cube.dates.begin());
        src.values.push_back(cube.at(day, a));
      }
      vol_cols.push_back(std::move(src));
    }
  auto by_name = [](const Source& a, const Source& b) { return a.column.name < b.column.name; };
  std::sort(spot_cols.begin(), spot_cols.end(), by_name);
  std::sort(ind_cols.begin(), ind_cols.end(), by_name);
  std::sort(vol_cols.begin(), vol_cols.end(), by_name);
  std::vector<Source*> order;
  for (auto* group : {&spot_cols, &ind_cols, &vol_cols})
    for (auto& s : *group) order.push_back(&s);
  std::set<std::string> names;
  for (const Source* s : order)
    if (!names.insert(s->column.name).second) throw ValidationError("align: duplicate column " + s->column.name);

  // Leading rows with unavailable values are warm-up; drop them.
  std::size_t first = 0;
  for (const Source* s : order) {
    std::size_t r = 0;
    while (r < cal.size() && std::isnan(s->values[r])) ++r;
    for (std::size_t k = r; k < cal.size(); ++k)
      if (std::isnan(s->values[k]))
        throw ValidationError("align: column " + s->column.name + " has a gap after warm-up at " + cal[k].iso());
    first = std::max(first, r);
  }
  if (first >= cal.size()) throw ValidationError("align: warm-up consumes the whole calendar");

  Panel panel;
  panel.dates.assign(cal.begin() + static_cast<std::ptrdiff_t>(first), cal.end());
  for (const Source* s : order) panel.columns.push_back(s->column);
  panel.values.resize(panel.rows() * panel.cols());
  for (std::size_t c = 0; c < order.size(); ++c)
    for (std::size_t r = 0; r < panel.rows(); ++r) panel.at(r, c) = order[c]->values[first + r];
  return panel;
}

// ----------------------------------------------------------- normalization

NormalizedPanel rolling_normalize(const Panel& panel, int window) {
  if (window < 2) throw ConfigError("normalization window must be >= 2");
  const auto w = static_cast<std::size_t>(window);
  if (panel.rows() <= w) throw ValidationError("normalize: panel has " + std::to_string(panel.rows()) +
                                                " rows, needs more than the window " + std::to_string(window));
  const std::size_t out_rows = panel.rows() - w + 1, m = panel.cols();
  NormalizedPanel res;
  res.dropped_rows = w - 1;
  res.panel.dates.assign(panel.dates.begin() + static_cast<std::ptrdiff_t>(w - 1), panel.dates.end());
  res.panel.columns = panel.columns;
  res.panel.values.resize(out_rows * m);
  res.stats.window = window;
  res.stats.means.resize(out_rows * m);
  res.stats.stds.resize(out_rows * m);
  std::vector<double> buf(w);
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t r = 0; r < out_rows; ++r) {
      double lo = panel.at(r, c), hi = lo, sum = 0.0;
      for (std::size_t i = 0; i < w; ++i) {
        buf[i] = panel.at(r + i, c);
        lo = std::min(lo, buf[i]);
        hi = std::max(hi, buf[i]);
        sum += buf[i];
      }
      double mean = sum / static_cast<double>(w), sd = 0.0;
      if (lo == hi) {
        mean = lo;
      } else {
        double dev = 0.0, sq = 0.0;
        for (double v : buf) {
          dev += v - mean;
          sq += (v - mean) * (v - mean);
        }
        const double n = static_cast<double>(w);
        mean += dev / n;
        sd = std::sqrt(std::max(0.0, (sq - dev * dev / n) / n));
      }
      const double x = panel.at(r + w - 1, c);
      res.panel.values[r * m + c] = sd > 0.0 ? (x - mean) / sd : 0.0;
      res.stats.means[r * m + c] = mean;
      res.stats.stds[r * m + c] = sd;
    }
  }
  return res;
}

// ------------------------------------------------------------ persistence

std::filesystem::path metadata_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p += ".meta.json";
  return p;
}

std::string format_panel_csv(const Panel& panel) {
  std::string out = "date";
  for (const auto& c : panel.columns) out += "," + c.name;
  out += "\n";
  for (std::size_t r = 0; r < panel.rows(); ++r) {
    out += panel.dates[r].iso();
    for (std::size_t c = 0; c < panel.cols(); ++c) {
      out += ",";
      const double v = panel.at(r, c);
      if (!std::isnan(v)) out += io::format_double(v);
    }
    out += "\n";
  }
  return out;
}

void write_panel(const Panel& panel, const PanelMetadata& meta, const std::filesystem::path& csv_path) {
  io::write_file(csv_path, format_panel_csv(panel));
  nlohmann::ordered_json j;
  j["rows"] = panel.rows();
  j["window"] = meta.window;
  j["dropped_rows"] = meta.dropped_rows;
  j["normalized_groups"] = "all";  // volumes included
  auto& cols = j["columns"] = nlohmann::ordered_json::array();
  std::map<std::string, std::size_t> counts;
  for (const auto& c : panel.columns) {
    cols.push_back({{"name", c.name}, {"group", group_name(c.group)}});
    ++counts[std::string(group_name(c.group))];
  }
  j["group_counts"] = counts;
  j["extra"] = nlohmann::ordered_json::parse(meta.extra_json);
  io::write_file(metadata_path(csv_path), j.dump(2) + "\n");
}

Panel read_panel(const std::filesystem::path& csv_path) {
  const std::string meta_text = io::read_file(metadata_path(csv_path));
  const auto lines = io::read_lines(csv_path);
  if (lines.empty()) throw ParseError("panel csv: empty file");
  const auto header = io::split_fields(lines[0]);
  Panel p;
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    const auto& cols = meta.at("columns");
    if (header.size() != cols.size() + 1 || header[0] != "date")
      throw ParseError("panel csv: header does not match metadata");
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::string name = cols[c].at("name");
      if (header[c + 1] != name) throw ParseError("panel csv: column " + name + " out of order");
      p.columns.push_back({name, parse_group(cols[c].at("group").get<std::string>())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("panel metadata " + metadata_path(csv_path).string() + ": " + e.what());
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = io::split_fields(lines[i]);
    const std::string where = "panel csv " + at_line(i + 1);
    if (f.size() != header.size()) throw ParseError(where + ": wrong field count");
    p.dates.push_back(Date::parse(f[0]));
    for (std::size_t c = 1; c < f.size(); ++c) p.values.push_back(f[c].empty() ? kNaN : io::parse_double(f[c], where));
  }
  return p;
}

}  // namespace wattnet::ingest
