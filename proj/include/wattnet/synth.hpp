#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "wattnet/date.hpp"
#include "wattnet/ingest.hpp"

namespace wattnet::synth {

// Daily log-drift and volatility are per business day.
struct SynthConfig {
  std::uint64_t seed = 7;
  int days = 1000;
  int n_pairs = 3;
  int n_ndf_pairs = 1;
  std::string start_date = "2013-09-10";
  double vol = 0.002;
  double trend_drift = 0.002;
  int trend_min_days = 100;
  int trend_max_days = 160;
  double context_drift_scale = 0.5;
  double coupling = 0.3;  // share of the target's shocks in context pairs
  double records_per_day = 12.0;
  double tenor_mean = 20.0;  // calendar days, geometric
  int max_tenor = 120;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
  static SynthConfig from_json(const nlohmann::json& j, SynthConfig base);
};

struct Segment {
  int begin = 0;  // business-day index, inclusive
  int end = 0;    // exclusive
  double drift = 0.0;
};

struct Market {
  std::vector<ingest::SpotSeries> spots;  // spots[0] is the target pair
  std::vector<ingest::NdfRecord> records;
  std::vector<Segment> target_segments;
};

std::vector<std::string> pair_names(int n);
Market generate(const SynthConfig& config);

}  // namespace wattnet::synth
