#include "wattnet/synth.hpp"

#include <algorithm>
#include <cmath>

#include "wattnet/errors.hpp"
#include "wattnet/rng.hpp"

namespace wattnet::synth {

namespace {

struct Named {
  const char* pair;
  double rate;
};

constexpr Named kPairs[] = {{"USDCNY", 6.12}, {"USDKRW", 1065.0}, {"USDINR", 61.5},  {"USDTWD", 29.8},
                            {"USDMYR", 3.25}, {"USDIDR", 11400},  {"USDPHP", 43.6},  {"USDBRL", 2.22},
                            {"EURUSD", 1.33}, {"GBPUSD", 1.58},   {"USDJPY", 99.5},  {"AUDUSD", 0.92}};

std::vector<Segment> regimes(Rng& rng, int days, const SynthConfig& c, double drift) {
  std::vector<Segment> out;
  double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
  for (int begin = 0; begin < days;) {
    const int len = c.trend_min_days + static_cast<int>(rng.below(static_cast<std::uint64_t>(
                                           c.trend_max_days - c.trend_min_days + 1)));
    out.push_back({begin, std::min(days, begin + len), sign * drift});
    begin += len;
    sign = -sign;
  }
  return out;
}

int poisson(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  const double limit = std::exp(-mean);
  int k = 0;
  for (double p = rng.uniform(); p > limit; p *= rng.uniform()) ++k;
  return k;
}

}  // namespace

void SynthConfig::validate() const {
  if (days < 300) throw ConfigError("synth: days must be >= 300, got " + std::to_string(days));
  if (n_pairs < 1) throw ConfigError("synth: n_pairs must be >= 1");
  if (n_ndf_pairs < 1 || n_ndf_pairs > n_pairs) throw ConfigError("synth: n_ndf_pairs must be in [1, n_pairs]");
  if (!(vol >= 0.0) || !std::isfinite(vol)) throw ConfigError("synth: vol must be finite and >= 0");
  if (!std::isfinite(trend_drift) || std::abs(trend_drift) > 0.1) throw ConfigError("synth: |trend_drift| must be <= 0.1");
  if (trend_min_days < 1 || trend_max_days < trend_min_days)
    throw ConfigError("synth: need 1 <= trend_min_days <= trend_max_days");
  if (!(coupling >= 0.0 && coupling <= 1.0)) throw ConfigError("synth: coupling must be in [0, 1]");
  if (!(context_drift_scale >= 0.0)) throw ConfigError("synth: context_drift_scale must be >= 0");
  if (!(records_per_day >= 0.0 && records_per_day <= 1000.0)) throw ConfigError("synth: records_per_day must be in [0, 1000]");
  if (!(tenor_mean > 0.0)) throw ConfigError("synth: tenor_mean must be > 0");
  if (max_tenor < 1) throw ConfigError("synth: max_tenor must be >= 1");
  try {
    (void)Date::parse(start_date);
  } catch (const ParseError& e) {
    throw ConfigError(std::string("synth: start_date: ") + e.what());
  }
}

nlohmann::ordered_json SynthConfig::to_json() const {
  return {{"seed", seed},
          {"days", days},
          {"n_pairs", n_pairs},
          {"n_ndf_pairs", n_ndf_pairs},
          {"start_date", start_date},
          {"vol", vol},
          {"trend_drift", trend_drift},
          {"trend_min_days", trend_min_days},
          {"trend_max_days", trend_max_days},
          {"context_drift_scale", context_drift_scale},
          {"coupling", coupling},
          {"records_per_day", records_per_day},
          {"tenor_mean", tenor_mean},
          {"max_tenor", max_tenor}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) { return from_json(j, SynthConfig{}); }

SynthConfig SynthConfig::from_json(const nlohmann::json& j, SynthConfig c) {
  if (!j.is_object()) throw ConfigError("synth config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    const auto& v = it.value();
    try {
      if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "days") c.days = v.get<int>();
      else if (k == "n_pairs") c.n_pairs = v.get<int>();
      else if (k == "n_ndf_pairs") c.n_ndf_pairs = v.get<int>();
      else if (k == "start_date") c.start_date = v.get<std::string>();
      else if (k == "vol") c.vol = v.get<double>();
      else if (k == "trend_drift") c.trend_drift = v.get<double>();
      else if (k == "trend_min_days") c.trend_min_days = v.get<int>();
      else if (k == "trend_max_days") c.trend_max_days = v.get<int>();
      else if (k == "context_drift_scale") c.context_drift_scale = v.get<double>();
      else if (k == "coupling") c.coupling = v.get<double>();
      else if (k == "records_per_day") c.records_per_day = v.get<double>();
      else if (k == "tenor_mean") c.tenor_mean = v.get<double>();
      else if (k == "max_tenor") c.max_tenor = v.get<int>();
      else throw ConfigError("synth: unknown key '" + k + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("synth." + k + ": " + e.what());
    }
  }
  return c;
}

std::vector<std::string> pair_names(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    if (i < static_cast<int>(std::size(kPairs))) out.emplace_back(kPairs[i].pair);
    else out.push_back("USDX" + std::to_string(i));
  }
  return out;
}

Market generate(const SynthConfig& c) {
  c.validate();
  Rng rng(c.seed);
  Market m;
  const auto names = pair_names(c.n_pairs);

  std::vector<Date> cal;
  for (Date d = Date::parse(c.start_date); static_cast<int>(cal.size()) < c.days; d = d + 1)
    if (d.weekday() < 5) cal.push_back(d);

  m.target_segments = regimes(rng, c.days, c, c.trend_drift);
  std::vector<std::vector<Segment>> segs{m.target_segments};
  for (int p = 1; p < c.n_pairs; ++p) segs.push_back(regimes(rng, c.days, c, c.trend_drift * c.context_drift_scale));

  std::vector<double> shock0(static_cast<std::size_t>(c.days));
  for (double& s : shock0) s = rng.normal();
  const double own = std::sqrt(1.0 - c.coupling * c.coupling);
  for (int p = 0; p < c.n_pairs; ++p) {
    ingest::SpotSeries s{names[static_cast<std::size_t>(p)], cal, {}};
    double x = p < static_cast<int>(std::size(kPairs)) ? kPairs[p].rate : 1.0 + 0.25 * p;
    std::size_t seg = 0;
    for (int t = 0; t < c.days; ++t) {
      s.rates.push_back(x);
      while (segs[p][seg].end <= t) ++seg;
      const double eps = p == 0 ? shock0[t] : c.coupling * shock0[t] + own * rng.normal();
      x *= std::exp(segs[p][seg].drift + c.vol * eps);
    }
    m.spots.push_back(std::move(s));
  }

  // Geometric tenors: short contracts dominate the volume.
  const double q = 1.0 / (1.0 + c.tenor_mean);
  for (int p = 0; p < c.n_ndf_pairs; ++p)
    for (const Date d : cal) {
      const int n = poisson(rng, c.records_per_day);
      for (int i = 0; i < n; ++i) {
        double u;
        do u = rng.uniform();
        while (u <= 0.0);
        const int tenor = std::min(c.max_tenor, 1 + static_cast<int>(std::log(u) / std::log1p(-q)));
        const double notional = 1000.0 * std::round(std::exp(std::log(5000.0) + rng.normal()));
        m.records.push_back({names[static_cast<std::size_t>(p)], d, d + tenor, std::max(1000.0, notional)});
      }
    }
  return m;
}

}  // namespace wattnet::synth
