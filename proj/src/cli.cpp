#include "wattnet/cli.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "wattnet/backtest.hpp"
#include "wattnet/errors.hpp"
#include "wattnet/explain.hpp"
#include "wattnet/indicators.hpp"
#include "wattnet/ingest.hpp"
#include "wattnet/io.hpp"
#include "wattnet/labels.hpp"
#include "wattnet/synth.hpp"
#include "wattnet/training.hpp"
#include "wattnet/wattnet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace wattnet::cli {

namespace {

// artifact file name -> command that writes it
const std::map<std::string, std::string> kProducers = {
    {"spot.csv", "synth"},          {"ndf.csv", "synth"},         {"spot_aligned.csv", "ingest"},
    {"ndf_clean.csv", "ingest"},    {"panel.csv", "features"},    {"labels_optimal.csv", "label --kind optimal"},
    {"labels_expert.csv", "label --kind expert"}, {"labels_oracle.csv", "label --kind oracle"},
    {"model.ckpt", "train"}};

struct Context {
  ordered_json config;
  fs::path out_dir;
  std::string command;
  std::vector<std::pair<std::string, std::string>> inputs;  // file name, hash
  std::ostream* out = nullptr;

  const ordered_json& section(const char* name) const { return config.at(name); }

  fs::path artifact(const char* key, const std::string& name) const {
    const auto& p = config.at("paths").at(key);
    return p.get<std::string>().empty() ? out_dir / name : fs::path(p.get<std::string>());
  }

  std::string read_input(const fs::path& path) {
    if (!fs::exists(path)) {
      std::string msg = "missing input " + path.string();
      if (auto it = kProducers.find(path.filename().string()); it != kProducers.end())
        msg += "; run `wattnet " + it->second + "` first";
      throw IoError(msg);
    }
    const fs::path mp = manifest_path(path);
    if (fs::exists(mp)) {
      json m;
      try {
        m = json::parse(io::read_file(mp));
      } catch (const json::exception& e) {
        throw ParseError(mp.string() + ": " + e.what());
      }
      if (m.value("schema", -1) != kSchema)
        throw ValidationError(path.string() + " was written with an incompatible schema; regenerate it");
    }
    std::string bytes = io::read_file(path);
    inputs.emplace_back(path.filename().string(), io::hex64(io::fnv1a64(bytes)));
    return bytes;
  }

  fs::path write_output(const std::string& name, std::string_view content) const {
    fs::create_directories(out_dir);
    const fs::path path = out_dir / name;
    io::write_file(path, content);
    ordered_json m;
    m["schema"] = kSchema;
    m["tool"] = "wattnet";
    m["version"] = kVersion;
    m["command"] = command;
    m["output"] = name;
    m["output_fnv1a"] = io::hex64(io::fnv1a64(content));
    m["inputs"] = ordered_json::array();
    for (const auto& [file, hash] : inputs) m["inputs"].push_back({{"file", file}, {"fnv1a", hash}});
    const std::string cfg = config.dump();
    m["config_hash"] = io::hex64(io::fnv1a64(cfg));
    m["config"] = config;
    io::write_file(manifest_path(path), m.dump(2) + "\n");
    *out << "wrote " << path.string() << "\n";
    return path;
  }
};

template <typename T>
T get(const ordered_json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(section) + "." + key + ": " + e.what());
  }
}

void check_keys(const ordered_json& j, const ordered_json& reference, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!reference.contains(it.key())) throw ConfigError("unknown config key '" + where + it.key() + "'");
}

void validate_config(const ordered_json& c) {
  const ordered_json ref = default_config();
  check_keys(c, ref, "");
  for (const char* s : {"features", "labels", "backtest", "explain", "paths"}) check_keys(c.at(s), ref.at(s), std::string(s) + ".");
  (void)synth::SynthConfig::from_json(c.at("synth"));
  training::TrainConfig::from_json(c.at("training")).validate();
  if (!c.at("model").is_object()) throw ConfigError("model must be an object");
  const auto profile = c.at("profile");
  if (profile != "desk" && profile != "full") throw ConfigError("profile must be 'desk' or 'full'");
  if (!c.at("split_date").is_null()) {
    try {
      (void)Date::parse(c.at("split_date").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("split_date: ") + e.what());
    }
  }
  const double frac = c.at("split_fraction").get<double>();
  if (!(frac > 0.0 && frac < 1.0)) throw ConfigError("split_fraction must be in (0, 1)");
  if (get<int>(c, "features", "norm_window") < 2) throw ConfigError("features.norm_window must be >= 2");
  if (get<int>(c, "features", "a_max") < 1) throw ConfigError("features.a_max must be >= 1");
  (void)labels::parse_kind(get<std::string>(c, "labels", "kind"));
  if (get<int>(c, "backtest", "momentum_lookback") < 1) throw ConfigError("backtest.momentum_lookback must be >= 1");
  const auto mode = get<std::string>(c, "explain", "mode");
  if (mode != "label" && mode != "pred") throw ConfigError("explain.mode must be 'label' or 'pred'");
  if (get<int>(c, "explain", "max_samples") < 1) throw ConfigError("explain.max_samples must be >= 1");
}

// ----------------------------------------------------------------- loaders

std::vector<ingest::SpotSeries> load_spots(Context& ctx, const fs::path& p) {
  return ingest::parse_spot_text(ctx.read_input(p));
}

std::vector<ingest::NdfRecord> load_records(Context& ctx, const fs::path& p) {
  return ingest::parse_ndf_text(ctx.read_input(p));
}

const ingest::SpotSeries& find_pair(const std::vector<ingest::SpotSeries>& spots, const std::string& pair) {
  for (const auto& s : spots)
    if (s.pair == pair) return s;
  throw ValidationError("target pair " + pair + " has no spot series");
}

std::shared_ptr<ingest::Panel> load_panel(Context& ctx) {
  const fs::path p = ctx.artifact("panel", "panel.csv");
  (void)ctx.read_input(p);  // existence, schema and hash
  return std::make_shared<ingest::Panel>(ingest::read_panel(p));
}

std::string label_file(const Context& ctx) {
  return "labels_" + get<std::string>(ctx.config, "labels", "kind") + ".csv";
}

labels::LabelSeries load_labels(Context& ctx) {
  return labels::parse_labels_csv(ctx.read_input(ctx.artifact("labels", label_file(ctx))));
}

model::ModelParams load_params(Context& ctx) {
  const fs::path p = ctx.artifact("model", "model.ckpt");
  (void)ctx.read_input(p);
  return model::load_model(p);
}

labels::TenorSet tenors(const Context& ctx) { return {get<int>(ctx.config, "features", "a_max")}; }

model::WattNetConfig model_config(const Context& ctx, int input_width) {
  auto base = ctx.config.at("profile") == "full" ? model::WattNetConfig::full_scale() : model::WattNetConfig::desk(input_width);
  base.input_width = input_width;
  base.n_classes = tenors(ctx).classes();
  auto c = model::WattNetConfig::from_json(ctx.config.at("model"), base);
  c.validate();
  if (c.input_width != input_width)
    throw ConfigError("model.input_width " + std::to_string(c.input_width) + " does not match panel width " +
                      std::to_string(input_width));
  return c;
}

Date split_date(const Context& ctx, const labels::WindowedDataset& ds) {
  if (!ctx.config.at("split_date").is_null()) return Date::parse(ctx.config.at("split_date").get<std::string>());
  const double frac = ctx.config.at("split_fraction").get<double>();
  const auto k = static_cast<std::size_t>(frac * static_cast<double>(ds.size()));
  if (k == 0 || k >= ds.size()) throw ValidationError("split_fraction leaves an empty train or test set");
  return ds.samples[k].date;
}

std::vector<std::string> ndf_pairs(const std::vector<ingest::NdfRecord>& records) {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.pair);
  return {s.begin(), s.end()};
}

// ----------------------------------------------------------------- commands

void cmd_synth(Context& ctx) {
  const auto cfg = synth::SynthConfig::from_json(ctx.section("synth"));
  const auto m = synth::generate(cfg);
  ctx.write_output("spot.csv", ingest::format_spot_csv(m.spots));
  ctx.write_output("ndf.csv", ingest::format_ndf_csv(m.records));
}

void cmd_ingest(Context& ctx) {
  const auto spots = ingest::align_spots(load_spots(ctx, ctx.artifact("spot", "spot.csv")));
  (void)find_pair(spots, ctx.config.at("target_pair").get<std::string>());
  auto records = load_records(ctx, ctx.artifact("ndf", "ndf.csv"));
  std::set<std::string> known;
  for (const auto& s : spots) known.insert(s.pair);
  for (const auto& r : records)
    if (!known.count(r.pair)) throw ValidationError("NDF pair " + r.pair + " has no spot series");
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.pair, a.start_date, a.fix_date, a.notional) < std::tie(b.pair, b.start_date, b.fix_date, b.notional);
  });
  ctx.write_output("spot_aligned.csv", ingest::format_spot_csv(spots));
  ctx.write_output("ndf_clean.csv", ingest::format_ndf_csv(records));
}

void cmd_features(Context& ctx) {
  const auto spots = load_spots(ctx, ctx.out_dir / "spot_aligned.csv");
  const auto records = load_records(ctx, ctx.out_dir / "ndf_clean.csv");
  const int a_max = get<int>(ctx.config, "features", "a_max");
  indicators::IndicatorConfig ic;
  ic.ar_order = get<int>(ctx.config, "features", "ar_order");
  ic.ar_train_end = get<std::size_t>(ctx.config, "features", "ar_train_end");
  const auto pairs = ndf_pairs(records);
  std::vector<std::string> targets;
  for (const auto& t : indicators::default_ar_targets(pairs))
    if (std::any_of(spots.begin(), spots.end(), [&](const auto& s) { return s.pair == t; })) targets.push_back(t);
  const auto ind = indicators::build_indicator_panel(spots, targets, ic);
  const auto cubes = ingest::aggregate_by_pair(records, pairs, spots.front().dates, a_max);
  std::size_t long_tenor = 0, off_calendar = 0;
  for (const auto& c : cubes) long_tenor += c.dropped_long_tenor, off_calendar += c.dropped_off_calendar;
  const auto panel = ingest::align_panel(spots, ind, cubes);
  const int window = get<int>(ctx.config, "features", "norm_window");
  const auto norm = ingest::rolling_normalize(panel, window);
  ordered_json extra{{"dropped_long_tenor", long_tenor}, {"dropped_off_calendar", off_calendar},
                     {"ar_targets", targets},
                     {"ar_model", "AR(" + std::to_string(ic.ar_order) + ") on first differences, 1-step raw-rate forecast"}};
  ingest::write_panel(norm.panel, {window, norm.dropped_rows, extra.dump()}, ctx.out_dir / "panel.csv");
  ctx.write_output("panel.csv", io::read_file(ctx.out_dir / "panel.csv"));
  *ctx.out << "panel " << norm.panel.rows() << " x " << norm.panel.cols() << "\n";
}

labels::LabelSeries expert_series(Context& ctx, const std::vector<ingest::SpotSeries>& spots) {
  const auto records = load_records(ctx, ctx.out_dir / "ndf_clean.csv");
  const auto& target = ctx.config.at("target_pair").get<std::string>();
  return labels::expert_labels(ingest::aggregate_by_pair(records, {target}, spots.front().dates, tenors(ctx).a_max).front());
}

void cmd_label(Context& ctx) {
  const auto spots = load_spots(ctx, ctx.out_dir / "spot_aligned.csv");
  const auto& spot = find_pair(spots, ctx.config.at("target_pair").get<std::string>());
  labels::LabelSeries l;
  switch (labels::parse_kind(get<std::string>(ctx.config, "labels", "kind"))) {
    case labels::LabelKind::optimal: l = labels::optimal_labels(spot, tenors(ctx)); break;
    case labels::LabelKind::oracle: l = labels::oracle_labels(spot, tenors(ctx)); break;
    case labels::LabelKind::expert: {
      const auto records = load_records(ctx, ctx.out_dir / "ndf_clean.csv");
      const auto cube = ingest::aggregate_by_pair(records, {spot.pair}, spots.front().dates, tenors(ctx).a_max).front();
      l = labels::expert_labels(cube);
      std::size_t empty = 0;
      for (std::size_t t = 0; t < cube.dates.size(); ++t) {
        double v = 0.0;
        for (int a = 1; a <= cube.a_max; ++a) v += cube.at(t, a);
        empty += v == 0.0;
      }
      *ctx.out << "expert: " << empty << " of " << cube.dates.size() << " days without NDF records (class 0)\n";
      break;
    }
  }
  ctx.write_output(label_file(ctx), labels::format_labels_csv(l));
}

void cmd_train(Context& ctx) {
  auto panel = load_panel(ctx);
  const auto l = load_labels(ctx);
  const auto mc = model_config(ctx, static_cast<int>(panel->cols()));
  const auto all = labels::window_dataset(panel, l, mc.window_len);
  const Date split = split_date(ctx, all);
  const auto train_set = labels::filter_dates(all, Date(std::numeric_limits<std::int32_t>::min()), split);
  if (train_set.size() == 0) throw ValidationError("no training windows before " + split.iso());
  const auto tc = training::TrainConfig::from_json(ctx.section("training"));
  *ctx.out << "training on " << train_set.size() << " windows before " << split.iso() << ", "
           << model::parameter_count(mc) << " parameters\n";
  auto result = training::train(mc, train_set, tc, split, ctx.out);
  result.report.checkpoint = "model.ckpt";
  fs::create_directories(ctx.out_dir);
  model::save_model(ctx.out_dir / "model.ckpt", result.params);
  ctx.write_output("model.ckpt", io::read_file(ctx.out_dir / "model.ckpt"));
  const auto ev = training::evaluate(result.params, train_set);
  auto rep = result.report.to_json();
  rep["split_date"] = split.iso();
  rep["train_loss"] = ev.loss;
  rep["train_accuracy"] = ev.accuracy;
  ctx.write_output("train_report.json", rep.dump(2) + "\n");
  *ctx.out << "stop " << training::stop_reason_name(result.report.reason) << " after " << result.report.epochs_run
           << " epochs, train loss " << ev.loss << ", accuracy " << ev.accuracy << "%\n";
}

void cmd_backtest(Context& ctx) {
  auto panel = load_panel(ctx);
  const auto spots = load_spots(ctx, ctx.out_dir / "spot_aligned.csv");
  const auto& spot = find_pair(spots, ctx.config.at("target_pair").get<std::string>());
  const std::string policy = get<std::string>(ctx.config, "backtest", "policy");
  const auto ts = tenors(ctx);
  auto l = load_labels(ctx);
  const auto labelled = labels::window_dataset(panel, l, model_config(ctx, static_cast<int>(panel->cols())).window_len);
  const Date split = split_date(ctx, labelled);

  backtest::Policy fn;
  std::size_t t_len = labelled.t_len;
  std::size_t flagged = 0;
  if (policy == "model") {
    const auto params = load_params(ctx);
    if (params.config.input_width != static_cast<int>(panel->cols()))
      throw ValidationError("model input width does not match the panel");
    t_len = static_cast<std::size_t>(params.config.window_len);
    labels::LabelSeries every{labels::LabelKind::optimal, panel->dates, std::vector<int>(panel->rows(), 0)};
    const auto ds = labels::window_dataset(panel, every, params.config.window_len);
    backtest::PolicyTrace trace{"model", {}, model::predict_all(params, ds), {}, {}};
    for (const auto& s : ds.samples) trace.dates.push_back(s.date);
    fn = backtest::replay(trace);
  } else if (policy == "optimal") {
    fn = backtest::replay(labels::optimal_labels(spot, ts));
  } else if (policy == "oracle") {
    fn = backtest::replay(labels::oracle_labels(spot, ts));
  } else if (policy == "expert" || policy == "momentum1") {
    const auto expert = expert_series(ctx, spots);
    if (policy == "expert") fn = backtest::replay(expert);
    else fn = backtest::replay(backtest::momentum1(expert));
  } else if (policy == "momentum90") {
    const auto trace = backtest::momentum90(spot, ts, get<int>(ctx.config, "backtest", "momentum_lookback"));
    for (std::size_t i = 0; i < trace.size(); ++i) flagged += trace.flagged[i] && trace.dates[i] >= split;
    fn = backtest::replay(trace);
  } else {
    throw ConfigError("unknown policy '" + policy + "' (model, optimal, oracle, expert, momentum1, momentum90)");
  }
  const auto rep = backtest::run_backtest(fn, policy, *panel, spot, split, ts, t_len);
  if (!rep.consistent()) throw ComputeError("backtest report failed its self-consistency audit");
  auto j = rep.to_json();
  j["flagged_no_history"] = flagged;
  ctx.write_output("backtest_" + policy + ".json", j.dump(2) + "\n");
  ctx.write_output("backtest_" + policy + ".csv", rep.to_csv());
  *ctx.out << policy << ": ROI " << rep.total_roi << " opt.acc " << rep.optimal_accuracy << " nn.acc "
           << rep.nonneg_accuracy << " over " << rep.days.size() << " days\n";
}

void cmd_explain(Context& ctx) {
  auto panel = load_panel(ctx);
  const auto l = load_labels(ctx);
  const auto params = load_params(ctx);
  const auto all = labels::window_dataset(panel, l, params.config.window_len);
  const Date split = split_date(ctx, all);
  const auto pool = labels::filter_dates(all, Date(std::numeric_limits<std::int32_t>::min()), split);
  if (pool.size() == 0) throw ValidationError("no windows before " + split.iso());
  const bool by_pred = get<std::string>(ctx.config, "explain", "mode") == "pred";
  int cls = get<int>(ctx.config, "explain", "class");
  std::vector<int> preds;
  if (by_pred) preds = model::predict_all(params, pool);
  if (cls < 0) {
    std::map<int, std::size_t> freq;
    for (std::size_t i = 0; i < pool.size(); ++i) ++freq[by_pred ? preds[i] : pool.samples[i].label];
    cls = std::max_element(freq.begin(), freq.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if ((by_pred ? preds[i] : pool.samples[i].label) == cls) idx.push_back(i);
  if (idx.empty()) throw ValidationError("no windows with class " + std::to_string(cls));
  const auto max_n = get<std::size_t>(ctx.config, "explain", "max_samples");
  if (idx.size() > max_n) idx.resize(max_n);
  const auto g = explain::input_gradients(params, pool, idx, cls);
  const auto top_k = get<std::size_t>(ctx.config, "explain", "top_k");
  auto j = g.to_json(top_k);
  j["mode"] = by_pred ? "pred" : "label";

  // Figure-2 style context: 20-day volatility of the target spot at each sample date.
  const auto spots = load_spots(ctx, ctx.out_dir / "spot_aligned.csv");
  const auto& spot = find_pair(spots, ctx.config.at("target_pair").get<std::string>());
  const auto vol = explain::volatility_context(spot.rates, 20);
  std::vector<double> vctx;
  ordered_json series = ordered_json::array();
  for (std::size_t i : idx) {
    const auto it = std::lower_bound(spot.dates.begin(), spot.dates.end(), pool.samples[i].date);
    const double v = vol[static_cast<std::size_t>(it - spot.dates.begin())];
    vctx.push_back(v);
    series.push_back({{"date", pool.samples[i].date.iso()}, {"rolling_std_20", v}});
  }
  ordered_json rho = ordered_json::array();
  for (std::size_t r = 0; r < std::min(top_k, g.ranking.size()); ++r) {
    std::vector<double> feat;
    for (std::size_t i : idx) feat.push_back(panel->at(pool.samples[i].end_row, g.ranking[r]));
    ordered_json e{{"feature", g.features[g.ranking[r]]}};
    try {
      e["rho_vs_volatility"] = explain::pearson_corr(feat, vctx);
    } catch (const ValidationError&) {
      e["rho_vs_volatility"] = nullptr;
    }
    rho.push_back(e);
  }
  j["volatility_context"] = series;
  j["correlation"] = rho;
  ctx.write_output("explain.json", j.dump(2) + "\n");
}

void cmd_export_latents(Context& ctx) {
  auto panel = load_panel(ctx);
  const auto l = load_labels(ctx);
  const auto params = load_params(ctx);
  const auto ds = labels::window_dataset(panel, l, params.config.window_len);
  ctx.write_output("latents.csv", explain::export_latents(params, ds));
}

// Applies a dotted-key override such as "training.max_epochs=50".
void set_override(ordered_json& patch, const std::string& key, const json& value) {
  ordered_json* node = &patch;
  std::size_t start = 0;
  for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1) {
    node = &(*node)[key.substr(start, dot - start)];
  }
  (*node)[key.substr(start)] = value;
}

}  // namespace

fs::path manifest_path(const fs::path& output) {
  fs::path p = output;
  p += ".manifest.json";
  return p;
}

ordered_json default_config() {
  ordered_json c;
  c["target_pair"] = "USDCNY";
  c["split_date"] = nullptr;
  c["split_fraction"] = 0.75;
  c["profile"] = "desk";
  c["synth"] = synth::SynthConfig{}.to_json();
  c["features"] = {{"norm_window", 60}, {"ar_order", 5}, {"ar_train_end", 250}, {"a_max", 90}};
  c["labels"] = {{"kind", "optimal"}};
  c["model"] = ordered_json::object();
  c["training"] = training::TrainConfig{}.to_json();
  c["backtest"] = {{"policy", "model"}, {"momentum_lookback", 90}};
  c["explain"] = {{"mode", "label"}, {"class", -1}, {"top_k", 6}, {"max_samples", 256}};
  c["paths"] = {{"spot", ""}, {"ndf", ""}, {"panel", ""}, {"labels", ""}, {"model", ""}};
  return c;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"NDF tenor selection pipeline", "wattnet"};
  app.require_subcommand(1, 1);
  std::string config_file, out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  app.add_option("--config", config_file, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "seed for synthesis and training");
  app.add_option("--out-dir", out_dir, "directory for every output");
  app.add_option("--set", sets, "override a config value, e.g. training.max_epochs=50 (JSON values)");
  app.set_version_flag("--version", kVersion);

  ordered_json flags = ordered_json::object();
  auto flag = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help,
                  bool numeric) {
    sub->add_option_function<std::string>(
        name,
        [&flags, key, numeric](const std::string& v) {
          if (!numeric) return set_override(flags, key, v);
          try {
            set_override(flags, key, json::parse(v));
          } catch (const json::exception&) {
            throw ConfigError("--" + key + ": expected a number, got '" + v + "'");
          }
        },
        help);
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic spot + NDF market");
  flag(synth, "--days", "synth.days", "business days", true);
  flag(synth, "--pairs", "synth.n_pairs", "number of currency pairs", true);
  flag(synth, "--vol", "synth.vol", "daily log volatility", true);
  auto* ingest_cmd = app.add_subcommand("ingest", "validate and align spot and NDF files");
  flag(ingest_cmd, "--spot", "paths.spot", "spot CSV", false);
  flag(ingest_cmd, "--ndf", "paths.ndf", "NDF record CSV", false);
  flag(ingest_cmd, "--pair", "target_pair", "target currency pair", false);
  auto* features = app.add_subcommand("features", "indicators, volume cubes and normalized panel");
  flag(features, "--window", "features.norm_window", "rolling normalization window", true);
  auto* label = app.add_subcommand("label", "tenor labels for the target pair");
  flag(label, "--kind", "labels.kind", "optimal, expert or oracle", false);
  auto* train = app.add_subcommand("train", "fit the model on windows before the split date");
  flag(train, "--epochs", "training.max_epochs", "maximum epochs", true);
  flag(train, "--profile", "profile", "desk or full", false);
  flag(train, "--split-date", "split_date", "first test date", false);
  auto* bt = app.add_subcommand("backtest", "score a policy on the test period");
  flag(bt, "--policy", "backtest.policy", "model, optimal, oracle, expert, momentum1, momentum90", false);
  flag(bt, "--split-date", "split_date", "first test date", false);
  auto* ex = app.add_subcommand("explain", "input-gradient feature importance");
  flag(ex, "--class", "explain.class", "target class (-1: most frequent)", true);
  flag(ex, "--mode", "explain.mode", "label or pred", false);
  flag(ex, "--top-k", "explain.top_k", "features listed", true);
  auto* lat = app.add_subcommand("export-latents", "final-block latent vectors as CSV");
  for (auto* sub : {train, bt, ex, lat}) {
    flag(sub, "--panel", "paths.panel", "panel CSV", false);
    flag(sub, "--labels", "paths.labels", "labels CSV", false);
  }
  for (auto* sub : {bt, ex, lat}) flag(sub, "--model", "paths.model", "model checkpoint", false);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorCategory::config);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  }

  try {
    Context ctx;
    ctx.out = &out;
    ctx.out_dir = out_dir;
    ctx.command = app.get_subcommands().front()->get_name();
    ctx.config = default_config();
    if (!config_file.empty()) {
      ordered_json file;
      try {
        file = ordered_json::parse(io::read_file(config_file));
      } catch (const json::exception& e) {
        throw ConfigError(config_file + ": " + e.what());
      }
      if (!file.is_object()) throw ConfigError(config_file + ": top level must be an object");
      ctx.config.merge_patch(file);
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
      json v;
      try {
        v = json::parse(s.substr(eq + 1));
      } catch (const json::exception&) {
        v = s.substr(eq + 1);
      }
      set_override(flags, s.substr(0, eq), v);
    }
    if (seed) {
      set_override(flags, "synth.seed", *seed);
      set_override(flags, "training.seed", *seed);
    }
    ctx.config.merge_patch(flags);
    // merge_patch drops null values; keep the key present
    if (!ctx.config.contains("split_date")) ctx.config["split_date"] = nullptr;
    validate_config(ctx.config);

    static const std::map<std::string, void (*)(Context&)> kCommands = {
        {"synth", cmd_synth},   {"ingest", cmd_ingest},     {"features", cmd_features},
        {"label", cmd_label},   {"train", cmd_train},       {"backtest", cmd_backtest},
        {"explain", cmd_explain}, {"export-latents", cmd_export_latents}};
    kCommands.at(ctx.command)(ctx);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return static_cast<int>(ErrorCategory::compute);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorCategory::io);
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorCategory::config);
  }
}

}  // namespace wattnet::cli
