#include "wattnet/training.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "wattnet/errors.hpp"
#include "wattnet/rng.hpp"

namespace wattnet::training {

using ad::Var;

void TrainConfig::validate() const {
  if (!(lr_end > 0.0) || !(lr_start >= lr_end)) throw ConfigError("need lr_start >= lr_end > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
  if (early_stop_min_delta < 0.0) throw ConfigError("early_stop_min_delta must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("Adam eps must be > 0");
}

nlohmann::ordered_json TrainConfig::to_json() const {
  return {{"lr_start", lr_start},
          {"lr_end", lr_end},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"early_stop_patience", early_stop_patience},
          {"early_stop_min_delta", early_stop_min_delta},
          {"seed", seed},
          {"beta1", beta1},
          {"beta2", beta2},
          {"eps", eps}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("training config must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "lr_start") c.lr_start = v.get<double>();
      else if (key == "lr_end") c.lr_end = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "max_epochs") c.max_epochs = v.get<int>();
      else if (key == "early_stop_patience") c.early_stop_patience = v.get<int>();
      else if (key == "early_stop_min_delta") c.early_stop_min_delta = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "beta1") c.beta1 = v.get<double>();
      else if (key == "beta2") c.beta2 = v.get<double>();
      else if (key == "eps") c.eps = v.get<double>();
      else throw ConfigError("unknown training config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_start, double lr_end) {
  if (total_steps == 0) throw ConfigError("cosine schedule needs total_steps > 0");
  if (step > total_steps) throw ValidationError("step " + std::to_string(step) + " beyond schedule end");
  if (step == total_steps) return lr_end;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(std::numbers::pi * frac));
}

void adam_step(std::vector<Var>& params, AdamState& state, double lr, const TrainConfig& cfg) {
  if (state.m.empty()) {
    for (const Var& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("Adam state does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (double g : params[i].grad())
      if (!std::isfinite(g)) throw ComputeError("non-finite gradient in parameter tensor " + std::to_string(i));
    if (state.m[i].size() != params[i].size()) throw ShapeError("Adam state does not match the parameter list");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto g = params[i].grad();
    auto value = params[i].mutable_value();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      value[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
    }
  }
}

std::string_view stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::early_stop: return "early_stop";
    case StopReason::diverged: return "diverged";
  }
  return "?";
}

nlohmann::ordered_json TrainReport::to_json(bool include_timing) const {
  nlohmann::ordered_json j;
  j["epoch_loss"] = epoch_loss;
  j["epochs_run"] = epochs_run;
  j["best_epoch"] = best_epoch;
  j["best_loss"] = best_loss;
  j["stop_reason"] = stop_reason_name(reason);
  if (!diagnostic.empty()) j["diagnostic"] = diagnostic;
  j["checkpoint"] = checkpoint;
  j["samples"] = samples;
  if (include_timing) j["wall_clock_seconds"] = wall_clock_seconds;
  return j;
}

namespace {

std::vector<int> batch_labels(const labels::WindowedDataset& data, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(data.samples[i].label);
  return out;
}

}  // namespace

TrainResult train(const model::WattNetConfig& model_config, const labels::WindowedDataset& data,
                  const TrainConfig& cfg, std::optional<Date> test_start, std::ostream* log) {
  cfg.validate();
  model_config.validate();
  if (data.size() == 0) throw ValidationError("training set is empty");
  if (data.t_len != static_cast<std::size_t>(model_config.window_len) ||
      data.width() != static_cast<std::size_t>(model_config.input_width))
    throw ValidationError("dataset windows are " + std::to_string(data.t_len) + " x " + std::to_string(data.width()) +
                          ", model expects " + std::to_string(model_config.window_len) + " x " +
                          std::to_string(model_config.input_width));
  for (const auto& s : data.samples) {
    if (s.label < 0 || s.label >= model_config.n_classes)
      throw ValidationError("label " + std::to_string(s.label) + " on " + s.date.iso() + " does not fit " +
                            std::to_string(model_config.n_classes) + " classes");
    if (test_start && !(s.date < *test_start))
      throw ValidationError("date fence: training sample " + s.date.iso() + " is not before test start " +
                            test_start->iso());
  }

  const auto started = std::chrono::steady_clock::now();
  model::ModelParams params = model::init_params(model_config, cfg.seed);
  model::ModelParams best = params.clone();
  std::vector<Var> tensors = params.tensors();
  AdamState adam;
  Rng order_rng(cfg.seed ^ 0x5851f42d4c957f2dULL);

  const std::size_t n = data.size(), bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t batches = (n + bs - 1) / bs;
  const std::size_t total_steps = static_cast<std::size_t>(cfg.max_epochs) * batches;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainReport rep;
  rep.samples = n;
  rep.best_loss = std::numeric_limits<double>::infinity();
  double reference = std::numeric_limits<double>::infinity();  // last loss that counted as an improvement
  int stale = 0;
  std::size_t step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    bool diverged = false;
    for (std::size_t b = 0; b < batches && !diverged; ++b) {
      const std::span<const std::size_t> idx(order.data() + b * bs, std::min(bs, n - b * bs));
      for (Var& t : tensors) t.zero_grad();
      const Var loss = ad::softmax_cross_entropy(model::forward(params, model::make_batch(data, idx)),
                                                 batch_labels(data, idx));
      if (!std::isfinite(loss.item())) {
        diverged = true;
        rep.diagnostic = "non-finite loss in epoch " + std::to_string(epoch);
        break;
      }
      ad::backward(loss);
      try {
        adam_step(tensors, adam, cosine_lr(step, total_steps, cfg.lr_start, cfg.lr_end), cfg);
      } catch (const ComputeError& e) {
        diverged = true;
        rep.diagnostic = std::string(e.what()) + " in epoch " + std::to_string(epoch);
        break;
      }
      ++step;
      loss_sum += loss.item() * static_cast<double>(idx.size());
    }
    if (diverged) {
      rep.reason = StopReason::diverged;
      if (log) *log << "epoch " << epoch << " diverged: " << rep.diagnostic << "\n";
      break;
    }
    const double epoch_loss = loss_sum / static_cast<double>(n);
    rep.epoch_loss.push_back(epoch_loss);
    rep.epochs_run = epoch;
    if (epoch_loss < rep.best_loss) {
      rep.best_loss = epoch_loss;
      rep.best_epoch = epoch;
      best = params.clone();
    }
    if (epoch_loss < reference - cfg.early_stop_min_delta) {
      reference = epoch_loss;
      stale = 0;
    } else {
      ++stale;
    }
    if (log) {
      *log << "epoch " << epoch << " loss " << epoch_loss << " lr "
           << cosine_lr(std::min(step, total_steps), total_steps, cfg.lr_start, cfg.lr_end) << "\n";
    }
    if (stale >= cfg.early_stop_patience) {
      rep.reason = StopReason::early_stop;
      break;
    }
  }
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (rep.best_epoch == 0) rep.best_loss = std::numeric_limits<double>::quiet_NaN();
  return {std::move(best), std::move(rep)};
}

Evaluation evaluate(const model::ModelParams& params, const labels::WindowedDataset& data, std::size_t chunk) {
  if (data.size() == 0) throw ValidationError("evaluation set is empty");
  double loss = 0.0;
  std::size_t correct = 0;
  const auto c = static_cast<std::size_t>(params.config.n_classes);
  for (std::size_t s = 0; s < data.size(); s += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = s; i < std::min(data.size(), s + chunk); ++i) idx.push_back(i);
    const auto lab = batch_labels(data, idx);
    const Var logits = model::forward(params, model::make_batch(data, idx));
    loss += ad::softmax_cross_entropy(logits, lab, ad::Reduction::sum).item();
    for (std::size_t r = 0; r < idx.size(); ++r)
      if (model::argmax(logits.value().subspan(r * c, c)) == lab[r]) ++correct;
  }
  const double n = static_cast<double>(data.size());
  return {loss / n, 100.0 * static_cast<double>(correct) / n};
}

}  // namespace wattnet::training
