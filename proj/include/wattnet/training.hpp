#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wattnet/date.hpp"
#include "wattnet/labels.hpp"
#include "wattnet/wattnet.hpp"

namespace wattnet::training {

struct TrainConfig {
  double lr_start = 6e-4;
  double lr_end = 3e-4;
  int batch_size = 32;
  int max_epochs = 200;
  int early_stop_patience = 20;
  double early_stop_min_delta = 1e-4;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
};

// lr_end + (lr_start - lr_end) * (1 + cos(pi * step / total)) / 2
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_start, double lr_end);

struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;
};

// One bias-corrected Adam update using each parameter's accumulated gradient
// (an empty gradient counts as zero). Throws ComputeError before touching any
// parameter if a gradient is non-finite.
void adam_step(std::vector<ad::Var>& params, AdamState& state, double lr, const TrainConfig& cfg);

enum class StopReason { max_epochs, early_stop, diverged };
std::string_view stop_reason_name(StopReason r);

struct TrainReport {
  std::vector<double> epoch_loss;  // mean minibatch loss per epoch
  int epochs_run = 0;
  int best_epoch = 0;  // 1-based
  double best_loss = 0.0;
  StopReason reason = StopReason::max_epochs;
  std::string diagnostic;
  std::string checkpoint;
  double wall_clock_seconds = 0.0;
  std::size_t samples = 0;

  // Timing is left out unless asked for, so reports stay byte-reproducible.
  nlohmann::ordered_json to_json(bool include_timing = false) const;
};

struct TrainResult {
  model::ModelParams params;  // parameters at the end of the best epoch
  TrainReport report;
};

// Throws ValidationError if the dataset is empty, a label does not fit the
// head, or (when test_start is given) any sample is dated on/after it.
TrainResult train(const model::WattNetConfig& model_config, const labels::WindowedDataset& data,
                  const TrainConfig& cfg, std::optional<Date> test_start = std::nullopt, std::ostream* log = nullptr);

// Mean cross-entropy and optimal-label accuracy (percent) of params on data.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};
Evaluation evaluate(const model::ModelParams& params, const labels::WindowedDataset& data, std::size_t chunk = 64);

}  // namespace wattnet::training
