#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wattnet/indicators.hpp"
#include "wattnet/labels.hpp"
#include "wattnet/wattnet.hpp"

namespace wattnet::explain {

struct GradReport {
  std::vector<std::string> features;
  std::vector<double> importance;   // G_j >= 0, one per input column
  std::vector<std::size_t> ranking; // column indices, descending importance, ties by index
  int target_class = 0;
  std::size_t samples = 0;

  nlohmann::ordered_json to_json(std::size_t top_k = 6) const;
};

// G_j = (1/T) |sum_t dL/dx_jt| of the cross-entropy against target_class,
// computed per sample and averaged over the samples in `idx`. loss_scale
// multiplies the loss before differentiation.
GradReport input_gradients(const model::ModelParams& params, const labels::WindowedDataset& ds,
                           std::span<const std::size_t> idx, int target_class, double loss_scale = 1.0);

// Samples whose label (or predicted class) equals `cls`.
std::vector<std::size_t> samples_with_label(const labels::WindowedDataset& ds, int cls);
std::vector<std::size_t> samples_predicted_as(const model::ModelParams& params, const labels::WindowedDataset& ds,
                                              int cls);

// Product-moment correlation; ValidationError on length < 2, mismatched
// lengths or a constant input.
double pearson_corr(std::span<const double> x, std::span<const double> y);

// `sample_date,pred,label,z_0,...,z_{D-1}` with 17 significant digits.
std::string export_latents(const model::ModelParams& params, const labels::WindowedDataset& ds,
                           std::size_t chunk = 64);

// 20-day rolling standard deviation.
indicators::Series volatility_context(std::span<const double> x, int window = 20);

}  // namespace wattnet::explain
