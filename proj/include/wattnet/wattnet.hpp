#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wattnet/autodiff.hpp"
#include "wattnet/labels.hpp"

namespace wattnet::model {

struct WattNetConfig {
  int input_width = 1123;
  int compressed_width = 90;
  int n_blocks = 8;
  int kernel_size = 2;
  // Each block shrinks T by kernel_size * dilation.
  std::vector<int> dilation_schedule{1, 2, 1, 2, 1, 2, 1, 2};
  int d_k = 16;
  int head_hidden = 512;
  int n_classes = 91;
  int window_len = 30;

  static WattNetConfig full_scale();
  // 2 blocks, dilations [2, 4], M = 90, T = 30.
  static WattNetConfig desk(int input_width);

  // T before the first block and after every block. Throws ConfigError on
  // any invalid field or if a block would leave fewer than one step.
  std::vector<int> t_progression() const;
  int final_t() const { return t_progression().back(); }
  void validate() const { (void)t_progression(); }

  nlohmann::ordered_json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static WattNetConfig from_json(const nlohmann::json& j);
  static WattNetConfig from_json(const nlohmann::json& j, WattNetConfig base);
};

struct BlockParams {
  ad::Var conv_a;  // [M, k], sigmoid branch
  ad::Var conv_b;  // [M, k], tanh branch
  ad::AttentionWeights attn;
};

struct ModelParams {
  WattNetConfig config;
  ad::Var cmp_w, cmp_b;
  std::vector<BlockParams> blocks;
  ad::Var head_w1, head_b1, head_w2, head_b2;

  // Stable order: compression, blocks in order, head.
  std::vector<std::pair<std::string, ad::Var>> named() const;
  std::vector<ad::Var> tensors() const;
  std::size_t count() const;
  ModelParams clone() const;
};

// M_in*M + M + n_blocks*(2*M*k + 2*d_k^2 + 3*d_k) + F*H + H + H*C + C with
// F = T_final * M.
std::size_t parameter_count(const WattNetConfig& c);

// Uniform in +-1/sqrt(fan_in) per tensor.
ModelParams init_params(const WattNetConfig& config, std::uint64_t seed);

// sigmoid(attention(z)) + z
ad::Var residual_attention_block(const ad::Var& z, const ad::AttentionWeights& w);
ad::Var watt_block(const ad::Var& x, const BlockParams& b, int kernel_size, int dilation);

// batch [N, T, M_in] -> [N, T_final, M]
ad::Var latent(const ModelParams& p, const ad::Var& batch);
// batch [N, T, M_in] -> logits [N, n_classes]
ad::Var forward(const ModelParams& p, const ad::Var& batch);

// Argmax, smallest index on ties.
int argmax(std::span<const double> logits);
int predict_tenor(const ModelParams& p, std::span<const double> window);

// Copies the chosen windows into one [N, T, M_in] constant tensor.
ad::Var make_batch(const labels::WindowedDataset& ds, std::span<const std::size_t> idx);
// Predicted class for every sample, evaluated in chunks.
std::vector<int> predict_all(const ModelParams& p, const labels::WindowedDataset& ds, std::size_t chunk = 64);

void save_model(const std::filesystem::path& path, const ModelParams& p);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace wattnet::model
