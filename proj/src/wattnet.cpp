#include "wattnet/wattnet.hpp"

#include <cmath>

#include "wattnet/checkpoint.hpp"
#include "wattnet/errors.hpp"
#include "wattnet/rng.hpp"

namespace wattnet::model {

using ad::Shape;
using ad::Var;

WattNetConfig WattNetConfig::full_scale() { return WattNetConfig{}; }

WattNetConfig WattNetConfig::desk(int input_width) {
  WattNetConfig c;
  c.input_width = input_width;
  c.n_blocks = 2;
  c.dilation_schedule = {2, 4};
  return c;
}

std::vector<int> WattNetConfig::t_progression() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1, got " + std::to_string(v));
  };
  positive(input_width, "input_width");
  positive(compressed_width, "compressed_width");
  positive(kernel_size, "kernel_size");
  positive(d_k, "d_k");
  positive(head_hidden, "head_hidden");
  positive(window_len, "window_len");
  if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
  if (n_blocks < 0) throw ConfigError("n_blocks must be >= 0");
  if (dilation_schedule.size() != static_cast<std::size_t>(n_blocks))
    throw ConfigError("dilation_schedule has " + std::to_string(dilation_schedule.size()) + " entries for " +
                      std::to_string(n_blocks) + " blocks");
  std::vector<int> t{window_len};
  for (int i = 0; i < n_blocks; ++i) {
    positive(dilation_schedule[i], "dilation");
    const long next = ad::conv_output_length(t.back(), {kernel_size, dilation_schedule[i], 0});
    if (next < 1)
      throw ConfigError("block " + std::to_string(i + 1) + " (k = " + std::to_string(kernel_size) +
                        ", d = " + std::to_string(dilation_schedule[i]) + ") reduces T = " +
                        std::to_string(t.back()) + " to " + std::to_string(next));
    t.push_back(static_cast<int>(next));
  }
  return t;
}

nlohmann::ordered_json WattNetConfig::to_json() const {
  return {{"input_width", input_width},   {"compressed_width", compressed_width},
          {"n_blocks", n_blocks},         {"kernel_size", kernel_size},
          {"dilation_schedule", dilation_schedule}, {"d_k", d_k},
          {"head_hidden", head_hidden},   {"n_classes", n_classes},
          {"window_len", window_len}};
}

WattNetConfig WattNetConfig::from_json(const nlohmann::json& j) { return from_json(j, WattNetConfig{}); }

WattNetConfig WattNetConfig::from_json(const nlohmann::json& j, WattNetConfig c) {
  if (!j.is_object()) throw ConfigError("model config must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "input_width") c.input_width = v.get<int>();
      else if (key == "compressed_width") c.compressed_width = v.get<int>();
      else if (key == "n_blocks") c.n_blocks = v.get<int>();
      else if (key == "kernel_size") c.kernel_size = v.get<int>();
      else if (key == "dilation_schedule") c.dilation_schedule = v.get<std::vector<int>>();
      else if (key == "d_k") c.d_k = v.get<int>();
      else if (key == "head_hidden") c.head_hidden = v.get<int>();
      else if (key == "n_classes") c.n_classes = v.get<int>();
      else if (key == "window_len") c.window_len = v.get<int>();
      else throw ConfigError("unknown model config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::pair<std::string, Var>> ModelParams::named() const {
  std::vector<std::pair<std::string, Var>> out{{"cmp.w", cmp_w}, {"cmp.b", cmp_b}};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    const BlockParams& b = blocks[i];
    out.emplace_back(p + "conv_a", b.conv_a);
    out.emplace_back(p + "conv_b", b.conv_b);
    out.emplace_back(p + "lift_w", b.attn.lift_w);
    out.emplace_back(p + "lift_b", b.attn.lift_b);
    out.emplace_back(p + "wq", b.attn.wq);
    out.emplace_back(p + "wk", b.attn.wk);
    out.emplace_back(p + "wv", b.attn.wv);
  }
  out.emplace_back("head.w1", head_w1);
  out.emplace_back("head.b1", head_b1);
  out.emplace_back("head.w2", head_w2);
  out.emplace_back("head.b2", head_b2);
  return out;
}

std::vector<Var> ModelParams::tensors() const {
  std::vector<Var> out;
  for (auto& [_, v] : named()) out.push_back(v);
  return out;
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (auto& [_, v] : named()) n += v.size();
  return n;
}

namespace {

Var copy_param(const Var& v) {
  return Var::parameter(v.shape(), std::vector<double>(v.value().begin(), v.value().end()));
}

}  // namespace

ModelParams ModelParams::clone() const {
  ModelParams c;
  c.config = config;
  c.cmp_w = copy_param(cmp_w);
  c.cmp_b = copy_param(cmp_b);
  for (const BlockParams& b : blocks)
    c.blocks.push_back({copy_param(b.conv_a), copy_param(b.conv_b),
                        {copy_param(b.attn.lift_w), copy_param(b.attn.lift_b), copy_param(b.attn.wq),
                         copy_param(b.attn.wk), copy_param(b.attn.wv)}});
  c.head_w1 = copy_param(head_w1);
  c.head_b1 = copy_param(head_b1);
  c.head_w2 = copy_param(head_w2);
  c.head_b2 = copy_param(head_b2);
  return c;
}

std::size_t parameter_count(const WattNetConfig& c) {
  const auto t = static_cast<std::size_t>(c.final_t());
  const auto m_in = static_cast<std::size_t>(c.input_width), m = static_cast<std::size_t>(c.compressed_width);
  const auto k = static_cast<std::size_t>(c.kernel_size), dk = static_cast<std::size_t>(c.d_k);
  const auto h = static_cast<std::size_t>(c.head_hidden), cl = static_cast<std::size_t>(c.n_classes);
  const std::size_t f = t * m;
  return m_in * m + m + static_cast<std::size_t>(c.n_blocks) * (2 * m * k + 2 * dk * dk + 3 * dk) + f * h + h +
         h * cl + cl;
}

ModelParams init_params(const WattNetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  auto uniform = [&](Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(ad::numel(shape));
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Var::parameter(std::move(shape), std::move(v));
  };
  const auto m_in = static_cast<std::size_t>(config.input_width), m = static_cast<std::size_t>(config.compressed_width);
  const auto k = static_cast<std::size_t>(config.kernel_size), dk = static_cast<std::size_t>(config.d_k);
  const auto h = static_cast<std::size_t>(config.head_hidden), cl = static_cast<std::size_t>(config.n_classes);
  const std::size_t f = static_cast<std::size_t>(config.final_t()) * m;

  ModelParams p;
  p.config = config;
  p.cmp_w = uniform({m_in, m}, m_in);
  p.cmp_b = uniform({m}, m_in);
  for (int i = 0; i < config.n_blocks; ++i) {
    BlockParams b;
    b.conv_a = uniform({m, k}, k);
    b.conv_b = uniform({m, k}, k);
    b.attn.lift_w = uniform({dk}, 1);
    b.attn.lift_b = uniform({dk}, 1);
    b.attn.wq = uniform({dk, dk}, dk);
    b.attn.wk = uniform({dk, dk}, dk);
    b.attn.wv = uniform({dk}, dk);
    p.blocks.push_back(std::move(b));
  }
  p.head_w1 = uniform({f, h}, f);
  p.head_b1 = uniform({h}, f);
  p.head_w2 = uniform({h, cl}, h);
  p.head_b2 = uniform({cl}, h);
  return p;
}

Var residual_attention_block(const Var& z, const ad::AttentionWeights& w) {
  return ad::add(ad::sigmoid(ad::slice_attention(z, w)), z);
}

Var watt_block(const Var& x, const BlockParams& b, int kernel_size, int dilation) {
  const ad::ConvSpec spec{kernel_size, dilation, 0};
  const Var gated =
      ad::gated_activation(ad::grouped_dilated_conv(x, b.conv_a, spec), ad::grouped_dilated_conv(x, b.conv_b, spec));
  return residual_attention_block(gated, b.attn);
}

Var latent(const ModelParams& p, const Var& batch) {
  const WattNetConfig& c = p.config;
  const Shape& s = batch.shape();
  if (s.size() != 3 || s[1] != static_cast<std::size_t>(c.window_len) ||
      s[2] != static_cast<std::size_t>(c.input_width))
    throw ShapeError("model input must be [N, " + std::to_string(c.window_len) + ", " +
                     std::to_string(c.input_width) + "], got " + ad::shape_str(s));
  Var h = ad::dense(batch, p.cmp_w, p.cmp_b);
  for (std::size_t i = 0; i < p.blocks.size(); ++i)
    h = watt_block(h, p.blocks[i], c.kernel_size, c.dilation_schedule[i]);
  return h;
}

Var forward(const ModelParams& p, const Var& batch) {
  const Var z = latent(p, batch);
  const Var flat = ad::reshape(z, {z.shape()[0], z.shape()[1] * z.shape()[2]});
  const Var hidden = ad::tanh(ad::dense(flat, p.head_w1, p.head_b1));
  return ad::dense(hidden, p.head_w2, p.head_b2);
}

int argmax(std::span<const double> logits) {
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

int predict_tenor(const ModelParams& p, std::span<const double> window) {
  const auto t = static_cast<std::size_t>(p.config.window_len), m = static_cast<std::size_t>(p.config.input_width);
  if (window.size() != t * m) throw ShapeError("window has " + std::to_string(window.size()) + " values, expected " +
                                               std::to_string(t * m));
  const Var logits = forward(p, Var::constant({1, t, m}, std::vector<double>(window.begin(), window.end())));
  return argmax(logits.value());
}

Var make_batch(const labels::WindowedDataset& ds, std::span<const std::size_t> idx) {
  const std::size_t per = ds.t_len * ds.width();
  std::vector<double> v;
  v.reserve(idx.size() * per);
  for (std::size_t i : idx) {
    const auto w = ds.window(i);
    v.insert(v.end(), w.begin(), w.end());
  }
  return Var::constant({idx.size(), ds.t_len, ds.width()}, std::move(v));
}

std::vector<int> predict_all(const ModelParams& p, const labels::WindowedDataset& ds, std::size_t chunk) {
  std::vector<int> out;
  out.reserve(ds.size());
  const auto c = static_cast<std::size_t>(p.config.n_classes);
  for (std::size_t s = 0; s < ds.size(); s += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = s; i < std::min(ds.size(), s + chunk); ++i) idx.push_back(i);
    const Var logits = forward(p, make_batch(ds, idx));
    for (std::size_t r = 0; r < idx.size(); ++r) out.push_back(argmax(logits.value().subspan(r * c, c)));
  }
  return out;
}

void save_model(const std::filesystem::path& path, const ModelParams& p) {
  checkpoint::Contents c;
  c.meta["model_config"] = p.config.to_json();
  for (auto& [name, v] : p.named())
    c.tensors.push_back({name, v.shape(), std::vector<double>(v.value().begin(), v.value().end())});
  checkpoint::save(path, c);
}

ModelParams load_model(const std::filesystem::path& path) {
  const checkpoint::Contents c = checkpoint::load(path);
  if (!c.meta.contains("model_config")) throw ValidationError(path.string() + ": checkpoint has no model_config");
  const WattNetConfig config = WattNetConfig::from_json(c.meta["model_config"]);
  ModelParams p = init_params(config, 0);
  for (auto& [name, v] : p.named()) {
    const auto& t = c.get(name);
    if (t.shape != v.shape())
      throw ValidationError(path.string() + ": tensor '" + name + "' has shape " + ad::shape_str(t.shape) +
                            ", expected " + ad::shape_str(v.shape()));
    Var var = v;
    std::copy(t.values.begin(), t.values.end(), var.mutable_value().begin());
  }
  return p;
}

}  // namespace wattnet::model
