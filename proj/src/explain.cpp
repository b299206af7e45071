#include "wattnet/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wattnet/errors.hpp"
#include "wattnet/io.hpp"

namespace wattnet::explain {

using ad::Var;

nlohmann::ordered_json GradReport::to_json(std::size_t top_k) const {
  nlohmann::ordered_json j;
  j["target_class"] = target_class;
  j["samples"] = samples;
  auto& top = j["top"] = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < std::min(top_k, ranking.size()); ++r)
    top.push_back({{"rank", r + 1}, {"feature", features[ranking[r]]}, {"importance", importance[ranking[r]]}});
  auto& all = j["importance"] = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < features.size(); ++c) all[features[c]] = importance[c];
  return j;
}

GradReport input_gradients(const model::ModelParams& params, const labels::WindowedDataset& ds,
                           std::span<const std::size_t> idx, int target_class, double loss_scale) {
  if (idx.empty()) throw ValidationError("input gradients need at least one sample");
  if (target_class < 0 || target_class >= params.config.n_classes)
    throw ValidationError("target class " + std::to_string(target_class) + " outside the head");
  if (!(loss_scale > 0.0)) throw ConfigError("loss scale must be positive");
  const std::size_t t = ds.t_len, m = ds.width();
  GradReport rep;
  rep.target_class = target_class;
  rep.samples = idx.size();
  for (const auto& c : ds.panel->columns) rep.features.push_back(c.name);
  rep.importance.assign(m, 0.0);

  constexpr std::size_t kChunk = 64;
  for (std::size_t s = 0; s < idx.size(); s += kChunk) {
    const std::span<const std::size_t> part = idx.subspan(s, std::min(kChunk, idx.size() - s));
    const Var batch = model::make_batch(ds, part);
    Var x = Var::parameter(batch.shape(), std::vector<double>(batch.value().begin(), batch.value().end()));
    // Samples do not interact, so the gradient of the summed loss holds each
    // sample's own input gradient.
    const std::vector<int> target(part.size(), target_class);
    const Var loss =
        ad::scale(ad::softmax_cross_entropy(model::forward(params, x), target, ad::Reduction::sum), loss_scale);
    ad::backward(loss);
    const auto g = x.grad();
    for (std::size_t i = 0; i < part.size(); ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        if (!g.empty())
          for (std::size_t r = 0; r < t; ++r) acc += g[(i * t + r) * m + j];
        rep.importance[j] += std::abs(acc) / static_cast<double>(t);
      }
  }
  for (double& v : rep.importance) v /= static_cast<double>(idx.size());
  rep.ranking.resize(m);
  std::iota(rep.ranking.begin(), rep.ranking.end(), 0);
  std::stable_sort(rep.ranking.begin(), rep.ranking.end(),
                   [&](std::size_t a, std::size_t b) { return rep.importance[a] > rep.importance[b]; });
  return rep;
}

std::vector<std::size_t> samples_with_label(const labels::WindowedDataset& ds, int cls) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.samples[i].label == cls) out.push_back(i);
  return out;
}

std::vector<std::size_t> samples_predicted_as(const model::ModelParams& params, const labels::WindowedDataset& ds,
                                              int cls) {
  const auto pred = model::predict_all(params, ds);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == cls) out.push_back(i);
  return out;
}

double pearson_corr(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("correlation of series with different lengths");
  if (x.size() < 2) throw ValidationError("correlation needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw ValidationError("correlation with a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::string export_latents(const model::ModelParams& params, const labels::WindowedDataset& ds, std::size_t chunk) {
  const std::size_t d = static_cast<std::size_t>(params.config.final_t()) * params.config.compressed_width;
  const auto c = static_cast<std::size_t>(params.config.n_classes);
  std::string out = "sample_date,pred,label";
  for (std::size_t i = 0; i < d; ++i) out += ",z_" + std::to_string(i);
  out += "\n";
  for (std::size_t s = 0; s < ds.size(); s += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = s; i < std::min(ds.size(), s + chunk); ++i) idx.push_back(i);
    const Var batch = model::make_batch(ds, idx);
    const Var z = model::latent(params, batch);
    const Var flat = ad::reshape(z, {idx.size(), d});
    const Var logits =
        ad::dense(ad::tanh(ad::dense(flat, params.head_w1, params.head_b1)), params.head_w2, params.head_b2);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto& smp = ds.samples[idx[r]];
      out += smp.date.iso() + "," + std::to_string(model::argmax(logits.value().subspan(r * c, c))) + "," +
             std::to_string(smp.label);
      for (std::size_t i = 0; i < d; ++i) out += "," + io::format_double17(z.value()[r * d + i]);
      out += "\n";
    }
  }
  return out;
}

indicators::Series volatility_context(std::span<const double> x, int window) {
  return indicators::rolling_std(x, window);
}

}  // namespace wattnet::explain
