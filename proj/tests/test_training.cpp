#include <cmath>
#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "wattnet/errors.hpp"
#include "wattnet/training.hpp"

using namespace wattnet;
using namespace wattnet::training;
using ad::Var;

namespace {

model::WattNetConfig tiny(int classes) {
  model::WattNetConfig c;
  c.input_width = 4;
  c.compressed_width = 5;
  c.n_blocks = 2;
  c.dilation_schedule = {1, 2};
  c.d_k = 4;
  c.head_hidden = 16;
  c.n_classes = classes;
  c.window_len = 12;
  return c;
}

// Non-overlapping windows; class c raises feature c across the window.
labels::WindowedDataset separable(std::size_t n, int classes, std::uint64_t seed) {
  Rng rng(seed);
  auto panel = std::make_shared<ingest::Panel>();
  const std::size_t t = 12, w = 4;
  for (std::size_t j = 0; j < w; ++j) panel->columns.push_back({"F" + std::to_string(j), ingest::ColumnGroup::spot});
  labels::WindowedDataset ds;
  ds.t_len = t;
  const Date start = Date::from_ymd(2015, 1, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
    for (std::size_t r = 0; r < t; ++r) {
      panel->dates.push_back(start + static_cast<int>(i * t + r));
      for (std::size_t j = 0; j < w; ++j)
        panel->values.push_back(0.3 * rng.normal() + (static_cast<int>(j) == label ? 1.0 : 0.0));
    }
    ds.samples.push_back({i * t + t - 1, label, panel->dates.back()});
  }
  ds.panel = panel;
  return ds;
}

}  // namespace

TEST_CASE("cosine schedule endpoints, midpoint and monotonicity") {
  CHECK(std::abs(cosine_lr(0, 1000, 6e-4, 3e-4) - 6e-4) < 1e-12);
  CHECK(std::abs(cosine_lr(1000, 1000, 6e-4, 3e-4) - 3e-4) < 1e-12);
  CHECK(std::abs(cosine_lr(500, 1000, 6e-4, 3e-4) - 4.5e-4) < 1e-12);
  double prev = 1.0;
  for (std::size_t s = 0; s <= 997; ++s) {
    const double lr = cosine_lr(s, 997, 6e-4, 3e-4);
    CHECK(lr <= prev);
    CHECK(lr >= 3e-4);
    CHECK(lr <= 6e-4);
    prev = lr;
  }
  CHECK_THROWS_AS(cosine_lr(0, 0, 6e-4, 3e-4), ConfigError);
  CHECK_THROWS_AS(cosine_lr(11, 10, 6e-4, 3e-4), ValidationError);
}

TEST_CASE("adam first step, fixed point and quadratic convergence") {
  TrainConfig cfg;
  Var p = Var::parameter({1}, {0.0});
  std::vector<Var> ps{p};
  AdamState st;
  ad::backward(ad::sum(p));  // grad 1
  adam_step(ps, st, 0.1, cfg);
  CHECK(std::abs(p.value()[0] + 0.1) < 1e-8);

  Var q = Var::parameter({3}, {1.0, -2.0, 0.5});
  std::vector<Var> qs{q};
  AdamState sq;
  for (int i = 0; i < 50; ++i) {
    q.zero_grad();
    ad::backward(ad::sum(ad::scale(q, 0.0)));
    adam_step(qs, sq, 0.1, cfg);
  }
  CHECK(q.value()[0] == 1.0);
  CHECK(q.value()[1] == -2.0);
  CHECK(q.value()[2] == 0.5);

  Var r = Var::parameter({1}, {0.0});
  std::vector<Var> rs{r};
  AdamState sr;
  for (int i = 0; i < 2000; ++i) {
    r.zero_grad();
    const Var d = ad::add(r, Var::constant({1}, {-3.0}));
    ad::backward(ad::sum(ad::mul(d, d)));
    adam_step(rs, sr, 0.05, cfg);
  }
  CHECK(std::abs(r.value()[0] - 3.0) < 1e-3);
}

TEST_CASE("adam rejects non-finite gradients without updating") {
  TrainConfig cfg;
  Var p = Var::parameter({2}, {1.0, 2.0});
  std::vector<Var> ps{p};
  AdamState st;
  ad::backward(ad::sum(ad::mul(p, Var::constant({2}, {1.0, std::nan("")}))));
  CHECK_THROWS_AS(adam_step(ps, st, 0.1, cfg), ComputeError);
  CHECK(p.value()[0] == 1.0);
  CHECK(st.step == 0);
}

TEST_CASE("train config validation and json") {
  TrainConfig c;
  c.lr_end = 7e-4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const TrainConfig d = TrainConfig::from_json(TrainConfig{}.to_json());
  CHECK(d.to_json() == TrainConfig{}.to_json());
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"learning_rate", 1}}), ConfigError);
}

TEST_CASE("overfits a small separable dataset") {
  const auto ds = separable(60, 3, 1);
  TrainConfig cfg;
  cfg.max_epochs = 500;
  cfg.seed = 3;
  cfg.lr_start = 1e-2;
  cfg.lr_end = 1e-3;
  const auto res = train(tiny(3), ds, cfg);
  const Evaluation ev = evaluate(res.params, ds);
  CHECK(ev.loss < 0.05);
  CHECK(ev.accuracy > 95.0);
  CHECK(res.report.best_loss == *std::min_element(res.report.epoch_loss.begin(), res.report.epoch_loss.end()));
  for (double l : res.report.epoch_loss) CHECK(std::isfinite(l));
}

TEST_CASE("single sample: loss falls monotonically over the first 10 steps") {
  const auto ds = separable(1, 3, 2);
  const model::WattNetConfig mc = tiny(3);
  const model::ModelParams p = model::init_params(mc, 4);
  std::vector<Var> ts = p.tensors();
  TrainConfig cfg;
  AdamState st;
  const std::vector<std::size_t> idx{0};
  const std::vector<int> lab{ds.samples[0].label};
  double prev = INFINITY;
  for (int step = 0; step < 10; ++step) {
    for (Var& t : ts) t.zero_grad();
    const Var loss = ad::softmax_cross_entropy(model::forward(p, model::make_batch(ds, idx)), lab);
    CHECK(loss.item() < prev);
    prev = loss.item();
    ad::backward(loss);
    adam_step(ts, st, 1e-3, cfg);
  }
}

TEST_CASE("training is deterministic and early stopping keeps the best") {
  const auto ds = separable(40, 3, 5);
  TrainConfig cfg;
  cfg.max_epochs = 40;
  cfg.early_stop_patience = 3;
  cfg.early_stop_min_delta = 0.05;
  cfg.seed = 9;
  std::ostringstream log1, log2;
  const auto a = train(tiny(3), ds, cfg, std::nullopt, &log1);
  const auto b = train(tiny(3), ds, cfg, std::nullopt, &log2);
  CHECK(a.report.to_json().dump() == b.report.to_json().dump());
  CHECK(log1.str() == log2.str());
  CHECK(a.report.reason == StopReason::early_stop);
  CHECK(a.report.epochs_run < 40);
  CHECK(a.report.epoch_loss[static_cast<std::size_t>(a.report.best_epoch - 1)] == a.report.best_loss);
  for (double l : a.report.epoch_loss) CHECK(l >= a.report.best_loss);
  const auto pa = a.params.named(), pb = b.params.named();
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i].second.size(); ++j) CHECK(pa[i].second.value()[j] == pb[i].second.value()[j]);
  CHECK_FALSE(a.report.to_json().contains("wall_clock_seconds"));
  CHECK(a.report.to_json(true).contains("wall_clock_seconds"));
}

TEST_CASE("date fence and dataset checks") {
  const auto ds = separable(10, 3, 6);
  TrainConfig cfg;
  cfg.max_epochs = 1;
  CHECK_THROWS_AS(train(tiny(3), ds, cfg, ds.samples[5].date), ValidationError);
  CHECK_NOTHROW(train(tiny(3), ds, cfg, ds.samples[9].date + 1));
  CHECK_THROWS_AS(train(tiny(2), ds, cfg), ValidationError);
  labels::WindowedDataset empty = ds;
  empty.samples.clear();
  CHECK_THROWS_AS(train(tiny(3), empty, cfg), ValidationError);
}

TEST_CASE("divergence stops training and reports it") {
  const auto ds = separable(10, 3, 7);
  TrainConfig cfg;
  cfg.max_epochs = 5;
  cfg.lr_start = cfg.lr_end = 1e300;
  const auto res = train(tiny(3), ds, cfg);
  CHECK(res.report.reason == StopReason::diverged);
  CHECK_FALSE(res.report.diagnostic.empty());
  for (auto& [_, v] : res.params.named())
    for (double x : v.value()) CHECK(std::isfinite(x));
}
