#include <chrono>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "support.hpp"
#include "wattnet/checkpoint.hpp"
#include "wattnet/errors.hpp"
#include "wattnet/wattnet.hpp"

using namespace wattnet;
using namespace wattnet::ad;
using namespace wattnet::model;
using testing::random_vector;

namespace {

WattNetConfig tiny() {
  WattNetConfig c;
  c.input_width = 8;
  c.compressed_width = 6;
  c.n_blocks = 2;
  c.kernel_size = 2;
  c.dilation_schedule = {1, 2};
  c.d_k = 4;
  c.head_hidden = 10;
  c.n_classes = 5;
  c.window_len = 12;
  return c;
}

Var random_batch(Rng& rng, const WattNetConfig& c, std::size_t n) {
  return Var::constant({n, static_cast<std::size_t>(c.window_len), static_cast<std::size_t>(c.input_width)},
                       random_vector(rng, n * c.window_len * c.input_width, -2.0, 2.0));
}

void zero_all(ModelParams& p) {
  for (auto& [_, v] : p.named()) {
    Var t = v;
    std::fill(t.mutable_value().begin(), t.mutable_value().end(), 0.0);
  }
}

}  // namespace

TEST_CASE("T progression follows T' = T - k*d") {
  CHECK(WattNetConfig::full_scale().t_progression() == std::vector<int>{30, 28, 24, 22, 18, 16, 12, 10, 6});
  CHECK(WattNetConfig::desk(128).t_progression() == std::vector<int>{30, 26, 18});

  WattNetConfig literal = WattNetConfig::full_scale();
  literal.dilation_schedule = {2, 4, 2, 4, 2, 4, 2, 4};
  CHECK_THROWS_AS(literal.validate(), ConfigError);
  CHECK_THROWS_AS(init_params(literal, 1), ConfigError);
  literal.dilation_schedule = {2, 4, 8, 16, 2, 4, 8, 16};
  CHECK_THROWS_AS(literal.validate(), ConfigError);

  WattNetConfig c = tiny();
  c.dilation_schedule = {1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("config json round trip and unknown keys") {
  const WattNetConfig c = WattNetConfig::desk(77);
  const WattNetConfig back = WattNetConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK_THROWS_AS(WattNetConfig::from_json(nlohmann::json{{"n_block", 2}}), ConfigError);
  CHECK_THROWS_AS(WattNetConfig::from_json(nlohmann::json{{"d_k", "x"}}), ConfigError);
}

TEST_CASE("init is deterministic, bounded and matches the closed-form count") {
  for (const WattNetConfig& c : {tiny(), WattNetConfig::desk(40), WattNetConfig::full_scale()}) {
    const ModelParams a = init_params(c, 42), b = init_params(c, 42);
    CHECK(a.count() == parameter_count(c));
    const auto na = a.named(), nb = b.named();
    REQUIRE(na.size() == nb.size());
    for (std::size_t i = 0; i < na.size(); ++i) {
      CHECK(na[i].first == nb[i].first);
      for (std::size_t j = 0; j < na[i].second.size(); ++j) {
        const double v = na[i].second.value()[j];
        CHECK(std::bit_cast<std::uint64_t>(v) == std::bit_cast<std::uint64_t>(nb[i].second.value()[j]));
        CHECK(std::isfinite(v));
        CHECK(std::abs(v) <= 1.0);
      }
    }
  }
  CHECK(parameter_count(WattNetConfig::full_scale()) ==
        1123 * 90 + 90 + 8 * (2 * 90 * 2 + 2 * 16 * 16 + 3 * 16) + 540 * 512 + 512 + 512 * 91 + 91);
  const auto a = init_params(tiny(), 1), b = init_params(tiny(), 2);
  CHECK(a.cmp_w.value()[0] != b.cmp_w.value()[0]);
}

TEST_CASE("forward shapes") {
  Rng rng(1);
  const WattNetConfig c = tiny();
  const ModelParams p = init_params(c, 3);
  const Var x = random_batch(rng, c, 4);
  CHECK(latent(p, x).shape() == Shape{4, 6, 6});
  CHECK(forward(p, x).shape() == Shape{4, 5});
  CHECK_THROWS_AS(forward(p, Var::constant({1, 11, 8}, std::vector<double>(88))), ShapeError);
  CHECK_THROWS_AS(forward(p, Var::constant({1, 12, 7}, std::vector<double>(84))), ShapeError);
}

TEST_CASE("full-scale batch produces [32, 91] logits") {
  const WattNetConfig c = WattNetConfig::full_scale();
  const ModelParams p = init_params(c, 5);
  CHECK(p.cmp_w.shape() == Shape{1123, 90});
  CHECK(p.head_w1.shape() == Shape{6 * 90, 512});
  CHECK(p.head_w2.shape() == Shape{512, 91});
  Rng rng(2);
  const Var x = random_batch(rng, c, 32);
  const Var z = latent(p, x);
  CHECK(z.shape() == Shape{32, 6, 90});
  CHECK(forward(p, x).shape() == Shape{32, 91});
}

TEST_CASE("single-sample logits equal the batch row bit for bit") {
  Rng rng(3);
  const WattNetConfig c = tiny();
  const ModelParams p = init_params(c, 4);
  const Var batch = random_batch(rng, c, 8);
  const Var all = forward(p, batch);
  const std::size_t per = c.window_len * c.input_width;
  for (std::size_t i = 0; i < 8; ++i) {
    const auto w = batch.value().subspan(i * per, per);
    const Var one = forward(p, Var::constant({1, 12, 8}, std::vector<double>(w.begin(), w.end())));
    for (std::size_t j = 0; j < 5; ++j) CHECK(one.value()[j] == all.value()[i * 5 + j]);
  }
  const Var again = forward(p, batch);
  for (std::size_t j = 0; j < all.size(); ++j) CHECK(again.value()[j] == all.value()[j]);
}

TEST_CASE("zero input and zero parameters give a latent of 0.5") {
  const WattNetConfig c = tiny();
  ModelParams p = init_params(c, 1);
  zero_all(p);
  const Var z = latent(p, Var::constant({2, 12, 8}, std::vector<double>(2 * 12 * 8, 0.0)));
  for (double v : z.value()) CHECK(v == 0.5);
}

TEST_CASE("residual attention block limits") {
  Rng rng(6);
  Var z = testing::random_param(rng, {1, 3, 4});
  AttentionWeights w{Var::parameter({2}, {0, 0}), Var::parameter({2}, {1, 1}), Var::parameter({2, 2}, {0, 0, 0, 0}),
                     Var::parameter({2, 2}, {0, 0, 0, 0}), Var::parameter({2}, {-500, -500})};
  // every value is -1000, so sigmoid saturates to 0
  const Var y = residual_attention_block(z, w);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(y.value()[i] - z.value()[i]) < 1e-300);

  Var zero = Var::constant({1, 3, 4}, std::vector<double>(12, 0.0));
  AttentionWeights wz{Var::parameter({2}, {0.3, -0.2}), Var::parameter({2}, {0.1, 0.4}),
                      Var::parameter({2, 2}, {0, 0, 0, 0}), Var::parameter({2, 2}, {0, 0, 0, 0}),
                      Var::parameter({2}, {0, 0})};
  const Var h = residual_attention_block(zero, wz);
  for (double v : h.value()) CHECK(v == 0.5);

  AttentionWeights wr{testing::random_param(rng, {3}), testing::random_param(rng, {3}),
                      testing::random_param(rng, {3, 3}), testing::random_param(rng, {3, 3}),
                      testing::random_param(rng, {3})};
  const auto r = random_vector(rng, z.size());
  std::vector<Var> params{z, wr.lift_w, wr.lift_b, wr.wq, wr.wk, wr.wv};
  GradCheckOptions o;
  o.abs_floor = 1e-4;
  CHECK(grad_check([&] { return testing::probe(residual_attention_block(z, wr), r); }, params, o).max_rel_error <
        1e-6);
}

TEST_CASE("full model gradient check on the tiny config") {
  Rng rng(7);
  const WattNetConfig c = tiny();
  const ModelParams p = init_params(c, 8);
  const Var x = random_batch(rng, c, 3);
  const std::vector<int> labels{0, 3, 4};
  std::vector<Var> params = p.tensors();
  GradCheckOptions o;
  o.max_coords = 200;
  const auto r = grad_check([&] { return softmax_cross_entropy(forward(p, x), labels); }, params, o);
  CHECK(r.coords_checked >= 200);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("permuting series with their conv weights permutes the latent exactly") {
  Rng rng(9);
  WattNetConfig c = tiny();
  c.compressed_width = 7;  // odd width exercises the vector tails
  const ModelParams p = init_params(c, 10);
  std::vector<std::size_t> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);

  ModelParams q = p.clone();
  const std::size_t m = 7, m_in = 8, k = 2;
  auto permute_rows = [&](const Var& src, Var dst, std::size_t width) {
    for (std::size_t s = 0; s < m; ++s)
      for (std::size_t j = 0; j < width; ++j) dst.mutable_value()[s * width + j] = src.value()[perm[s] * width + j];
  };
  for (std::size_t i = 0; i < m_in; ++i)
    for (std::size_t s = 0; s < m; ++s) q.cmp_w.mutable_value()[i * m + s] = p.cmp_w.value()[i * m + perm[s]];
  permute_rows(p.cmp_b, q.cmp_b, 1);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    permute_rows(p.blocks[b].conv_a, q.blocks[b].conv_a, k);
    permute_rows(p.blocks[b].conv_b, q.blocks[b].conv_b, k);
  }
  const Var x = random_batch(rng, c, 3);
  const Var z0 = latent(p, x), z1 = latent(q, x);
  const std::size_t rows = z0.size() / m;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t s = 0; s < m; ++s)
      CHECK(std::bit_cast<std::uint64_t>(z1.value()[r * m + s]) ==
            std::bit_cast<std::uint64_t>(z0.value()[r * m + perm[s]]));
}

TEST_CASE("receptive field is bounded by the summed k*d lags") {
  Rng rng(11);
  WattNetConfig c = tiny();
  c.window_len = 16;
  c.dilation_schedule = {1, 2};  // 16 -> 14 -> 10
  const ModelParams p = init_params(c, 12);
  const Var x = random_batch(rng, c, 1);
  const Var z0 = latent(p, x);
  const std::size_t m = 6, t_final = 10;
  // latent position t' corresponds to input time t' + 6 and depends on inputs
  // no further back than 6 steps; perturbing time u only reaches t' + 6 >= u.
  for (std::size_t u = 0; u < 16; ++u) {
    std::vector<double> xv(x.value().begin(), x.value().end());
    for (std::size_t j = 0; j < 8; ++j) xv[u * 8 + j] += 0.5;
    const Var z1 = latent(p, Var::constant(x.shape(), xv));
    for (std::size_t t = 0; t < t_final; ++t) {
      const std::size_t input_t = t + 6;
      bool changed = false;
      for (std::size_t s = 0; s < m; ++s) changed = changed || z1.value()[t * m + s] != z0.value()[t * m + s];
      if (u > input_t || input_t - u > 6) CHECK_FALSE(changed);
    }
  }
}

TEST_CASE("argmax prefers the smaller index on ties") {
  CHECK(argmax(std::vector<double>{0, 0, 0, 0, 0, 9, 0}) == 5);
  CHECK(argmax(std::vector<double>{0, 0, 0, 4, 0, 0, 0, 4}) == 3);
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    auto l = random_vector(rng, 91, -5, 5);
    double mx = *std::max_element(l.begin(), l.end()), z = 0.0;
    std::vector<double> sm(91);
    for (std::size_t j = 0; j < 91; ++j) z += sm[j] = std::exp(l[j] - mx);
    for (double& v : sm) v /= z;
    CHECK(argmax(sm) == argmax(l));
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto dir = std::filesystem::temp_directory_path() / "wattnet_test_ckpt";
  const ModelParams p = init_params(tiny(), 21);
  save_model(dir / "m.ckpt", p);
  const ModelParams q = load_model(dir / "m.ckpt");
  CHECK(q.config.to_json() == p.config.to_json());
  const auto a = p.named(), b = q.named();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].second.size(); ++j)
      CHECK(std::bit_cast<std::uint64_t>(a[i].second.value()[j]) ==
            std::bit_cast<std::uint64_t>(b[i].second.value()[j]));

  checkpoint::Contents c;
  c.tensors.push_back({"odd", {2}, {-0.0, std::numeric_limits<double>::denorm_min()}});
  const auto d = checkpoint::decode(checkpoint::encode(c));
  CHECK(std::signbit(d.get("odd").values[0]));
  CHECK(d.get("odd").values[1] == std::numeric_limits<double>::denorm_min());
  CHECK_THROWS_AS(checkpoint::decode("not a checkpoint at all"), ParseError);
  std::string truncated = checkpoint::encode(c);
  truncated.pop_back();
  CHECK_THROWS_AS(checkpoint::decode(truncated), ParseError);
  std::filesystem::remove_all(dir);
}
