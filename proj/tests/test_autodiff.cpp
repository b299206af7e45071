#include <cmath>
#include <numbers>

#include "doctest.h"
#include "support.hpp"
#include "wattnet/errors.hpp"

using namespace wattnet;
using namespace wattnet::ad;
using testing::probe;
using testing::random_param;
using testing::random_vector;

namespace {

// Eq-by-eq nested loops: z[t'] = sum_i w[i-1] * x[t' + k*d - i*d].
std::vector<double> conv_reference(const Var& x, const Var& w, int k, int d) {
  const std::size_t n = x.shape()[0], t = x.shape()[1], m = x.shape()[2];
  const std::size_t to = t - static_cast<std::size_t>(k * d);
  std::vector<double> y(n * to * m, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t s = 0; s < m; ++s)
      for (std::size_t tp = 0; tp < to; ++tp) {
        double acc = 0.0;
        for (int i = 1; i <= k; ++i)
          acc += w.value()[s * k + (i - 1)] * x.value()[(b * t + tp + k * d - i * d) * m + s];
        y[(b * to + tp) * m + s] = acc;
      }
  return y;
}

std::vector<double> attention_reference(const Var& z, const AttentionWeights& w) {
  const std::size_t m = z.shape()[2], slices = z.shape()[0] * z.shape()[1], dk = w.d_k();
  std::vector<double> out(z.size());
  for (std::size_t s = 0; s < slices; ++s) {
    std::vector<std::vector<double>> q(m, std::vector<double>(dk, 0.0)), k = q;
    std::vector<double> v(m, 0.0);
    for (std::size_t a = 0; a < m; ++a) {
      std::vector<double> h(dk);
      for (std::size_t i = 0; i < dk; ++i) h[i] = z.value()[s * m + a] * w.lift_w.value()[i] + w.lift_b.value()[i];
      for (std::size_t j = 0; j < dk; ++j)
        for (std::size_t i = 0; i < dk; ++i) {
          q[a][j] += h[i] * w.wq.value()[i * dk + j];
          k[a][j] += h[i] * w.wk.value()[i * dk + j];
        }
      for (std::size_t i = 0; i < dk; ++i) v[a] += h[i] * w.wv.value()[i];
    }
    for (std::size_t a = 0; a < m; ++a) {
      std::vector<double> sc(m);
      double mx = -1e300;
      for (std::size_t b = 0; b < m; ++b) {
        double dot = 0.0;
        for (std::size_t j = 0; j < dk; ++j) dot += q[a][j] * k[b][j];
        sc[b] = dot / std::sqrt(static_cast<double>(dk));
        mx = std::max(mx, sc[b]);
      }
      double zsum = 0.0, num = 0.0;
      for (std::size_t b = 0; b < m; ++b) {
        const double e = std::exp(sc[b] - mx);
        zsum += e;
        num += e * v[b];
      }
      out[s * m + a] = num / zsum;
    }
  }
  return out;
}

AttentionWeights random_attention(Rng& rng, std::size_t dk) {
  return {random_param(rng, {dk}), random_param(rng, {dk}), random_param(rng, {dk, dk}),
          random_param(rng, {dk, dk}), random_param(rng, {dk})};
}

GradCheckOptions tight() { return {}; }

}  // namespace

TEST_CASE("grad_check on a quadratic") {
  Rng rng(3);
  Var p = random_param(rng, {50});
  std::vector<Var> params{p};
  auto r = grad_check([&] { return sum(mul(p, p)); }, params);
  CHECK(r.coords_checked == 50);
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("grad_check detects a corrupted backward rule") {
  Rng rng(4);
  Var p = random_param(rng, {20});
  auto bad_square = [](const Var& a) {
    std::vector<double> v(a.value().begin(), a.value().end());
    for (double& x : v) x *= x;
    return make_op("bad_square", a.shape(), std::move(v), {a}, [](Node& n) {
      auto& g = n.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * 3.0 * n.parents[0]->value[i];
    });
  };
  std::vector<Var> params{p};
  auto r = grad_check([&] { return sum(bad_square(p)); }, params);
  CHECK(r.max_rel_error > 1e-2);
}

TEST_CASE("grad_check subsamples large parameter sets to at least 200 coordinates") {
  Rng rng(5);
  Var p = random_param(rng, {40, 30});
  std::vector<Var> params{p};
  auto r = grad_check([&] { return sum(mul(p, p)); }, params);
  CHECK(r.coords_checked == 200);
}

TEST_CASE("grad_check rejects non-finite values") {
  Var p = Var::parameter({1}, {std::numeric_limits<double>::infinity()});
  std::vector<Var> params{p};
  CHECK_THROWS_AS(grad_check([&] { return sum(p); }, params), ComputeError);
}

TEST_CASE("conv: unit weights read strictly lagged inputs") {
  Var x = Var::constant({1, 3, 1}, {1, 2, 3});
  Var w = Var::constant({1, 2}, {1, 1});
  Var y = grouped_dilated_conv(x, w, {2, 1, 0});
  REQUIRE(y.shape() == Shape{1, 1, 1});
  CHECK(y.value()[0] == 3.0);
}

TEST_CASE("conv: zero weights give zero output and zero weight gradient") {
  Rng rng(6);
  Var x = random_param(rng, {2, 9, 3});
  Var w = Var::parameter({3, 2}, std::vector<double>(6, 0.0));
  Var y = grouped_dilated_conv(x, w, {2, 2, 0});
  for (double v : y.value()) CHECK(v == 0.0);
  backward(sum(scale(y, 0.0)));
  for (double g : w.grad()) CHECK(g == 0.0);
}

TEST_CASE("conv matches nested loops and finite differences") {
  Rng rng(7);
  for (auto [k, d] : {std::pair{2, 1}, {2, 2}, {3, 2}, {1, 4}}) {
    Var x = random_param(rng, {2, 14, 5});
    Var w = random_param(rng, {5, static_cast<std::size_t>(k)});
    const ConvSpec spec{k, d, 0};
    Var y = grouped_dilated_conv(x, w, spec);
    CHECK(testing::max_abs_diff(conv_reference(x, w, k, d), y.value()) < 1e-12);
    const auto r = random_vector(rng, y.size());
    std::vector<Var> params{x, w};
    CHECK(grad_check([&] { return probe(grouped_dilated_conv(x, w, spec), r); }, params, tight()).max_rel_error <
          1e-6);
  }
}

TEST_CASE("conv never mixes series") {
  Rng rng(8);
  Var x = random_param(rng, {1, 12, 4});
  Var w = random_param(rng, {4, 2});
  const ConvSpec spec{2, 2, 0};
  Var y0 = grouped_dilated_conv(x, w, spec);
  std::vector<double> xv(x.value().begin(), x.value().end());
  for (std::size_t t = 0; t < 12; ++t) xv[t * 4 + 2] += 0.37;
  Var y1 = grouped_dilated_conv(Var::constant(x.shape(), xv), w, spec);
  for (std::size_t i = 0; i < y0.size(); ++i)
    if (i % 4 != 2) CHECK(y0.value()[i] == y1.value()[i]);
    else CHECK(y0.value()[i] != y1.value()[i]);
}

TEST_CASE("conv rejects windows too short for k*d") {
  Var x = Var::constant({1, 4, 1}, {1, 2, 3, 4});
  Var w = Var::constant({1, 2}, {1, 1});
  CHECK_THROWS_AS(grouped_dilated_conv(x, w, {2, 2, 0}), ShapeError);
  CHECK_NOTHROW(grouped_dilated_conv(x, w, {2, 1, 0}));
  CHECK_THROWS_AS(grouped_dilated_conv(x, w, {0, 1, 0}), ConfigError);
}

TEST_CASE("gated activation") {
  Rng rng(9);
  Var zb = random_param(rng, {30}, 3.0);
  Var zero = Var::constant({30}, std::vector<double>(30, 0.0));
  Var half = gated_activation(zero, zb);
  for (std::size_t i = 0; i < 30; ++i) CHECK(half.value()[i] == doctest::Approx(0.5 * std::tanh(zb.value()[i])).epsilon(1e-15));
  const Var off = gated_activation(zb, zero);
  for (double v : off.value()) CHECK(v == 0.0);

  Var za = random_param(rng, {30}, 3.0);
  const Var y = gated_activation(za, zb);
  for (double v : y.value()) CHECK(std::abs(v) < 1.0);
  const auto r = random_vector(rng, 30);
  std::vector<Var> params{za, zb};
  CHECK(grad_check([&] { return probe(gated_activation(za, zb), r); }, params, tight()).max_rel_error < 1e-6);
  CHECK_THROWS_AS(gated_activation(za, Var::constant({29}, std::vector<double>(29))), ShapeError);
}

TEST_CASE("attention with zero query/key projections averages the values") {
  Rng rng(10);
  AttentionWeights w = random_attention(rng, 4);
  w.wq = Var::parameter({4, 4}, std::vector<double>(16, 0.0));
  w.wk = Var::parameter({4, 4}, std::vector<double>(16, 0.0));
  Var z = random_param(rng, {1, 2, 5});
  Var y = slice_attention(z, w);
  for (std::size_t s = 0; s < 2; ++s) {
    double mean = 0.0;
    for (std::size_t m = 0; m < 5; ++m) {
      double v = 0.0;
      for (std::size_t i = 0; i < 4; ++i)
        v += (z.value()[s * 5 + m] * w.lift_w.value()[i] + w.lift_b.value()[i]) * w.wv.value()[i];
      mean += v / 5.0;
    }
    for (std::size_t m = 0; m < 5; ++m) CHECK(y.value()[s * 5 + m] == doctest::Approx(mean).epsilon(1e-13));
  }
}

TEST_CASE("attention over a single token returns its value") {
  Rng rng(11);
  AttentionWeights w = random_attention(rng, 3);
  Var z = random_param(rng, {2, 3, 1});
  Var y = slice_attention(z, w);
  for (std::size_t i = 0; i < z.size(); ++i) {
    double v = 0.0;
    for (std::size_t j = 0; j < 3; ++j) v += (z.value()[i] * w.lift_w.value()[j] + w.lift_b.value()[j]) * w.wv.value()[j];
    CHECK(y.value()[i] == doctest::Approx(v).epsilon(1e-14));
  }
}

TEST_CASE("attention matches the dense loop oracle and rows are distributions") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(12), dk = 1 + rng.below(8);
    AttentionWeights w = random_attention(rng, dk);
    Var z = random_param(rng, {2, 3, m}, 2.0);
    Var y = slice_attention(z, w);
    CHECK(testing::max_abs_diff(attention_reference(z, w), y.value()) < 1e-12);
    const auto a = attention_matrix(z.value().subspan(0, m), w);
    for (std::size_t r = 0; r < m; ++r) {
      double s = 0.0;
      for (std::size_t n = 0; n < m; ++n) {
        CHECK(a[r * m + n] >= 0.0);
        s += a[r * m + n];
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("attention gradients match finite differences") {
  Rng rng(13);
  AttentionWeights w = random_attention(rng, 4);
  Var z = random_param(rng, {2, 3, 6}, 1.5);
  const auto r = random_vector(rng, z.size());
  std::vector<Var> params{z, w.lift_w, w.lift_b, w.wq, w.wk, w.wv};
  CHECK(grad_check([&] { return probe(slice_attention(z, w), r); }, params, tight()).max_rel_error < 1e-6);
}

TEST_CASE("attention rejects inconsistent projections") {
  Rng rng(14);
  AttentionWeights w = random_attention(rng, 4);
  w.wq = random_param(rng, {3, 3});
  CHECK_THROWS_AS(slice_attention(random_param(rng, {1, 2, 3}), w), ShapeError);
  AttentionWeights empty{Var::parameter({0}, {}), Var::parameter({0}, {}), Var::parameter({0, 0}, {}),
                         Var::parameter({0, 0}, {}), Var::parameter({0}, {})};
  CHECK_THROWS_AS(slice_attention(random_param(rng, {1, 2, 3}), empty), ConfigError);
}

TEST_CASE("dense matches loops and finite differences") {
  Rng rng(15);
  Var x = random_param(rng, {3, 37, 7});
  Var w = random_param(rng, {7, 5});
  Var b = random_param(rng, {5});
  Var y = dense(x, w, b);
  REQUIRE(y.shape() == Shape{3, 37, 5});
  std::vector<double> ref(y.size());
  for (std::size_t r = 0; r < 3 * 37; ++r)
    for (std::size_t o = 0; o < 5; ++o) {
      double acc = b.value()[o];
      for (std::size_t i = 0; i < 7; ++i) acc += x.value()[r * 7 + i] * w.value()[i * 5 + o];
      ref[r * 5 + o] = acc;
    }
  CHECK(testing::max_abs_diff(ref, y.value()) < 1e-12);
  const auto r = random_vector(rng, y.size());
  std::vector<Var> params{x, w, b};
  GradCheckOptions o = tight();
  o.max_coords = 2000;
  CHECK(grad_check([&] { return probe(dense(x, w, b), r); }, params, o).max_rel_error < 1e-6);
  CHECK_THROWS_AS(dense(x, random_param(rng, {6, 5}), b), ShapeError);
}

TEST_CASE("cross entropy anchors and oracle") {
  Var uniform = Var::constant({4, 91}, std::vector<double>(4 * 91, 0.25));
  const std::vector<int> labels{0, 5, 90, 13};
  CHECK(std::abs(softmax_cross_entropy(uniform, labels).item() - std::log(91.0)) < 1e-9);

  std::vector<double> big(2 * 91, 0.0);
  big[7] = 1e4;
  big[91 + 3] = 1e4;
  CHECK(softmax_cross_entropy(Var::constant({2, 91}, big), std::vector<int>{7, 3}).item() < 1e-12);

  Rng rng(16);
  Var logits = random_param(rng, {6, 9}, 4.0);
  std::vector<int> lab(6);
  for (int& l : lab) l = static_cast<int>(rng.below(9));
  double ref = 0.0;
  for (std::size_t r = 0; r < 6; ++r) {
    double z = 0.0;
    for (std::size_t j = 0; j < 9; ++j) z += std::exp(logits.value()[r * 9 + j]);
    ref += -std::log(std::exp(logits.value()[r * 9 + lab[r]]) / z) / 6.0;
  }
  CHECK(std::abs(softmax_cross_entropy(logits, lab).item() - ref) < 1e-12);
  CHECK(std::abs(softmax_cross_entropy(logits, lab, Reduction::sum).item() - 6.0 * ref) < 1e-12);
  std::vector<Var> params{logits};
  CHECK(grad_check([&] { return softmax_cross_entropy(logits, lab); }, params, tight()).max_rel_error < 1e-6);

  CHECK_THROWS_AS(softmax_cross_entropy(logits, std::vector<int>{0, 1, 2, 3, 4, 9}), ValidationError);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, std::vector<int>{0}), ShapeError);
}

TEST_CASE("elementwise primitives pass gradient checks") {
  Rng rng(17);
  Var a = random_param(rng, {4, 5}, 2.0);
  Var b = random_param(rng, {4, 5}, 2.0);
  const auto r = random_vector(rng, 20);
  std::vector<Var> params{a, b};
  auto o = tight();
  CHECK(grad_check([&] { return probe(add(a, b), r); }, params, o).max_rel_error < 1e-6);
  CHECK(grad_check([&] { return probe(mul(a, b), r); }, params, o).max_rel_error < 1e-6);
  CHECK(grad_check([&] { return probe(sigmoid(scale(a, -1.5)), r); }, params, o).max_rel_error < 1e-6);
  CHECK(grad_check([&] { return probe(reshape(tanh(b), {20}), r); }, params, o).max_rel_error < 1e-6);
}

TEST_CASE("backward is deterministic and visits shared nodes once") {
  Rng rng(18);
  Var x = random_param(rng, {1, 10, 4});
  AttentionWeights w = random_attention(rng, 3);
  auto f = [&] {
    Var h = slice_attention(x, w);
    return sum(mul(h, add(h, x)));  // h used twice
  };
  backward(f());
  std::vector<double> g1(x.grad().begin(), x.grad().end());
  x.zero_grad();
  w.wq.zero_grad();
  backward(f());
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == x.grad()[i]);
  std::vector<Var> params{x, w.wq};
  CHECK(grad_check(f, params, tight()).max_rel_error < 1e-6);
}
