#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "wattnet/backtest.hpp"
#include "wattnet/errors.hpp"

using namespace wattnet;
using namespace wattnet::backtest;
using labels::TenorSet;
using testing::make_spot;
using testing::random_walk;

namespace {

// Panel over the spot calendar; backtests only read its dates.
ingest::Panel panel_for(const ingest::SpotSeries& s) {
  ingest::Panel p;
  p.dates = s.dates;
  p.columns = {{"X", ingest::ColumnGroup::spot}};
  p.values = s.rates;
  return p;
}

int brute_optimal(const std::vector<double>& y, std::size_t t, int a_max) {
  double best = 0.0;
  int arg = 0;
  for (int a = a_max; a >= 1; --a) {
    const double g = y[t + a] - y[t];
    if (g > best || (g == best && g > 0.0)) {
      best = g;
      arg = a;
    }
  }
  return arg;
}

}  // namespace

TEST_CASE("roi formula") {
  CHECK(roi(100.0, 101.0, 3) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(roi(100.0, 50.0, 0) == 0.0);
  CHECK_THROWS_AS(roi(0.0, 1.0, 1), ValidationError);
  CHECK_THROWS_AS(roi(1.0, std::nan(""), 1), ComputeError);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double xt = rng.uniform(1, 10), xa = rng.uniform(1, 10);
    // cash-settled payoff of a unit-notional forward, relative to its cost
    const double notional = 1.0, r = notional * (xa - xt);
    CHECK(std::abs(roi(xt, xa, 5) - 100.0 * r / (notional * xt)) < 1e-12);
  }
}

TEST_CASE("optimal accuracy") {
  const std::vector<int> l{1, 2, 3, 0, 5};
  CHECK(optimal_accuracy(l, l) == 100.0);
  std::vector<int> shifted = l;
  for (int& v : shifted) ++v;
  CHECK(optimal_accuracy(shifted, l) == 0.0);
  CHECK_THROWS_AS(optimal_accuracy(std::vector<int>{1}, l), ValidationError);
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> p(50), o(50);
    int hits = 0;
    for (std::size_t i = 0; i < 50; ++i) {
      p[i] = static_cast<int>(rng.below(4));
      o[i] = static_cast<int>(rng.below(4));
      hits += p[i] == o[i];
    }
    CHECK(optimal_accuracy(p, o) == 100.0 * hits / 50.0);
  }
}

TEST_CASE("non-negative accuracy") {
  const auto s = make_spot({10.0, 9.0, 13.0, 13.0});
  PolicyTrace t{"p", {s.dates[0]}, {2}, {}, {}};
  CHECK(nonneg_accuracy(t, s, {2}) == 100.0);
  t.classes = {1};
  CHECK(nonneg_accuracy(t, s, {2}) == 0.0);
  PolicyTrace zeros{"z", s.dates, {0, 0, 0, 0}, {}, {}};
  CHECK(nonneg_accuracy(zeros, s, {2}) == 100.0);
  PolicyTrace late{"l", {s.dates[3]}, {1}, {}, {}};
  CHECK_THROWS_AS(nonneg_accuracy(late, s, {2}), ComputeError);

  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto y = random_walk(rng, 40);
    const auto sp = make_spot(y);
    PolicyTrace p{"r", {}, {}, {}, {}};
    int ok = 0;
    for (std::size_t t0 = 0; t0 + 5 < 40; ++t0) {
      p.dates.push_back(sp.dates[t0]);
      const int a = static_cast<int>(rng.below(6));
      p.classes.push_back(a);
      std::vector<double> returns{0.0};
      for (int b = 1; b <= 5; ++b) returns.push_back(y[t0 + b] - y[t0]);
      ok += returns[a] >= 0.0;
    }
    CHECK(nonneg_accuracy(p, sp, {5}) == 100.0 * ok / static_cast<double>(p.size()));
  }
}

TEST_CASE("momentum-1 shifts the expert by one day") {
  labels::LabelSeries e{labels::LabelKind::expert, {}, {3, 5, 2}};
  for (int i = 0; i < 3; ++i) e.dates.push_back(Date::from_ymd(2016, 1, 4) + i);
  CHECK(momentum1(e).classes == std::vector<int>{0, 3, 5});
  labels::LabelSeries c{labels::LabelKind::expert, e.dates, {7, 7, 7}};
  CHECK(momentum1(c).classes == std::vector<int>{0, 7, 7});
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    labels::LabelSeries r{labels::LabelKind::expert, {}, {}};
    for (int i = 0; i < 30; ++i) {
      r.dates.push_back(Date::from_ymd(2016, 1, 4) + i);
      r.labels.push_back(static_cast<int>(rng.below(91)));
    }
    const auto m = momentum1(r);
    for (std::size_t i = 1; i < 30; ++i) CHECK(m.classes[i] == r.labels[i - 1]);
  }
}

TEST_CASE("momentum-90 reuses the optimal label from 90 steps back") {
  std::vector<double> up(400);
  for (std::size_t i = 0; i < 400; ++i) up[i] = 5.0 + 0.01 * static_cast<double>(i);
  const auto m = momentum90(make_spot(up), {90});
  for (std::size_t t = 0; t < 90; ++t) {
    CHECK(m.classes[t] == 0);
    CHECK(m.flagged[t]);
  }
  for (std::size_t t = 90; t < 400; ++t) CHECK(m.classes[t] == 90);

  std::vector<double> down(300);
  for (std::size_t i = 0; i < 300; ++i) down[i] = 9.0 - 0.01 * static_cast<double>(i);
  for (int c : momentum90(make_spot(down), {90}).classes) CHECK(c == 0);

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = make_spot(random_walk(rng, 300));
    const auto m90 = momentum90(s, {90});
    const auto opt = labels::optimal_labels(s, {90});
    for (std::size_t t = 90; t < 300; ++t) CHECK(m90.classes[t] == opt.labels[t - 90]);
  }
  CHECK_THROWS_AS(momentum90(make_spot(up), {90}, 60), ConfigError);
}

TEST_CASE("run_backtest: oracle, optimal and constant policies") {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = make_spot(random_walk(rng, 260));
    const auto panel = panel_for(s);
    const TenorSet ten{20};
    const Date split = s.dates[100];
    const auto opt = labels::optimal_labels(s, ten);
    const auto orc = labels::oracle_labels(s, ten);
    const auto r_opt = run_backtest(replay(opt), "optimal", panel, s, split, ten, 30);
    const auto r_orc = run_backtest(replay(orc), "oracle", panel, s, split, ten, 30);
    const auto r_zero = run_backtest([](std::size_t, Date) { return 0; }, "zero", panel, s, split, ten, 30);
    const auto r_rand = run_backtest([&](std::size_t, Date) { return static_cast<int>(rng.below(21)); }, "rand",
                                     panel, s, split, ten, 30);
    CHECK(r_opt.days.size() == 260 - 100 - 20);
    CHECK(r_opt.excluded_no_future == 20);
    CHECK(r_opt.optimal_accuracy == 100.0);
    CHECK(r_orc.nonneg_accuracy == 100.0);
    for (const auto& d : r_orc.days)
      if (d.cls > 0) CHECK(d.roi > 0.0);
    for (const auto* r : {&r_orc, &r_zero, &r_rand}) CHECK(r_opt.total_roi >= r->total_roi);
    CHECK(r_zero.total_roi == 0.0);
    CHECK(r_zero.nonneg_accuracy == 100.0);
    CHECK(r_zero.trades == 0);
    std::size_t zeros = 0;
    for (const auto& d : r_zero.days) zeros += d.optimal_label == 0;
    CHECK(r_zero.optimal_accuracy == 100.0 * zeros / static_cast<double>(r_zero.days.size()));
    for (const auto* r : {&r_opt, &r_orc, &r_zero, &r_rand}) CHECK(r->consistent());
    for (const auto& d : r_opt.days) {
      const std::size_t t = static_cast<std::size_t>(d.date - s.dates[0]);
      CHECK(d.optimal_label == brute_optimal(s.rates, t, 20));
    }
  }
}

TEST_CASE("run_backtest excludes days without window history and reports policy failures") {
  Rng rng(7);
  const auto s = make_spot(random_walk(rng, 120));
  const auto panel = panel_for(s);
  const auto r = run_backtest([](std::size_t, Date) { return 1; }, "one", panel, s, s.dates[0], {10}, 30);
  CHECK(r.excluded_no_history == 29);
  CHECK(r.days.size() == 120 - 29 - 10);
  try {
    run_backtest([](std::size_t row, Date) -> int { if (row == 50) throw std::runtime_error("boom"); return 0; }, "bad",
                 panel, s, s.dates[0], {10}, 30);
    FAIL("expected a failure");
  } catch (const ComputeError& e) {
    CHECK(std::string(e.what()).find(s.dates[50].iso()) != std::string::npos);
  }
  CHECK_THROWS_AS(run_backtest([](std::size_t, Date) { return 11; }, "wide", panel, s, s.dates[0], {10}, 30),
                  ComputeError);
}

TEST_CASE("report serialization") {
  Rng rng(8);
  const auto s = make_spot(random_walk(rng, 80));
  const auto r = run_backtest(replay(labels::optimal_labels(s, {5})), "optimal", panel_for(s), s, s.dates[40], {5}, 10);
  const std::string csv = r.to_csv();
  CHECK(csv.rfind("date,class,roi,optimal_label,nn_correct\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == r.days.size() + 1);
  const auto j = r.to_json();
  CHECK(j["days"] == r.days.size());
  CHECK(j["optimal_accuracy"] == 100.0);
}
