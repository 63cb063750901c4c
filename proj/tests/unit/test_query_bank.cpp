// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <numbers>

#include "laqd/diffcore/finite_diff.hpp"
#include "laqd/routing/query_bank.hpp"
#include "support/grad_check.hpp"

using namespace laqd;
using namespace laqd::routing;
using diff::Graph;
using diff::Tensor;
using diff::Var;
using laqd::testing::max_grad_error;
using laqd::testing::random_tensor;

namespace {

std::vector<double> flat_values(const Tensor& t) { return {t.data(), t.data() + t.size()}; }

// Loss <Q~, G> for upstream gradient G.
Var probe(Var q, const Tensor& upstream) { return diff::weighted_sum(q, flat_values(upstream)); }

}  // namespace

TEST_CASE("bank init statistics", "[query_bank]") {
  diff::Rng rng(1);
  QueryBank bank(4, 16, 64, rng);
  CHECK(bank.param().value.shape() == diff::Shape{4, 16, 64});
  double ss = 0.0, s = 0.0;
  for (double v : bank.param().value.values()) {
    s += v;
    ss += v * v;
  }
  const double n = static_cast<double>(bank.param().value.size());
  const double sd = std::sqrt(ss / n - (s / n) * (s / n));
  CHECK(sd >= 0.018);
  CHECK(sd <= 0.022);
  CHECK_THROWS_AS(QueryBank(0, 4, 4, rng), ConfigError);
}

TEST_CASE("soft mixing cases", "[query_bank][soft]") {
  diff::Rng rng(2);
  Graph g;
  Var one = g.constant(random_tensor({1, 6}, rng));
  CHECK(mix_soft(one, g.constant(Tensor::matrix(1, 1, {3.7}))).value() == one.value());

  Tensor two = random_tensor({2, 6}, rng);
  Tensor out = mix_soft(g.constant(two), g.constant(Tensor::matrix(1, 2, {0.4, 0.4}))).value();
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::fabs(out[i] - (two.at(0, i) + two.at(1, i)) / 2) <= 1e-16);
}

TEST_CASE("soft mixing gradients match finite differences", "[query_bank][soft][grad]") {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    diff::Rng rng(seed);
    Tensor bank = random_tensor({3, 8}, rng), logits = random_tensor({2, 3}, rng), up = random_tensor({2, 8}, rng);
    auto f = [&](Graph&, const std::vector<Var>& in) { return probe(mix_soft(in[0], in[1]), up); };
    CHECK(max_grad_error(f, {bank, logits}) < 1e-8);
  }
}

TEST_CASE("hard selection forward is the selected row bit for bit", "[query_bank][st]") {
  diff::Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t K = 1 + rng() % 5, B = 1 + rng() % 4, n = 1 + rng() % 12;
    Tensor bank = random_tensor({K, n}, rng), logits = random_tensor({B, K}, rng, 3.0);
    for (auto variant : {StVariant::paper, StVariant::conventional}) {
      Graph g;
      const auto k = argmax_rows(logits);
      Tensor q = select_hard_st(g.leaf(bank), g.leaf(logits), k, variant).value();
      for (std::size_t b = 0; b < B; ++b) {
        CHECK(std::memcmp(q.data() + b * n, bank.data() + k[b] * n, n * sizeof(double)) == 0);
      }
    }
  }
}

TEST_CASE("straight-through gradient for pi = (0.7, 0.3)", "[query_bank][st]") {
  diff::Rng rng(7);
  Tensor bank = random_tensor({2, 5}, rng), up = random_tensor({1, 5}, rng);
  Graph g;
  Var b = g.leaf(bank);
  Var l = g.leaf(Tensor::matrix(1, 2, {std::log(0.7), std::log(0.3)}));
  g.backward(probe(select_hard_st(b, l, {0}, StVariant::paper), up));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(std::fabs(b.grad().at(0, i) - 1.7 * up[i]) < 1e-10);
    CHECK(std::fabs(b.grad().at(1, i) - 0.3 * up[i]) < 1e-10);
  }
}

TEST_CASE("straight-through gradient identity", "[query_bank][st]") {
  diff::Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t K = 1 + rng() % 6, B = 1 + rng() % 4, n = 1 + rng() % 10;
    Tensor bank = random_tensor({K, n}, rng), logits = random_tensor({B, K}, rng, 2.0);
    Tensor up = random_tensor({B, n}, rng);
    std::vector<std::size_t> k(B);
    for (auto& x : k) x = rng() % K;  // not necessarily the argmax, as with teacher forcing
    for (auto variant : {StVariant::paper, StVariant::conventional}) {
      Graph g;
      Var bv = g.leaf(bank);
      g.backward(probe(select_hard_st(bv, g.leaf(logits), k, variant), up));
      // Oracle: explicit softmax and the (delta + pi) rule summed over samples.
      Tensor want({K, n});
      for (std::size_t s = 0; s < B; ++s) {
        double mx = -1e300, z = 0.0;
        for (std::size_t j = 0; j < K; ++j) mx = std::max(mx, logits.at(s, j));
        for (std::size_t j = 0; j < K; ++j) z += std::exp(logits.at(s, j) - mx);
        for (std::size_t j = 0; j < K; ++j) {
          const double pi = std::exp(logits.at(s, j) - mx) / z;
          const double hard = (variant == StVariant::paper && j == k[s]) ? 1.0 : 0.0;
          for (std::size_t i = 0; i < n; ++i) want.at(j, i) += (hard + pi) * up.at(s, i);
        }
      }
      CHECK(diff::max_abs_diff(bv.grad(), want) < 1e-10);
    }
  }
}

TEST_CASE("straight-through gradient equals FD of the soft path plus the hard path", "[query_bank][st][grad]") {
  diff::Rng rng(9);
  Tensor bank = random_tensor({3, 4}, rng), logits = random_tensor({2, 3}, rng), up = random_tensor({2, 4}, rng);
  const std::vector<std::size_t> k{2, 0};
  Graph g;
  Var bv = g.leaf(bank), lv = g.leaf(logits);
  g.backward(probe(select_hard_st(bv, lv, k, StVariant::paper), up));

  auto soft_bank = [&](const Tensor& x) {
    Graph h;
    return probe(mix_soft(h.constant(x), h.constant(logits)), up).value().item();
  };
  auto soft_logits = [&](const Tensor& x) {
    Graph h;
    return probe(mix_soft(h.constant(bank), h.constant(x)), up).value().item();
  };
  Tensor want = diff::finite_diff_grad(soft_bank, bank);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < 4; ++i) want.at(k[s], i) += up.at(s, i);
  CHECK(diff::relative_error(bv.grad(), want) < 1e-8);
  CHECK(diff::relative_error(lv.grad(), diff::finite_diff_grad(soft_logits, logits)) < 1e-8);
}

TEST_CASE("argmax ties resolve to the lowest index", "[query_bank]") {
  CHECK(argmax_rows(Tensor::matrix(2, 3, {1, 1, 0, 0, 2, 2})) == std::vector<std::size_t>{0, 1});
  diff::Rng rng(1);
  const double g[] = {0.5, 0.5};
  CHECK(route(RoutingMode::hard, g, -1, 0, {100}, rng).k_used == 0);
}

TEST_CASE("teacher forcing schedule", "[query_bank][schedule]") {
  const TFSchedule s{1000, 0.5};
  CHECK(p_tf(0, s) == 1.0);
  CHECK(p_tf(500, s) == 0.0);
  CHECK(p_tf(250, s) == Catch::Approx(0.5).margin(1e-15));
  CHECK(p_tf(900, s) == 0.0);
  double prev = 1.0;
  for (int i = 0; i <= 20000; ++i) {
    const double p = p_tf(i * 0.05, s);
    CHECK(p <= prev);
    CHECK(p >= 0.0);
    prev = p;
  }
  CHECK_THROWS_AS(p_tf(0, TFSchedule{0, 0.5}), ConfigError);
  CHECK_THROWS_AS(p_tf(0, TFSchedule{-3, 0.5}), ConfigError);
}

TEST_CASE("routing decisions", "[query_bank][route]") {
  diff::Rng rng(10);
  const TFSchedule s{1000, 0.5};
  const double g[] = {3.0, 0.0, -1.0, 0.5};
  for (int i = 0; i < 1000; ++i) {
    auto d = route(RoutingMode::hard, g, 2, 0, s, rng);
    CHECK(d.k_used == 2);
    CHECK(d.teacher_forced);
  }
  std::size_t forced = 0;
  for (int i = 0; i < 10000; ++i) {
    forced += route(RoutingMode::hard, g, -1, 0, s, rng).teacher_forced;
    forced += route(RoutingMode::hard, g, 1, 500 + i % 700, s, rng).teacher_forced;
    forced += route(RoutingMode::soft, g, 1, 0, s, rng).teacher_forced;
  }
  CHECK(forced == 0);

  auto d = route(RoutingMode::soft, g, 1, 0, s, rng);
  CHECK(d.k_used == 0);
  double sum = 0.0;
  for (double p : d.pi) sum += p;
  CHECK(sum == Catch::Approx(1.0).margin(1e-15));
  auto sh = route(RoutingMode::shared, g, 3, 0, s, rng);
  CHECK(sh.k_used == 0);
  CHECK(sh.pi.empty());
  CHECK_THROWS_AS(route(RoutingMode::hard, g, 4, 0, s, rng), LabelError);

  // Roughly half of the labelled samples are forced at a quarter of training.
  forced = 0;
  for (int i = 0; i < 10000; ++i) forced += route(RoutingMode::hard, g, 1, 250, s, rng).teacher_forced;
  CHECK(forced > 4700);
  CHECK(forced < 5300);
}

TEST_CASE("shared routing matches bank-free static queries", "[query_bank][shared]") {
  diff::Rng r1(11), r2(11), unused(0);
  QueryBank bank(1, 3, 4, r1);
  StaticQueries stat(3, 4, r2);
  CHECK(bank.param().value == stat.param().value);
  Graph g;
  auto routed = route_batch(g, bank, Var{}, {0, -1, 2}, RoutingMode::shared, StVariant::paper, 0, {10}, unused);
  Var tiled = stat.tiled(g, 3);
  CHECK(routed.queries.value() == tiled.value());
  CHECK(routed.queries.shape() == diff::Shape{9, 4});
}

TEST_CASE("batch routing assembles per-sample queries", "[query_bank][route]") {
  diff::Rng rng(12);
  QueryBank bank(3, 2, 4, rng);
  Tensor logits = Tensor::matrix(2, 3, {0, 5, 1, 2, 0, 0});
  Graph g;
  auto r = route_batch(g, bank, g.constant(logits), {-1, 2}, RoutingMode::hard, StVariant::paper, 0, {10}, rng);
  CHECK(r.decisions[0].k_used == 1);
  CHECK(r.decisions[1].k_used == 2);
  CHECK(r.decisions[1].teacher_forced);
  const Tensor& q = r.queries.value();
  const Tensor& bv = bank.param().value;
  CHECK(std::memcmp(q.data(), bv.data() + 8, 8 * sizeof(double)) == 0);
  CHECK(std::memcmp(q.data() + 8, bv.data() + 16, 8 * sizeof(double)) == 0);
  CHECK_THROWS_AS(route_batch(g, bank, Var{}, {0}, RoutingMode::shared, StVariant::paper, 0, {10}, rng), ConfigError);
}
