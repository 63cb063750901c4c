// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>

#include "laqd/diffcore/finite_diff.hpp"
#include "laqd/projector/qformer.hpp"
#include "laqd/util/errors.hpp"
#include "support/grad_check.hpp"

using namespace laqd;
using diff::Graph;
using diff::SeqLayout;
using diff::Tensor;
using diff::Var;
using laqd::testing::random_projection;
using laqd::testing::random_tensor;
using projector::ProjectorConfig;
using projector::QFormer;

namespace {

ProjectorConfig tiny(bool self_attn = false) {
  ProjectorConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 6;
  c.length = 3;
  c.self_attn = self_attn;
  c.init_std = 0.4;  // large enough that every path carries signal
  return c;
}

void jitter(const std::vector<diff::Param*>& ps, diff::Rng& rng) {
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto* p : ps)
    for (auto& v : p->value.values()) v += n(rng);
}

}  // namespace

TEST_CASE("kv projection shapes and bias rows", "[projector][kv]") {
  diff::Rng rng(1);
  projector::KvProjection kv(5, 7, 0.02, rng);
  jitter(kv.params(), rng);
  Graph g;
  auto r = kv.forward(g, g.constant(Tensor({4, 5})));
  CHECK(r.keys.shape() == diff::Shape{4, 7});
  CHECK(r.values.shape() == diff::Shape{4, 7});
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t j = 0; j < 7; ++j) {
      CHECK(r.keys.value().at(t, j) == kv.params()[1]->value[j]);
      CHECK(r.values.value().at(t, j) == kv.params()[3]->value[j]);
    }
  }
}

TEST_CASE("kv projection gradients match finite differences", "[projector][kv][grad]") {
  diff::Rng rng(2);
  projector::KvProjection kv(3, 4, 0.5, rng);
  Tensor h = random_tensor({5, 3}, rng);
  auto build = [&](Graph& g) {
    auto r = kv.forward(g, g.constant(h));
    return diff::add(random_projection(r.keys, 1), diff::sum(diff::mul(r.values, r.values)));
  };
  for (const auto& c : diff::check_param_grads(build, kv.params())) {
    INFO(c.name);
    CHECK(c.rel_error < 1e-7);
  }
}

TEST_CASE("projector output shape is independent of T", "[projector]") {
  diff::Rng rng(3);
  QFormer q(tiny(), 4, 5, rng);
  for (std::size_t T : {1u, 2u, 9u, 40u}) {
    Graph g;
    Var z = q.forward(g, g.constant(random_tensor({6, 5}, rng)), g.constant(random_tensor({2 * T, 4}, rng)),
                      SeqLayout{2, T, {T, T}});
    CHECK(z.shape() == diff::Shape{6, 5});
  }
}

TEST_CASE("projector ignores masked frames", "[projector][mask]") {
  for (bool sa : {false, true}) {
    diff::Rng rng(4);
    QFormer q(tiny(sa), 4, 5, rng);
    Tensor queries = random_tensor({6, 5}, rng);
    SeqLayout lay{2, 5, {5, 2}};
    Tensor h = random_tensor({10, 4}, rng);
    Graph g;
    Tensor base = q.forward(g, g.constant(queries), g.constant(h), lay).value();
    for (std::size_t extra : {1u, 6u}) {
      const std::size_t len = 5 + extra;
      Tensor big = random_tensor({2 * len, 4}, rng, 5.0);
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t t = 0; t < lay.valid[b]; ++t)
          for (std::size_t j = 0; j < 4; ++j) big.at(b * len + t, j) = h.at(b * 5 + t, j);
      Graph g2;
      Tensor out = q.forward(g2, g2.constant(queries), g2.constant(big), SeqLayout{2, len, lay.valid}).value();
      CHECK(diff::max_abs_diff(out, base) < 1e-10);
    }
  }
}

TEST_CASE("a single frame receives all attention", "[projector]") {
  diff::Rng rng(5);
  QFormer q(tiny(), 4, 5, rng);
  Tensor queries = random_tensor({3, 5}, rng);
  Tensor frame = random_tensor({1, 4}, rng);
  Tensor rep({3, 4});
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 4; ++j) rep.at(t, j) = frame[j];
  Graph g;
  Tensor one = q.forward(g, g.constant(queries), g.constant(frame), SeqLayout{1, 1, {1}}).value();
  // Identical frames: any attention distribution gives the same values, so
  // equality with the single-frame pass means the weights summed to one.
  Tensor three = q.forward(g, g.constant(queries), g.constant(rep), SeqLayout{1, 3, {3}}).value();
  CHECK(diff::max_abs_diff(one, three) < 1e-13);

  Graph g2;
  Tensor v = random_tensor({2, 4}, rng);
  Var a = diff::attention(g2.constant(random_tensor({4, 4}, rng)), g2.constant(random_tensor({2, 4}, rng)),
                          g2.constant(v), diff::AttentionSpec{2, 2, 1, 2, {1, 1}, false});
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t j = 0; j < 4; ++j) CHECK(a.value().at(r, j) == Catch::Approx(v.at(r / 2, j)).margin(1e-15));
}

TEST_CASE("projector with every frame masked is an error", "[projector]") {
  diff::Rng rng(6);
  QFormer q(tiny(), 4, 5, rng);
  Graph g;
  CHECK_THROWS(q.forward(g, g.constant(Tensor({6, 5})), g.constant(Tensor({6, 4})), SeqLayout{2, 3, {3, 0}}));
  CHECK_THROWS_AS(q.forward(g, g.constant(Tensor({4, 5})), g.constant(Tensor({6, 4})), SeqLayout{2, 3, {3, 3}}),
                  diff::ShapeError);
}

TEST_CASE("projector gradients match finite differences", "[projector][grad]") {
  for (bool sa : {false, true}) {
    diff::Rng rng(7);
    QFormer q(tiny(sa), 3, 4, rng);
    jitter(q.params(), rng);
    Tensor queries = random_tensor({6, 4}, rng, 0.5);
    Tensor h = random_tensor({8, 3}, rng);
    SeqLayout lay{2, 4, {4, 3}};
    auto build = [&](Graph& g) {
      return random_projection(q.forward(g, g.constant(queries), g.constant(h), lay), 13);
    };
    for (const auto& c : diff::check_param_grads(build, q.params())) {
      INFO("self_attn " << sa << " " << c.name);
      // Softmax cancels a bias shared by every key, so that gradient is zero
      // and its relative error is pure difference noise.
      if (c.name == "kv_proj.key.bias") continue;
      CHECK(c.rel_error < 1e-6);
    }
    const auto& kb = q.kv().params()[1]->grad;
    CHECK(diff::max_abs_diff(kb, Tensor(kb.shape())) < 1e-12);
    auto wrt_queries = [&](Graph& g, const std::vector<Var>& in) {
      return random_projection(q.forward(g, in[0], g.constant(h), lay), 13);
    };
    CHECK(laqd::testing::max_grad_error(wrt_queries, {queries}) < 1e-6);
  }
}

TEST_CASE("distinct query sets give distinct outputs", "[projector]") {
  diff::Rng rng(8);
  ProjectorConfig cfg;  // default sizes, std 0.02 init
  QFormer q(cfg, 32, 64, rng);
  Tensor h = random_tensor({20, 32}, rng);
  std::vector<Tensor> zs;
  for (int k = 0; k < 3; ++k) {
    Graph g;
    zs.push_back(q.forward(g, g.constant(random_tensor({16, 64}, rng, 0.02)), g.constant(h), SeqLayout{1, 20, {20}})
                     .value());
  }
  double total = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) total += diff::max_abs_diff(zs[a], zs[b]);
  CHECK(total > 1e-4);
}

TEST_CASE("projector config validation", "[projector]") {
  ProjectorConfig c;
  c.n_heads = 5;
  CHECK_THROWS_AS(c.validate(), laqd::ConfigError);
  c = ProjectorConfig{};
  c.length = 0;
  CHECK_THROWS_AS(c.validate(), laqd::ConfigError);
}
