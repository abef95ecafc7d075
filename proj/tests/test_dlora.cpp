// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "dlf/dlora.hpp"
#include "support.hpp"

using namespace dlf;
using namespace dlf::lora;
using ad::Tensor;

namespace {

Probs probs_of(std::initializer_list<double> v) {
  Probs p{};
  std::copy(v.begin(), v.end(), p.begin());
  return p;
}

RouteResult fixed_route(const std::vector<Probs>& rows) {
  RouteResult r;
  std::vector<double> flat;
  for (const auto& p : rows) {
    flat.insert(flat.end(), p.begin(), p.end());
    RouterDecision d;
    d.probs = p;
    d.gates = top_n(p, 1);
    r.decisions.push_back(d);
  }
  r.probs = Tensor::from({rows.size(), kNumModules}, flat, true);
  return r;
}

}  // namespace

TEST_CASE("rank-1 adapter hand example") {
  nn::Linear base{Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::zeros({1, 2})};
  LoraAdapter ad{Module::Q, 1, Tensor::from({2, 1}, {1, 0}), Tensor::from({1, 2}, {0, 1})};
  auto x = Tensor::from({1, 2}, {2, 3});
  auto out = apply(x, base, &ad, 1.0);
  CHECK(out.data()[0] == 2.0);
  CHECK(out.data()[1] == 5.0);
  auto off = apply(x, base, &ad, 0.0);
  CHECK(off.data()[0] == 2.0);
  CHECK(off.data()[1] == 3.0);
}

TEST_CASE("gate 0 and zero-initialized B reproduce the base linear exactly") {
  Rng rng(1);
  auto base = nn::Linear::gaussian(6, 5, 0.3, rng, false);
  base.bias = testing::random_tensor({1, 5}, rng, 1.0, false);
  auto x = testing::random_tensor({4, 6}, rng, 1.0, false);
  const auto plain = base(x);
  auto fresh = make_adapter(Module::V, 6, 5, 2, rng);
  CHECK(testing::max_abs_diff(apply(x, base, &fresh, 1.0).data(), plain.data()) == 0.0);
  auto trained = fresh;
  trained.b = testing::random_tensor({2, 5}, rng, 1.0, true);
  CHECK(testing::max_abs_diff(apply(x, base, &trained, 0.0).data(), plain.data()) == 0.0);
  std::vector<double> mixed = {1, 0, 0, 1};
  auto m = apply(x, base, &trained, mixed);
  for (std::size_t c = 0; c < 5; ++c) {
    CHECK(m.at(1, c) == plain.at(1, c));
    CHECK(m.at(2, c) == plain.at(2, c));
  }
}

TEST_CASE("gate 1 adds an independently computed low-rank update") {
  Rng rng(2);
  auto base = nn::Linear::gaussian(6, 4, 0.3, rng, false);
  auto adapter = make_adapter(Module::G, 6, 4, 2, rng);
  adapter.b = testing::random_tensor({2, 4}, rng, 0.5, true);
  auto x = testing::random_tensor({3, 6}, rng, 1.0, false);
  auto out = apply(x, base, &adapter, 1.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double want = base.bias.at(0, j);
      for (std::size_t k = 0; k < 6; ++k) want += x.at(i, k) * base.weight.at(k, j);
      for (std::size_t r = 0; r < 2; ++r) {
        double xa = 0.0;
        for (std::size_t k = 0; k < 6; ++k) xa += x.at(i, k) * adapter.a.at(k, r);
        want += xa * adapter.b.at(r, j);
      }
      CHECK(std::abs(out.at(i, j) - want) <= 1e-10);
    }
}

TEST_CASE("adapter rank bounds and init") {
  Rng rng(3);
  CHECK_THROWS(make_adapter(Module::Q, 8, 8, 5, rng));
  CHECK_THROWS(make_adapter(Module::Q, 8, 8, 0, rng));
  auto a = make_adapter(Module::Q, 8, 8, 4, rng);
  for (double v : a.b.data()) CHECK(v == 0.0);
  CHECK(a.a.requires_grad());
}

TEST_CASE("top-n hand examples and tie-break") {
  auto g = top_n(probs_of({0.40, 0.30, 0.15, 0.05, 0.04, 0.03, 0.03}), 2);
  CHECK(g == Gates{1, 1, 0, 0, 0, 0, 0});
  CHECK(top_n(probs_of({0.1, 0.2, 0.1, 0.2, 0.1, 0.2, 0.1}), 7) == Gates{1, 1, 1, 1, 1, 1, 1});
  Probs uniform;
  uniform.fill(1.0 / 7);
  for (std::size_t n = 1; n <= 7; ++n) {
    auto gates = top_n(uniform, n);
    for (std::size_t i = 0; i < 7; ++i) CHECK(gates[i] == (i < n ? 1 : 0));
  }
}

TEST_CASE("zero router weight routes uniformly to the lowest slots") {
  Rng rng(4);
  auto router = make_router(8, 3, RouterActivation::Tanh, rng);
  std::fill(router.weight.data().begin(), router.weight.data().end(), 0.0);
  auto pooled = testing::random_tensor({2, 8}, rng, 1.0, false);
  auto r = route(pooled, router, 0);
  for (const auto& d : r.decisions) {
    for (double p : d.probs) CHECK(p == doctest::Approx(1.0 / 7).epsilon(1e-15));
    CHECK(d.gates == Gates{1, 1, 1, 0, 0, 0, 0});
  }
}

TEST_CASE("routing is input dependent") {
  Rng rng(5);
  auto router = make_router(2, 1, RouterActivation::Identity, rng);
  std::fill(router.weight.data().begin(), router.weight.data().end(), 0.0);
  router.weight.at(0, 2) = 5.0;  // first direction favors slot 2
  router.weight.at(1, 6) = 5.0;  // second favors slot 6
  auto r = route(Tensor::from({2, 2}, {1, 0, 0, 1}), router, 0);
  CHECK(r.decisions[0].gates[2] == 1);
  CHECK(r.decisions[1].gates[6] == 1);
}

TEST_CASE("pool takes the last token of each sequence") {
  auto h = Tensor::from({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto p = pool(h);
  CHECK(p.shape() == ad::Shape{1, 2});
  CHECK(p.data()[0] == 7.0);
  auto pb = pool(h, 2, 2);
  CHECK(pb.at(0, 0) == 3.0);
  CHECK(pb.at(1, 1) == 8.0);
  CHECK(pool(Tensor::from({1, 2}, {9, 9})).data()[0] == 9.0);
}

TEST_CASE("accumulate_stats hand examples") {
  Probs a = probs_of({0.5, 0.2, 0.1, 0.1, 0.05, 0.03, 0.02});
  Probs b = probs_of({0.1, 0.6, 0.1, 0.1, 0.05, 0.03, 0.02});
  auto stats = accumulate_stats({fixed_route({a, b})});
  CHECK(stats.f[0][0] == 0.5);
  CHECK(stats.f[0][1] == 0.5);
  for (std::size_t i = 2; i < 7; ++i) CHECK(stats.f[0][i] == 0.0);
  CHECK(stats.p_hat[0][0] == doctest::Approx(0.3));
  auto same = accumulate_stats({fixed_route({a, a, a})});
  CHECK(same.f[0][0] == 1.0);
  double sf = 0.0, sp = 0.0;
  for (std::size_t i = 0; i < 7; ++i) sf += stats.f[0][i], sp += stats.p_hat[0][i];
  CHECK(std::abs(sf - 1.0) <= 1e-10);
  CHECK(std::abs(sp - 1.0) <= 1e-10);
}

TEST_CASE("load-balance closed forms") {
  for (std::size_t layers : {1u, 2u, 4u}) {
    // Uniform: one sample per slot with a uniform probability row makes f and p̂ both 1/7.
    std::vector<RouteResult> uniform, collapsed;
    for (std::size_t l = 0; l < layers; ++l) {
      std::vector<Probs> rows(7);
      for (auto& r : rows) r.fill(1.0 / 7);
      auto rr = fixed_route(rows);
      for (std::size_t i = 0; i < 7; ++i) {
        rr.decisions[i].probs.fill(0.0);
        rr.decisions[i].probs[i] = 1.0;  // argmax spread across slots
      }
      uniform.push_back(rr);
      collapsed.push_back(fixed_route({probs_of({1, 0, 0, 0, 0, 0, 0}), probs_of({1, 0, 0, 0, 0, 0, 0})}));
    }
    auto lu = load_balance_loss(accumulate_stats(uniform)).item();
    auto lc = load_balance_loss(accumulate_stats(collapsed)).item();
    CHECK(std::abs(lu - static_cast<double>(layers)) <= 1e-10);
    CHECK(std::abs(lc - 7.0 * static_cast<double>(layers)) <= 1e-10);
    CHECK(lc > lu);
  }
}

TEST_CASE("shifting every logit leaves the decision unchanged") {
  Rng rng(6);
  auto router = make_router(5, 3, RouterActivation::Identity, rng);
  router.weight = testing::random_tensor({5, 7}, rng, 1.0, true);
  // A pooled direction whose logits receive a common offset: add c·(column-constant) via a bias-like input.
  auto pooled = testing::random_tensor({1, 5}, rng, 1.0, false);
  auto base = route(pooled, router, 0);
  auto shifted = router;
  shifted.weight = router.weight.clone();
  // Append a constant input feature with equal weight on every slot.
  shifted.weight = ad::concat({router.weight, Tensor::full({1, 7}, 3.7)}, 0);
  auto pooled2 = ad::concat({pooled, Tensor::full({1, 1}, 1.0)}, 1);
  auto moved = route(pooled2, shifted, 0);
  CHECK(moved.decisions[0].gates == base.decisions[0].gates);
  for (std::size_t i = 0; i < 7; ++i)
    CHECK(moved.decisions[0].probs[i] == doctest::Approx(base.decisions[0].probs[i]).epsilon(1e-12));
}

TEST_CASE("exactly n gates active on random logits, top-n dominance") {
  Rng rng(7);
  for (std::size_t trial = 0; trial < 1000; ++trial) {
    Probs logits;
    for (auto& l : logits) l = rng.normal(0.0, 2.0);
    const std::size_t n = 1 + trial % 7;
    auto g = top_n(logits, n);
    std::size_t on = 0;
    for (auto v : g) on += v;
    REQUIRE(on == n);
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 7; ++j)
        if (g[i] && !g[j]) REQUIRE(logits[i] >= logits[j]);
  }
}

TEST_CASE("L_lb gradient reaches the router weight and the pooled state") {
  Rng rng(8);
  auto router = make_router(4, 2, RouterActivation::Tanh, rng);
  router.weight = testing::random_tensor({4, 7}, rng, 0.5, true);
  auto pooled = testing::random_tensor({3, 4}, rng);
  auto loss = [&] { return load_balance_loss(accumulate_stats({route(pooled, router, 0)})); };
  auto r = testing::gradcheck(loss, {router.weight, pooled});
  CHECK(r.max_rel < 1e-5);
  double norm = 0.0;
  for (double g : router.weight.grad()) norm += g * g;
  CHECK(norm > 0.0);
}

TEST_CASE("routing accumulator shares sum to one") {
  Rng rng(9);
  auto router = make_router(4, 3, RouterActivation::Tanh, rng);
  router.weight = testing::random_tensor({4, 7}, rng, 1.0, true);
  RoutingAccumulator acc(2);
  for (int b = 0; b < 5; ++b) {
    std::vector<RouteResult> layers = {route(testing::random_tensor({6, 4}, rng, 1.0, false), router, 0),
                                       route(testing::random_tensor({6, 4}, rng, 1.0, false), router, 1)};
    acc.add(layers);
  }
  for (std::size_t l = 0; l < 2; ++l) {
    double s = 0.0, f = 0.0, p = 0.0;
    for (double v : acc.activation_share(l)) s += v;
    for (double v : acc.argmax_fraction(l)) f += v;
    for (double v : acc.mean_probs(l)) p += v;
    CHECK(std::abs(s - 1.0) <= 1e-10);
    CHECK(std::abs(f - 1.0) <= 1e-10);
    CHECK(std::abs(p - 1.0) <= 1e-10);
    CHECK(acc.samples(l) == 30);
  }
  auto j = acc.to_json();
  CHECK(j["layers"].size() == 2);

  RoutingAccumulator fixed(1);
  RouterDecision d;
  d.probs.fill(1.0 / 7);
  Gates all;
  all.fill(1);
  for (int i = 0; i < 10; ++i) fixed.add_forced(0, d, all);
  CHECK(fixed.gate_set_entropy(0) == 0.0);
}
