// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "dlf/embedding.hpp"
#include "support.hpp"

using namespace dlf;
using ad::Tensor;

TEST_CASE("embedder output shape") {
  Rng rng(1);
  embed::TsEmbedder e(512, 64, 0, rng);
  auto x = testing::random_tensor({7, 512}, rng, 1.0, false);
  CHECK(e.embed(x).shape() == ad::Shape{7, 64});
  CHECK_THROWS_AS(e.embed(testing::random_tensor({7, 511}, rng, 1.0, false)), ad::ContractError);
}

TEST_CASE("embedder is equivariant to channel permutation") {
  Rng rng(2);
  embed::TsEmbedder e(16, 8, 0, rng);
  auto x = testing::random_tensor({5, 16}, rng, 1.0, false);
  std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  auto a = ad::select_rows(e.embed(x), perm);
  auto b = e.embed(ad::select_rows(x, perm));
  CHECK(testing::max_abs_diff(a.data(), b.data()) == 0.0);
}

TEST_CASE("zero embedder weights give zero tokens") {
  Rng rng(3);
  embed::TsEmbedder e(16, 8, 0, rng);
  for (auto* lin : {&e.fc1(), &e.fc2()}) {
    std::fill(lin->weight.data().begin(), lin->weight.data().end(), 0.0);
    std::fill(lin->bias.data().begin(), lin->bias.data().end(), 0.0);
  }
  auto out = e.embed(testing::random_tensor({3, 16}, rng, 1.0, false));
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("output head with zero weights emits its bias") {
  Rng rng(4);
  embed::OutputHead head(8, 4, rng);
  std::fill(head.linear().weight.data().begin(), head.linear().weight.data().end(), 0.0);
  std::fill(head.linear().bias.data().begin(), head.linear().bias.data().end(), 2.5);
  auto out = head.project(testing::random_tensor({3, 8}, rng, 1.0, false));
  for (double v : out.data()) CHECK(v == 2.5);
  CHECK(head.project(testing::random_tensor({1, 8}, rng, 1.0, false)).shape() == ad::Shape{1, 4});
}

TEST_CASE("gradient of MSE through the head matches finite differences") {
  Rng rng(5);
  embed::OutputHead head(6, 3, rng);
  auto h = testing::random_tensor({4, 6}, rng);
  auto y = testing::random_tensor({4, 3}, rng, 1.0, false);
  auto loss = [&] { return ad::mean(ad::square(ad::sub(head.project(h), y))); };
  CHECK(testing::gradcheck(loss, {h, head.linear().weight, head.linear().bias}).max_rel < 1e-5);
}

TEST_CASE("instance normalization statistics and inverse") {
  Rng rng(6);
  auto x = testing::random_tensor({4, 32}, rng, 3.0, false);
  for (std::size_t c = 0; c < 32; ++c) x.at(1, c) += 10.0;
  auto n = embed::instance_normalize(x);
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 32; ++c) m += n.x.at(r, c);
    m /= 32;
    for (std::size_t c = 0; c < 32; ++c) v += (n.x.at(r, c) - m) * (n.x.at(r, c) - m);
    CHECK(std::abs(m) <= 1e-10);
    CHECK(std::abs(std::sqrt(v / 32) - 1.0) <= 1e-10);
  }
  auto back = embed::denormalize(n.x, n.stats);
  CHECK(testing::max_abs_diff(back.data(), x.data()) <= 1e-12);
}

TEST_CASE("constant channel normalizes to exact zeros") {
  auto x = Tensor::full({2, 8}, 4.25);
  auto n = embed::instance_normalize(x);
  for (double v : n.x.data()) CHECK(v == 0.0);
  CHECK(n.stats.stddev[0] == data::kStdFloor);
}

TEST_CASE("affine change of a channel leaves its normalized tokens unchanged") {
  Rng rng(7);
  auto x = testing::random_tensor({3, 16}, rng, 1.0, false);
  auto y = x.clone();
  for (std::size_t c = 0; c < 16; ++c) y.at(2, c) = 3.0 * y.at(2, c) - 7.0;
  auto nx = embed::instance_normalize(x).x, ny = embed::instance_normalize(y).x;
  for (std::size_t c = 0; c < 16; ++c) CHECK(ny.at(2, c) == doctest::Approx(nx.at(2, c)).epsilon(1e-12));
}
