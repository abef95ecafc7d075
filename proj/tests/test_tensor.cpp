// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "dlf/tensor.hpp"
#include "support.hpp"

using namespace dlf;
using ad::Tensor;

TEST_CASE("matmul hand examples") {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto b = Tensor::from({2, 2}, {3, 4, 5, 6});
  auto c = ad::matmul(eye, b);
  CHECK(std::vector<double>(c.data().begin(), c.data().end()) == std::vector<double>{3, 4, 5, 6});
  auto dot = ad::matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4}));
  CHECK(dot.item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  try {
    ad::matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const ad::DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ad::DimensionError);
}

TEST_CASE("softmax examples") {
  auto u = ad::softmax(Tensor::from({3}, {0, 0, 0}), -1);
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  auto big = ad::softmax(Tensor::from({2}, {1000, 0}), -1);
  CHECK(std::abs(big.data()[0] - 1.0) <= 1e-12);
  CHECK(std::abs(big.data()[1]) <= 1e-12);
  auto l = ad::softmax(Tensor::from({2}, {std::log(2.0), std::log(1.0)}), -1);
  CHECK(l.data()[0] == doctest::Approx(2.0 / 3).epsilon(1e-14));
  CHECK(l.data()[1] == doctest::Approx(1.0 / 3).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one and stay in [0,1]") {
  Rng rng(11);
  auto x = testing::random_tensor({20, 9}, rng, 30.0, false);
  for (int axis : {0, 1}) {
    auto s = ad::softmax(x, axis);
    const std::size_t outer = axis == 1 ? 20 : 9, inner = axis == 1 ? 9 : 20;
    for (std::size_t o = 0; o < outer; ++o) {
      double sum = 0.0;
      for (std::size_t i = 0; i < inner; ++i) {
        const double v = axis == 1 ? s.at(o, i) : s.at(i, o);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("silu and rmsnorm hand values") {
  CHECK(ad::silu(Tensor::scalar(0.0)).item() == 0.0);
  auto r = ad::rmsnorm(Tensor::from({1, 2}, {3, 4}), Tensor::from({1, 2}, {1, 1}), 0.0);
  CHECK(r.data()[0] == doctest::Approx(3 / std::sqrt(12.5)).epsilon(1e-15));
  CHECK(r.data()[1] == doctest::Approx(4 / std::sqrt(12.5)).epsilon(1e-15));
}

TEST_CASE("backward hand examples") {
  {
    auto x = Tensor::from({2, 2}, {1, -2, 3, 0.5}, true);
    ad::Tape tape;
    ad::TapeScope scope(tape);
    tape.backward(ad::sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  {
    auto x = Tensor::from({2}, {1, 2}, true);
    ad::Tape tape;
    ad::TapeScope scope(tape);
    tape.backward(ad::sum(ad::square(x)));
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == 4.0);
  }
}

TEST_CASE("a tensor used twice receives both gradient paths") {
  // loss = sum(x ⊙ x + 3x)  →  d/dx = 2x + 3
  auto x = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
  ad::Tape tape;
  ad::TapeScope scope(tape);
  tape.backward(ad::sum(ad::add(ad::mul(x, x), ad::scale(x, 3.0))));
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(1.0));
  CHECK(x.grad()[2] == doctest::Approx(7.0));
}

TEST_CASE("backward contract errors") {
  auto x = Tensor::from({2}, {1, 2}, true);
  ad::Tape tape;
  ad::TapeScope scope(tape);
  auto y = ad::square(x);
  CHECK_THROWS_AS(tape.backward(y), ad::ContractError);
  auto loss = ad::sum(y);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), ad::ContractError);
}

TEST_CASE("requires_grad inputs off the loss path still get a zero grad") {
  auto x = Tensor::from({2}, {1, 2}, true);
  auto unused = Tensor::from({2}, {3, 4}, true);
  ad::Tape tape;
  ad::TapeScope scope(tape);
  auto side = ad::square(unused);
  tape.backward(ad::sum(x));
  REQUIRE(unused.has_grad());
  CHECK(unused.grad()[0] == 0.0);
  CHECK(unused.grad()[1] == 0.0);
}

TEST_CASE("no-grad scope records nothing") {
  ad::Tape tape;
  ad::TapeScope scope(tape);
  auto x = Tensor::from({2}, {1, 2}, true);
  {
    ad::NoGradScope off;
    ad::square(x);
  }
  CHECK(tape.size() == 0);
  ad::square(x);
  CHECK(tape.size() == 1);
}

TEST_CASE("identical inputs give bit-identical outputs and gradients") {
  auto run = [] {
    Rng rng(21);
    auto a = testing::random_tensor({4, 5}, rng);
    auto b = testing::random_tensor({5, 3}, rng);
    ad::Tape tape;
    ad::TapeScope scope(tape);
    auto loss = ad::sum(ad::tanh(ad::matmul(a, b)));
    tape.backward(loss);
    std::vector<double> out{loss.item()};
    out.insert(out.end(), a.grad().begin(), a.grad().end());
    out.insert(out.end(), b.grad().begin(), b.grad().end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("concat and slice round trip") {
  Rng rng(8);
  auto a = testing::random_tensor({3, 4}, rng, 1.0, false);
  auto left = ad::slice(a, 1, 0, 1), right = ad::slice(a, 1, 1, 4);
  auto back = ad::concat({left, right}, 1);
  CHECK(back.shape() == a.shape());
  CHECK(testing::max_abs_diff(back.data(), a.data()) == 0.0);
  auto top = ad::slice(a, 0, 0, 2), bottom = ad::slice(a, 0, 2, 3);
  CHECK(testing::max_abs_diff(ad::concat({top, bottom}, 0).data(), a.data()) == 0.0);
  CHECK_THROWS_AS(ad::slice(a, 0, 2, 5), ad::DimensionError);
}
