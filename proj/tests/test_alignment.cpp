// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "dlf/alignment.hpp"
#include "support.hpp"

using namespace dlf;
using ad::Tensor;

TEST_CASE("tokenizer is deterministic and counts words") {
  auto a = align::tokenize("forecast electricity load", 256, 16);
  CHECK(a.size() == 3);
  CHECK(a == align::tokenize("forecast electricity load", 256, 16));
  CHECK(a == align::tokenize("Forecast  ELECTRICITY load", 256, 16));
  for (auto id : a) CHECK(id < 256);
  CHECK(align::tokenize("a b c d e f", 256, 4).size() == 4);
  CHECK_THROWS_AS(align::tokenize("   ", 256, 16), align::ConfigError);
}

TEST_CASE("prompt template rendering") {
  auto p = align::render_prompt(align::kDefaultPromptTemplate, "etth1", 96, "hourly");
  CHECK(p == "forecast etth1 horizon 96 frequency hourly");
}

TEST_CASE("prompt embedding logs its bucket ids") {
  Rng rng(1);
  align::PromptTable table(64, 8, rng);
  auto p = table.build_prompt("forecast electricity load", 16);
  CHECK(p.source_text == "forecast electricity load");
  CHECK(p.bucket_ids.size() == 3);
  CHECK(p.tokens.shape() == ad::Shape{3, 8});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 8; ++c) CHECK(p.tokens.at(i, c) == table.table().at(p.bucket_ids[i], c));
}

TEST_CASE("heads must divide d_model") {
  Rng rng(2);
  CHECK_THROWS_AS(align::CrossAttention(10, 4, rng), align::ConfigError);
}

TEST_CASE("zero output projection makes alignment the identity") {
  Rng rng(3);
  align::CrossAttention attn(8, 2, rng);
  auto ts = testing::random_tensor({5, 8}, rng, 1.0, false);
  auto prompt = testing::random_tensor({3, 8}, rng, 1.0, false);
  auto out = attn.align(ts, prompt);
  CHECK(testing::max_abs_diff(out.data(), ts.data()) == 0.0);
}

TEST_CASE("single prompt token: every attention weight is one") {
  Rng rng(4);
  align::CrossAttention attn(8, 2, rng);
  Rng w(5);
  attn.wo() = testing::random_tensor({8, 8}, w, 0.3, true);
  auto ts = testing::random_tensor({4, 8}, rng, 1.0, false);
  auto prompt = testing::random_tensor({1, 8}, rng, 1.0, false);
  align::AttentionTrace trace;
  auto out = attn.align(ts, prompt, &trace);
  REQUIRE(trace.weights.size() == 2);
  for (const auto& wts : trace.weights)
    for (double v : wts.data()) CHECK(v == 1.0);
  // A_k = V_k for every row, so every row gets the same update.
  auto v = ad::matmul(ad::matmul(prompt, attn.wv()), attn.wo());
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 8; ++c) CHECK(out.at(r, c) - ts.at(r, c) == doctest::Approx(v.at(0, c)).epsilon(1e-12));
}

TEST_CASE("attention rows sum to one; output shape independent of prompt length") {
  Rng rng(6);
  align::CrossAttention attn(12, 3, rng);
  auto ts = testing::random_tensor({5, 12}, rng, 1.0, false);
  for (std::size_t p : {1u, 2u, 7u}) {
    align::AttentionTrace trace;
    auto out = attn.align(ts, testing::random_tensor({p, 12}, rng, 1.0, false), &trace);
    CHECK(out.shape() == ad::Shape{5, 12});
    REQUIRE(trace.weights.size() == 3);
    for (const auto& wts : trace.weights) {
      CHECK(wts.shape() == ad::Shape{5, p});
      for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < p; ++c) s += wts.at(r, c);
        CHECK(std::abs(s - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("alignment gradients reach projections and the prompt table") {
  Rng rng(7);
  align::CrossAttention attn(4, 2, rng);
  align::PromptTable table(16, 4, rng);
  attn.wo() = testing::random_tensor({4, 4}, rng, 0.5, true);
  attn.wq() = testing::random_tensor({4, 4}, rng, 0.5, true);
  attn.wk() = testing::random_tensor({4, 4}, rng, 0.5, true);
  attn.wv() = testing::random_tensor({4, 4}, rng, 0.5, true);
  auto ts = testing::random_tensor({2, 4}, rng);
  std::vector<std::size_t> ids = {1, 5, 9};
  auto target = testing::random_tensor({2, 4}, rng, 1.0, false);
  auto loss = [&] { return ad::sum(ad::mul(attn.align(ts, table.lookup(ids)), target)); };
  auto r = testing::gradcheck(loss, {ts, attn.wq(), attn.wk(), attn.wv(), attn.wo(), table.table()});
  CHECK(r.max_rel < 1e-5);
}
