// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dlf/metrics.hpp"
#include "dlf/rng.hpp"

using namespace dlf;
using namespace dlf::metrics;

TEST_CASE("point metric hand values") {
  std::vector<double> y = {1, 2}, yh = {2, 2};
  CHECK(std::abs(mse(y, yh) - 0.5) <= 1e-9);
  CHECK(std::abs(mae(y, yh) - 0.5) <= 1e-9);
  CHECK(std::abs(smape(y, yh) - 100.0 / 3) <= 1e-9);
  CHECK(std::abs(mape(y, yh) - 50.0) <= 1e-9);
  CHECK(mse(y, y) == 0.0);
  CHECK(mae(y, y) == 0.0);
  CHECK(smape(y, y) == 0.0);
  CHECK(mape(y, y) == 0.0);
}

TEST_CASE("smape symmetric, mape asymmetric, smape bounded") {
  std::vector<double> a = {1, 4}, b = {3, 2};
  CHECK(smape(a, b) == smape(b, a));
  CHECK(mape(a, b) != mape(b, a));
  Rng rng(1);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> y(5), yh(5);
    for (auto& v : y) v = rng.normal(0, 10);
    for (auto& v : yh) v = rng.normal(0, 10);
    const double s = smape(y, yh);
    CHECK(s >= 0.0);
    CHECK(s <= 200.0 + 1e-9);
  }
}

TEST_CASE("mape rejects zero targets") {
  std::vector<double> y = {0, 1}, yh = {1, 1};
  CHECK_THROWS_AS(mape(y, yh), UndefinedMetric);
}

TEST_CASE("mase hand example and laws") {
  std::vector<double> y = {1, 3, 2}, yh = {1, 1, 1};
  CHECK(std::abs(mase(y, yh, 1) - 2.0 / 3) <= 1e-9);
  CHECK(mase(y, y, 1) == 0.0);
  // Ŷ_h = Y_{h−s} for h > s (exact for h ≤ s): the numerator is the denominator's
  // sum divided by H instead of H − s, so mase = (H − s)/H.
  std::vector<double> seasonal = {1, 5, 2, 7, 3, 4};
  std::vector<double> shifted = {1, 5, 1, 5, 2, 7};
  CHECK(mase(seasonal, shifted, 2) == doctest::Approx(4.0 / 6.0).epsilon(1e-12));
  std::vector<double> flat = {2, 2, 2, 2};
  CHECK_THROWS_AS(mase(flat, std::vector<double>{1, 2, 3, 4}, 1), UndefinedMetric);
  CHECK_THROWS_AS(mase(y, yh, 3), UndefinedMetric);
}

TEST_CASE("owa laws") {
  CHECK(owa(10.0, 2.0, 10.0, 2.0) == 1.0);
  CHECK(owa(0.0, 0.0, 10.0, 2.0) == 0.0);
  CHECK(owa(5.0, 1.0, 10.0, 2.0) < 1.0);
  CHECK_THROWS_AS(owa(1.0, 1.0, 0.0, 1.0), UndefinedMetric);
}

TEST_CASE("seasonal naive forecast") {
  std::vector<double> lb = {9, 1, 2, 3};
  auto f = naive_seasonal_forecast(lb, 3, 3);
  CHECK(f == std::vector<double>{1, 2, 3});
  CHECK(naive_seasonal_forecast(lb, 1, 2) == std::vector<double>{3, 3});
  CHECK(naive_seasonal_forecast(lb, 2, 5) == std::vector<double>{2, 3, 2, 3, 2});
  CHECK_THROWS(naive_seasonal_forecast(lb, 5, 2));
  std::vector<double> periodic = {1, 4, 2, 1, 4, 2};
  auto exact = naive_seasonal_forecast(periodic, 3, 3);
  std::vector<double> next = {1, 4, 2};
  CHECK(smape(next, exact) == 0.0);
}

TEST_CASE("seasonality table") {
  CHECK(seasonality_for("hourly") == 24);
  CHECK(seasonality_for("daily") == 7);
  CHECK(seasonality_for("weekly") == 52);
  CHECK(seasonality_for("monthly") == 12);
  CHECK(seasonality_for("quarterly") == 4);
  CHECK(seasonality_for("yearly") == 1);
  CHECK(seasonality_for("15min") == 96);
  CHECK(seasonality_for("10min") == 144);
}

TEST_CASE("naive forecaster scores owa 1; aggregation is an unweighted mean") {
  std::vector<double> lb1 = {1, 2, 3, 4}, y1 = {5, 7, 6, 9};
  std::vector<double> lb2 = {2, 2, 1, 5}, y2 = {3, 1, 4, 2};
  auto n1 = naive_seasonal_forecast(lb1, 1, 4), n2 = naive_seasonal_forecast(lb2, 1, 4);
  auto rep = evaluate({{lb1, y1, n1}, {lb2, y2, n2}}, 1, MaseConvention::Horizon, "naive");
  REQUIRE(rep.aggregate.owa.has_value());
  CHECK(std::abs(*rep.aggregate.owa - 1.0) <= 1e-9);
  CHECK(rep.aggregate.mse == doctest::Approx((mse(y1, n1) + mse(y2, n2)) / 2).epsilon(1e-14));
  CHECK(rep.aggregate.smape == doctest::Approx((smape(y1, n1) + smape(y2, n2)) / 2).epsilon(1e-14));

  auto perfect = evaluate({{lb1, y1, y1}}, 1, MaseConvention::Horizon);
  CHECK(perfect.aggregate.mse == 0.0);
  CHECK(*perfect.aggregate.mase == 0.0);
  CHECK(*perfect.aggregate.owa == 0.0);
}

TEST_CASE("undefined metrics are omitted with a note") {
  std::vector<double> lb = {1, 2}, y = {0, 1, 2}, yh = {1, 1, 1};
  auto rep = evaluate({{lb, y, yh}}, 1, MaseConvention::Horizon);
  CHECK_FALSE(rep.aggregate.mape.has_value());
  CHECK_FALSE(rep.notes.empty());
  auto j = to_json(rep);
  CHECK(j["aggregate"]["mape"].is_null());
  auto table = format_table({rep});
  CHECK(table.find("MSE") != std::string::npos);
}

TEST_CASE("in-sample MASE scales by the lookback naive error") {
  std::vector<double> lb = {1, 3, 2, 4}, y = {5, 5}, yh = {4, 6};
  // in-sample scale: mean(|3−1|, |2−3|, |4−2|) = 5/3; error mean 1
  CHECK(mase_insample(y, yh, lb, 1) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(parse_mase_convention("paper") == MaseConvention::Horizon);
  CHECK(parse_mase_convention("m4") == MaseConvention::InSample);
}
