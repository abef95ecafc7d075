// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <omp.h>

#include <vector>

#include "dlf/kernels.hpp"
#include "dlf/rng.hpp"

using namespace dlf;

namespace {
std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}
}  // namespace

TEST_CASE("gemm matches a naive triple loop") {
  Rng rng(3);
  const std::size_t m = 5, k = 7, p = 4;
  auto a = random_values(m * k, rng), b = random_values(k * p, rng);
  std::vector<double> c(m * p, 0.0), want(m * p, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t t = 0; t < k; ++t) want[i * p + j] += a[i * k + t] * b[t * p + j];
  kernels::gemm_serial(a, b, c, m, k, p);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-14));
}

TEST_CASE("transposed variants match explicit transposes") {
  Rng rng(4);
  const std::size_t m = 6, p = 5, k = 3;
  auto a = random_values(m * p, rng), b = random_values(k * p, rng);
  std::vector<double> bt(p * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < p; ++j) bt[j * k + i] = b[i * p + j];
  std::vector<double> c1(m * k, 0.0), c2(m * k, 0.0);
  kernels::gemm_a_bt_serial(a, b, c1, m, p, k);
  kernels::gemm_serial(a, bt, c2, m, p, k);
  for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-14));

  auto x = random_values(m * k, rng), y = random_values(m * p, rng);
  std::vector<double> xt(k * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) xt[j * m + i] = x[i * k + j];
  std::vector<double> d1(k * p, 0.0), d2(k * p, 0.0);
  kernels::gemm_at_b_serial(x, y, d1, m, k, p);
  kernels::gemm_serial(xt, y, d2, k, m, p);
  for (std::size_t i = 0; i < d1.size(); ++i) CHECK(d1[i] == doctest::Approx(d2[i]).epsilon(1e-14));
}

TEST_CASE("OpenMP kernels are bit-identical to the serial reference") {
  Rng rng(5);
  const int saved = omp_get_max_threads();
  for (int threads : {1, 2, 4}) {
    omp_set_num_threads(threads);
    // Large enough to cross the parallel threshold.
    const std::size_t m = 96, k = 64, p = 48;
    auto a = random_values(m * k, rng), b = random_values(k * p, rng);
    a[3] = 0.0;  // exercise the zero-skip path
    std::vector<double> s(m * p, 0.5), q(m * p, 0.5);
    kernels::gemm_serial(a, b, s, m, k, p);
    kernels::gemm(a, b, q, m, k, p);
    CHECK(s == q);

    auto bt = random_values(p * k, rng);
    std::vector<double> s2(m * p, 0.0), q2(m * p, 0.0);
    kernels::gemm_a_bt_serial(a, bt, s2, m, k, p);
    kernels::gemm_a_bt(a, bt, q2, m, k, p);
    CHECK(s2 == q2);

    auto y = random_values(m * p, rng);
    std::vector<double> s3(k * p, 0.0), q3(k * p, 0.0);
    kernels::gemm_at_b_serial(a, y, s3, m, k, p);
    kernels::gemm_at_b(a, y, q3, m, k, p);
    CHECK(s3 == q3);
  }
  omp_set_num_threads(saved);
}
