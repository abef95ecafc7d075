// SPDX-License-Identifier: Apache-2.0
#include "dlf/kernels.hpp"

#include <cstdint>

namespace dlf::kernels {

namespace {

inline void gemm_row(const double* a_row, const double* b, double* c_row, std::size_t k,
                     std::size_t p) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double av = a_row[kk];
    if (av == 0.0) continue;
    const double* b_row = b + kk * p;
    for (std::size_t j = 0; j < p; ++j) c_row[j] += av * b_row[j];
  }
}

inline void gemm_a_bt_row(const double* a_row, const double* b, double* c_row, std::size_t p,
                          std::size_t k) {
  for (std::size_t j = 0; j < k; ++j) {
    const double* b_row = b + j * p;
    double acc = 0.0;
    for (std::size_t t = 0; t < p; ++t) acc += a_row[t] * b_row[t];
    c_row[j] += acc;
  }
}

// One output row i of aᵀ·b: c[i, :] += Σ_r a[r, i] · b[r, :]
inline void gemm_at_b_row(const double* a, const double* b, double* c_row, std::size_t i,
                          std::size_t m, std::size_t k, std::size_t p) {
  for (std::size_t r = 0; r < m; ++r) {
    const double av = a[r * k + i];
    if (av == 0.0) continue;
    const double* b_row = b + r * p;
    for (std::size_t j = 0; j < p; ++j) c_row[j] += av * b_row[j];
  }
}

}  // namespace

void gemm_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) gemm_row(a.data() + i * k, b.data(), c.data() + i * p, k, p);
}

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t p) {
  const bool par = m * k * p >= kParallelThreshold && m > 1;
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_row(a.data() + r * k, b.data(), c.data() + r * p, k, p);
  }
}

void gemm_a_bt_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t p, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    gemm_a_bt_row(a.data() + i * p, b.data(), c.data() + i * k, p, k);
}

void gemm_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t p, std::size_t k) {
  const bool par = m * k * p >= kParallelThreshold && m > 1;
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_a_bt_row(a.data() + r * p, b.data(), c.data() + r * k, p, k);
  }
}

void gemm_at_b_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < k; ++i) gemm_at_b_row(a.data(), b.data(), c.data() + i * p, i, m, k, p);
}

void gemm_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t p) {
  const bool par = m * k * p >= kParallelThreshold && k > 1;
  const auto rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_at_b_row(a.data(), b.data(), c.data() + r * p, r, m, k, p);
  }
}

}  // namespace dlf::kernels
