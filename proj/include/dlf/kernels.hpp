// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

namespace dlf::kernels {

/// Dense row-major GEMM variants used by the autograd matmul.
///
/// Every routine exists twice: a serial reference and an OpenMP version that
/// partitions output rows across threads. Each output element is accumulated
/// by exactly one thread in the same k-order as the serial loop, so the two
/// paths produce bit-identical results for any thread count.
///
/// All routines accumulate into `c` (c += ...); callers zero it first when a
/// plain product is wanted.

// c[m×p] += a[m×k] · b[k×p]
void gemm_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t k, std::size_t p);
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t p);

// c[m×k] += a[m×p] · b[k×p]ᵀ
void gemm_a_bt_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t p, std::size_t k);
void gemm_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t p, std::size_t k);

// c[k×p] += a[m×k]ᵀ · b[m×p]
void gemm_at_b_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t k, std::size_t p);
void gemm_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t p);

/// Below this many multiply-adds the OpenMP variants run on the calling thread.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

}  // namespace dlf::kernels
