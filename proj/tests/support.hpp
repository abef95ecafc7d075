// SPDX-License-Identifier: Apache-2.0
// Shared helpers for the test binaries: random tensors and a central
// finite-difference gradient oracle.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dlf/rng.hpp"
#include "dlf/tensor.hpp"

namespace dlf::testing {

inline ad::Tensor random_tensor(ad::Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = true) {
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return ad::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

struct GradReport {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

/// Compares tape gradients of the scalar `loss_fn()` against central
/// differences for (a subset of) every element of `inputs`. Relative error is
/// |analytic − numeric| / max(|analytic|, |numeric|, floor).
inline GradReport gradcheck(const std::function<ad::Tensor()>& loss_fn, const std::vector<ad::Tensor>& inputs,
                            double h = 1e-5, std::size_t max_per_input = 0, double floor = 1e-4,
                            std::uint64_t sample_seed = 99) {
  for (auto t : inputs) t.zero_grad();
  {
    ad::Tape tape;
    ad::TapeScope scope(tape);
    auto loss = loss_fn();
    tape.backward(loss);
  }
  GradReport report;
  Rng pick(sample_seed);
  for (auto t : inputs) {
    std::vector<double> analytic(t.size(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    std::vector<std::size_t> idx(t.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_per_input && idx.size() > max_per_input) {
      for (std::size_t i = 0; i < max_per_input; ++i) std::swap(idx[i], idx[i + pick.below(idx.size() - i)]);
      idx.resize(max_per_input);
    }
    for (auto i : idx) {
      ad::NoGradScope no_grad;
      const double orig = t.data()[i];
      t.data()[i] = orig + h;
      const double up = loss_fn().item();
      t.data()[i] = orig - h;
      const double down = loss_fn().item();
      t.data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      report.max_rel = std::max(report.max_rel, std::abs(analytic[i] - numeric) / scale);
      ++report.checked;
    }
  }
  return report;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace dlf::testing
