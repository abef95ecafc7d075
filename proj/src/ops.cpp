// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>

#include "dlf/kernels.hpp"
#include "dlf/tensor.hpp"

namespace dlf::ad {

namespace {

Tape* recording(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = active_tape();
  if (!tape) return nullptr;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return tape;
  return nullptr;
}

Tensor output(Shape shape, const Tape* tape) { return Tensor::zeros(std::move(shape), tape != nullptr); }

Shape matrix(std::size_t r, std::size_t c) { return {r, c}; }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  Tape* tape = recording({&a});
  Tensor out = output(a.shape(), tape);
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  if (tape) {
    tape->record(out, {a}, [a, out, deriv](std::span<const double> g) {
      std::vector<double> gx(g.size());
      auto x = a.data();
      auto y = out.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * deriv(x[i], y[i]);
      accumulate_grad(a, gx);
    });
  }
  return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
  if (b.rows() != k || a.rank() > 2 || b.rank() > 2)
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  Tape* tape = recording({&a, &b});
  Tensor out = output(matrix(m, p), tape);
  kernels::gemm(a.data(), b.data(), out.data(), m, k, p);
  if (tape) {
    tape->record(out, {a, b}, [a, b, m, k, p](std::span<const double> g) {
      if (a.requires_grad()) {
        std::vector<double> ga(m * k, 0.0);
        kernels::gemm_a_bt(g, b.data(), ga, m, p, k);
        accumulate_grad(a, ga);
      }
      if (b.requires_grad()) {
        std::vector<double> gb(k * p, 0.0);
        kernels::gemm_at_b(a.data(), g, gb, m, k, p);
        accumulate_grad(b, gb);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  Tape* tape = recording({&a});
  Tensor out = output(matrix(c, r), tape);
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
  if (tape) {
    tape->record(out, {a}, [a, r, c](std::span<const double> g) {
      std::vector<double> gx(r * c);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] = g[j * r + i];
      accumulate_grad(a, gx);
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  enum class Mode { Same, Row, Scalar } mode;
  if (a.shape() == b.shape())
    mode = Mode::Same;
  else if (b.size() == 1)
    mode = Mode::Scalar;
  else if (b.rows() == 1 && b.cols() == a.cols() && a.rank() <= 2)
    mode = Mode::Row;
  else
    throw DimensionError("add: cannot broadcast " + to_string(b.shape()) + " onto " + to_string(a.shape()));

  Tape* tape = recording({&a, &b});
  Tensor out = output(a.shape(), tape);
  const std::size_t cols = a.cols();
  auto x = a.data();
  auto z = b.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double bv = mode == Mode::Same ? z[i] : mode == Mode::Row ? z[i % cols] : z[0];
    y[i] = x[i] + bv;
  }
  if (tape) {
    tape->record(out, {a, b}, [a, b, mode, cols](std::span<const double> g) {
      accumulate_grad(a, g);
      if (!b.requires_grad()) return;
      if (mode == Mode::Same) {
        accumulate_grad(b, g);
      } else if (mode == Mode::Row) {
        std::vector<double> gb(cols, 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
        accumulate_grad(b, gb);
      } else {
        double s = 0.0;
        for (double v : g) s += v;
        accumulate_grad(b, std::span<const double>(&s, 1));
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tape* tape = recording({&a, &b});
  Tensor out = output(a.shape(), tape);
  auto x = a.data();
  auto z = b.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - z[i];
  if (tape) {
    tape->record(out, {a, b}, [a, b](std::span<const double> g) {
      accumulate_grad(a, g);
      if (b.requires_grad()) {
        std::vector<double> gb(g.begin(), g.end());
        for (auto& v : gb) v = -v;
        accumulate_grad(b, gb);
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tape* tape = recording({&a, &b});
  Tensor out = output(a.shape(), tape);
  auto x = a.data();
  auto z = b.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * z[i];
  if (tape) {
    tape->record(out, {a, b}, [a, b](std::span<const double> g) {
      const std::size_t n = g.size();
      if (a.requires_grad()) {
        std::vector<double> ga(n);
        for (std::size_t i = 0; i < n; ++i) ga[i] = g[i] * b.data()[i];
        accumulate_grad(a, ga);
      }
      if (b.requires_grad()) {
        std::vector<double> gb(n);
        for (std::size_t i = 0; i < n; ++i) gb[i] = g[i] * a.data()[i];
        accumulate_grad(b, gb);
      }
    });
  }
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  Tape* tape = recording({&a, &b});
  Tensor out = output(a.shape(), tape);
  auto x = a.data();
  auto z = b.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / z[i];
  if (tape) {
    tape->record(out, {a, b}, [a, b, out](std::span<const double> g) {
      const std::size_t n = g.size();
      if (a.requires_grad()) {
        std::vector<double> ga(n);
        for (std::size_t i = 0; i < n; ++i) ga[i] = g[i] / b.data()[i];
        accumulate_grad(a, ga);
      }
      if (b.requires_grad()) {
        std::vector<double> gb(n);
        for (std::size_t i = 0; i < n; ++i) gb[i] = -g[i] * out.data()[i] / b.data()[i];
        accumulate_grad(b, gb);
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor silu(const Tensor& a) {
  return unary(
      a, [](double x) { return x * sigmoid(x); },
      [](double x, double) {
        const double s = sigmoid(x);
        return s + x * s * (1.0 - s);
      });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary(
      a, [lo](double x) { return x > lo ? x : lo; }, [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  Tape* tape = recording({&a});
  Tensor out = output({}, tape);
  double s = 0.0;
  for (double v : a.data()) s += v;
  out.data()[0] = s;
  if (tape) {
    tape->record(out, {a}, [a](std::span<const double> g) {
      std::vector<double> gx(a.size(), g[0]);
      accumulate_grad(a, gx);
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mean_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (r == 0) throw DimensionError("mean_rows: empty tensor " + to_string(a.shape()));
  Tape* tape = recording({&a});
  Tensor out = output(matrix(1, c), tape);
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j] += x[i * c + j];
  const double inv = 1.0 / static_cast<double>(r);
  for (auto& v : y) v *= inv;
  if (tape) {
    tape->record(out, {a}, [a, r, c, inv](std::span<const double> g) {
      std::vector<double> gx(r * c);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] = g[j] * inv;
      accumulate_grad(a, gx);
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  if (axis != 0 && axis != 1) throw DimensionError("concat: axis must be 0 or 1");
  Tape* tape = nullptr;
  if (active_tape())
    for (const auto& p : parts)
      if (p.requires_grad()) tape = active_tape();

  std::size_t rows = 0, cols = 0;
  if (axis == 0) {
    cols = parts[0].cols();
    for (const auto& p : parts) {
      if (p.cols() != cols)
        throw DimensionError("concat(axis=0): column mismatch " + to_string(parts[0].shape()) + " vs " +
                             to_string(p.shape()));
      rows += p.rows();
    }
  } else {
    rows = parts[0].rows();
    for (const auto& p : parts) {
      if (p.rows() != rows)
        throw DimensionError("concat(axis=1): row mismatch " + to_string(parts[0].shape()) + " vs " +
                             to_string(p.shape()));
      cols += p.cols();
    }
  }
  Tensor out = output(matrix(rows, cols), tape);
  auto y = out.data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto x = p.data();
    if (axis == 0) {
      std::copy(x.begin(), x.end(), y.begin() + static_cast<std::ptrdiff_t>(offset * cols));
      offset += p.rows();
    } else {
      const std::size_t pc = p.cols();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < pc; ++j) y[i * cols + offset + j] = x[i * pc + j];
      offset += pc;
    }
  }
  if (tape) {
    tape->record(out, parts, [parts, axis, rows, cols](std::span<const double> g) {
      std::size_t offset = 0;
      for (const auto& p : parts) {
        if (axis == 0) {
          const std::size_t n = p.size();
          if (p.requires_grad()) accumulate_grad(p, g.subspan(offset * cols, n));
          offset += p.rows();
        } else {
          const std::size_t pc = p.cols();
          if (p.requires_grad()) {
            std::vector<double> gp(rows * pc);
            for (std::size_t i = 0; i < rows; ++i)
              for (std::size_t j = 0; j < pc; ++j) gp[i * pc + j] = g[i * cols + offset + j];
            accumulate_grad(p, gp);
          }
          offset += pc;
        }
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t extent = axis == 0 ? r : c;
  if ((axis != 0 && axis != 1) || begin > end || end > extent)
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " of " + to_string(a.shape()));
  Tape* tape = recording({&a});
  const std::size_t orows = axis == 0 ? end - begin : r;
  const std::size_t ocols = axis == 1 ? end - begin : c;
  Tensor out = output(matrix(orows, ocols), tape);
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < orows; ++i)
    for (std::size_t j = 0; j < ocols; ++j) {
      const std::size_t si = axis == 0 ? i + begin : i;
      const std::size_t sj = axis == 1 ? j + begin : j;
      y[i * ocols + j] = x[si * c + sj];
    }
  if (tape) {
    tape->record(out, {a}, [a, axis, begin, orows, ocols, c](std::span<const double> g) {
      std::vector<double> gx(a.size(), 0.0);
      for (std::size_t i = 0; i < orows; ++i)
        for (std::size_t j = 0; j < ocols; ++j) {
          const std::size_t si = axis == 0 ? i + begin : i;
          const std::size_t sj = axis == 1 ? j + begin : j;
          gx[si * c + sj] += g[i * ocols + j];
        }
      accumulate_grad(a, gx);
    });
  }
  return out;
}

Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows) {
  const std::size_t r = a.rows(), c = a.cols();
  for (auto idx : rows)
    if (idx >= r)
      throw DimensionError("select_rows: row " + std::to_string(idx) + " out of range for " +
                           to_string(a.shape()));
  Tape* tape = recording({&a});
  Tensor out = output(matrix(rows.size(), c), tape);
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(rows[i] * c), c,
                y.begin() + static_cast<std::ptrdiff_t>(i * c));
  if (tape) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    tape->record(out, {a}, [a, idx, c](std::span<const double> g) {
      std::vector<double> gx(a.size(), 0.0);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) gx[idx[i] * c + j] += g[i * c + j];
      accumulate_grad(a, gx);
    });
  }
  return out;
}

Tensor rmsnorm(const Tensor& x, const Tensor& weight, double eps) {
  const std::size_t r = x.rows(), c = x.cols();
  if (weight.size() != c)
    throw DimensionError("rmsnorm: weight " + to_string(weight.shape()) + " does not match input " +
                         to_string(x.shape()));
  Tape* tape = recording({&x, &weight});
  Tensor out = output(x.shape(), tape);
  std::vector<double> inv(r);
  auto xv = x.data();
  auto w = weight.data();
  auto y = out.data();
  for (std::size_t i = 0; i < r; ++i) {
    double ms = 0.0;
    for (std::size_t j = 0; j < c; ++j) ms += xv[i * c + j] * xv[i * c + j];
    ms /= static_cast<double>(c);
    inv[i] = 1.0 / std::sqrt(ms + eps);
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = xv[i * c + j] * inv[i] * w[j];
  }
  if (tape) {
    tape->record(out, {x, weight}, [x, weight, inv, r, c](std::span<const double> g) {
      auto xv = x.data();
      auto w = weight.data();
      if (x.requires_grad()) {
        std::vector<double> gx(r * c);
        for (std::size_t i = 0; i < r; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * w[j] * xv[i * c + j];
          const double k = inv[i] * inv[i] * inv[i] * dot / static_cast<double>(c);
          for (std::size_t j = 0; j < c; ++j)
            gx[i * c + j] = inv[i] * w[j] * g[i * c + j] - xv[i * c + j] * k;
        }
        accumulate_grad(x, gx);
      }
      if (weight.requires_grad()) {
        std::vector<double> gw(c, 0.0);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gw[j] += g[i * c + j] * xv[i * c + j] * inv[i];
        accumulate_grad(weight, gw);
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t r = x.rows(), c = x.cols();
  bool along_rows;  // normalize each row
  if (x.rank() <= 1) {
    if (axis != 0 && axis != -1) throw DimensionError("softmax: invalid axis for " + to_string(x.shape()));
    along_rows = true;
  } else if (x.rank() == 2 && (axis == 1 || axis == -1)) {
    along_rows = true;
  } else if (x.rank() == 2 && axis == 0) {
    along_rows = false;
  } else {
    throw DimensionError("softmax: invalid axis " + std::to_string(axis) + " for " + to_string(x.shape()));
  }
  // Groups: each group is `len` elements spaced by `stride`.
  const std::size_t groups = along_rows ? r : c;
  const std::size_t len = along_rows ? c : r;
  const std::size_t stride = along_rows ? 1 : c;
  auto base = [&](std::size_t gi) { return along_rows ? gi * c : gi; };

  Tape* tape = recording({&x});
  Tensor out = output(x.shape(), tape);
  auto xv = x.data();
  auto y = out.data();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t b = base(gi);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < len; ++t) mx = std::max(mx, xv[b + t * stride]);
    double s = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      const double e = std::exp(xv[b + t * stride] - mx);
      y[b + t * stride] = e;
      s += e;
    }
    for (std::size_t t = 0; t < len; ++t) y[b + t * stride] /= s;
  }
  if (tape) {
    tape->record(out, {x}, [x, out, groups, len, stride, along_rows, c](std::span<const double> g) {
      auto y = out.data();
      std::vector<double> gx(x.size());
      for (std::size_t gi = 0; gi < groups; ++gi) {
        const std::size_t b = along_rows ? gi * c : gi;
        double dot = 0.0;
        for (std::size_t t = 0; t < len; ++t) dot += g[b + t * stride] * y[b + t * stride];
        for (std::size_t t = 0; t < len; ++t) {
          const std::size_t i = b + t * stride;
          gx[i] = y[i] * (g[i] - dot);
        }
      }
      accumulate_grad(x, gx);
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& x, std::span<const double> factors) {
  const std::size_t r = x.rows(), c = x.cols();
  if (factors.size() != r)
    throw DimensionError("scale_rows: " + std::to_string(factors.size()) + " factors for " +
                         to_string(x.shape()));
  Tape* tape = recording({&x});
  Tensor out = output(x.shape(), tape);
  auto xv = x.data();
  auto y = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = xv[i * c + j] * factors[i];
  if (tape) {
    std::vector<double> f(factors.begin(), factors.end());
    tape->record(out, {x}, [x, f, r, c](std::span<const double> g) {
      std::vector<double> gx(r * c);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] = g[i * c + j] * f[i];
      accumulate_grad(x, gx);
    });
  }
  return out;
}

Tensor add_constant(const Tensor& x, const Tensor& cst) {
  require_same_shape("add_constant", x, cst);
  Tape* tape = recording({&x});
  Tensor out = output(x.shape(), tape);
  auto xv = x.data();
  auto cv = cst.data();
  auto y = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] + cv[i];
  if (tape) tape->record(out, {x}, [x](std::span<const double> g) { accumulate_grad(x, g); });
  return out;
}

Tensor affine_rows(const Tensor& x, std::span<const double> scl, std::span<const double> shift) {
  const std::size_t r = x.rows(), c = x.cols();
  if (scl.size() != r || shift.size() != r)
    throw DimensionError("affine_rows: per-row parameters do not match " + to_string(x.shape()));
  Tape* tape = recording({&x});
  Tensor out = output(x.shape(), tape);
  auto xv = x.data();
  auto y = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = xv[i * c + j] * scl[i] + shift[i];
  if (tape) {
    std::vector<double> f(scl.begin(), scl.end());
    tape->record(out, {x}, [x, f, r, c](std::span<const double> g) {
      std::vector<double> gx(r * c);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] = g[i * c + j] * f[i];
      accumulate_grad(x, gx);
    });
  }
  return out;
}

}  // namespace dlf::ad
