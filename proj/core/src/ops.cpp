#include "dermfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <utility>

namespace dermfuse {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Decomposes a shape around one axis: flat index = (o * n + k) * inner + i
// with o < outer, k < n, i < inner.
struct AxisView {
  int64_t outer;
  int64_t n;
  int64_t inner;
};

AxisView axis_view(const Shape& s, int axis) {
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  AxisView v{1, s[static_cast<size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) v.outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) {
    v.inner *= s[i];
  }
  return v;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

Tensor make_out(Shape shape, bool tracked) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(tracked);
  return t;
}

// Elementwise op with gradient dy/dx supplied per element.
template <typename Fwd, typename Dfn>
Tensor unary_elementwise(const Tensor& a, const char* name, Fwd fwd, Dfn dfn) {
  const bool tracked = detail::track(a);
  Tensor out = make_out(a.shape(), tracked);
  const auto& x = a.data();
  auto& y = out.data();
  for (size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  detail::check_finite(out, name);
  if (tracked) {
    Tape::current()->record([a, out, dfn]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      auto& ga = a.grad();
      const auto& x = a.data();
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfn(x[i]);
    });
  }
  return out;
}

}  // namespace

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const bool tracked = detail::track(a) || detail::track(b);
  Tensor out = make_out(a.shape(), tracked);
  const auto& da = a.data();
  const auto& db = b.data();
  auto& y = out.data();
  for (size_t i = 0; i < y.size(); ++i) y[i] = da[i] + db[i];
  detail::check_finite(out, "add");
  if (tracked) {
    Tape::current()->record([a, b, out]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const bool tracked = detail::track(a) || detail::track(b);
  Tensor out = make_out(a.shape(), tracked);
  const auto& da = a.data();
  const auto& db = b.data();
  auto& y = out.data();
  for (size_t i = 0; i < y.size(); ++i) y[i] = da[i] - db[i];
  detail::check_finite(out, "sub");
  if (tracked) {
    Tape::current()->record([a, b, out]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const bool tracked = detail::track(a) || detail::track(b);
  Tensor out = make_out(a.shape(), tracked);
  const auto& da = a.data();
  const auto& db = b.data();
  auto& y = out.data();
  for (size_t i = 0; i < y.size(); ++i) y[i] = da[i] * db[i];
  detail::check_finite(out, "mul");
  if (tracked) {
    Tape::current()->record([a, b, out]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        const auto& db2 = b.data();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * db2[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        const auto& da2 = a.data();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * da2[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  const bool tracked = detail::track(a);
  Tensor out = make_out(a.shape(), tracked);
  const auto& x = a.data();
  auto& y = out.data();
  for (size_t i = 0; i < y.size(); ++i) y[i] = factor * x[i];
  detail::check_finite(out, "scale");
  if (tracked) {
    Tape::current()->record([a, out, factor]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      auto& ga = a.grad();
      for (size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() < 1 || bias.rank() != 1 ||
      x.shape().back() != bias.extent(0)) {
    throw ShapeError("add_bias: shape mismatch " + shape_str(x.shape()) +
                     " vs " + shape_str(bias.shape()));
  }
  const int64_t d = bias.extent(0);
  const int64_t rows = x.numel() / d;
  const bool tracked = detail::track(x) || detail::track(bias);
  Tensor out = make_out(x.shape(), tracked);
  const auto& xd = x.data();
  const auto& bd = bias.data();
  auto& y = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const size_t base = static_cast<size_t>(r * d);
    for (int64_t j = 0; j < d; ++j) {
      y[base + static_cast<size_t>(j)] =
          xd[base + static_cast<size_t>(j)] + bd[static_cast<size_t>(j)];
    }
  }
  detail::check_finite(out, "add_bias");
  if (tracked) {
    Tape::current()->record([x, bias, out, rows, d]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      if (x.requires_grad()) {
        auto& gx = x.grad();
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto& gb = bias.grad();
        for (int64_t r = 0; r < rows; ++r) {
          const size_t base = static_cast<size_t>(r * d);
          for (int64_t j = 0; j < d; ++j) {
            gb[static_cast<size_t>(j)] += g[base + static_cast<size_t>(j)];
          }
        }
      }
    });
  }
  return out;
}

namespace {

// out(m,n) += a(m,k) * b(k,n), fixed i-k-j order.
void matmul_acc(const double* a, const double* b, double* out, int64_t m,
                int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* orow = out + i * n;
    const double* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out(m,k) += a(m,n) * b(k,n)^T
void matmul_bt_acc(const double* a, const double* b, double* out, int64_t m,
                   int64_t n, int64_t k) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* orow = out + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      orow[p] += acc;
    }
  }
}

// out(k,n) += a(m,k)^T * b(m,n)
void matmul_at_acc(const double* a, const double* b, double* out, int64_t m,
                   int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* orow = out + p * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  const bool tracked = detail::track(a) || detail::track(b);
  Tensor out = make_out({m, n}, tracked);
  matmul_acc(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  detail::check_finite(out, "matmul");
  if (tracked) {
    Tape::current()->record([a, b, out, m, k, n]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      if (a.requires_grad()) {
        matmul_bt_acc(g.data(), b.data().data(), a.grad().data(), m, n, k);
      }
      if (b.requires_grad()) {
        matmul_at_acc(a.data().data(), g.data(), b.grad().data(), m, k, n);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError("transpose: expected 2-d tensor, got " +
                     shape_str(a.shape()));
  }
  const int64_t m = a.extent(0), n = a.extent(1);
  const bool tracked = detail::track(a);
  Tensor out = make_out({n, m}, tracked);
  const auto& x = a.data();
  auto& y = out.data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      y[static_cast<size_t>(j * m + i)] = x[static_cast<size_t>(i * n + j)];
    }
  }
  if (tracked) {
    Tape::current()->record([a, out, m, n]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      auto& ga = a.grad();
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
          ga[static_cast<size_t>(i * n + j)] +=
              g[static_cast<size_t>(j * m + i)];
        }
      }
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  Shape out_shape = first;
  int64_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != static_cast<int>(first.size())) {
      throw ShapeError("concat: rank mismatch " + shape_str(first) + " vs " +
                       shape_str(p.shape()));
    }
    for (int d = 0; d < p.rank(); ++d) {
      if (d != axis && p.shape()[static_cast<size_t>(d)] !=
                           first[static_cast<size_t>(d)]) {
        throw ShapeError("concat: extent mismatch off the concat axis, " +
                         shape_str(first) + " vs " + shape_str(p.shape()));
      }
    }
    total += p.extent(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total;
  bool tracked = false;
  for (const Tensor& p : parts) tracked = tracked || detail::track(p);
  Tensor out = make_out(out_shape, tracked);
  const AxisView ov = axis_view(out_shape, axis);
  auto& y = out.data();

  int64_t offset = 0;
  for (const Tensor& p : parts) {
    const int64_t np = p.extent(axis);
    const auto& x = p.data();
    for (int64_t o = 0; o < ov.outer; ++o) {
      const size_t dst = static_cast<size_t>(((o * ov.n) + offset) * ov.inner);
      const size_t src = static_cast<size_t>(o * np * ov.inner);
      std::memcpy(&y[dst], &x[src],
                  static_cast<size_t>(np * ov.inner) * sizeof(double));
    }
    offset += np;
  }
  if (tracked) {
    std::vector<Tensor> held = parts;
    Tape::current()->record([held, out, ov, axis]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      int64_t off = 0;
      for (Tensor& p : held) {
        const int64_t np = p.extent(axis);
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (int64_t o = 0; o < ov.outer; ++o) {
            const size_t src =
                static_cast<size_t>(((o * ov.n) + off) * ov.inner);
            const size_t dst = static_cast<size_t>(o * np * ov.inner);
            const size_t len = static_cast<size_t>(np * ov.inner);
            for (size_t i = 0; i < len; ++i) gp[dst + i] += g[src + i];
          }
        }
        off += np;
      }
    });
  }
  return out;
}

Tensor narrow(const Tensor& a, int axis, int64_t start, int64_t len) {
  const AxisView av = axis_view(a.shape(), axis);
  if (start < 0 || len <= 0 || start + len > av.n) {
    throw ShapeError("narrow: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of bounds for " +
                     shape_str(a.shape()) + " axis " + std::to_string(axis));
  }
  Shape out_shape = a.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  const bool tracked = detail::track(a);
  Tensor out = make_out(out_shape, tracked);
  const auto& x = a.data();
  auto& y = out.data();
  for (int64_t o = 0; o < av.outer; ++o) {
    const size_t src = static_cast<size_t>(((o * av.n) + start) * av.inner);
    const size_t dst = static_cast<size_t>(o * len * av.inner);
    std::memcpy(&y[dst], &x[src],
                static_cast<size_t>(len * av.inner) * sizeof(double));
  }
  if (tracked) {
    Tape::current()->record([a, out, av, start, len]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      auto& ga = a.grad();
      for (int64_t o = 0; o < av.outer; ++o) {
        const size_t dst = static_cast<size_t>(((o * av.n) + start) * av.inner);
        const size_t src = static_cast<size_t>(o * len * av.inner);
        const size_t span = static_cast<size_t>(len * av.inner);
        for (size_t i = 0; i < span; ++i) ga[dst + i] += g[src + i];
      }
    });
  }
  return out;
}

std::vector<Tensor> split(const Tensor& a, int axis,
                          const std::vector<int64_t>& sizes) {
  int64_t total = 0;
  for (int64_t s : sizes) total += s;
  if (total != a.extent(axis)) {
    throw ShapeError("split: sizes sum to " + std::to_string(total) +
                     " but axis extent is " + std::to_string(a.extent(axis)));
  }
  std::vector<Tensor> parts;
  parts.reserve(sizes.size());
  int64_t off = 0;
  for (int64_t s : sizes) {
    parts.push_back(narrow(a, axis, off, s));
    off += s;
  }
  return parts;
}

Tensor gather_rows(const Tensor& a, const std::vector<int64_t>& index) {
  if (a.rank() != 2) {
    throw ShapeError("gather_rows: expected 2-d tensor, got " +
                     shape_str(a.shape()));
  }
  if (index.empty()) throw ShapeError("gather_rows: empty index");
  const int64_t n = a.extent(0), d = a.extent(1);
  for (int64_t r : index) {
    if (r < 0 || r >= n) {
      throw ShapeError("gather_rows: row " + std::to_string(r) +
                       " out of range for " + shape_str(a.shape()));
    }
  }
  const bool tracked = detail::track(a);
  Tensor out = make_out({static_cast<int64_t>(index.size()), d}, tracked);
  const auto& x = a.data();
  auto& y = out.data();
  for (size_t r = 0; r < index.size(); ++r) {
    std::memcpy(&y[r * static_cast<size_t>(d)],
                &x[static_cast<size_t>(index[r] * d)],
                static_cast<size_t>(d) * sizeof(double));
  }
  if (tracked) {
    Tape::current()->record([a, out, index, d]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      auto& ga = a.grad();
      for (size_t r = 0; r < index.size(); ++r) {
        const size_t src = r * static_cast<size_t>(d);
        const size_t dst = static_cast<size_t>(index[r] * d);
        for (int64_t j = 0; j < d; ++j) {
          ga[dst + static_cast<size_t>(j)] += g[src + static_cast<size_t>(j)];
        }
      }
    });
  }
  return out;
}

namespace {

Tensor reduce_axis(const Tensor& a, int axis, bool mean, const char* name) {
  const AxisView av = axis_view(a.shape(), axis);
  Shape out_shape;
  for (int d = 0; d < a.rank(); ++d) {
    if (d != axis) out_shape.push_back(a.shape()[static_cast<size_t>(d)]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  const double w = mean ? 1.0 / static_cast<double>(av.n) : 1.0;
  const bool tracked = detail::track(a);
  Tensor out = make_out(out_shape, tracked);
  const auto& x = a.data();
  auto& y = out.data();
  for (int64_t o = 0; o < av.outer; ++o) {
    for (int64_t i = 0; i < av.inner; ++i) {
      double acc = 0.0;
      for (int64_t k = 0; k < av.n; ++k) {
        acc += x[static_cast<size_t>(((o * av.n) + k) * av.inner + i)];
      }
      y[static_cast<size_t>(o * av.inner + i)] = acc * w;
    }
  }
  detail::check_finite(out, name);
  if (tracked) {
    Tape::current()->record([a, out, av, w]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      auto& ga = a.grad();
      for (int64_t o = 0; o < av.outer; ++o) {
        for (int64_t k = 0; k < av.n; ++k) {
          for (int64_t i = 0; i < av.inner; ++i) {
            ga[static_cast<size_t>(((o * av.n) + k) * av.inner + i)] +=
                w * g[static_cast<size_t>(o * av.inner + i)];
          }
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor sum_axis(const Tensor& a, int axis) {
  return reduce_axis(a, axis, false, "sum_axis");
}

Tensor mean_axis(const Tensor& a, int axis) {
  return reduce_axis(a, axis, true, "mean_axis");
}

namespace {

Tensor reduce_all(const Tensor& a, bool mean, const char* name) {
  const double w = mean ? 1.0 / static_cast<double>(a.numel()) : 1.0;
  const bool tracked = detail::track(a);
  Tensor out = make_out({1}, tracked);
  const auto& x = a.data();
  double acc = 0.0;
  for (double v : x) acc += v;
  out.data()[0] = acc * w;
  detail::check_finite(out, name);
  if (tracked) {
    Tape::current()->record([a, out, w]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      auto& ga = a.grad();
      const double gv = g[0] * w;
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += gv;
    });
  }
  return out;
}

}  // namespace

Tensor sum_all(const Tensor& a) { return reduce_all(a, false, "sum_all"); }

Tensor mean_all(const Tensor& a) { return reduce_all(a, true, "mean_all"); }

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: rank-0 input");
  const int64_t d = x.shape().back();
  if (gamma.rank() != 1 || beta.rank() != 1 || gamma.extent(0) != d ||
      beta.extent(0) != d) {
    throw ShapeError("layer_norm: gamma/beta " + shape_str(gamma.shape()) +
                     "/" + shape_str(beta.shape()) +
                     " do not match last axis of " + shape_str(x.shape()));
  }
  const int64_t rows = x.numel() / d;
  const bool tracked =
      detail::track(x) || detail::track(gamma) || detail::track(beta);
  Tensor out = make_out(x.shape(), tracked);
  const auto& xd = x.data();
  const auto& gd = gamma.data();
  const auto& bd = beta.data();
  auto& y = out.data();

  std::vector<double> xhat(static_cast<size_t>(rows * d));
  std::vector<double> inv_std(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const size_t base = static_cast<size_t>(r * d);
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += xd[base + static_cast<size_t>(j)];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = xd[base + static_cast<size_t>(j)] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(r)] = inv;
    for (int64_t j = 0; j < d; ++j) {
      const double h = (xd[base + static_cast<size_t>(j)] - mean) * inv;
      xhat[base + static_cast<size_t>(j)] = h;
      y[base + static_cast<size_t>(j)] =
          gd[static_cast<size_t>(j)] * h + bd[static_cast<size_t>(j)];
    }
  }
  detail::check_finite(out, "layer_norm");
  if (tracked) {
    Tape::current()->record(
        [x, gamma, beta, out, rows, d, xhat = std::move(xhat),
         inv_std = std::move(inv_std)]() mutable {
          const auto& g = out.grad_buf();
          if (g.empty()) return;
          const auto& gd = gamma.data();
          for (int64_t r = 0; r < rows; ++r) {
            const size_t base = static_cast<size_t>(r * d);
            if (gamma.requires_grad()) {
              auto& gg = gamma.grad();
              for (int64_t j = 0; j < d; ++j) {
                gg[static_cast<size_t>(j)] +=
                    g[base + static_cast<size_t>(j)] *
                    xhat[base + static_cast<size_t>(j)];
              }
            }
            if (beta.requires_grad()) {
              auto& gb = beta.grad();
              for (int64_t j = 0; j < d; ++j) {
                gb[static_cast<size_t>(j)] += g[base + static_cast<size_t>(j)];
              }
            }
            if (x.requires_grad()) {
              auto& gx = x.grad();
              double m1 = 0.0, m2 = 0.0;
              for (int64_t j = 0; j < d; ++j) {
                const double dh = g[base + static_cast<size_t>(j)] *
                                  gd[static_cast<size_t>(j)];
                m1 += dh;
                m2 += dh * xhat[base + static_cast<size_t>(j)];
              }
              m1 /= static_cast<double>(d);
              m2 /= static_cast<double>(d);
              const double inv = inv_std[static_cast<size_t>(r)];
              for (int64_t j = 0; j < d; ++j) {
                const double dh = g[base + static_cast<size_t>(j)] *
                                  gd[static_cast<size_t>(j)];
                gx[base + static_cast<size_t>(j)] +=
                    inv * (dh - m1 - xhat[base + static_cast<size_t>(j)] * m2);
              }
            }
          }
        });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      a, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary_elementwise(
      a, "gelu",
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) +
               v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor softplus(const Tensor& a) {
  return unary_elementwise(
      a, "softplus", [](double v) { return stable_softplus(v); },
      [](double v) { return stable_sigmoid(v); });
}

Tensor softmax(const Tensor& a, int axis) {
  const AxisView av = axis_view(a.shape(), axis);
  const bool tracked = detail::track(a);
  Tensor out = make_out(a.shape(), tracked);
  const auto& x = a.data();
  auto& y = out.data();
  for (int64_t o = 0; o < av.outer; ++o) {
    for (int64_t i = 0; i < av.inner; ++i) {
      double m = -HUGE_VAL;
      for (int64_t k = 0; k < av.n; ++k) {
        m = std::max(m, x[static_cast<size_t>(((o * av.n) + k) * av.inner + i)]);
      }
      double s = 0.0;
      for (int64_t k = 0; k < av.n; ++k) {
        const size_t idx = static_cast<size_t>(((o * av.n) + k) * av.inner + i);
        const double e = std::exp(x[idx] - m);
        y[idx] = e;
        s += e;
      }
      const double inv = 1.0 / s;
      for (int64_t k = 0; k < av.n; ++k) {
        y[static_cast<size_t>(((o * av.n) + k) * av.inner + i)] *= inv;
      }
    }
  }
  detail::check_finite(out, "softmax");
  if (tracked) {
    Tape::current()->record([a, out, av]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      auto& ga = a.grad();
      const auto& y = out.data();
      for (int64_t o = 0; o < av.outer; ++o) {
        for (int64_t i = 0; i < av.inner; ++i) {
          double dot = 0.0;
          for (int64_t k = 0; k < av.n; ++k) {
            const size_t idx =
                static_cast<size_t>(((o * av.n) + k) * av.inner + i);
            dot += g[idx] * y[idx];
          }
          for (int64_t k = 0; k < av.n; ++k) {
            const size_t idx =
                static_cast<size_t>(((o * av.n) + k) * av.inner + i);
            ga[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor logsumexp(const Tensor& a, int axis) {
  const AxisView av = axis_view(a.shape(), axis);
  Shape out_shape;
  for (int d = 0; d < a.rank(); ++d) {
    if (d != axis) out_shape.push_back(a.shape()[static_cast<size_t>(d)]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  const bool tracked = detail::track(a);
  Tensor out = make_out(out_shape, tracked);
  const auto& x = a.data();
  auto& y = out.data();
  for (int64_t o = 0; o < av.outer; ++o) {
    for (int64_t i = 0; i < av.inner; ++i) {
      double m = -HUGE_VAL;
      for (int64_t k = 0; k < av.n; ++k) {
        m = std::max(m, x[static_cast<size_t>(((o * av.n) + k) * av.inner + i)]);
      }
      double s = 0.0;
      for (int64_t k = 0; k < av.n; ++k) {
        s += std::exp(x[static_cast<size_t>(((o * av.n) + k) * av.inner + i)] -
                      m);
      }
      y[static_cast<size_t>(o * av.inner + i)] = m + std::log(s);
    }
  }
  detail::check_finite(out, "logsumexp");
  if (tracked) {
    Tape::current()->record([a, out, av]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      auto& ga = a.grad();
      const auto& x = a.data();
      const auto& y = out.data();
      for (int64_t o = 0; o < av.outer; ++o) {
        for (int64_t i = 0; i < av.inner; ++i) {
          const double gv = g[static_cast<size_t>(o * av.inner + i)];
          if (gv == 0.0) continue;
          const double lse = y[static_cast<size_t>(o * av.inner + i)];
          for (int64_t k = 0; k < av.n; ++k) {
            const size_t idx =
                static_cast<size_t>(((o * av.n) + k) * av.inner + i);
            ga[idx] += gv * std::exp(x[idx] - lse);
          }
        }
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& a, double rate, bool training) {
  (void)training;
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout: rate must be in [0, 1), got " +
                      std::to_string(rate));
  }
  if (rate != 0.0) {
    throw ConfigError("dropout: only the identity rate 0 is supported");
  }
  return a;
}

Tensor sum_list(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) throw ShapeError("sum_list: no inputs");
  bool tracked = false;
  double acc = 0.0;
  for (const Tensor& t : scalars) {
    if (t.numel() != 1) {
      throw ShapeError("sum_list: non-scalar input " + shape_str(t.shape()));
    }
    acc += t.data()[0];
    tracked = tracked || detail::track(t);
  }
  Tensor out = make_out({1}, tracked);
  out.data()[0] = acc;
  detail::check_finite(out, "sum_list");
  if (tracked) {
    std::vector<Tensor> held = scalars;
    Tape::current()->record([held, out]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      for (Tensor& t : held) {
        if (t.requires_grad()) t.grad()[0] += g[0];
      }
    });
  }
  return out;
}

Tensor two_way_margin(const Tensor& logits,
                      const std::vector<uint8_t>& positive,
                      double temperature) {
  if (temperature <= 0.0) {
    throw ConfigError("two_way_margin: temperature must be positive");
  }
  if (static_cast<int64_t>(positive.size()) != logits.numel()) {
    throw ShapeError("two_way_margin: mask size " +
                     std::to_string(positive.size()) +
                     " does not match logits " + shape_str(logits.shape()));
  }
  detail::check_finite(logits, "two_way_margin(input)");

  std::vector<size_t> pos, neg;
  for (size_t i = 0; i < positive.size(); ++i) {
    (positive[i] ? pos : neg).push_back(i);
  }
  // Empty side: the corresponding logsumexp is -inf, so the whole softplus
  // term is exactly 0 and contributes no gradient.
  if (pos.empty() || neg.empty()) return Tensor::scalar(0.0);

  const auto& l = logits.data();
  const double t = temperature;

  double mneg = -HUGE_VAL;
  for (size_t i : neg) mneg = std::max(mneg, l[i]);
  double sneg = 0.0;
  for (size_t i : neg) sneg += std::exp(l[i] - mneg);
  const double lse_neg = mneg + std::log(sneg);

  double mpos = -HUGE_VAL;
  for (size_t i : pos) mpos = std::max(mpos, -l[i] / t);
  double spos = 0.0;
  for (size_t i : pos) spos += std::exp(-l[i] / t - mpos);
  const double lse_pos = mpos + std::log(spos);

  const double u = lse_neg + t * lse_pos;
  const bool tracked = detail::track(logits);
  Tensor out = make_out({1}, tracked);
  out.data()[0] = stable_softplus(u);
  detail::check_finite(out, "two_way_margin");
  if (tracked) {
    // Softmax weights over each side, saved for the backward step.
    std::vector<double> wneg(neg.size()), wpos(pos.size());
    for (size_t j = 0; j < neg.size(); ++j) {
      wneg[j] = std::exp(l[neg[j]] - mneg) / sneg;
    }
    for (size_t j = 0; j < pos.size(); ++j) {
      wpos[j] = std::exp(-l[pos[j]] / t - mpos) / spos;
    }
    const double sig = stable_sigmoid(u);
    Tape::current()->record([logits, out, pos = std::move(pos),
                             neg = std::move(neg), wneg = std::move(wneg),
                             wpos = std::move(wpos), sig]() mutable {
      const auto& g = out.grad_buf();
      if (g.empty()) return;
      auto& ga = logits.grad();
      const double gv = g[0] * sig;
      for (size_t j = 0; j < neg.size(); ++j) ga[neg[j]] += gv * wneg[j];
      for (size_t j = 0; j < pos.size(); ++j) ga[pos[j]] -= gv * wpos[j];
    });
  }
  return out;
}

}  // namespace dermfuse
