#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <numbers>

#include "uaopose/errors.hpp"
#include "uaopose/tensor.hpp"

namespace uaopose::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Tape& same_tape(std::initializer_list<Var> vars) {
  Tape* tape = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw ContractError("operand is an unbound Var");
    if (tape && v.tape() != tape) throw ContractError("operands live on different tapes");
    tape = v.tape();
  }
  return *tape;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

void check_broadcast(const char* op, const Tensor& a, const Tensor& b) {
  if (!is_suffix(b.shape(), a.shape()))
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) + " onto " +
                     shape_str(a.shape()));
}

// Accumulates g into a gradient whose shape is a suffix of g's shape.
void accumulate_broadcast(Tensor& target, std::span<const double> g, double sign = 1.0) {
  const std::size_t n = target.size();
  auto t = target.data();
  if (n == g.size()) {
    for (std::size_t i = 0; i < n; ++i) t[i] += sign * g[i];
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) t[i % n] += sign * g[i];
}

template <class F>
Tensor map_values(const Tensor& x, F f) {
  Tensor out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return out;
}

struct AxisSplit {
  std::size_t outer = 1, mid = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.mid = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// Swaps axes p < q of a row-major array with shape [A, P, M, Q, I].
void swap_axes(std::span<const double> in, std::span<double> out, std::size_t A, std::size_t P,
               std::size_t M, std::size_t Q, std::size_t I, bool accumulate) {
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t q = 0; q < Q; ++q) {
          const double* src = &in[((((a * P + p) * M + m) * Q + q) * I)];
          double* dst = &out[((((a * Q + q) * M + m) * P + p) * I)];
          if (accumulate)
            for (std::size_t i = 0; i < I; ++i) dst[i] += src[i];
          else
            for (std::size_t i = 0; i < I; ++i) dst[i] = src[i];
        }
}

}  // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

Var matmul(Var a, Var b, MatmulKernel kernel) {
  Tape& tape = same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()));
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  const bool row_invariant = kernel == MatmulKernel::RowInvariant;
  Tensor out({m, n});
  if (row_invariant)
    MutMap(out.data().data(), m, n) = ConstMap(av.data().data(), m, k).lazyProduct(ConstMap(bv.data().data(), k, n));
  else
    MutMap(out.data().data(), m, n).noalias() = ConstMap(av.data().data(), m, k) * ConstMap(bv.data().data(), k, n);
  return tape.record("matmul", std::move(out), {a, b}, [m, k, n, row_invariant](const BackwardContext& ctx) {
    ConstMap g(ctx.grad_out.data().data(), m, n);
    if (Tensor* ga = ctx.input_grad(0)) {
      auto bt = ConstMap(ctx.input(1).data().data(), k, n).transpose();
      if (row_invariant)
        MutMap(ga->data().data(), m, k) += g.lazyProduct(bt);
      else
        MutMap(ga->data().data(), m, k).noalias() += g * bt;
    }
    if (Tensor* gb = ctx.input_grad(1))
      MutMap(gb->data().data(), k, n).noalias() += ConstMap(ctx.input(0).data().data(), m, k).transpose() * g;
  });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_broadcast("add", av, bv);
  Tensor out = av;
  auto o = out.data();
  auto bd = bv.data();
  const std::size_t nb = bd.size();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i % nb];
  return tape.record("add", std::move(out), {a, b}, [](const BackwardContext& ctx) {
    if (Tensor* ga = ctx.input_grad(0)) accumulate_broadcast(*ga, ctx.grad_out.data());
    if (Tensor* gb = ctx.input_grad(1)) accumulate_broadcast(*gb, ctx.grad_out.data());
  });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_broadcast("sub", av, bv);
  Tensor out = av;
  auto o = out.data();
  auto bd = bv.data();
  const std::size_t nb = bd.size();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i % nb];
  return tape.record("sub", std::move(out), {a, b}, [](const BackwardContext& ctx) {
    if (Tensor* ga = ctx.input_grad(0)) accumulate_broadcast(*ga, ctx.grad_out.data());
    if (Tensor* gb = ctx.input_grad(1)) accumulate_broadcast(*gb, ctx.grad_out.data(), -1.0);
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_broadcast("mul", av, bv);
  Tensor out = av;
  auto o = out.data();
  auto bd = bv.data();
  const std::size_t nb = bd.size();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i % nb];
  return tape.record("mul", std::move(out), {a, b}, [](const BackwardContext& ctx) {
    auto g = ctx.grad_out.data();
    auto ad = ctx.input(0).data();
    auto bd = ctx.input(1).data();
    const std::size_t nb = bd.size();
    if (Tensor* ga = ctx.input_grad(0)) {
      auto t = ga->data();
      for (std::size_t i = 0; i < g.size(); ++i) t[i] += g[i] * bd[i % nb];
    }
    if (Tensor* gb = ctx.input_grad(1)) {
      auto t = gb->data();
      for (std::size_t i = 0; i < g.size(); ++i) t[i % nb] += g[i] * ad[i];
    }
  });
}

Var scale(Var x, double factor) {
  Tape& tape = same_tape({x});
  Tensor out = map_values(x.value(), [factor](double v) { return v * factor; });
  return tape.record("scale", std::move(out), {x}, [factor](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.input_grad(0)) {
      auto g = ctx.grad_out.data();
      auto t = gx->data();
      for (std::size_t i = 0; i < g.size(); ++i) t[i] += factor * g[i];
    }
  });
}

Var shift(Var x, double offset) {
  Tape& tape = same_tape({x});
  Tensor out = map_values(x.value(), [offset](double v) { return v + offset; });
  return tape.record("shift", std::move(out), {x}, [](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.input_grad(0)) accumulate_broadcast(*gx, ctx.grad_out.data());
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& tape = same_tape({x, gamma, beta});
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t C = xv.shape().back();
  if (C == 0) throw ShapeError("layer_norm: zero-width feature axis");
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
    throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(C) + "], got " +
                     shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  if (!(eps >= 0.0)) throw ContractError("layer_norm: eps must be non-negative");

  const std::size_t rows = xv.size() / C;
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor out(xv.shape());
  auto xd = xv.data();
  auto gd = gamma.value().data();
  auto bd = beta.value().data();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = &xd[r * C];
    double mu = 0.0;
    for (std::size_t c = 0; c < C; ++c) mu += row[c];
    mu /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(C);
    const double denom = var + eps;
    // Zero-variance row with eps = 0: nothing to normalize by.
    if (!(denom > 0.0)) throw NumericError("layer_norm: zero variance with eps = 0");
    const double inv = 1.0 / std::sqrt(denom);
    (*inv_std)[r] = inv;
    for (std::size_t c = 0; c < C; ++c) {
      const double h = (row[c] - mu) * inv;
      (*xhat)[r * C + c] = h;
      o[r * C + c] = gd[c] * h + bd[c];
    }
  }
  return tape.record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [C, rows, xhat, inv_std](const BackwardContext& ctx) {
        auto g = ctx.grad_out.data();
        auto gam = ctx.input(1).data();
        const auto& h = *xhat;
        if (Tensor* ggam = ctx.input_grad(1)) {
          auto t = ggam->data();
          for (std::size_t i = 0; i < g.size(); ++i) t[i % C] += g[i] * h[i];
        }
        if (Tensor* gbeta = ctx.input_grad(2)) accumulate_broadcast(*gbeta, g);
        if (Tensor* gx = ctx.input_grad(0)) {
          auto t = gx->data();
          const double n = static_cast<double>(C);
          for (std::size_t r = 0; r < rows; ++r) {
            double sum_gh = 0.0, sum_gh_h = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
              const double gh = g[r * C + c] * gam[c];
              sum_gh += gh;
              sum_gh_h += gh * h[r * C + c];
            }
            const double k = (*inv_std)[r] / n;
            for (std::size_t c = 0; c < C; ++c) {
              const double gh = g[r * C + c] * gam[c];
              t[r * C + c] += k * (n * gh - sum_gh - h[r * C + c] * sum_gh_h);
            }
          }
        }
      });
}

Var gelu(Var x) {
  Tape& tape = same_tape({x});
  Tensor out = map_values(x.value(), gelu_value);
  return tape.record("gelu", std::move(out), {x}, [](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    auto g = ctx.grad_out.data();
    auto xd = ctx.input(0).data();
    auto t = gx->data();
    constexpr double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xd[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      t[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var relu(Var x) {
  Tape& tape = same_tape({x});
  tape.note_relu_signs(x.value().data());
  Tensor out = map_values(x.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  return tape.record("relu", std::move(out), {x}, [](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    auto g = ctx.grad_out.data();
    auto xd = ctx.input(0).data();
    auto t = gx->data();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xd[i] > 0.0) t[i] += g[i];
  });
}

Var exp(Var x) {
  Tape& tape = same_tape({x});
  Tensor out = map_values(x.value(), [](double v) { return std::exp(v); });
  return tape.record("exp", std::move(out), {x}, [](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    auto g = ctx.grad_out.data();
    auto y = ctx.output.data();
    auto t = gx->data();
    for (std::size_t i = 0; i < g.size(); ++i) t[i] += g[i] * y[i];
  });
}

Var sqrt(Var x) {
  Tape& tape = same_tape({x});
  for (double v : x.value().data())
    if (v < 0.0) throw NumericError("sqrt of a negative value");
  Tensor out = map_values(x.value(), [](double v) { return std::sqrt(v); });
  return tape.record("sqrt", std::move(out), {x}, [](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    auto g = ctx.grad_out.data();
    auto y = ctx.output.data();
    auto t = gx->data();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (y[i] > 0.0) t[i] += g[i] * 0.5 / y[i];
  });
}

Var sum(Var x) {
  Tape& tape = same_tape({x});
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return tape.record("sum", Tensor::scalar(total), {x}, [](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    const double g = ctx.grad_out[0];
    for (double& t : gx->data()) t += g;
  });
}

Var mean(Var x) {
  Tape& tape = same_tape({x});
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  const double n = static_cast<double>(x.value().size());
  return tape.record("mean", Tensor::scalar(total / n), {x}, [n](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    const double g = ctx.grad_out[0] / n;
    for (double& t : gx->data()) t += g;
  });
}

Var sum_last(Var x) {
  Tape& tape = same_tape({x});
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw ShapeError("sum_last: scalar input");
  const std::size_t n = xv.shape().back();
  Shape out_shape(xv.shape().begin(), xv.shape().end() - 1);
  Tensor out(out_shape);
  auto xd = xv.data();
  auto o = out.data();
  for (std::size_t r = 0; r < o.size(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += xd[r * n + c];
    o[r] = s;
  }
  return tape.record("sum_last", std::move(out), {x}, [n](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    auto g = ctx.grad_out.data();
    auto t = gx->data();
    for (std::size_t r = 0; r < g.size(); ++r)
      for (std::size_t c = 0; c < n; ++c) t[r * n + c] += g[r];
  });
}

Var reshape(Var x, Shape shape) {
  Tape& tape = same_tape({x});
  const Tensor& xv = x.value();
  if (shape_size(shape) != xv.size())
    throw ShapeError("reshape: cannot view " + shape_str(xv.shape()) + " as " + shape_str(shape));
  Tensor out(std::move(shape), xv.vec());
  return tape.record("reshape", std::move(out), {x}, [](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.input_grad(0)) accumulate_broadcast(*gx, ctx.grad_out.data());
  });
}

Var transpose(Var x, std::size_t axis_a, std::size_t axis_b) {
  Tape& tape = same_tape({x});
  const Tensor& xv = x.value();
  const Shape& s = xv.shape();
  std::size_t p = std::min(axis_a, axis_b), q = std::max(axis_a, axis_b);
  if (q >= s.size() || p == q)
    throw ShapeError("transpose: bad axes " + std::to_string(axis_a) + "," +
                     std::to_string(axis_b) + " for shape " + shape_str(s));
  std::size_t A = 1, M = 1, I = 1;
  for (std::size_t i = 0; i < p; ++i) A *= s[i];
  for (std::size_t i = p + 1; i < q; ++i) M *= s[i];
  for (std::size_t i = q + 1; i < s.size(); ++i) I *= s[i];
  const std::size_t P = s[p], Q = s[q];
  Shape out_shape = s;
  std::swap(out_shape[p], out_shape[q]);
  Tensor out(out_shape);
  swap_axes(xv.data(), out.data(), A, P, M, Q, I, false);
  return tape.record("transpose", std::move(out), {x},
                     [A, P, M, Q, I](const BackwardContext& ctx) {
                       if (Tensor* gx = ctx.input_grad(0))
                         swap_axes(ctx.grad_out.data(), gx->data(), A, Q, M, P, I, true);
                     });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& tape = same_tape({x});
  const Tensor& xv = x.value();
  if (axis >= xv.rank() || begin >= end || end > xv.dim(axis))
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid on axis " + std::to_string(axis) + " of " + shape_str(xv.shape()));
  const AxisSplit sp = split_at(xv.shape(), axis);
  const std::size_t len = end - begin;
  Shape out_shape = xv.shape();
  out_shape[axis] = len;
  Tensor out(out_shape);
  auto xd = xv.data();
  auto o = out.data();
  for (std::size_t a = 0; a < sp.outer; ++a)
    std::copy_n(&xd[(a * sp.mid + begin) * sp.inner], len * sp.inner, &o[a * len * sp.inner]);
  return tape.record("slice", std::move(out), {x}, [sp, begin, len](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    auto g = ctx.grad_out.data();
    auto t = gx->data();
    for (std::size_t a = 0; a < sp.outer; ++a)
      for (std::size_t i = 0; i < len * sp.inner; ++i)
        t[(a * sp.mid + begin) * sp.inner + i] += g[a * len * sp.inner + i];
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  Tape* tape = parts.front().tape();
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  std::size_t total = 0;
  std::vector<std::size_t> extents;
  for (const Var& v : parts) {
    if (v.tape() != tape) throw ContractError("concat: operands live on different tapes");
    Shape s = v.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != first[i])
        throw ShapeError("concat: " + shape_str(s) + " vs " + shape_str(first));
    extents.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  const AxisSplit sp = split_at(out_shape, axis);
  Tensor out(out_shape);
  auto o = out.data();
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto src = parts[k].value().data();
    const std::size_t len = extents[k];
    for (std::size_t a = 0; a < sp.outer; ++a)
      std::copy_n(&src[a * len * sp.inner], len * sp.inner, &o[(a * sp.mid + offset) * sp.inner]);
    offset += len;
  }
  return tape->record("concat", std::move(out), parts, [sp, extents](const BackwardContext& ctx) {
    auto g = ctx.grad_out.data();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < extents.size(); ++k) {
      const std::size_t len = extents[k];
      if (Tensor* gk = ctx.input_grad(k)) {
        auto t = gk->data();
        for (std::size_t a = 0; a < sp.outer; ++a)
          for (std::size_t i = 0; i < len * sp.inner; ++i)
            t[a * len * sp.inner + i] += g[(a * sp.mid + offset) * sp.inner + i];
      }
      offset += len;
    }
  });
}

Var detach(Var x) {
  Tape& tape = same_tape({x});
  return tape.constant(x.value());
}

Var clamp(Var x, double lo, double hi) {
  if (!(lo < hi)) throw ContractError("clamp: lo must be below hi");
  Var above_lo = relu(shift(x, -lo));
  Var above_hi = relu(shift(x, -hi));
  return shift(sub(above_lo, above_hi), lo);
}

}  // namespace uaopose::ad
