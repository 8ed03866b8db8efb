#include "incdet/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "incdet/kernels.hpp"

namespace incdet {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

Dims4 dims_of(const Tensor& t) {
  const auto& s = t.shape();
  return {s[0], s[1], s[2], s[3]};
}

bool wants_grad(const Tape* tape, std::initializer_list<Tensor> inputs) {
  if (!tape) return false;
  for (const auto& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

// Adds `src` into x's grad buffer iff x participates in the backward pass.
void maybe_accumulate(Tensor& x, const std::vector<Scalar>& src) {
  if (x.requires_grad()) x.accumulate_grad(src.data(), static_cast<std::int64_t>(src.size()));
}

}  // namespace

Scalar sum_values(const Tensor& t) {
  Scalar s = 0;
  const Scalar* p = t.data();
  for (std::int64_t i = 0, n = t.numel(); i < n; ++i) s += p[i];
  return s;
}

Scalar exact_sum(const Scalar* v, std::int64_t n) {
  // Shewchuk's non-overlapping partials with round-half-even correction,
  // after CPython's fsum. Exactness is what buys order independence.
  std::vector<Scalar> partials;
  for (std::int64_t i = 0; i < n; ++i) {
    Scalar x = v[i];
    std::size_t used = 0;
    for (std::size_t k = 0; k < partials.size(); ++k) {
      Scalar y = partials[k];
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const Scalar hi = x + y;
      const Scalar lo = y - (hi - x);
      if (lo != 0.0) partials[used++] = lo;
      x = hi;
    }
    partials.resize(used);
    partials.push_back(x);
  }
  if (partials.empty()) return 0.0;
  std::size_t k = partials.size();
  Scalar total = partials[--k];
  Scalar err = 0.0;
  while (k > 0) {
    const Scalar x = total;
    const Scalar y = partials[--k];
    total = x + y;
    err = y - (total - x);
    if (err != 0.0) break;
  }
  if (k > 0 && ((err < 0.0 && partials[k - 1] < 0.0) ||
                (err > 0.0 && partials[k - 1] > 0.0))) {
    const Scalar y = err * 2.0;
    const Scalar x = total + y;
    if (y == x - total) total = x;
  }
  return total;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad,
              Tape* tape) {
  require(input.ndim() == 4, "conv2d: input must be 4D NCHW, got " + shape_str(input.shape()));
  require(kernel.ndim() == 4, "conv2d: kernel must be 4D [out,in,kh,kw], got " + shape_str(kernel.shape()));
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(pad >= 0, "conv2d: pad must be >= 0");
  const Dims4 xd = dims_of(input), wd = dims_of(kernel);
  require(xd.c == wd.c, "conv2d: input channels " + std::to_string(xd.c) +
                            " != kernel in-channels " + std::to_string(wd.c));
  const int oh = conv_out_dim(xd.h, wd.h, stride, pad);
  const int ow = conv_out_dim(xd.w, wd.w, stride, pad);
  require(oh >= 1 && ow >= 1, "conv2d: kernel " + shape_str(kernel.shape()) +
                                  " does not fit input " + shape_str(input.shape()));

  Tensor out = Tensor::zeros({xd.n, wd.n, oh, ow});
  const Dims4 yd = dims_of(out);
  kern::conv2d_forward(input.data(), xd, kernel.data(), wd, stride, pad, out.data(), yd);
  check_finite(out, "conv2d");

  if (wants_grad(tape, {input, kernel})) {
    out.set_requires_grad(true);
    Tensor x = input, w = kernel, y = out;
    tape->record("conv2d", [x, w, y, xd, wd, yd, stride, pad]() mutable {
      if (!y.has_grad()) return;
      if (x.requires_grad()) {
        std::vector<Scalar> gx(static_cast<std::size_t>(xd.numel()));
        kern::conv2d_backward_input(y.grad(), yd, w.data(), wd, stride, pad, gx.data(), xd);
        x.accumulate_grad(gx.data(), xd.numel());
      }
      if (w.requires_grad()) {
        std::vector<Scalar> gw(static_cast<std::size_t>(wd.numel()));
        kern::conv2d_backward_kernel(y.grad(), yd, x.data(), xd, stride, pad, gw.data(), wd);
        w.accumulate_grad(gw.data(), wd.numel());
      }
    });
  }
  return out;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, int stride,
                        Tape* tape) {
  require(input.ndim() == 4, "conv_transpose2d: input must be 4D NCHW, got " + shape_str(input.shape()));
  require(kernel.ndim() == 4, "conv_transpose2d: kernel must be 4D [in,out,kh,kw], got " + shape_str(kernel.shape()));
  require(stride >= 1, "conv_transpose2d: stride must be >= 1");
  const Dims4 xd = dims_of(input), wd = dims_of(kernel);
  require(xd.c == wd.n, "conv_transpose2d: input channels " + std::to_string(xd.c) +
                            " != kernel in-channels " + std::to_string(wd.n));
  const int oh = convt_out_dim(xd.h, wd.h, stride);
  const int ow = convt_out_dim(xd.w, wd.w, stride);

  Tensor out = Tensor::zeros({xd.n, wd.c, oh, ow});
  const Dims4 yd = dims_of(out);
  kern::convt2d_forward(input.data(), xd, kernel.data(), wd, stride, out.data(), yd);
  check_finite(out, "conv_transpose2d");

  if (wants_grad(tape, {input, kernel})) {
    out.set_requires_grad(true);
    Tensor x = input, w = kernel, y = out;
    tape->record("conv_transpose2d", [x, w, y, xd, wd, yd, stride]() mutable {
      if (!y.has_grad()) return;
      if (x.requires_grad()) {
        std::vector<Scalar> gx(static_cast<std::size_t>(xd.numel()));
        kern::convt2d_backward_input(y.grad(), yd, w.data(), wd, stride, gx.data(), xd);
        x.accumulate_grad(gx.data(), xd.numel());
      }
      if (w.requires_grad()) {
        std::vector<Scalar> gw(static_cast<std::size_t>(wd.numel()));
        kern::convt2d_backward_kernel(y.grad(), yd, x.data(), xd, stride, gw.data(), wd);
        w.accumulate_grad(gw.data(), wd.numel());
      }
    });
  }
  return out;
}

Tensor conv1x1(const Tensor& input, const Tensor& code, Tape* tape) {
  require(input.ndim() == 4, "conv1x1: input must be 4D NCHW");
  require(code.ndim() == 1, "conv1x1: code must be 1D");
  const Dims4 xd = dims_of(input);
  require(code.dim(0) == xd.c, "conv1x1: code length " + std::to_string(code.dim(0)) +
                                   " != input channels " + std::to_string(xd.c));
  Tensor out = Tensor::zeros({xd.n, 1, xd.h, xd.w});
  const std::int64_t hw = static_cast<std::int64_t>(xd.h) * xd.w;
  const Scalar* xp = input.data();
  const Scalar* cp = code.data();
  Scalar* yp = out.data();
  for (int n = 0; n < xd.n; ++n)
    for (std::int64_t p = 0; p < hw; ++p) {
      Scalar acc = 0;
      for (int c = 0; c < xd.c; ++c)
        acc += xp[(static_cast<std::int64_t>(n) * xd.c + c) * hw + p] * cp[c];
      yp[n * hw + p] = acc;
    }
  check_finite(out, "conv1x1");

  if (wants_grad(tape, {input, code})) {
    out.set_requires_grad(true);
    Tensor x = input, cv = code, y = out;
    tape->record("conv1x1", [x, cv, y, xd, hw]() mutable {
      if (!y.has_grad()) return;
      const Scalar* gy = y.grad();
      if (x.requires_grad()) {
        std::vector<Scalar> gx(static_cast<std::size_t>(xd.numel()));
        for (int n = 0; n < xd.n; ++n)
          for (int c = 0; c < xd.c; ++c)
            for (std::int64_t p = 0; p < hw; ++p)
              gx[(static_cast<std::int64_t>(n) * xd.c + c) * hw + p] =
                  gy[n * hw + p] * cv.data()[c];
        x.accumulate_grad(gx.data(), xd.numel());
      }
      if (cv.requires_grad()) {
        std::vector<Scalar> gc(static_cast<std::size_t>(xd.c), 0.0);
        for (int n = 0; n < xd.n; ++n)
          for (int c = 0; c < xd.c; ++c) {
            Scalar acc = 0;
            for (std::int64_t p = 0; p < hw; ++p)
              acc += gy[n * hw + p] *
                     x.data()[(static_cast<std::int64_t>(n) * xd.c + c) * hw + p];
            gc[static_cast<std::size_t>(c)] += acc;
          }
        cv.accumulate_grad(gc.data(), xd.c);
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x, Tape* tape) {
  Tensor out = Tensor::zeros(x.shape());
  const Scalar* xp = x.data();
  Scalar* yp = out.data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) yp[i] = xp[i] > 0 ? xp[i] : 0;
  check_finite(out, "relu");

  if (wants_grad(tape, {x})) {
    out.set_requires_grad(true);
    Tensor in = x, y = out;
    tape->record("relu", [in, y, n]() mutable {
      if (!y.has_grad()) return;
      const Scalar* gy = y.grad();
      std::vector<Scalar> gx(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i)
        gx[static_cast<std::size_t>(i)] = in.data()[i] > 0 ? gy[i] : 0;
      in.accumulate_grad(gx.data(), n);
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x, Tape* tape) {
  Tensor out = Tensor::zeros(x.shape());
  const Scalar* xp = x.data();
  Scalar* yp = out.data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) yp[i] = 1.0 / (1.0 + std::exp(-xp[i]));
  check_finite(out, "sigmoid");

  if (wants_grad(tape, {x})) {
    out.set_requires_grad(true);
    Tensor in = x, y = out;
    tape->record("sigmoid", [in, y, n]() mutable {
      if (!y.has_grad()) return;
      const Scalar* gy = y.grad();
      std::vector<Scalar> gx(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) {
        const Scalar s = y.data()[i];
        gx[static_cast<std::size_t>(i)] = gy[i] * s * (1.0 - s);
      }
      in.accumulate_grad(gx.data(), n);
    });
  }
  return out;
}

Tensor group_norm(const Tensor& x, int groups, Tape* tape) {
  require(x.ndim() == 4, "group_norm: input must be 4D NCHW");
  const Dims4 xd = dims_of(x);
  require(groups >= 1 && xd.c % groups == 0,
          "group_norm: channels " + std::to_string(xd.c) + " not divisible by groups " +
              std::to_string(groups));
  constexpr Scalar kEps = 1e-5;
  const int cg = xd.c / groups;
  const std::int64_t hw = static_cast<std::int64_t>(xd.h) * xd.w;
  const std::int64_t gsize = cg * hw;

  Tensor out = Tensor::zeros(x.shape());
  auto mean = std::make_shared<std::vector<Scalar>>(static_cast<std::size_t>(xd.n) * groups);
  auto istd = std::make_shared<std::vector<Scalar>>(static_cast<std::size_t>(xd.n) * groups);

  const Scalar* xp = x.data();
  Scalar* yp = out.data();
  for (int n = 0; n < xd.n; ++n)
    for (int g = 0; g < groups; ++g) {
      const std::int64_t base = (static_cast<std::int64_t>(n) * xd.c + g * cg) * hw;
      Scalar mu = 0;
      for (std::int64_t i = 0; i < gsize; ++i) mu += xp[base + i];
      mu /= static_cast<Scalar>(gsize);
      Scalar var = 0;
      for (std::int64_t i = 0; i < gsize; ++i) {
        const Scalar d = xp[base + i] - mu;
        var += d * d;
      }
      var /= static_cast<Scalar>(gsize);
      const Scalar is = 1.0 / std::sqrt(var + kEps);
      (*mean)[static_cast<std::size_t>(n) * groups + g] = mu;
      (*istd)[static_cast<std::size_t>(n) * groups + g] = is;
      for (std::int64_t i = 0; i < gsize; ++i) yp[base + i] = (xp[base + i] - mu) * is;
    }
  check_finite(out, "group_norm");

  if (wants_grad(tape, {x})) {
    out.set_requires_grad(true);
    Tensor in = x, y = out;
    tape->record("group_norm", [in, y, xd, groups, cg, hw, gsize, mean, istd]() mutable {
      if (!y.has_grad()) return;
      const Scalar* gy = y.grad();
      std::vector<Scalar> gx(static_cast<std::size_t>(xd.numel()));
      for (int n = 0; n < xd.n; ++n)
        for (int g = 0; g < groups; ++g) {
          const std::int64_t base = (static_cast<std::int64_t>(n) * xd.c + g * cg) * hw;
          const Scalar is = (*istd)[static_cast<std::size_t>(n) * groups + g];
          // xhat is recoverable from the output; dL/dx = is*(gy - mean(gy) - xhat*mean(gy*xhat))
          Scalar sum_gy = 0, sum_gy_xhat = 0;
          for (std::int64_t i = 0; i < gsize; ++i) {
            sum_gy += gy[base + i];
            sum_gy_xhat += gy[base + i] * y.data()[base + i];
          }
          const Scalar m_gy = sum_gy / static_cast<Scalar>(gsize);
          const Scalar m_gy_xhat = sum_gy_xhat / static_cast<Scalar>(gsize);
          for (std::int64_t i = 0; i < gsize; ++i)
            gx[static_cast<std::size_t>(base + i)] =
                is * (gy[base + i] - m_gy - y.data()[base + i] * m_gy_xhat);
        }
      in.accumulate_grad(gx.data(), xd.numel());
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x, Tape* tape) {
  require(x.ndim() == 4, "global_avg_pool: input must be 4D NCHW");
  const Dims4 xd = dims_of(x);
  const std::int64_t hw = static_cast<std::int64_t>(xd.h) * xd.w;
  Tensor out = Tensor::zeros({xd.n, xd.c});
  const Scalar* xp = x.data();
  Scalar* yp = out.data();
  for (int n = 0; n < xd.n; ++n)
    for (int c = 0; c < xd.c; ++c) {
      Scalar acc = 0;
      const std::int64_t base = (static_cast<std::int64_t>(n) * xd.c + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) acc += xp[base + i];
      yp[static_cast<std::int64_t>(n) * xd.c + c] = acc / static_cast<Scalar>(hw);
    }
  check_finite(out, "global_avg_pool");

  if (wants_grad(tape, {x})) {
    out.set_requires_grad(true);
    Tensor in = x, y = out;
    tape->record("global_avg_pool", [in, y, xd, hw]() mutable {
      if (!y.has_grad()) return;
      const Scalar* gy = y.grad();
      std::vector<Scalar> gx(static_cast<std::size_t>(xd.numel()));
      for (int n = 0; n < xd.n; ++n)
        for (int c = 0; c < xd.c; ++c) {
          const Scalar g = gy[static_cast<std::int64_t>(n) * xd.c + c] / static_cast<Scalar>(hw);
          const std::int64_t base = (static_cast<std::int64_t>(n) * xd.c + c) * hw;
          for (std::int64_t i = 0; i < hw; ++i) gx[static_cast<std::size_t>(base + i)] = g;
        }
      in.accumulate_grad(gx.data(), xd.numel());
    });
  }
  return out;
}

Tensor mean_rows(const Tensor& x, Tape* tape) {
  require(x.ndim() == 2, "mean_rows: input must be 2D [N,C]");
  const int n = x.dim(0), c = x.dim(1);
  Tensor out = Tensor::zeros({c});
  const Scalar* xp = x.data();
  Scalar* yp = out.data();
  // Exact column sums make the mean independent of row order: permuting or
  // duplicating the rows of a support batch cannot change the result bits.
  std::vector<Scalar> col(static_cast<std::size_t>(n));
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = xp[static_cast<std::int64_t>(i) * c + j];
    yp[j] = exact_sum(col.data(), n) / static_cast<Scalar>(n);
  }
  check_finite(out, "mean_rows");

  if (wants_grad(tape, {x})) {
    out.set_requires_grad(true);
    Tensor in = x, y = out;
    tape->record("mean_rows", [in, y, n, c]() mutable {
      if (!y.has_grad()) return;
      const Scalar* gy = y.grad();
      std::vector<Scalar> gx(static_cast<std::size_t>(n) * c);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j)
          gx[static_cast<std::size_t>(i) * c + j] = gy[j] / static_cast<Scalar>(n);
      in.accumulate_grad(gx.data(), static_cast<std::int64_t>(n) * c);
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  check_finite(out, "add");

  if (wants_grad(tape, {a, b})) {
    out.set_requires_grad(true);
    Tensor ta = a, tb = b, y = out;
    tape->record("add", [ta, tb, y]() mutable {
      if (!y.has_grad()) return;
      std::vector<Scalar> g(y.grad(), y.grad() + y.numel());
      maybe_accumulate(ta, g);
      maybe_accumulate(tb, g);
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  check_finite(out, "mul");

  if (wants_grad(tape, {a, b})) {
    out.set_requires_grad(true);
    Tensor ta = a, tb = b, y = out;
    tape->record("mul", [ta, tb, y, n]() mutable {
      if (!y.has_grad()) return;
      const Scalar* gy = y.grad();
      if (ta.requires_grad()) {
        std::vector<Scalar> g(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = gy[i] * tb.data()[i];
        ta.accumulate_grad(g.data(), n);
      }
      if (tb.requires_grad()) {
        std::vector<Scalar> g(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = gy[i] * ta.data()[i];
        tb.accumulate_grad(g.data(), n);
      }
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, Scalar s, Tape* tape) {
  Tensor out = Tensor::zeros(a.shape());
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + s;
  check_finite(out, "add_scalar");

  if (wants_grad(tape, {a})) {
    out.set_requires_grad(true);
    Tensor ta = a, y = out;
    tape->record("add_scalar", [ta, y]() mutable {
      if (!y.has_grad()) return;
      std::vector<Scalar> g(y.grad(), y.grad() + y.numel());
      maybe_accumulate(ta, g);
    });
  }
  return out;
}

Tensor mul_scalar(const Tensor& a, Scalar s, Tape* tape) {
  Tensor out = Tensor::zeros(a.shape());
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * s;
  check_finite(out, "mul_scalar");

  if (wants_grad(tape, {a})) {
    out.set_requires_grad(true);
    Tensor ta = a, y = out;
    tape->record("mul_scalar", [ta, y, s]() mutable {
      if (!y.has_grad()) return;
      const Scalar* gy = y.grad();
      std::vector<Scalar> g(static_cast<std::size_t>(y.numel()));
      for (std::int64_t i = 0; i < y.numel(); ++i) g[static_cast<std::size_t>(i)] = gy[i] * s;
      maybe_accumulate(ta, g);
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& xs, int axis, Tape* tape) {
  require(!xs.empty(), "concat: empty input list");
  const int nd = xs[0].ndim();
  require(axis >= 0 && axis < nd, "concat: axis out of range");
  std::vector<int> out_shape = xs[0].shape();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    require(xs[i].ndim() == nd, "concat: rank mismatch");
    for (int d = 0; d < nd; ++d)
      if (d != axis)
        require(xs[i].dim(d) == out_shape[static_cast<std::size_t>(d)],
                "concat: non-axis dim mismatch at input " + std::to_string(i));
    out_shape[static_cast<std::size_t>(axis)] += xs[i].dim(axis);
  }

  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[static_cast<std::size_t>(d)];
  for (int d = axis + 1; d < nd; ++d) inner *= out_shape[static_cast<std::size_t>(d)];

  Tensor out = Tensor::zeros(out_shape);
  const std::int64_t out_block = out_shape[static_cast<std::size_t>(axis)] * inner;
  std::int64_t axis_off = 0;
  for (const auto& x : xs) {
    const std::int64_t blk = static_cast<std::int64_t>(x.dim(axis)) * inner;
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy(x.data() + o * blk, x.data() + (o + 1) * blk,
                out.data() + o * out_block + axis_off * inner);
    axis_off += x.dim(axis);
  }
  check_finite(out, "concat");

  bool any_rg = false;
  for (const auto& x : xs) any_rg |= x.requires_grad();
  if (tape && any_rg) {
    out.set_requires_grad(true);
    std::vector<Tensor> ins = xs;
    Tensor y = out;
    tape->record("concat", [ins, y, axis, outer, inner, out_block]() mutable {
      if (!y.has_grad()) return;
      const Scalar* gy = y.grad();
      std::int64_t axis_off = 0;
      for (auto& x : ins) {
        const std::int64_t blk = static_cast<std::int64_t>(x.dim(axis)) * inner;
        if (x.requires_grad()) {
          std::vector<Scalar> g(static_cast<std::size_t>(outer * blk));
          for (std::int64_t o = 0; o < outer; ++o)
            std::copy(gy + o * out_block + axis_off * inner,
                      gy + o * out_block + axis_off * inner + blk,
                      g.begin() + o * blk);
          x.accumulate_grad(g.data(), outer * blk);
        }
        axis_off += x.dim(axis);
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x, Tape* tape) {
  Tensor out = Tensor::scalar(sum_values(x));
  check_finite(out, "sum_all");
  if (wants_grad(tape, {x})) {
    out.set_requires_grad(true);
    Tensor in = x, y = out;
    tape->record("sum_all", [in, y]() mutable {
      if (!y.has_grad()) return;
      std::vector<Scalar> g(static_cast<std::size_t>(in.numel()), y.grad()[0]);
      in.accumulate_grad(g.data(), in.numel());
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, std::vector<int> new_shape, Tape* tape) {
  Tensor out = Tensor::from(new_shape, x.data_vec());
  if (wants_grad(tape, {x})) {
    out.set_requires_grad(true);
    Tensor in = x, y = out;
    tape->record("reshape", [in, y]() mutable {
      if (!y.has_grad()) return;
      in.accumulate_grad(y.grad(), y.numel());
    });
  }
  return out;
}

Tensor l1_loss(const Tensor& pred, const Tensor& target, Tape* tape) {
  require(pred.shape() == target.shape(), "l1_loss: shape mismatch " +
                                              shape_str(pred.shape()) + " vs " +
                                              shape_str(target.shape()));
  const std::int64_t n = pred.numel();
  Scalar acc = 0;
  for (std::int64_t i = 0; i < n; ++i) acc += std::abs(pred.data()[i] - target.data()[i]);
  Tensor out = Tensor::scalar(acc / static_cast<Scalar>(n));
  check_finite(out, "l1_loss");

  if (wants_grad(tape, {pred, target})) {
    out.set_requires_grad(true);
    Tensor p = pred, t = target, y = out;
    tape->record("l1_loss", [p, t, y, n]() mutable {
      if (!y.has_grad()) return;
      const Scalar g = y.grad()[0] / static_cast<Scalar>(n);
      std::vector<Scalar> gp(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) {
        const Scalar d = p.data()[i] - t.data()[i];
        gp[static_cast<std::size_t>(i)] = d > 0 ? g : (d < 0 ? -g : 0);
      }
      if (p.requires_grad()) p.accumulate_grad(gp.data(), n);
      if (t.requires_grad()) {
        for (auto& v : gp) v = -v;
        t.accumulate_grad(gp.data(), n);
      }
    });
  }
  return out;
}

Tensor masked_l1_sum(const Tensor& pred, const Tensor& target,
                     const Tensor& mask, Tape* tape) {
  require(pred.shape() == target.shape(), "masked_l1_sum: pred/target shape mismatch");
  require(pred.ndim() == 4, "masked_l1_sum: pred must be 4D NCHW");
  const Dims4 pd = dims_of(pred);
  const bool per_channel = mask.shape() == pred.shape();
  if (!per_channel)
    require(mask.ndim() == 4 && mask.dim(0) == pd.n && mask.dim(1) == 1 &&
                mask.dim(2) == pd.h && mask.dim(3) == pd.w,
            "masked_l1_sum: mask must be [N,1,H,W] or match pred " + shape_str(pred.shape()));
  const std::int64_t hw = static_cast<std::int64_t>(pd.h) * pd.w;

  auto mask_at = [&](int n, int c, std::int64_t p) {
    return per_channel ? mask.data()[(static_cast<std::int64_t>(n) * pd.c + c) * hw + p]
                       : mask.data()[n * hw + p];
  };

  Scalar acc = 0;
  for (int n = 0; n < pd.n; ++n)
    for (int c = 0; c < pd.c; ++c)
      for (std::int64_t p = 0; p < hw; ++p) {
        const std::int64_t i = (static_cast<std::int64_t>(n) * pd.c + c) * hw + p;
        acc += mask_at(n, c, p) * std::abs(pred.data()[i] - target.data()[i]);
      }
  Tensor out = Tensor::scalar(acc);
  check_finite(out, "masked_l1_sum");

  if (wants_grad(tape, {pred, target})) {
    out.set_requires_grad(true);
    Tensor p = pred, t = target, m = mask, y = out;
    tape->record("masked_l1_sum", [p, t, m, y, pd, hw, per_channel]() mutable {
      if (!y.has_grad()) return;
      const Scalar g = y.grad()[0];
      std::vector<Scalar> gp(static_cast<std::size_t>(pd.numel()));
      for (int n = 0; n < pd.n; ++n)
        for (int c = 0; c < pd.c; ++c)
          for (std::int64_t q = 0; q < hw; ++q) {
            const std::int64_t i = (static_cast<std::int64_t>(n) * pd.c + c) * hw + q;
            const Scalar mv = per_channel ? m.data()[i] : m.data()[n * hw + q];
            const Scalar d = p.data()[i] - t.data()[i];
            gp[static_cast<std::size_t>(i)] = d > 0 ? g * mv : (d < 0 ? -g * mv : 0);
          }
      if (p.requires_grad()) p.accumulate_grad(gp.data(), pd.numel());
      if (t.requires_grad()) {
        for (auto& v : gp) v = -v;
        t.accumulate_grad(gp.data(), pd.numel());
      }
    });
  }
  return out;
}

}  // namespace incdet
