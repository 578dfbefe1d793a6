#include "labeldist/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "labeldist/errors.hpp"
#include "labeldist/simd/kernels.hpp"

namespace labeldist::ad {
namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
}

std::size_t last_dim(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Unary elementwise op; `derivative(x, y)` is dy/dx given input and output.
template <class F, class D>
Var unary(Var a, F f, D derivative) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(y), {ia}, [ia, derivative](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ia);
    const Tensor& yv = t.value(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * derivative(xv[i], yv[i]);
  });
}

void accumulate(Tensor& dst, const Tensor& src, double c = 1.0) {
  simd::kernels().axpy(c, src.data(), dst.data(), src.size());
}

}  // namespace

// ---------------------------------------------------------------------------

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  accumulate(y, b.value());
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) accumulate(t.grad(ia), g);
    if (t.requires_grad(ib)) accumulate(t.grad(ib), g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  accumulate(y, b.value(), -1.0);
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) accumulate(t.grad(ia), g);
    if (t.requires_grad(ib)) accumulate(t.grad(ib), g, -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * z[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ia);
    const Tensor& zv = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * zv[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xv[i];
    }
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x < 0.0 ? 0.0 : x; },  // NaN passes through
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, logistic, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(a, stable_softplus, [](double x, double) { return logistic(x); });
}

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------------------

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id;
  return a.tape->record(Tensor::scalar(s), {ia}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(ia).values()) v += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id;
  return a.tape->record(std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    accumulate(t.grad(ia), t.grad(self));
  });
}

Var time_frame(Var x, std::size_t t) {
  const Tensor& v = x.value();
  require_rank(v, 3, "time_frame");
  const std::size_t B = v.dim(0), T = v.dim(1), C = v.dim(2);
  if (t >= T) throw ShapeError("time_frame: frame index out of range");
  Tensor y({B, C});
  for (std::size_t b = 0; b < B; ++b)
    std::copy_n(v.data() + (b * T + t) * C, C, y.data() + b * C);
  const std::size_t ix = x.id;
  return x.tape->record(std::move(y), {ix}, [ix, t, B, T, C](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    for (std::size_t b = 0; b < B; ++b)
      simd::kernels().axpy(1.0, g.data() + b * C, gx.data() + (b * T + t) * C, C);
  });
}

Var time_slice(Var x, std::size_t t0, std::size_t t1) {
  const Tensor& v = x.value();
  require_rank(v, 3, "time_slice");
  const std::size_t B = v.dim(0), T = v.dim(1), C = v.dim(2);
  if (t0 >= t1 || t1 > T) throw ShapeError("time_slice: invalid range");
  const std::size_t L = t1 - t0;
  Tensor y({B, L, C});
  for (std::size_t b = 0; b < B; ++b)
    std::copy_n(v.data() + (b * T + t0) * C, L * C, y.data() + b * L * C);
  const std::size_t ix = x.id;
  return x.tape->record(std::move(y), {ix}, [ix, t0, B, T, C, L](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    for (std::size_t b = 0; b < B; ++b)
      simd::kernels().axpy(1.0, g.data() + b * L * C, gx.data() + (b * T + t0) * C, L * C);
  });
}

Var stack_time(std::span<const Var> frames) {
  if (frames.empty()) throw ShapeError("stack_time: no frames");
  const Tensor& f0 = frames[0].value();
  require_rank(f0, 2, "stack_time");
  const std::size_t B = f0.dim(0), C = f0.dim(1), T = frames.size();
  Tensor y({B, T, C});
  std::vector<std::size_t> ids;
  ids.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor& f = frames[t].value();
    if (f.shape() != f0.shape()) throw ShapeError("stack_time: frame shapes differ");
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(f.data() + b * C, C, y.data() + (b * T + t) * C);
    ids.push_back(frames[t].id);
  }
  Tape* tape = frames[0].tape;
  return tape->record(std::move(y), ids, [ids, B, T, C](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    for (std::size_t t = 0; t < T; ++t) {
      if (!tp.requires_grad(ids[t])) continue;
      Tensor& gf = tp.grad(ids[t]);
      for (std::size_t b = 0; b < B; ++b)
        simd::kernels().axpy(1.0, g.data() + (b * T + t) * C, gf.data() + b * C, C);
    }
  });
}

Var concat_time(std::span<const Var> pieces) {
  if (pieces.empty()) throw ShapeError("concat_time: no pieces");
  const Tensor& p0 = pieces[0].value();
  require_rank(p0, 3, "concat_time");
  const std::size_t B = p0.dim(0), C = p0.dim(2);
  std::vector<std::size_t> ids, offsets, lengths;
  std::size_t T = 0;
  for (const Var& p : pieces) {
    const Tensor& v = p.value();
    require_rank(v, 3, "concat_time");
    if (v.dim(0) != B || v.dim(2) != C) throw ShapeError("concat_time: piece shapes differ");
    ids.push_back(p.id);
    offsets.push_back(T);
    lengths.push_back(v.dim(1));
    T += v.dim(1);
  }
  Tensor y({B, T, C});
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    const Tensor& v = pieces[k].value();
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(v.data() + b * lengths[k] * C, lengths[k] * C,
                  y.data() + (b * T + offsets[k]) * C);
  }
  return pieces[0].tape->record(
      std::move(y), ids, [ids, offsets, lengths, B, T, C](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!tp.requires_grad(ids[k])) continue;
          Tensor& gp = tp.grad(ids[k]);
          const std::size_t L = lengths[k];
          for (std::size_t b = 0; b < B; ++b)
            simd::kernels().axpy(1.0, g.data() + (b * T + offsets[k]) * C, gp.data() + b * L * C,
                                 L * C);
        }
      });
}

// ---------------------------------------------------------------------------

Var matmul(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank(wv, 2, "matmul");
  const std::size_t K = wv.dim(0), N = wv.dim(1);
  if (xv.rank() == 0 || last_dim(xv) != K)
    throw ShapeError("matmul: inner dimensions differ " + shape_string(xv.shape()) + " * " +
                     shape_string(wv.shape()));
  const std::size_t M = xv.size() / K;
  std::vector<std::size_t> out_shape = xv.shape();
  out_shape.back() = N;
  Tensor y(out_shape, 0.0);
  simd::kernels().gemm_nn(xv.data(), wv.data(), y.data(), M, K, N);
  const std::size_t ix = x.id, iw = w.id;
  return x.tape->record(std::move(y), {ix, iw}, [ix, iw, M, K, N](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ix))
      simd::kernels().gemm_nt(g.data(), t.value(iw).data(), t.grad(ix).data(), M, N, K);
    if (t.requires_grad(iw))
      simd::kernels().gemm_tn(t.value(ix).data(), g.data(), t.grad(iw).data(), M, K, N);
  });
}

Var add_bias(Var x, Var b) {
  const Tensor& bv = b.value();
  require_rank(bv, 1, "add_bias");
  const std::size_t N = bv.size();
  if (x.value().rank() == 0 || x.shape().back() != N)
    throw ShapeError("add_bias: bias size " + std::to_string(N) + " != trailing axis");
  Tensor y = x.value();
  const std::size_t M = y.size() / N;
  for (std::size_t r = 0; r < M; ++r) simd::kernels().axpy(1.0, bv.data(), y.data() + r * N, N);
  const std::size_t ix = x.id, ib = b.id;
  return x.tape->record(std::move(y), {ix, ib}, [ix, ib, M, N](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ix)) accumulate(t.grad(ix), g);
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t r = 0; r < M; ++r) simd::kernels().axpy(1.0, g.data() + r * N, gb.data(), N);
    }
  });
}

Var dense(Var x, Var w, Var b) {
  const Tensor& wv = w.value();
  require_rank(wv, 2, "dense");
  if (b.value().size() != wv.dim(1))
    throw ShapeError("dense: bias size " + std::to_string(b.value().size()) + " != output width " +
                     std::to_string(wv.dim(1)));
  return add_bias(matmul(x, w), b);
}

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || stride == 0) throw ShapeError("conv1d: kernel and stride must be >= 1");
  if (length < kernel)
    throw ShapeError("conv1d: input length " + std::to_string(length) + " < kernel " +
                     std::to_string(kernel));
  return (length - kernel) / stride + 1;
}

std::size_t maxpool1d_output_length(std::size_t length, std::size_t window) {
  if (window == 0) throw ShapeError("maxpool1d: window must be >= 1");
  return length / window;
}

Var conv1d(Var x, Var kernels, std::size_t stride) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernels.value();
  require_rank(xv, 3, "conv1d");
  require_rank(kv, 3, "conv1d kernels");
  const std::size_t B = xv.dim(0), T = xv.dim(1), Cin = xv.dim(2);
  const std::size_t K = kv.dim(0), Cout = kv.dim(2);
  if (kv.dim(1) != Cin)
    throw ShapeError("conv1d: kernel expects " + std::to_string(kv.dim(1)) +
                     " input channels, input has " + std::to_string(Cin));
  const std::size_t To = conv1d_output_length(T, K, stride);
  const std::size_t KC = K * Cin;  // a receptive window is contiguous in memory
  Tensor y({B, To, Cout}, 0.0);
  const auto& kern = simd::kernels();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < To; ++t)
      kern.gemm_nn(xv.data() + (b * T + t * stride) * Cin, kv.data(),
                   y.data() + (b * To + t) * Cout, 1, KC, Cout);
  const std::size_t ix = x.id, ik = kernels.id;
  return x.tape->record(
      std::move(y), {ix, ik},
      [ix, ik, B, T, Cin, To, KC, Cout, stride](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const auto& kern = simd::kernels();
        const bool want_x = tp.requires_grad(ix);
        const bool want_k = tp.requires_grad(ik);
        const Tensor& xv = tp.value(ix);
        const Tensor& kv = tp.value(ik);
        double* gx = want_x ? tp.grad(ix).data() : nullptr;
        double* gk = want_k ? tp.grad(ik).data() : nullptr;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t t = 0; t < To; ++t) {
            const double* grow = g.data() + (b * To + t) * Cout;
            const std::size_t off = (b * T + t * stride) * Cin;
            if (want_k) kern.gemm_tn(xv.data() + off, grow, gk, 1, KC, Cout);
            if (want_x) kern.gemm_nt(grow, kv.data(), gx + off, 1, Cout, KC);
          }
      });
}

Var maxpool1d(Var x, std::size_t window) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "maxpool1d");
  const std::size_t B = xv.dim(0), T = xv.dim(1), C = xv.dim(2);
  const std::size_t To = maxpool1d_output_length(T, window);
  Tensor y({B, To, C});
  std::vector<std::size_t> argmax(B * To * C);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < To; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = (b * T + t * window) * C + c;
        for (std::size_t j = 1; j < window; ++j) {
          const std::size_t idx = (b * T + t * window + j) * C + c;
          if (xv[idx] > xv[best] || std::isnan(xv[idx])) best = idx;
        }
        const std::size_t o = (b * To + t) * C + c;
        y[o] = xv[best];
        argmax[o] = best;
      }
  const std::size_t ix = x.id;
  return x.tape->record(std::move(y), {ix}, [ix, argmax = std::move(argmax)](Tape& tp,
                                                                            std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[o];
  });
}

Var dropout(Var x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  const Tensor& xv = x.value();
  Tensor mask(xv.shape());
  std::bernoulli_distribution keep(1.0 - p);
  const double inv = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? inv : 0.0;
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
  const std::size_t ix = x.id;
  return x.tape->record(std::move(y), {ix}, [ix, mask = std::move(mask)](Tape& tp,
                                                                        std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------

Var lstm_gates(Var x, Var h, const LstmParams& params) {
  const Tensor& xv = x.value();
  const Tensor& hv = h.value();
  const Tensor& wx = params.w_input.value();
  const Tensor& wh = params.w_hidden.value();
  const Tensor& bv = params.bias.value();
  require_rank(xv, 2, "lstm_gates x");
  require_rank(hv, 2, "lstm_gates h");
  const std::size_t B = xv.dim(0), D = xv.dim(1), H = hv.dim(1), G = 4 * H;
  if (wx.shape() != std::vector<std::size_t>{D, G} || wh.shape() != std::vector<std::size_t>{H, G} ||
      bv.size() != G || hv.dim(0) != B)
    throw ShapeError("lstm_gates: parameter shapes do not match input " + shape_string(xv.shape()) +
                     " and hidden " + shape_string(hv.shape()));
  const auto& kern = simd::kernels();
  Tensor act({B, G}, 0.0);
  kern.gemm_nn(xv.data(), wx.data(), act.data(), B, D, G);
  kern.gemm_nn(hv.data(), wh.data(), act.data(), B, H, G);
  for (std::size_t b = 0; b < B; ++b) {
    double* row = act.data() + b * G;
    kern.axpy(1.0, bv.data(), row, G);
    for (std::size_t j = 0; j < G; ++j)
      row[j] = (j >= 2 * H && j < 3 * H) ? std::tanh(row[j]) : logistic(row[j]);
  }
  const std::size_t ix = x.id, ih = h.id, iwx = params.w_input.id, iwh = params.w_hidden.id,
                    ib = params.bias.id;
  return x.tape->record(
      std::move(act), {ix, ih, iwx, iwh, ib},
      [ix, ih, iwx, iwh, ib, B, D, H, G](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& a = tp.value(self);
        Tensor pre({B, G});
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t j = 0; j < G; ++j) {
            const std::size_t k = b * G + j;
            const double y = a[k];
            pre[k] = g[k] * ((j >= 2 * H && j < 3 * H) ? 1.0 - y * y : y * (1.0 - y));
          }
        const auto& kern = simd::kernels();
        if (tp.requires_grad(ix))
          kern.gemm_nt(pre.data(), tp.value(iwx).data(), tp.grad(ix).data(), B, G, D);
        if (tp.requires_grad(ih))
          kern.gemm_nt(pre.data(), tp.value(iwh).data(), tp.grad(ih).data(), B, G, H);
        if (tp.requires_grad(iwx))
          kern.gemm_tn(tp.value(ix).data(), pre.data(), tp.grad(iwx).data(), B, D, G);
        if (tp.requires_grad(iwh))
          kern.gemm_tn(tp.value(ih).data(), pre.data(), tp.grad(iwh).data(), B, H, G);
        if (tp.requires_grad(ib)) {
          Tensor& gb = tp.grad(ib);
          for (std::size_t b = 0; b < B; ++b) kern.axpy(1.0, pre.data() + b * G, gb.data(), G);
        }
      });
}

Var lstm_cell(Var gates, Var c) {
  const Tensor& gv = gates.value();
  const Tensor& cv = c.value();
  require_rank(cv, 2, "lstm_cell");
  const std::size_t B = cv.dim(0), H = cv.dim(1), G = 4 * H;
  if (gv.shape() != std::vector<std::size_t>{B, G}) throw ShapeError("lstm_cell: gate shape");
  Tensor y({B, H});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < H; ++j) {
      const double* row = gv.data() + b * G;
      y[b * H + j] = row[H + j] * cv[b * H + j] + row[j] * row[2 * H + j];
    }
  const std::size_t ig = gates.id, ic = c.id;
  return gates.tape->record(std::move(y), {ig, ic}, [ig, ic, B, H, G](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& gv = tp.value(ig);
    const Tensor& cv = tp.value(ic);
    const bool want_g = tp.requires_grad(ig);
    const bool want_c = tp.requires_grad(ic);
    for (std::size_t b = 0; b < B; ++b) {
      const double* row = gv.data() + b * G;
      for (std::size_t j = 0; j < H; ++j) {
        const double d = g[b * H + j];
        if (want_g) {
          double* grow = tp.grad(ig).data() + b * G;
          grow[j] += d * row[2 * H + j];
          grow[H + j] += d * cv[b * H + j];
          grow[2 * H + j] += d * row[j];
        }
        if (want_c) tp.grad(ic)[b * H + j] += d * row[H + j];
      }
    }
  });
}

Var lstm_hidden(Var gates, Var c_next) {
  const Tensor& gv = gates.value();
  const Tensor& cv = c_next.value();
  require_rank(cv, 2, "lstm_hidden");
  const std::size_t B = cv.dim(0), H = cv.dim(1), G = 4 * H;
  if (gv.shape() != std::vector<std::size_t>{B, G}) throw ShapeError("lstm_hidden: gate shape");
  Tensor y({B, H});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < H; ++j)
      y[b * H + j] = gv[b * G + 3 * H + j] * std::tanh(cv[b * H + j]);
  const std::size_t ig = gates.id, ic = c_next.id;
  return gates.tape->record(std::move(y), {ig, ic}, [ig, ic, B, H, G](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& gv = tp.value(ig);
    const Tensor& cv = tp.value(ic);
    const bool want_g = tp.requires_grad(ig);
    const bool want_c = tp.requires_grad(ic);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < H; ++j) {
        const double th = std::tanh(cv[b * H + j]);
        const double o = gv[b * G + 3 * H + j];
        const double d = g[b * H + j];
        if (want_g) tp.grad(ig)[b * G + 3 * H + j] += d * th;
        if (want_c) tp.grad(ic)[b * H + j] += d * o * (1.0 - th * th);
      }
  });
}

LstmState lstm_step(Var x, const LstmState& state, const LstmParams& params) {
  Var gates = lstm_gates(x, state.h, params);
  Var c = lstm_cell(gates, state.c);
  Var h = lstm_hidden(gates, c);
  return {h, c};
}

Var lstm_sequence(Var x, const LstmParams& params) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "lstm_sequence");
  const std::size_t B = xv.dim(0), T = xv.dim(1);
  const std::size_t H = params.w_hidden.value().dim(0);
  Tape& tape = *x.tape;
  LstmState state{tape.constant(Tensor({B, H}, 0.0)), tape.constant(Tensor({B, H}, 0.0))};
  std::vector<Var> outputs;
  outputs.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    state = lstm_step(time_frame(x, t), state, params);
    outputs.push_back(state.h);
  }
  return stack_time(outputs);
}

// ---------------------------------------------------------------------------

Var reparameterize(Var mu, Var rho, const Tensor& eps) {
  require_same_shape(mu, rho, "reparameterize");
  if (eps.shape() != mu.shape()) throw ShapeError("reparameterize: eps shape");
  const Tensor& m = mu.value();
  const Tensor& r = rho.value();
  Tensor w(m.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = m[i] + stable_softplus(r[i]) * eps[i];
  const std::size_t im = mu.id, ir = rho.id;
  return mu.tape->record(std::move(w), {im, ir}, [im, ir, eps](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(im)) accumulate(tp.grad(im), g);
    if (tp.requires_grad(ir)) {
      const Tensor& r = tp.value(ir);
      Tensor& gr = tp.grad(ir);
      for (std::size_t i = 0; i < g.size(); ++i) gr[i] += g[i] * eps[i] * logistic(r[i]);
    }
  });
}

Var gaussian_log_density(Var w, Var mu, Var rho) {
  require_same_shape(w, mu, "gaussian_log_density");
  require_same_shape(mu, rho, "gaussian_log_density");
  const Tensor& wv = w.value();
  const Tensor& m = mu.value();
  const Tensor& r = rho.value();
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t i = 0; i < wv.size(); ++i) {
    const double sigma = stable_softplus(r[i]);
    const double z = (wv[i] - m[i]) / sigma;
    total += -0.5 * z * z - std::log(sigma) - half_log_2pi;
  }
  const std::size_t iw = w.id, im = mu.id, ir = rho.id;
  return w.tape->record(Tensor::scalar(total), {iw, im, ir}, [iw, im, ir](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    const Tensor& wv = tp.value(iw);
    const Tensor& m = tp.value(im);
    const Tensor& r = tp.value(ir);
    const bool want_w = tp.requires_grad(iw), want_m = tp.requires_grad(im),
               want_r = tp.requires_grad(ir);
    for (std::size_t i = 0; i < wv.size(); ++i) {
      const double sigma = stable_softplus(r[i]);
      const double z = (wv[i] - m[i]) / sigma;
      if (want_w) tp.grad(iw)[i] += -g * z / sigma;
      if (want_m) tp.grad(im)[i] += g * z / sigma;
      if (want_r) tp.grad(ir)[i] += g * (z * z - 1.0) / sigma * logistic(r[i]);
    }
  });
}

Var prior_log_density(Var w, const GaussianParams& prior) {
  validate(prior);
  const Tensor& wv = w.value();
  const double inv_var = 1.0 / (prior.sigma * prior.sigma);
  const double norm = -std::log(prior.sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (double v : wv.values()) {
    const double d = v - prior.mu;
    total += -0.5 * d * d * inv_var + norm;
  }
  const std::size_t iw = w.id;
  const double mu0 = prior.mu;
  return w.tape->record(Tensor::scalar(total), {iw}, [iw, mu0, inv_var](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    const Tensor& wv = tp.value(iw);
    Tensor& gw = tp.grad(iw);
    for (std::size_t i = 0; i < wv.size(); ++i) gw[i] += -g * (wv[i] - mu0) * inv_var;
  });
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> pass_ids(std::span<const Var> passes, const char* op) {
  if (passes.empty()) throw ShapeError(std::string(op) + ": no passes");
  std::vector<std::size_t> ids;
  ids.reserve(passes.size());
  for (const Var& p : passes) {
    if (p.shape() != passes[0].shape()) throw ShapeError(std::string(op) + ": pass shapes differ");
    ids.push_back(p.id);
  }
  return ids;
}

}  // namespace

Var pass_mean(std::span<const Var> passes) {
  std::vector<std::size_t> ids = pass_ids(passes, "pass_mean");
  const double inv_n = 1.0 / static_cast<double>(passes.size());
  Tensor y(passes[0].shape(), 0.0);
  for (const Var& p : passes) accumulate(y, p.value(), inv_n);
  return passes[0].tape->record(std::move(y), ids, [ids, inv_n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    for (std::size_t id : ids)
      if (tp.requires_grad(id)) accumulate(tp.grad(id), g, inv_n);
  });
}

Var pass_std(std::span<const Var> passes, double eps) {
  std::vector<std::size_t> ids = pass_ids(passes, "pass_std");
  const std::size_t n = passes.size();
  if (n < 2) throw std::invalid_argument("pass_std: need at least 2 passes");
  const std::size_t F = passes[0].value().size();
  std::vector<double> mean(F, 0.0);
  for (const Var& p : passes) simd::kernels().axpy(1.0 / static_cast<double>(n), p.value().data(), mean.data(), F);
  Tensor y(passes[0].shape(), 0.0);
  for (const Var& p : passes) {
    const Tensor& v = p.value();
    for (std::size_t f = 0; f < F; ++f) {
      const double d = v[f] - mean[f];
      y[f] += d * d;
    }
  }
  const double inv_dof = 1.0 / static_cast<double>(n - 1);
  for (std::size_t f = 0; f < F; ++f) y[f] = std::sqrt(y[f] * inv_dof + eps);
  return passes[0].tape->record(
      std::move(y), ids, [ids, mean = std::move(mean), inv_dof, F](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& s = tp.value(self);
        for (std::size_t id : ids) {
          if (!tp.requires_grad(id)) continue;
          const Tensor& v = tp.value(id);
          Tensor& gv = tp.grad(id);
          for (std::size_t f = 0; f < F; ++f) gv[f] += g[f] * (v[f] - mean[f]) * inv_dof / s[f];
        }
      });
}

namespace {

std::pair<std::size_t, std::size_t> rows_cols(const Tensor& t) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  throw ShapeError("expected [T] or [B x T], got " + shape_string(t.shape()));
}

}  // namespace

Var ccc_rows(const Tensor& truth, Var estimate) {
  const Tensor& ev = estimate.value();
  if (truth.shape() != ev.shape())
    throw ShapeError("ccc_rows: truth " + shape_string(truth.shape()) + " vs estimate " +
                     shape_string(ev.shape()));
  const auto [B, T] = rows_cols(ev);
  Tensor grad_cache(ev.shape(), 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    CccGradient c = ccc_with_gradient(truth.values().subspan(b * T, T), ev.values().subspan(b * T, T));
    total += c.value;
    std::copy(c.d_estimate.begin(), c.d_estimate.end(), grad_cache.data() + b * T);
  }
  const double inv_b = 1.0 / static_cast<double>(B);
  const std::size_t ie = estimate.id;
  return estimate.tape->record(
      Tensor::scalar(total * inv_b), {ie},
      [ie, inv_b, grad_cache = std::move(grad_cache)](Tape& tp, std::size_t self) {
        accumulate(tp.grad(ie), grad_cache, tp.grad(self)[0] * inv_b);
      });
}

Var kl_label_mean(LabelFamily family, double nu, const Tensor& m, const Tensor& s, Var m_hat,
                  Var s_hat) {
  require_same_shape(m_hat, s_hat, "kl_label_mean");
  if (m.shape() != m_hat.shape() || s.shape() != m_hat.shape())
    throw ShapeError("kl_label_mean: label shapes do not match estimates");
  const Tensor& mh = m_hat.value();
  const Tensor& sh = s_hat.value();
  const std::size_t F = mh.size();
  Tensor d_mean(mh.shape()), d_std(mh.shape());
  double total = 0.0;
  for (std::size_t f = 0; f < F; ++f) {
    const KlTerms k = kl_label_terms(family, nu, m[f], s[f], mh[f], sh[f]);
    total += k.value;
    d_mean[f] = k.d_est_mu;
    d_std[f] = k.d_est_sigma;
  }
  const double inv_f = 1.0 / static_cast<double>(F);
  const std::size_t im = m_hat.id, is = s_hat.id;
  return m_hat.tape->record(
      Tensor::scalar(total * inv_f), {im, is},
      [im, is, inv_f, d_mean = std::move(d_mean), d_std = std::move(d_std)](Tape& tp,
                                                                             std::size_t self) {
        const double g = tp.grad(self)[0] * inv_f;
        if (tp.requires_grad(im)) accumulate(tp.grad(im), d_mean, g);
        if (tp.requires_grad(is)) accumulate(tp.grad(is), d_std, g);
      });
}

Var gaussian_nll_mean(const Tensor& m, Var y) {
  const Tensor& yv = y.value();
  if (m.shape() != yv.shape()) throw ShapeError("gaussian_nll_mean: shape mismatch");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const double d = m[i] - yv[i];
    total += 0.5 * d * d + half_log_2pi;
  }
  const double inv_n = 1.0 / static_cast<double>(yv.size());
  const std::size_t iy = y.id;
  return y.tape->record(Tensor::scalar(total * inv_n), {iy}, [iy, inv_n, m](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0] * inv_n;
    const Tensor& yv = tp.value(iy);
    Tensor& gy = tp.grad(iy);
    for (std::size_t i = 0; i < yv.size(); ++i) gy[i] += g * (yv[i] - m[i]);
  });
}

}  // namespace labeldist::ad
