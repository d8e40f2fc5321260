#include "osdn/ops.hpp"

#include <algorithm>
#include <cmath>

namespace osdn {

namespace {

void check_4d(const char* op, const Tensor& x) {
  require(x.ndim() == 4, std::string(op) + ": expected 4-d input, got " + shape_str(x.shape));
}

int conv_out_dim(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

}  // namespace

Var dense(Var x, Var w, Var b) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  const Tensor& bv = b.val();
  require(xv.ndim() == 2 && wv.ndim() == 2 && bv.ndim() == 1,
          "dense: want x [N,in], w [in,out], b [out]; got " + shape_str(xv.shape) + ", " +
              shape_str(wv.shape) + ", " + shape_str(bv.shape));
  const int n = xv.dim(0), in = xv.dim(1), out = wv.dim(1);
  require(wv.dim(0) == in && bv.dim(0) == out,
          "dense: mismatched dims x" + shape_str(xv.shape) + " w" + shape_str(wv.shape) + " b" +
              shape_str(bv.shape));

  Tensor y({n, out});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out; ++j) {
      double acc = bv[j];
      for (int k = 0; k < in; ++k) acc += xv[i * in + k] * wv[k * out + j];
      y[i * out + j] = acc;
    }

  auto bwd = [xi = x.id, wi = w.id, bi = b.id, n, in, out](Tape& t, int self) {
    const Tensor& gy = t.grad_buf(self);
    const Tensor& xv = t.value(xi);
    const Tensor& wv = t.value(wi);
    if (t.requires_grad(xi)) {
      Tensor& gx = t.grad_buf(xi);
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < in; ++k) {
          double acc = 0.0;
          for (int j = 0; j < out; ++j) acc += gy[i * out + j] * wv[k * out + j];
          gx[i * in + k] += acc;
        }
    }
    if (t.requires_grad(wi)) {
      Tensor& gw = t.grad_buf(wi);
      for (int k = 0; k < in; ++k)
        for (int j = 0; j < out; ++j) {
          double acc = 0.0;
          for (int i = 0; i < n; ++i) acc += xv[i * in + k] * gy[i * out + j];
          gw[k * out + j] += acc;
        }
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_buf(bi);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < out; ++j) gb[j] += gy[i * out + j];
    }
  };
  return x.tape->op_node(std::move(y), {x.id, w.id, b.id}, bwd);
}

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  const Tensor& bv = b.val();
  check_4d("conv2d", xv);
  require(wv.ndim() == 4 && bv.ndim() == 1,
          "conv2d: want w [F,C,kh,kw], b [F]; got " + shape_str(wv.shape) + ", " +
              shape_str(bv.shape));
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
  const int f = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  require(wv.dim(1) == c, "conv2d: weight channels " + std::to_string(wv.dim(1)) +
                              " != input channels " + std::to_string(c));
  require(bv.dim(0) == f, "conv2d: bias size " + std::to_string(bv.dim(0)) + " != filters " +
                              std::to_string(f));
  const int oh = conv_out_dim(h, kh, stride, pad);
  const int ow = conv_out_dim(wd, kw, stride, pad);
  require(oh >= 1 && ow >= 1, "conv2d: kernel " + shape_str(wv.shape) + " too large for input " +
                                  shape_str(xv.shape) + " with pad " + std::to_string(pad));

  Tensor y({n, f, oh, ow});
  for (int ni = 0; ni < n; ++ni)
    for (int fi = 0; fi < f; ++fi)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bv[fi];
          for (int ci = 0; ci < c; ++ci)
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              const double* xrow = xv.data() + ((ni * c + ci) * h + iy) * wd;
              const double* wrow = wv.data() + ((fi * c + ci) * kh + ky) * kw;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= wd) continue;
                acc += xrow[ix] * wrow[kx];
              }
            }
          y[((ni * f + fi) * oh + oy) * ow + ox] = acc;
        }

  auto bwd = [xi = x.id, wi = w.id, bi = b.id, n, c, h, wd, f, kh, kw, oh, ow, stride,
              pad](Tape& t, int self) {
    const Tensor& gy = t.grad_buf(self);
    const Tensor& xv = t.value(xi);
    const Tensor& wv = t.value(wi);
    const bool need_x = t.requires_grad(xi);
    const bool need_w = t.requires_grad(wi);
    Tensor* gx = need_x ? &t.grad_buf(xi) : nullptr;
    Tensor* gw = need_w ? &t.grad_buf(wi) : nullptr;
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_buf(bi);
      for (int ni = 0; ni < n; ++ni)
        for (int fi = 0; fi < f; ++fi) {
          double acc = 0.0;
          const double* g = gy.data() + ((ni * f + fi) * oh) * ow;
          for (int i = 0; i < oh * ow; ++i) acc += g[i];
          gb[fi] += acc;
        }
    }
    if (!need_x && !need_w) return;
    for (int ni = 0; ni < n; ++ni)
      for (int fi = 0; fi < f; ++fi)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            const double g = gy[((ni * f + fi) * oh + oy) * ow + ox];
            if (g == 0.0) continue;
            for (int ci = 0; ci < c; ++ci)
              for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  const int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= wd) continue;
                  const int xidx = ((ni * c + ci) * h + iy) * wd + ix;
                  const int widx = ((fi * c + ci) * kh + ky) * kw + kx;
                  if (need_x) (*gx)[xidx] += g * wv[widx];
                  if (need_w) (*gw)[widx] += g * xv[xidx];
                }
              }
          }
  };
  return x.tape->op_node(std::move(y), {x.id, w.id, b.id}, bwd);
}

Var transpose_conv2d(Var x, Var w, Var b, int stride, int pad, int out_pad) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  const Tensor& bv = b.val();
  check_4d("transpose_conv2d", xv);
  require(wv.ndim() == 4 && bv.ndim() == 1,
          "transpose_conv2d: want w [C,F,kh,kw], b [F]; got " + shape_str(wv.shape) + ", " +
              shape_str(bv.shape));
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
  const int f = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
  require(wv.dim(0) == c, "transpose_conv2d: weight in-channels " + std::to_string(wv.dim(0)) +
                              " != input channels " + std::to_string(c));
  require(bv.dim(0) == f, "transpose_conv2d: bias size " + std::to_string(bv.dim(0)) +
                              " != filters " + std::to_string(f));
  const int oh = (h - 1) * stride - 2 * pad + kh + out_pad;
  const int ow = (wd - 1) * stride - 2 * pad + kw + out_pad;
  require(oh >= 1 && ow >= 1,
          "transpose_conv2d: non-positive output size for input " + shape_str(xv.shape));

  Tensor y({n, f, oh, ow});
  for (int ni = 0; ni < n; ++ni)
    for (int fi = 0; fi < f; ++fi) {
      double* out = y.data() + ((ni * f + fi) * oh) * ow;
      for (int i = 0; i < oh * ow; ++i) out[i] = bv[fi];
      for (int ci = 0; ci < c; ++ci)
        for (int iy = 0; iy < h; ++iy)
          for (int ix = 0; ix < wd; ++ix) {
            const double xval = xv[((ni * c + ci) * h + iy) * wd + ix];
            if (xval == 0.0) continue;
            const double* wrow = wv.data() + ((ci * f + fi) * kh) * kw;
            for (int ky = 0; ky < kh; ++ky) {
              const int oy = iy * stride - pad + ky;
              if (oy < 0 || oy >= oh) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ox = ix * stride - pad + kx;
                if (ox < 0 || ox >= ow) continue;
                out[oy * ow + ox] += xval * wrow[ky * kw + kx];
              }
            }
          }
    }

  auto bwd = [xi = x.id, wi = w.id, bi = b.id, n, c, h, wd, f, kh, kw, oh, ow, stride,
              pad](Tape& t, int self) {
    const Tensor& gy = t.grad_buf(self);
    const Tensor& xv = t.value(xi);
    const Tensor& wv = t.value(wi);
    const bool need_x = t.requires_grad(xi);
    const bool need_w = t.requires_grad(wi);
    Tensor* gx = need_x ? &t.grad_buf(xi) : nullptr;
    Tensor* gw = need_w ? &t.grad_buf(wi) : nullptr;
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_buf(bi);
      for (int ni = 0; ni < n; ++ni)
        for (int fi = 0; fi < f; ++fi) {
          double acc = 0.0;
          const double* g = gy.data() + ((ni * f + fi) * oh) * ow;
          for (int i = 0; i < oh * ow; ++i) acc += g[i];
          gb[fi] += acc;
        }
    }
    if (!need_x && !need_w) return;
    for (int ni = 0; ni < n; ++ni)
      for (int ci = 0; ci < c; ++ci)
        for (int iy = 0; iy < h; ++iy)
          for (int ix = 0; ix < wd; ++ix) {
            const int xidx = ((ni * c + ci) * h + iy) * wd + ix;
            double gacc = 0.0;
            for (int fi = 0; fi < f; ++fi) {
              const double* g = gy.data() + ((ni * f + fi) * oh) * ow;
              const double* wrow = wv.data() + ((ci * f + fi) * kh) * kw;
              for (int ky = 0; ky < kh; ++ky) {
                const int oy = iy * stride - pad + ky;
                if (oy < 0 || oy >= oh) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  const int ox = ix * stride - pad + kx;
                  if (ox < 0 || ox >= ow) continue;
                  const double gval = g[oy * ow + ox];
                  if (need_x) gacc += gval * wrow[ky * kw + kx];
                  if (need_w) (*gw)[((ci * f + fi) * kh + ky) * kw + kx] += gval * xv[xidx];
                }
              }
            }
            if (need_x) (*gx)[xidx] += gacc;
          }
  };
  return x.tape->op_node(std::move(y), {x.id, w.id, b.id}, bwd);
}

Var relu(Var x) {
  const Tensor& xv = x.val();
  Tensor y = xv;
  for (double& e : y.v) e = e > 0.0 ? e : 0.0;
  auto bwd = [xi = x.id](Tape& t, int self) {
    if (!t.requires_grad(xi)) return;
    const Tensor& gy = t.grad_buf(self);
    const Tensor& xv = t.value(xi);
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < gx.numel(); ++i)
      if (xv[i] > 0.0) gx[i] += gy[i];
  };
  return x.tape->op_node(std::move(y), {x.id}, bwd);
}

Var add(Var a, Var b) {
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  require(av.same_shape(bv),
          "add: shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  Tensor y = av;
  for (int i = 0; i < y.numel(); ++i) y[i] += bv[i];
  auto bwd = [ai = a.id, bi = b.id](Tape& t, int self) {
    const Tensor& gy = t.grad_buf(self);
    for (int p : {ai, bi}) {
      if (!t.requires_grad(p)) continue;
      Tensor& g = t.grad_buf(p);
      for (int i = 0; i < g.numel(); ++i) g[i] += gy[i];
    }
  };
  return a.tape->op_node(std::move(y), {a.id, b.id}, bwd);
}

Var scale(Var x, double c) {
  Tensor y = x.val();
  for (double& e : y.v) e *= c;
  auto bwd = [xi = x.id, c](Tape& t, int self) {
    if (!t.requires_grad(xi)) return;
    const Tensor& gy = t.grad_buf(self);
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < gx.numel(); ++i) gx[i] += c * gy[i];
  };
  return x.tape->op_node(std::move(y), {x.id}, bwd);
}

Var sigmoid_range(Var x, double lo, double hi) {
  require(lo < hi, "sigmoid_range: lo must be < hi");
  const Tensor& xv = x.val();
  Tensor sig(xv.shape);
  Tensor y(xv.shape);
  for (int i = 0; i < xv.numel(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-xv[i]));
    sig[i] = s;
    y[i] = lo + (hi - lo) * s;
  }
  auto bwd = [xi = x.id, sig = std::move(sig), lo, hi](Tape& t, int self) {
    if (!t.requires_grad(xi)) return;
    const Tensor& gy = t.grad_buf(self);
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < gx.numel(); ++i) gx[i] += gy[i] * (hi - lo) * sig[i] * (1.0 - sig[i]);
  };
  return x.tape->op_node(std::move(y), {x.id}, bwd);
}

Var avg_pool2d(Var x, int k, int stride) {
  const Tensor& xv = x.val();
  check_4d("avg_pool2d", xv);
  require(k >= 1 && stride >= 1, "avg_pool2d: kernel and stride must be positive");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
  require(oh >= 1 && ow >= 1, "avg_pool2d: kernel " + std::to_string(k) + " too large for " +
                                  shape_str(xv.shape));
  Tensor y({n, c, oh, ow});
  const double inv = 1.0 / (k * k);
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx)
              acc += xv[((ni * c + ci) * h + oy * stride + ky) * w + ox * stride + kx];
          y[((ni * c + ci) * oh + oy) * ow + ox] = acc * inv;
        }
  auto bwd = [xi = x.id, n, c, h, w, oh, ow, k, stride, inv](Tape& t, int self) {
    if (!t.requires_grad(xi)) return;
    const Tensor& gy = t.grad_buf(self);
    Tensor& gx = t.grad_buf(xi);
    for (int ni = 0; ni < n; ++ni)
      for (int ci = 0; ci < c; ++ci)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            const double g = gy[((ni * c + ci) * oh + oy) * ow + ox] * inv;
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx)
                gx[((ni * c + ci) * h + oy * stride + ky) * w + ox * stride + kx] += g;
          }
  };
  return x.tape->op_node(std::move(y), {x.id}, bwd);
}

Var global_avg_pool(Var x) {
  const Tensor& xv = x.val();
  check_4d("global_avg_pool", xv);
  const int n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor y({n, c});
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      double acc = 0.0;
      const double* p = xv.data() + (ni * c + ci) * hw;
      for (int i = 0; i < hw; ++i) acc += p[i];
      y[ni * c + ci] = acc / hw;
    }
  auto bwd = [xi = x.id, n, c, hw](Tape& t, int self) {
    if (!t.requires_grad(xi)) return;
    const Tensor& gy = t.grad_buf(self);
    Tensor& gx = t.grad_buf(xi);
    for (int ni = 0; ni < n; ++ni)
      for (int ci = 0; ci < c; ++ci) {
        const double g = gy[ni * c + ci] / hw;
        double* p = gx.data() + (ni * c + ci) * hw;
        for (int i = 0; i < hw; ++i) p[i] += g;
      }
  };
  return x.tape->op_node(std::move(y), {x.id}, bwd);
}

namespace {

// Stabilized row softmax of [N,K] into out; optionally also log-softmax.
void softmax_rows(const Tensor& x, Tensor& out, Tensor* log_out = nullptr) {
  const int n = x.dim(0), k = x.dim(1);
  for (int i = 0; i < n; ++i) {
    const double* row = x.data() + i * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < k; ++j) {
      const double ls = row[j] - lse;
      out[i * k + j] = std::exp(ls);
      if (log_out) (*log_out)[i * k + j] = ls;
    }
  }
}

void check_2d(const char* op, const Tensor& x) {
  require(x.ndim() == 2, std::string(op) + ": expected [N,K] input, got " + shape_str(x.shape));
}

}  // namespace

Var softmax(Var x) {
  const Tensor& xv = x.val();
  check_2d("softmax", xv);
  Tensor y(xv.shape);
  softmax_rows(xv, y);
  const int n = xv.dim(0), k = xv.dim(1);
  Tensor probs = y;
  auto bwd = [xi = x.id, probs = std::move(probs), n, k](Tape& t, int self) {
    if (!t.requires_grad(xi)) return;
    const Tensor& gy = t.grad_buf(self);
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int j = 0; j < k; ++j) dot += gy[i * k + j] * probs[i * k + j];
      for (int j = 0; j < k; ++j) gx[i * k + j] += probs[i * k + j] * (gy[i * k + j] - dot);
    }
  };
  return x.tape->op_node(std::move(y), {x.id}, bwd);
}

Var log_softmax(Var x) {
  const Tensor& xv = x.val();
  check_2d("log_softmax", xv);
  Tensor probs(xv.shape);
  Tensor y(xv.shape);
  softmax_rows(xv, probs, &y);
  const int n = xv.dim(0), k = xv.dim(1);
  auto bwd = [xi = x.id, probs = std::move(probs), n, k](Tape& t, int self) {
    if (!t.requires_grad(xi)) return;
    const Tensor& gy = t.grad_buf(self);
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < n; ++i) {
      double gsum = 0.0;
      for (int j = 0; j < k; ++j) gsum += gy[i * k + j];
      for (int j = 0; j < k; ++j) gx[i * k + j] += gy[i * k + j] - probs[i * k + j] * gsum;
    }
  };
  return x.tape->op_node(std::move(y), {x.id}, bwd);
}

Var cross_entropy(Var logits, const std::vector<int>& labels, Reduction r) {
  const Tensor& xv = logits.val();
  check_2d("cross_entropy", xv);
  const int n = xv.dim(0), k = xv.dim(1);
  require(static_cast<int>(labels.size()) == n,
          "cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
              std::to_string(n));
  for (int lbl : labels)
    require(lbl >= 0 && lbl < k, "cross_entropy: label " + std::to_string(lbl) +
                                     " out of range for " + std::to_string(k) + " classes");
  Tensor probs(xv.shape);
  Tensor logp(xv.shape);
  softmax_rows(xv, probs, &logp);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) loss -= logp[i * k + labels[static_cast<size_t>(i)]];
  const double norm = (r == Reduction::Mean) ? 1.0 / n : 1.0;
  loss *= norm;
  auto bwd = [xi = logits.id, probs = std::move(probs), labels, n, k, norm](Tape& t, int self) {
    if (!t.requires_grad(xi)) return;
    const double g = t.grad_buf(self)[0] * norm;
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) {
        const double onehot = (j == labels[static_cast<size_t>(i)]) ? 1.0 : 0.0;
        gx[i * k + j] += g * (probs[i * k + j] - onehot);
      }
  };
  return logits.tape->op_node(Tensor::scalar(loss), {logits.id}, bwd);
}

Var mse(Var a, Var b) {
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  require(av.same_shape(bv),
          "mse: shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  const int n = av.numel();
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = av[i] - bv[i];
    loss += d * d;
  }
  loss /= n;
  auto bwd = [ai = a.id, bi = b.id, n](Tape& t, int self) {
    const double g = t.grad_buf(self)[0] * 2.0 / n;
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    if (t.requires_grad(ai)) {
      Tensor& ga = t.grad_buf(ai);
      for (int i = 0; i < n; ++i) ga[i] += g * (av[i] - bv[i]);
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_buf(bi);
      for (int i = 0; i < n; ++i) gb[i] -= g * (av[i] - bv[i]);
    }
  };
  return a.tape->op_node(Tensor::scalar(loss), {a.id, b.id}, bwd);
}

Tensor rotate90_values(const Tensor& x, int r) {
  require(x.ndim() == 4, "rotate90: expected 4-d input, got " + shape_str(x.shape));
  r = ((r % 4) + 4) % 4;
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (r == 0) return x;
  const int oh = (r % 2 == 1) ? w : h;
  const int ow = (r % 2 == 1) ? h : w;
  Tensor y({n, c, oh, ow});
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const double* in = x.data() + (ni * c + ci) * h * w;
      double* out = y.data() + (ni * c + ci) * oh * ow;
      for (int iy = 0; iy < h; ++iy)
        for (int ix = 0; ix < w; ++ix) {
          int oy = 0, ox = 0;
          switch (r) {
            case 1: oy = w - 1 - ix; ox = iy; break;           // 90 deg CCW
            case 2: oy = h - 1 - iy; ox = w - 1 - ix; break;   // 180 deg
            default: oy = ix; ox = h - 1 - iy; break;          // 270 deg CCW
          }
          out[oy * ow + ox] = in[iy * w + ix];
        }
    }
  return y;
}

Tensor rotate90_batch_values(const Tensor& x, const std::vector<int>& rs) {
  require(x.ndim() == 4, "rotate90: expected 4-d input, got " + shape_str(x.shape));
  require(static_cast<int>(rs.size()) == x.dim(0),
          "rotate90: need one rotation per sample");
  require(x.dim(2) == x.dim(3), "rotate90: per-sample rotations need square images, got " +
                                    shape_str(x.shape));
  const int c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int per = c * h * w;
  Tensor out(x.shape);
  Shape one{1, c, h, w};
  for (int ni = 0; ni < x.dim(0); ++ni) {
    Tensor sample(one, std::vector<double>(x.data() + ni * per, x.data() + (ni + 1) * per));
    const Tensor rot = rotate90_values(sample, rs[static_cast<size_t>(ni)]);
    std::copy_n(rot.data(), per, out.data() + ni * per);
  }
  return out;
}

Var rotate90(Var x, int r) {
  Tensor y = rotate90_values(x.val(), r);
  const int rr = ((r % 4) + 4) % 4;
  auto bwd = [xi = x.id, rr](Tape& t, int self) {
    if (!t.requires_grad(xi)) return;
    Tensor gin = rotate90_values(t.grad_buf(self), (4 - rr) % 4);
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < gx.numel(); ++i) gx[i] += gin[i];
  };
  return x.tape->op_node(std::move(y), {x.id}, bwd);
}

Var reshape(Var x, Shape s) {
  const Tensor& xv = x.val();
  require(shape_numel(s) == xv.numel(), "reshape: cannot view " + shape_str(xv.shape) + " as " +
                                            shape_str(s));
  Tensor y(std::move(s), xv.v);
  auto bwd = [xi = x.id](Tape& t, int self) {
    if (!t.requires_grad(xi)) return;
    const Tensor& gy = t.grad_buf(self);
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < gx.numel(); ++i) gx[i] += gy[i];
  };
  return x.tape->op_node(std::move(y), {x.id}, bwd);
}

Var normalize_stats(Var x, Var gamma, Var beta, bool use_batch_stats, const Tensor* run_mean,
                    const Tensor* run_var, Tensor* batch_mean, Tensor* batch_var, double eps) {
  const Tensor& xv = x.val();
  check_4d("normalize_stats", xv);
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const Tensor& gv = gamma.val();
  const Tensor& bv = beta.val();
  require(gv.ndim() == 1 && gv.dim(0) == c && bv.ndim() == 1 && bv.dim(0) == c,
          "normalize_stats: gamma/beta must be [" + std::to_string(c) + "], got " +
              shape_str(gv.shape) + ", " + shape_str(bv.shape));
  const int m = n * h * w;

  Tensor mean({c}), var({c});
  if (use_batch_stats) {
    for (int ci = 0; ci < c; ++ci) {
      double s = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const double* p = xv.data() + (ni * c + ci) * h * w;
        for (int i = 0; i < h * w; ++i) s += p[i];
      }
      mean[ci] = s / m;
      double sq = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const double* p = xv.data() + (ni * c + ci) * h * w;
        for (int i = 0; i < h * w; ++i) {
          const double d = p[i] - mean[ci];
          sq += d * d;
        }
      }
      var[ci] = sq / m;  // biased, as used for normalization
    }
    if (batch_mean) *batch_mean = mean;
    if (batch_var) *batch_var = var;
  } else {
    require(run_mean && run_var && run_mean->numel() == c && run_var->numel() == c,
            "normalize_stats: frozen mode requires running mean/var of size " + std::to_string(c));
    mean = *run_mean;
    var = *run_var;
  }

  Tensor xhat(xv.shape);
  Tensor y(xv.shape);
  std::vector<double> inv_std(static_cast<size_t>(c));
  for (int ci = 0; ci < c; ++ci) inv_std[static_cast<size_t>(ci)] = 1.0 / std::sqrt(var[ci] + eps);
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const double* p = xv.data() + (ni * c + ci) * h * w;
      double* xh = xhat.data() + (ni * c + ci) * h * w;
      double* out = y.data() + (ni * c + ci) * h * w;
      for (int i = 0; i < h * w; ++i) {
        xh[i] = (p[i] - mean[ci]) * inv_std[static_cast<size_t>(ci)];
        out[i] = gv[ci] * xh[i] + bv[ci];
      }
    }

  auto bwd = [xi = x.id, gi = gamma.id, bi = beta.id, xhat = std::move(xhat),
              inv_std = std::move(inv_std), use_batch_stats, n, c, h, w, m](Tape& t, int self) {
    const Tensor& gy = t.grad_buf(self);
    const Tensor& gv = t.value(gi);
    if (t.requires_grad(gi)) {
      Tensor& gg = t.grad_buf(gi);
      for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
          const double* g = gy.data() + (ni * c + ci) * h * w;
          const double* xh = xhat.data() + (ni * c + ci) * h * w;
          double acc = 0.0;
          for (int i = 0; i < h * w; ++i) acc += g[i] * xh[i];
          gg[ci] += acc;
        }
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_buf(bi);
      for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
          const double* g = gy.data() + (ni * c + ci) * h * w;
          double acc = 0.0;
          for (int i = 0; i < h * w; ++i) acc += g[i];
          gb[ci] += acc;
        }
    }
    if (!t.requires_grad(xi)) return;
    Tensor& gx = t.grad_buf(xi);
    if (use_batch_stats) {
      // dx = gamma*inv_std * (gy - mean(gy) - xhat*mean(gy*xhat)), means per channel
      for (int ci = 0; ci < c; ++ci) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int ni = 0; ni < n; ++ni) {
          const double* g = gy.data() + (ni * c + ci) * h * w;
          const double* xh = xhat.data() + (ni * c + ci) * h * w;
          for (int i = 0; i < h * w; ++i) {
            sum_g += g[i];
            sum_gx += g[i] * xh[i];
          }
        }
        const double mean_g = sum_g / m, mean_gx = sum_gx / m;
        const double k = gv[ci] * inv_std[static_cast<size_t>(ci)];
        for (int ni = 0; ni < n; ++ni) {
          const double* g = gy.data() + (ni * c + ci) * h * w;
          const double* xh = xhat.data() + (ni * c + ci) * h * w;
          double* gxp = gx.data() + (ni * c + ci) * h * w;
          for (int i = 0; i < h * w; ++i) gxp[i] += k * (g[i] - mean_g - xh[i] * mean_gx);
        }
      }
    } else {
      for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
          const double k = gv[ci] * inv_std[static_cast<size_t>(ci)];
          const double* g = gy.data() + (ni * c + ci) * h * w;
          double* gxp = gx.data() + (ni * c + ci) * h * w;
          for (int i = 0; i < h * w; ++i) gxp[i] += k * g[i];
        }
    }
  };
  return x.tape->op_node(std::move(y), {x.id, gamma.id, beta.id}, bwd);
}

std::vector<double> softmax_vec(const std::vector<double>& logits) {
  std::vector<double> out(logits.size());
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& o : out) o /= sum;
  return out;
}

}  // namespace osdn
