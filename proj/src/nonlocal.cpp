#include "osdn/nonlocal.hpp"

#include <cmath>
#include <vector>

namespace osdn {

namespace {

// out[d x p] = w[d x d] * m[d x p]
void embed(const double* w, const double* m, double* out, int d, int p) {
  for (int r = 0; r < d; ++r)
    for (int i = 0; i < p; ++i) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) acc += w[r * d + k] * m[k * p + i];
      out[r * p + i] = acc;
    }
}

}  // namespace

Var nonlocal_means(Var m, Var wa, Var wb) {
  const Tensor& mv = m.val();
  const Tensor& wav = wa.val();
  const Tensor& wbv = wb.val();
  require(mv.ndim() == 4, "nonlocal_means: expected [N,d,H,W] input, got " + shape_str(mv.shape));
  const int n = mv.dim(0), d = mv.dim(1), p = mv.dim(2) * mv.dim(3);
  require(wav.ndim() == 2 && wav.dim(0) == d && wav.dim(1) == d && wbv.same_shape(wav),
          "nonlocal_means: embeddings must be [" + std::to_string(d) + "," + std::to_string(d) +
              "], got " + shape_str(wav.shape) + ", " + shape_str(wbv.shape));

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor y(mv.shape);
  Tensor attn({n, p, p});  // row-stochastic weights, kept for backward
  std::vector<double> a(static_cast<size_t>(d) * p), b(static_cast<size_t>(d) * p);

  for (int ni = 0; ni < n; ++ni) {
    const double* mm = mv.data() + ni * d * p;
    embed(wav.data(), mm, a.data(), d, p);
    embed(wbv.data(), mm, b.data(), d, p);
    double* s = attn.data() + ni * p * p;
    for (int i = 0; i < p; ++i) {
      double* row = s + i * p;
      double mx = -1e300;
      for (int j = 0; j < p; ++j) {
        double logit = 0.0;
        for (int k = 0; k < d; ++k) logit += a[k * p + i] * b[k * p + j];
        logit *= inv_sqrt_d;
        row[j] = logit;
        mx = std::max(mx, logit);
      }
      double sum = 0.0;
      for (int j = 0; j < p; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
      }
      for (int j = 0; j < p; ++j) row[j] /= sum;
    }
    double* out = y.data() + ni * d * p;
    for (int k = 0; k < d; ++k)
      for (int i = 0; i < p; ++i) {
        double acc = 0.0;
        const double* row = s + i * p;
        const double* mrow = mm + k * p;
        for (int j = 0; j < p; ++j) acc += row[j] * mrow[j];
        out[k * p + i] = acc;
      }
  }

  auto bwd = [mi = m.id, wai = wa.id, wbi = wb.id, attn = std::move(attn), n, d, p,
              inv_sqrt_d](Tape& t, int self) {
    const Tensor& gy = t.grad_buf(self);
    const Tensor& mv = t.value(mi);
    const Tensor& wav = t.value(wai);
    const Tensor& wbv = t.value(wbi);
    const bool need_m = t.requires_grad(mi);
    const bool need_wa = t.requires_grad(wai);
    const bool need_wb = t.requires_grad(wbi);
    Tensor* gm = need_m ? &t.grad_buf(mi) : nullptr;
    Tensor* gwa = need_wa ? &t.grad_buf(wai) : nullptr;
    Tensor* gwb = need_wb ? &t.grad_buf(wbi) : nullptr;

    std::vector<double> a(static_cast<size_t>(d) * p), b(static_cast<size_t>(d) * p);
    std::vector<double> ds(static_cast<size_t>(p) * p), dl(static_cast<size_t>(p) * p);
    std::vector<double> da(static_cast<size_t>(d) * p), db(static_cast<size_t>(d) * p);

    for (int ni = 0; ni < n; ++ni) {
      const double* mm = mv.data() + ni * d * p;
      const double* g = gy.data() + ni * d * p;
      const double* s = attn.data() + ni * p * p;
      embed(wav.data(), mm, a.data(), d, p);
      embed(wbv.data(), mm, b.data(), d, p);

      // dS[i,j] = g[:,i] . m[:,j]
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
          double acc = 0.0;
          for (int k = 0; k < d; ++k) acc += g[k * p + i] * mm[k * p + j];
          ds[static_cast<size_t>(i) * p + j] = acc;
        }
      // softmax backward per row, then scale by 1/sqrt(d)
      for (int i = 0; i < p; ++i) {
        const double* srow = s + i * p;
        const double* dsrow = ds.data() + static_cast<size_t>(i) * p;
        double dot = 0.0;
        for (int j = 0; j < p; ++j) dot += srow[j] * dsrow[j];
        double* dlrow = dl.data() + static_cast<size_t>(i) * p;
        for (int j = 0; j < p; ++j) dlrow[j] = srow[j] * (dsrow[j] - dot) * inv_sqrt_d;
      }
      // dA[:,i] = sum_j dL[i,j] b[:,j];  dB[:,j] = sum_i dL[i,j] a[:,i]
      for (int k = 0; k < d; ++k) {
        for (int i = 0; i < p; ++i) {
          double acc = 0.0;
          const double* dlrow = dl.data() + static_cast<size_t>(i) * p;
          for (int j = 0; j < p; ++j) acc += dlrow[j] * b[k * p + j];
          da[k * p + i] = acc;
        }
        for (int j = 0; j < p; ++j) {
          double acc = 0.0;
          for (int i = 0; i < p; ++i) acc += dl[static_cast<size_t>(i) * p + j] * a[k * p + i];
          db[k * p + j] = acc;
        }
      }
      if (need_wa)
        for (int r = 0; r < d; ++r)
          for (int k = 0; k < d; ++k) {
            double acc = 0.0;
            for (int i = 0; i < p; ++i) acc += da[r * p + i] * mm[k * p + i];
            (*gwa)[r * d + k] += acc;
          }
      if (need_wb)
        for (int r = 0; r < d; ++r)
          for (int k = 0; k < d; ++k) {
            double acc = 0.0;
            for (int i = 0; i < p; ++i) acc += db[r * p + i] * mm[k * p + i];
            (*gwb)[r * d + k] += acc;
          }
      if (need_m) {
        double* gmp = gm->data() + ni * d * p;
        // weighted-mean path: dM += g * S  (dM[:,j] += sum_i S[i,j] g[:,i])
        for (int k = 0; k < d; ++k)
          for (int j = 0; j < p; ++j) {
            double acc = 0.0;
            for (int i = 0; i < p; ++i) acc += s[i * p + j] * g[k * p + i];
            gmp[k * p + j] += acc;
          }
        // embedding paths: dM += Wa^T dA + Wb^T dB
        for (int k = 0; k < d; ++k)
          for (int i = 0; i < p; ++i) {
            double acc = 0.0;
            for (int r = 0; r < d; ++r)
              acc += wav[r * d + k] * da[r * p + i] + wbv[r * d + k] * db[r * p + i];
            gmp[k * p + i] += acc;
          }
      }
    }
  };
  return m.tape->op_node(std::move(y), {m.id, wa.id, wb.id}, bwd);
}

Var denoise_block(Var m, Var wa, Var wb, bool residual) {
  Var filtered = nonlocal_means(m, wa, wb);
  return residual ? add(m, filtered) : filtered;
}

}  // namespace osdn
