#pragma once

#include <vector>

#include "osdn/autodiff.hpp"

namespace osdn {

// Differentiable primitives. All of them validate input shapes and throw
// with a message naming the op and the offending dimensions.

Var dense(Var x, Var w, Var b);  // x [N,in], w [in,out], b [out]

// x [N,C,H,W], w [F,C,kh,kw], b [F]. Floor output arithmetic:
// H_out = (H + 2*pad - kh)/stride + 1.
Var conv2d(Var x, Var w, Var b, int stride = 1, int pad = 0);

// x [N,C,H,W], w [C,F,kh,kw], b [F].
// H_out = (H - 1)*stride - 2*pad + kh + out_pad. Adjoint of conv2d over the
// same (stride, pad) when out_pad matches the conv input size.
Var transpose_conv2d(Var x, Var w, Var b, int stride = 1, int pad = 0, int out_pad = 0);

Var relu(Var x);
Var add(Var a, Var b);          // same shape
Var scale(Var x, double c);
Var sigmoid_range(Var x, double lo, double hi);  // lo + (hi-lo)*sigmoid(x)

Var avg_pool2d(Var x, int k, int stride);
Var global_avg_pool(Var x);     // [N,C,H,W] -> [N,C]

Var softmax(Var x);             // row-wise over [N,K]
Var log_softmax(Var x);

enum class Reduction { Mean, Sum };
// logits [N,K], labels in [0,K). Mean (default) divides by N.
Var cross_entropy(Var logits, const std::vector<int>& labels, Reduction r = Reduction::Mean);

Var mse(Var a, Var b);          // mean over all elements of (a-b)^2

// Exact quarter-turn index permutation, counter-clockwise, r in {0,1,2,3}.
// Spatial dims swap when r is odd.
Var rotate90(Var x, int r);

Var reshape(Var x, Shape s);

// Per-channel normalization of [N,C,H,W]. In batch mode the statistics are
// computed over (N,H,W) per channel and gradients flow through them; the
// computed moments are written to batch_mean/batch_var when given, so the
// caller can maintain running averages. In frozen mode run_mean/run_var are
// treated as constants.
Var normalize_stats(Var x, Var gamma, Var beta, bool use_batch_stats,
                    const Tensor* run_mean = nullptr, const Tensor* run_var = nullptr,
                    Tensor* batch_mean = nullptr, Tensor* batch_var = nullptr,
                    double eps = 1e-5);

// Plain-tensor helpers shared with inference-side code.
Tensor rotate90_values(const Tensor& x, int r);
// Per-sample rotations; square spatial dims required when rotations mix.
Tensor rotate90_batch_values(const Tensor& x, const std::vector<int>& rs);
std::vector<double> softmax_vec(const std::vector<double>& logits);

}  // namespace osdn
