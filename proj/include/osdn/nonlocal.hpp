#pragma once

#include "osdn/ops.hpp"

namespace osdn {

// Gaussian (softmax) non-local means over the full spatial region.
//
// For input feature map m [N,d,H,W] and 1x1 embedding weights wa, wb [d,d]:
// each output position i is the softmax-weighted mean of all positions j,
// with attention logits a_i . b_j / sqrt(d) where a = wa*m and b = wb*m.
// The weights per position are nonnegative and sum to 1.
Var nonlocal_means(Var m, Var wa, Var wb);

// Residual wrapper: m + nonlocal_means(m). `residual` false gives the plain
// filtered map.
Var denoise_block(Var m, Var wa, Var wb, bool residual = true);

}  // namespace osdn
