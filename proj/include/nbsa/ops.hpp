#pragma once

#include "nbsa/label_mask.hpp"
#include "nbsa/tensor.hpp"

namespace nbsa {

// All ops are eager and side-effect free; when an input sits on a tape the
// result is recorded there with its gradient rule. Every reduction runs in a
// fixed ascending index order, so replays are bit-identical.

Tensor matmul(const Tensor& a, const Tensor& b);     // [m×k]·[k×n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m×k]·[n×k]ᵀ
Tensor transpose2d(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor softmax_rows(const Tensor& logits);  // per-row, max-subtracted

Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& x, double alpha);
Tensor sum(const Tensor& x);  // scalar

// Cross-correlation with stride 1. Kernels of side 1 or 3; side 3 uses zero
// padding so spatial dims are preserved. x: [Cin×H×W], w: [Cout×Cin×k×k],
// bias: [Cout].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor maxpool2(const Tensor& x);    // [C×H×W] -> [C×H/2×W/2], H and W even
Tensor upsample2(const Tensor& x);   // nearest neighbour, doubles H and W
Tensor concat0(const Tensor& a, const Tensor& b);  // along dim 0

// Row gather/scatter on [N×C] matrices; backward of gather is scatter-add.
Tensor gather_rows(const Tensor& x, std::vector<int> idx);

// Mean over pixels of -log softmax(logits)[target]. logits: [K×H×W].
Tensor softmax_cross_entropy(const Tensor& logits, const LabelMask& target);

}  // namespace nbsa
