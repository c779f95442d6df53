#pragma once

#include <span>

#include "fedali/rng.hpp"
#include "fedali/tensor.hpp"

namespace fedali {

// Elementwise (same shape unless noted).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
/// beta*a + (1-beta)*b
Tensor blend(const Tensor& a, const Tensor& b, double beta);
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);

// Linear algebra. 2-D row-major.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x:[n,in] W:[in,out] b:[out] -> [n,out]
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);
/// Batched matmul over the leading dim: [B,n,k] x [B,k,m] -> [B,n,m]
Tensor bmm(const Tensor& a, const Tensor& b);

// Shape.
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& dims);
/// Columns [start, start+len) of the last axis.
Tensor slice_last(const Tensor& a, std::size_t start, std::size_t len);
/// [B,Z,d] -> [B,d], mean over the middle axis.
Tensor mean_tokens(const Tensor& x);

// Reductions -> scalar.
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// Row-wise over the last axis.
Tensor softmax_last(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
/// Each slice along the last axis scaled to unit L2 norm; slices with norm
/// below `floor` are divided by `floor` instead (zero stays zero, no NaN).
Tensor l2_normalize(const Tensor& x, double floor = 1e-12);
/// Same guard, no autograd; for raw buffers (prototype banks, plan inputs).
void l2_normalize_rows_inplace(double* data, std::size_t rows,
                               std::size_t cols, double floor = 1e-12);

/// Mean softmax cross-entropy of logits [B,C] against integer labels.
Tensor cross_entropy_logits(const Tensor& logits, std::span<const int> labels);

/// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

}  // namespace fedali
