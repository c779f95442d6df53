#pragma once

#include <vector>

#include "fedali/tensor.hpp"

namespace fedali {

/// Entropic coupling between N_e embeddings (rows) and M prototypes
/// (columns). Marginals are uniform on both sides: rows sum to 1/N_e and
/// columns to 1/M in the converged limit.
struct TransportPlan {
  Tensor matrix;         // [N_e, M], nonnegative
  double epsilon = 0.0;  // sharpness the similarity matrix was built with
  int iterations = 0;    // normalization iterations performed

  std::size_t rows() const { return matrix.dim(0); }
  std::size_t cols() const { return matrix.dim(1); }
};

/// O0[i,j] = exp(x_norm[i] . P_norm[j] / epsilon). Inputs must be row-wise
/// L2-normalized; epsilon > 0.
Tensor similarity_init(const Tensor& x_norm, const Tensor& p_norm,
                       double epsilon);

/// Alternating row/column rescaling toward uniform marginals, column step
/// last. Denominators are floored at 1e-9. O0 must be strictly positive.
TransportPlan sinkhorn(const Tensor& O0, int iterations, double epsilon = 0.0);

/// similarity_init followed by sinkhorn.
TransportPlan transport_plan(const Tensor& x_norm, const Tensor& p_norm,
                             double epsilon, int iterations);

/// Row-wise argmax; ties go to the lowest column index.
std::vector<std::size_t> hard_assign(const TransportPlan& plan);
std::vector<std::size_t> argmax_rows(const Tensor& scores);

/// Prototype-centric targets. `scores_T` is [G, N_e] (the transposed plan or
/// an ablation similarity matrix); per prototype the k best embeddings are
/// selected, their scores renormalized to sum 1, and the weighted average of
/// the corresponding `x` rows returned. k == 1 returns the single best row
/// unweighted.
Tensor topk_targets(const Tensor& scores_T, const Tensor& x, std::size_t k);

}  // namespace fedali
