#include "fedali/transport.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedali {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

namespace {
constexpr double kDenominatorFloor = 1e-9;
}

Tensor similarity_init(const Tensor& x_norm, const Tensor& p_norm,
                       double epsilon) {
  FEDALI_CHECK(epsilon > 0.0, "similarity_init: epsilon must be > 0, got ",
               epsilon);
  FEDALI_CHECK(x_norm.ndim() == 2 && p_norm.ndim() == 2,
               "similarity_init: expects 2-D inputs");
  FEDALI_CHECK(x_norm.dim(1) == p_norm.dim(1),
               "similarity_init: width mismatch ", shape_str(x_norm.shape()),
               " vs ", shape_str(p_norm.shape()));
  FEDALI_CHECK(x_norm.all_finite() && p_norm.all_finite(),
               "similarity_init: non-finite input");

  const std::size_t n = x_norm.dim(0), m = p_norm.dim(0), d = x_norm.dim(1);
  Tensor out = Tensor::zeros({n, m});
  MapM O(out.data(), n, m);
  O.noalias() = MapCM(x_norm.data(), n, d) * MapCM(p_norm.data(), m, d).transpose();
  O = (O / epsilon).array().exp();
  return out;
}

TransportPlan sinkhorn(const Tensor& O0, int iterations, double epsilon) {
  FEDALI_CHECK(O0.ndim() == 2, "sinkhorn: expects a 2-D similarity matrix");
  FEDALI_CHECK(iterations >= 1, "sinkhorn: iterations must be >= 1");
  const std::size_t n = O0.dim(0), m = O0.dim(1);
  for (std::size_t i = 0; i < n * m; ++i)
    FEDALI_CHECK(O0.data()[i] > 0.0 && std::isfinite(O0.data()[i]),
                 "sinkhorn: non-positive entry at flat index ", i);

  TransportPlan plan;
  plan.matrix = O0.clone().detach();
  plan.epsilon = epsilon;
  plan.iterations = iterations;

  MapM P(plan.matrix.data(), n, m);
  const double row_target = 1.0 / static_cast<double>(n);
  const double col_target = 1.0 / static_cast<double>(m);
  // Row step then column step so the column marginal is exact after each
  // iteration; with only 3 iterations the order is observable.
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      const double s = P.row(i).sum();
      P.row(i) *= row_target / std::max(s, kDenominatorFloor);
    }
    for (std::size_t j = 0; j < m; ++j) {
      const double s = P.col(j).sum();
      P.col(j) *= col_target / std::max(s, kDenominatorFloor);
    }
  }
  return plan;
}

TransportPlan transport_plan(const Tensor& x_norm, const Tensor& p_norm,
                             double epsilon, int iterations) {
  return sinkhorn(similarity_init(x_norm, p_norm, epsilon), iterations,
                  epsilon);
}

std::vector<std::size_t> argmax_rows(const Tensor& scores) {
  FEDALI_CHECK(scores.ndim() == 2 && scores.dim(1) >= 1,
               "argmax_rows: expects [N,M] with M >= 1");
  const std::size_t n = scores.dim(0), m = scores.dim(1);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = scores.data() + i * m;
    std::size_t best = 0;
    for (std::size_t j = 1; j < m; ++j)
      if (row[j] > row[best]) best = j;  // strict: ties keep the lowest index
    idx[i] = best;
  }
  return idx;
}

std::vector<std::size_t> hard_assign(const TransportPlan& plan) {
  return argmax_rows(plan.matrix);
}

Tensor topk_targets(const Tensor& scores_T, const Tensor& x, std::size_t k) {
  FEDALI_CHECK(scores_T.ndim() == 2 && x.ndim() == 2,
               "topk_targets: expects 2-D inputs");
  const std::size_t g = scores_T.dim(0), n = scores_T.dim(1), d = x.dim(1);
  FEDALI_CHECK(x.dim(0) == n, "topk_targets: ", n, " score columns but ",
               x.dim(0), " embeddings");
  FEDALI_CHECK(k >= 1 && k <= n, "topk_targets: k=", k, " outside [1,", n, "]");

  Tensor out = Tensor::zeros({g, d});
  std::vector<std::size_t> order(n);
  for (std::size_t p = 0; p < g; ++p) {
    const double* s = scores_T.data() + p * n;
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [s](std::size_t a, std::size_t b) {
                        return s[a] != s[b] ? s[a] > s[b] : a < b;
                      });
    double* row = out.data() + p * d;
    if (k == 1) {
      const double* xr = x.data() + order[0] * d;
      std::copy(xr, xr + d, row);
      continue;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      FEDALI_CHECK(s[order[i]] >= 0.0,
                   "topk_targets: negative score; transform scores first");
      total += s[order[i]];
    }
    for (std::size_t i = 0; i < k; ++i) {
      // degenerate all-zero selection falls back to a plain mean
      const double w = total > 1e-300 ? s[order[i]] / total : 1.0 / k;
      const double* xr = x.data() + order[i] * d;
      for (std::size_t c = 0; c < d; ++c) row[c] += w * xr[c];
    }
  }
  return out;
}

}  // namespace fedali
