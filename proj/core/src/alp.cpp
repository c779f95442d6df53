#include "fedali/alp.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "fedali/ops.hpp"

namespace fedali {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

AlpDistance alp_distance_from_string(const std::string& s) {
  if (s == "wasserstein") return AlpDistance::wasserstein;
  if (s == "cosine") return AlpDistance::cosine;
  if (s == "euclidean") return AlpDistance::euclidean;
  fail("unknown ALP distance '", s,
       "' (expected wasserstein|cosine|euclidean)");
}

std::string to_string(AlpDistance d) {
  switch (d) {
    case AlpDistance::wasserstein: return "wasserstein";
    case AlpDistance::cosine: return "cosine";
    case AlpDistance::euclidean: return "euclidean";
  }
  return "?";
}

void AlpConfig::validate() const {
  FEDALI_CHECK(beta >= 0.0 && beta <= 1.0, "alp: beta must be in [0,1], got ",
               beta);
  FEDALI_CHECK(gamma >= 0.0 && gamma <= 1.0,
               "alp: gamma must be in [0,1], got ", gamma);
  FEDALI_CHECK(epsilon > 0.0, "alp: epsilon must be > 0, got ", epsilon);
  FEDALI_CHECK(sinkhorn_iters >= 1, "alp: sinkhorn_iters must be >= 1");
  FEDALI_CHECK(prototypes >= 1, "alp: prototype count must be >= 1");
}

Tensor merge_batch(const Tensor& x) {
  FEDALI_CHECK(x.ndim() == 3, "merge_batch: expects [B,Z,d], got ",
               shape_str(x.shape()));
  return reshape(x, {x.dim(0) * x.dim(1), x.dim(2)});
}

Tensor restore_batch(const Tensor& x, std::size_t batch, std::size_t seq) {
  FEDALI_CHECK(x.ndim() == 2 && x.dim(0) == batch * seq,
               "restore_batch: ", shape_str(x.shape()),
               " does not factor into B=", batch, " Z=", seq);
  return reshape(x, {batch, seq, x.dim(1)});
}

Tensor glu_apply(const Tensor& p, const Tensor& W, const Tensor& b) {
  FEDALI_CHECK(p.ndim() == 2, "glu_apply: expects [N,d]");
  const std::size_t d = p.dim(1);
  FEDALI_CHECK(W.ndim() == 2 && W.dim(0) == d && W.dim(1) == 2 * d,
               "glu_apply: W must be [", d, ",", 2 * d, "], got ",
               shape_str(W.shape()));
  FEDALI_CHECK(b.ndim() == 1 && b.dim(0) == 2 * d, "glu_apply: b must be [",
               2 * d, "]");
  Tensor z = linear(p, W, b);
  Tensor value = slice_last(z, 0, d);
  Tensor gate = slice_last(z, d, d);
  return mul(value, sigmoid(gate));
}

Tensor ema_update(const Tensor& P, const Tensor& xbar, double gamma) {
  FEDALI_CHECK(gamma >= 0.0 && gamma <= 1.0,
               "ema_update: gamma must be in [0,1], got ", gamma);
  FEDALI_CHECK(P.shape() == xbar.shape(), "ema_update: shape mismatch ",
               shape_str(P.shape()), " vs ", shape_str(xbar.shape()));
  const std::size_t n = P.size();
  std::vector<double> out(n);
  const double* p = P.data();
  const double* t = xbar.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = gamma * p[i] + (1.0 - gamma) * t[i];
  return Tensor::from_data(P.shape(), std::move(out));
}

namespace {

// Row-normalized copy of a raw matrix.
Tensor normalized_copy(const Tensor& m) {
  Tensor out = m.detach().clone();
  l2_normalize_rows_inplace(out.data(), out.dim(0), out.dim(1));
  return out;
}

// [rows_a + rows_b, d] stack.
Tensor vstack(const Tensor& a, const Tensor& b) {
  const std::size_t d = a.dim(1);
  Tensor out = Tensor::zeros({a.dim(0) + b.dim(0), d});
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  return out;
}

Tensor transpose_plain(const Tensor& m) {
  const std::size_t r = m.dim(0), c = m.dim(1);
  Tensor out = Tensor::zeros({c, r});
  MapM(out.data(), c, r) = MapCM(m.data(), r, c).transpose();
  return out;
}

Tensor columns(const Tensor& m, std::size_t start, std::size_t len) {
  const std::size_t r = m.dim(0), c = m.dim(1);
  Tensor out = Tensor::zeros({r, len});
  MapM(out.data(), r, len) = MapCM(m.data(), r, c).middleCols(start, len);
  return out;
}

// Gathers bank rows into a constant [N,d] tensor (stop-gradient by
// construction: the result is a fresh leaf with no graph edge).
Tensor gather_rows(const Tensor& bank, const std::vector<std::size_t>& idx) {
  const std::size_t d = bank.dim(1);
  Tensor out = Tensor::zeros({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(bank.data() + idx[i] * d, bank.data() + (idx[i] + 1) * d,
              out.data() + i * d);
  return out;
}

// Similarity scores for the ablation distances (no transport). Positive by
// construction so Step-5 weight normalization stays well defined:
// cosine -> exp(cos), euclidean -> exp(-dist).
Tensor ablation_scores(const Tensor& x, const Tensor& bank, AlpDistance dist) {
  const std::size_t n = x.dim(0), g = bank.dim(0), d = x.dim(1);
  Tensor out = Tensor::zeros({n, g});
  MapM S(out.data(), n, g);
  if (dist == AlpDistance::cosine) {
    Tensor xn = normalized_copy(x);
    Tensor bn = normalized_copy(bank);
    S.noalias() = MapCM(xn.data(), n, d) * MapCM(bn.data(), g, d).transpose();
    S = S.array().exp();
  } else {
    MapCM X(x.data(), n, d);
    MapCM B(bank.data(), g, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < g; ++j)
        S(i, j) = std::exp(-(X.row(i) - B.row(j)).norm());
  }
  return out;
}

// Embedding->prototype score matrix per the configured metric. For
// wasserstein this is the Sinkhorn transport plan over the given bank(s).
Tensor match_scores(const Tensor& x_raw, const Tensor& bank,
                    const AlpConfig& cfg) {
  if (cfg.distance == AlpDistance::wasserstein) {
    Tensor xn = normalized_copy(x_raw);
    Tensor bn = normalized_copy(bank);
    return transport_plan(xn, bn, cfg.epsilon, cfg.sinkhorn_iters).matrix;
  }
  return ablation_scores(x_raw, bank, cfg.distance);
}

Tensor finish_alignment(const Tensor& merged, const Tensor& matched,
                        const Tensor& glu_W, const Tensor& glu_b,
                        std::size_t batch, std::size_t seq,
                        const AlpConfig& cfg) {
  Tensor gated =
      cfg.use_glu ? glu_apply(matched, glu_W, glu_b) : matched;
  Tensor blended = blend(gated, merged, cfg.beta);
  return l2_normalize(restore_batch(blended, batch, seq));
}

}  // namespace

AlpTrainResult alp_forward_train(const Tensor& x, const PrototypeBank& local,
                                 const PrototypeBank& global_bank,
                                 const Tensor& glu_W, const Tensor& glu_b,
                                 const AlpConfig& cfg) {
  cfg.validate();
  FEDALI_CHECK(global_bank.vectors.defined(),
               "alp_forward_train: global bank required in training mode");
  FEDALI_CHECK(local.vectors.shape() == global_bank.vectors.shape(),
               "alp_forward_train: bank shapes differ");
  const std::size_t B = x.dim(0), Z = x.dim(1);
  const std::size_t N = B * Z, G = local.count();

  Tensor merged = merge_batch(x);
  Tensor x_raw = merged.detach();  // OT / EMA side never sees gradients

  // One matching problem over [local|global]; the plan is partitioned into
  // its local and global column blocks.
  Tensor o_local, o_global;
  if (cfg.distance == AlpDistance::wasserstein) {
    Tensor xn = normalized_copy(x_raw);
    Tensor banks = vstack(normalized_copy(local.vectors),
                          normalized_copy(global_bank.vectors));
    TransportPlan plan =
        transport_plan(xn, banks, cfg.epsilon, cfg.sinkhorn_iters);
    o_local = columns(plan.matrix, 0, G);
    o_global = columns(plan.matrix, G, G);
  } else {
    o_local = ablation_scores(x_raw, local.vectors, cfg.distance);
    o_global = ablation_scores(x_raw, global_bank.vectors, cfg.distance);
  }

  AlpTrainResult result;
  if (cfg.align_train) {
    Tensor matched =
        gather_rows(global_bank.vectors, argmax_rows(o_global));
    result.output =
        finish_alignment(merged, matched, glu_W, glu_b, B, Z, cfg);
  } else {
    result.output = l2_normalize(restore_batch(merged, B, Z));
  }

  // Step 5: prototype-centric Top-K over the local block, EMA toward the
  // weighted embedding averages. Uses pre-alignment embeddings.
  const std::size_t k = (N + G - 1) / G;
  Tensor xbar = topk_targets(transpose_plain(o_local), x_raw, k);
  result.new_local = ema_update(local.vectors, xbar, cfg.gamma);
  return result;
}

Tensor alp_forward_infer(const Tensor& x, const PrototypeBank& local,
                         const Tensor& glu_W, const Tensor& glu_b,
                         const AlpConfig& cfg) {
  cfg.validate();
  const std::size_t B = x.dim(0), Z = x.dim(1);
  Tensor merged = merge_batch(x);
  if (!cfg.align_infer) return l2_normalize(restore_batch(merged, B, Z));

  Tensor x_raw = merged.detach();
  Tensor scores = match_scores(x_raw, local.vectors, cfg);
  Tensor matched = gather_rows(local.vectors, argmax_rows(scores));
  return finish_alignment(merged, matched, glu_W, glu_b, B, Z, cfg);
}

}  // namespace fedali
