#pragma once

#include "fedali/tensor.hpp"
#include "fedali/transport.hpp"

namespace fedali {

enum class BankRole { local, global };

/// A bank of prototype vectors. Local banks are the client's memory and are
/// EMA-updated during training; global banks come from the server and are
/// never mutated by client-side code.
struct PrototypeBank {
  Tensor vectors;  // [G, d]
  BankRole role = BankRole::local;
  double gamma = 0.999;  // EMA rate; meaningful for local banks only

  std::size_t count() const { return vectors.dim(0); }
  std::size_t width() const { return vectors.dim(1); }
};

enum class AlpDistance { wasserstein, cosine, euclidean };

AlpDistance alp_distance_from_string(const std::string& s);
std::string to_string(AlpDistance d);

struct AlpConfig {
  double beta = 0.2;      // alignment coefficient
  double gamma = 0.999;   // prototype update rate
  double epsilon = 0.05;  // OT sharpness
  int sinkhorn_iters = 3;
  std::size_t prototypes = 0;  // G

  // Ablation switches.
  bool use_glu = true;
  bool align_train = true;  // global-prototype alignment during training
  bool align_infer = true;  // local-prototype alignment during inference
  AlpDistance distance = AlpDistance::wasserstein;

  void validate() const;
};

/// [B,Z,d] -> [B*Z,d]; row-major, so token (b,z) lands at row b*Z+z.
Tensor merge_batch(const Tensor& x);
/// Inverse of merge_batch.
Tensor restore_batch(const Tensor& x, std::size_t batch, std::size_t seq);

/// Gated linear unit: [a|g] = pW + b split along the last axis,
/// output a * sigmoid(g). W: [d,2d], b: [2d].
Tensor glu_apply(const Tensor& p, const Tensor& W, const Tensor& b);

/// P' = gamma*P + (1-gamma)*xbar. Plain arithmetic, no gradient tracking.
Tensor ema_update(const Tensor& P, const Tensor& xbar, double gamma);

struct AlpTrainResult {
  Tensor output;     // [B,Z,d], unit-norm tokens, on the gradient tape
  Tensor new_local;  // updated local bank (not yet applied by the caller)
};

/// Training branch: transport over the concatenated [local|global] banks,
/// hard assignment to global prototypes, GLU over the stop-gradient matched
/// prototypes, blend, reshape, L2-normalize; plus the EMA target for the
/// local bank. Gradients flow through x and the GLU parameters only.
AlpTrainResult alp_forward_train(const Tensor& x, const PrototypeBank& local,
                                 const PrototypeBank& global_bank,
                                 const Tensor& glu_W, const Tensor& glu_b,
                                 const AlpConfig& cfg);

/// Inference branch: transport against the local bank only, no mutation.
Tensor alp_forward_infer(const Tensor& x, const PrototypeBank& local,
                         const Tensor& glu_W, const Tensor& glu_b,
                         const AlpConfig& cfg);

}  // namespace fedali
