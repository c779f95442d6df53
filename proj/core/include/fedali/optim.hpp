#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "fedali/tensor.hpp"

namespace fedali {

struct AdamConfig {
  double lr = 1e-4;
  // The conventional defaults; recorded in every run manifest.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  long step = 0;
};

/// One bias-corrected Adam update of `param` in place. `name` is used in the
/// error message when a non-finite gradient shows up.
void adam_step(Tensor& param, std::span<const double> grad, AdamState& state,
               const AdamConfig& cfg, const std::string& name);

/// Keeps one AdamState per parameter name.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg) : cfg_(cfg) {}

  void step(const std::string& name, Tensor& param) {
    adam_step(param, param.grad(), states_[name], cfg_, name);
  }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::unordered_map<std::string, AdamState> states_;
};

}  // namespace fedali
