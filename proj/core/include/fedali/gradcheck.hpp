#pragma once

#include <functional>
#include <span>
#include <string>

#include "fedali/tensor.hpp"

namespace fedali {

struct FdReport {
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// |a-b| / max(|a|, |b|, floor)
inline double relative_error(double a, double b, double floor = 1e-6) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

/// Central finite differences against an analytic gradient.
///
/// `loss_fn` re-evaluates the scalar objective from the current contents of
/// `param` (which it perturbs in place and restores). When `max_coords` is
/// smaller than the parameter, a deterministic sample of coordinates is
/// checked (seeded by `seed`); otherwise every coordinate is.
FdReport fd_check_param(const std::function<double()>& loss_fn, Tensor& param,
                        std::span<const double> analytic_grad,
                        double step = 1e-5,
                        std::size_t max_coords = static_cast<std::size_t>(-1),
                        std::uint64_t seed = 0);

}  // namespace fedali
