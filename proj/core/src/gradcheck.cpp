#include "fedali/gradcheck.hpp"

#include <algorithm>
#include <numeric>

#include "fedali/rng.hpp"

namespace fedali {

FdReport fd_check_param(const std::function<double()>& loss_fn, Tensor& param,
                        std::span<const double> analytic_grad, double step,
                        std::size_t max_coords, std::uint64_t seed) {
  const std::size_t n = param.size();
  FEDALI_CHECK(analytic_grad.size() == n,
               "fd_check_param: gradient/parameter size mismatch");

  std::vector<std::size_t> coords(n);
  std::iota(coords.begin(), coords.end(), 0);
  if (max_coords < n) {
    Rng rng(derive_seed(seed, 0xFDFD));
    rng.shuffle(coords);
    coords.resize(max_coords);
    std::sort(coords.begin(), coords.end());
  }

  FdReport rep;
  double* p = param.data();
  for (std::size_t i : coords) {
    const double saved = p[i];
    p[i] = saved + step;
    const double up = loss_fn();
    p[i] = saved - step;
    const double down = loss_fn();
    p[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double err = relative_error(analytic_grad[i], numeric);
    if (err > rep.max_rel_err) {
      rep.max_rel_err = err;
      rep.worst_coord = i;
      rep.worst_analytic = analytic_grad[i];
      rep.worst_numeric = numeric;
    }
    ++rep.coords_checked;
  }
  return rep;
}

}  // namespace fedali
