#include "fedali/rng.hpp"

#include <cmath>

namespace fedali {

std::uint64_t Rng::uniform_index(std::uint64_t bound) {
  FEDALI_CHECK(bound > 0, "uniform_index: bound must be positive");
  // rejection sampling on the top bits to avoid modulo bias
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 1e-300);
  u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

double Rng::gamma(double alpha) {
  FEDALI_CHECK(alpha > 0.0, "gamma: alpha must be positive, got ", alpha);
  if (alpha < 1.0) {
    // boost: Gamma(a) = Gamma(a+1) * U^{1/a}
    const double u = std::max(uniform(), 1e-300);
    return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 1e-300 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return d * v;
  }
}

std::vector<double> Rng::dirichlet(double alpha, std::size_t k) {
  FEDALI_CHECK(alpha > 0.0, "dirichlet: alpha must be positive, got ", alpha);
  FEDALI_CHECK(k > 0, "dirichlet: dimension must be positive");
  std::vector<double> draw(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    draw[i] = gamma(alpha);
    total += draw[i];
  }
  if (total <= 0.0) {
    // all draws underflowed (tiny alpha); put everything on one coordinate
    std::fill(draw.begin(), draw.end(), 0.0);
    draw[uniform_index(k)] = 1.0;
    return draw;
  }
  for (double& d : draw) d /= total;
  return draw;
}

}  // namespace fedali
