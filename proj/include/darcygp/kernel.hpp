#pragma once

#include <span>
#include <vector>

namespace darcygp::fastgp {

/// Normalized periodic Bernoulli polynomial of even order alpha:
///   sum_{k != 0} e^{2 pi i k x} / |k|^alpha = (-1)^(alpha/2 + 1) (2 pi)^alpha / alpha! B_alpha({x}).
/// Depends on x only through its fractional part and is symmetric about 1/2.
double periodic_bernoulli(int order, double x);

/// Shift-invariant product kernel on the unit torus,
///   k(x, t) = scale * prod_j (1 + weight_j * periodic_bernoulli(order, x_j - t_j)).
///
/// Every Fourier coefficient is positive, so the kernel is positive definite
/// and its Gram matrix on an unshifted (or commonly shifted) rank-1 lattice
/// is circulant.
struct PeriodicKernel {
  int order = 4;
  std::vector<double> weights;
  double scale = 1.0;

  PeriodicKernel() = default;
  PeriodicKernel(int order_, std::vector<double> weights_, double scale_);

  void validate() const;
  [[nodiscard]] int dimension() const { return static_cast<int>(weights.size()); }
  [[nodiscard]] double operator()(std::span<const double> x, std::span<const double> t) const;
  /// k(x, x), identical for every x.
  [[nodiscard]] double diagonal() const;
};

}  // namespace darcygp::fastgp
