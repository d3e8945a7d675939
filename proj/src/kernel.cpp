#include "darcygp/kernel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace darcygp::fastgp {

double periodic_bernoulli(int order, double x) {
  const double u = x - std::floor(x);
  constexpr double two_pi_sq = 2.0 * std::numbers::pi * std::numbers::pi;
  switch (order) {
    case 2:
      // (2 pi)^2 / 2! * B_2(u),  B_2(u) = u^2 - u + 1/6
      return two_pi_sq * (u * u - u + 1.0 / 6.0);
    case 4: {
      // -(2 pi)^4 / 4! * B_4(u),  B_4(u) = u^4 - 2u^3 + u^2 - 1/30
      const double b4 = u * u * (u * u - 2.0 * u + 1.0) - 1.0 / 30.0;
      return -(two_pi_sq * two_pi_sq / 6.0) * b4;
    }
    default:
      throw std::invalid_argument("periodic kernel order must be 2 or 4, got " + std::to_string(order));
  }
}

PeriodicKernel::PeriodicKernel(int order_, std::vector<double> weights_, double scale_)
    : order(order_), weights(std::move(weights_)), scale(scale_) {
  validate();
}

void PeriodicKernel::validate() const {
  if (order != 2 && order != 4) throw std::invalid_argument("periodic kernel order must be 2 or 4");
  if (weights.empty()) throw std::invalid_argument("periodic kernel needs at least one weight");
  for (double w : weights)
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("kernel weights must be finite and >= 0");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("kernel scale must be positive");
}

double PeriodicKernel::operator()(std::span<const double> x, std::span<const double> t) const {
  if (x.size() != weights.size() || t.size() != weights.size())
    throw std::invalid_argument("kernel input dimension mismatch");
  double k = scale;
  for (std::size_t j = 0; j < weights.size(); ++j) k *= 1.0 + weights[j] * periodic_bernoulli(order, x[j] - t[j]);
  return k;
}

double PeriodicKernel::diagonal() const {
  const double b0 = periodic_bernoulli(order, 0.0);
  double k = scale;
  for (double w : weights) k *= 1.0 + w * b0;
  return k;
}

}  // namespace darcygp::fastgp
