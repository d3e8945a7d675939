#include "darcygp/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace darcygp::fastgp {

OptimizerResult gradient_ascent(const Objective& f, Eigen::VectorXd start, const Eigen::Array<bool, -1, 1>& mask,
                                const OptimizerOptions& options) {
  OptimizerResult res;
  res.params = std::move(start);
  const Eigen::Index dim = res.params.size();
  Eigen::VectorXd grad(dim);
  res.value = f(res.params, grad);
  res.evaluations = 1;
  if (!std::isfinite(res.value)) return res;

  auto masked = [&](Eigen::VectorXd g) {
    for (Eigen::Index k = 0; k < dim; ++k)
      if (!mask[k] || !std::isfinite(g[k])) g[k] = 0.0;
    return g;
  };

  constexpr double armijo = 1e-4;
  Eigen::MatrixXd inv_hessian = Eigen::MatrixXd::Identity(dim, dim);  // of -f
  bool scaled = false;
  Eigen::VectorXd g = masked(grad);
  Eigen::VectorXd trial_grad(dim);
  for (res.iterations = 0; res.iterations < options.max_iterations;) {
    if (g.norm() == 0.0) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd dir = masked(inv_hessian * g);
    if (dir.dot(g) <= 0.0) {
      inv_hessian.setIdentity();
      dir = g;
    }
    // First step and steps along a reset direction start at initial_step in log units.
    double step = scaled ? 1.0 : options.initial_step / dir.norm();
    step = std::min(step, options.max_step / dir.norm());
    const double slope = dir.dot(g);

    bool accepted = false;
    Eigen::VectorXd s;
    while (step * dir.norm() > 1e-12) {
      s = step * dir;
      const Eigen::VectorXd trial = res.params + s;
      const double value = f(trial, trial_grad);
      ++res.evaluations;
      if (std::isfinite(value) && value >= res.value + armijo * step * slope) {
        const double change = std::abs(value - res.value) / std::max(std::abs(res.value), 1.0);
        res.params = trial;
        res.value = value;
        accepted = true;
        ++res.iterations;
        if (change < options.relative_tolerance) res.converged = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No ascent along the search direction at any step length: stationary to round-off.
      res.converged = true;
      break;
    }
    const Eigen::VectorXd g_new = masked(trial_grad);
    if (res.converged) {
      g = g_new;
      break;
    }
    // BFGS update of the inverse Hessian of -f: y = grad(-f) difference.
    const Eigen::VectorXd y = g - g_new;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        inv_hessian *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(dim, dim) - rho * s * y.transpose();
      inv_hessian = v * inv_hessian * v.transpose() + rho * s * s.transpose();
    }
    g = g_new;
  }
  return res;
}

}  // namespace darcygp::fastgp
