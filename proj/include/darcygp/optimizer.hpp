#pragma once

#include <functional>

#include <Eigen/Dense>

namespace darcygp::fastgp {

struct OptimizerOptions {
  int max_iterations = 200;
  double relative_tolerance = 1e-8;
  double initial_step = 0.5;  // first step length in log-parameter units
  double max_step = 4.0;      // cap on any step length
  bool optimize_scale = true;
  bool optimize_weights = true;
  bool optimize_noise = true;
};

struct OptimizerResult {
  Eigen::VectorXd params;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Objective returning a value to maximize and writing its gradient.
using Objective = std::function<double(const Eigen::VectorXd& params, Eigen::VectorXd& grad)>;

/// Quasi-Newton (BFGS) gradient ascent with Armijo backtracking.
/// Coordinates with mask[k] == false are held fixed.
OptimizerResult gradient_ascent(const Objective& f, Eigen::VectorXd start, const Eigen::Array<bool, -1, 1>& mask,
                                const OptimizerOptions& options);

}  // namespace darcygp::fastgp
