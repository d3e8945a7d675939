#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Dense>

#include "darcygp/fastgp.hpp"
#include "darcygp/kernel.hpp"
#include "darcygp/qmc.hpp"

namespace darcygp::fastgp {

inline constexpr std::size_t kDenseMaxPoints = 2048;

/// Textbook GP regression with a Cholesky factorization of K + zeta I.
/// O(n^3); limited to kDenseMaxPoints observations.
class DenseGp {
 public:
  DenseGp(qmc::PointSet points, Eigen::VectorXd y, PeriodicKernel kernel, double noise);

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(y_.size()); }
  [[nodiscard]] const PeriodicKernel& kernel() const { return kernel_; }
  [[nodiscard]] double noise() const { return noise_; }
  [[nodiscard]] const Eigen::VectorXd& coefficients() const { return alpha_; }
  [[nodiscard]] double log_marginal_likelihood() const { return log_likelihood_; }

  [[nodiscard]] double posterior_mean(std::span<const double> t) const;
  [[nodiscard]] double posterior_variance(std::span<const double> t) const;
  [[nodiscard]] double posterior_covariance(std::span<const double> t, std::span<const double> u) const;

 private:
  [[nodiscard]] Eigen::VectorXd cross_kernel(std::span<const double> t) const;

  qmc::PointSet points_;
  Eigen::VectorXd y_;
  PeriodicKernel kernel_;
  double noise_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double log_likelihood_ = 0.0;
};

/// Noiseless Gram matrix K[i][j] = k(x_i, x_j). Parallel over rows.
Eigen::MatrixXd gram_matrix(const PeriodicKernel& kernel, const qmc::PointSet& points);

namespace serial {
Eigen::MatrixXd gram_matrix(const PeriodicKernel& kernel, const qmc::PointSet& points);
}

/// Log marginal likelihood and gradient in the same parametrization as
/// fast_log_likelihood, from 1/2 tr((a a^T - (K + zeta I)^{-1}) dK).
double dense_log_likelihood(const PeriodicKernel& kernel, const qmc::PointSet& points, const Eigen::VectorXd& y,
                            double noise, Eigen::VectorXd* grad = nullptr);

/// Same contract as fit(), with dense likelihood evaluations.
DenseGp dense_fit(const qmc::PointSet& points, const Eigen::VectorXd& y, double noise_init, bool optimize,
                  const FitOptions& options = {});

}  // namespace darcygp::fastgp
