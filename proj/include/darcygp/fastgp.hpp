#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "darcygp/kernel.hpp"
#include "darcygp/optimizer.hpp"
#include "darcygp/qmc.hpp"

namespace darcygp::fastgp {

struct FitDiagnostics {
  bool optimized = false;
  double noise_init = 0.0;
  double log_likelihood = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

struct PosteriorMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Gaussian-process posterior for observations on the first n points of a
/// rank-1 lattice, with a periodic shift-invariant kernel.
///
/// The regularized Gram matrix K + zeta I is circulant in lattice natural
/// order, so it is diagonalized by the DFT of its first column. Constructing
/// the model costs O(n log n); the posterior mean costs O(n p) per query and
/// the posterior variance O(n log n) per query.
class FastGpModel {
 public:
  /// `generator` is truncated to the kernel dimension. n must be a power of
  /// two, or zero for a prior-only model.
  FastGpModel(const qmc::LatticeGenerator& generator, std::size_t n, Eigen::VectorXd y, PeriodicKernel kernel,
              double noise, FitDiagnostics diagnostics = {});

  [[nodiscard]] std::size_t size() const { return n_; }
  [[nodiscard]] int dimension() const { return kernel_.dimension(); }
  [[nodiscard]] const qmc::LatticeGenerator& generator() const { return generator_; }
  [[nodiscard]] const qmc::PointSet& points() const { return points_; }
  [[nodiscard]] const Eigen::VectorXd& observations() const { return y_; }
  [[nodiscard]] const PeriodicKernel& kernel() const { return kernel_; }
  [[nodiscard]] double noise() const { return noise_; }
  [[nodiscard]] const Eigen::VectorXd& coefficients() const { return coefficients_; }
  [[nodiscard]] const FitDiagnostics& diagnostics() const { return diagnostics_; }

  /// Eigenvalues of the noiseless Gram matrix in DFT order (length n).
  [[nodiscard]] Eigen::VectorXd spectrum() const;

  [[nodiscard]] double log_marginal_likelihood() const { return log_likelihood_; }

  [[nodiscard]] double posterior_mean(std::span<const double> t) const;
  [[nodiscard]] double posterior_variance(std::span<const double> t) const;
  [[nodiscard]] double posterior_covariance(std::span<const double> t, std::span<const double> u) const;

  /// Parallel over query rows.
  [[nodiscard]] Eigen::VectorXd posterior_mean(const qmc::PointSet& queries) const;
  [[nodiscard]] Eigen::VectorXd posterior_variance(const qmc::PointSet& queries) const;
  /// Mean and variance together, one cross-kernel evaluation per query.
  [[nodiscard]] PosteriorMoments posterior_moments(const qmc::PointSet& queries) const;
  /// Full posterior covariance among the queries: one transform per query, O(n) per pair.
  [[nodiscard]] Eigen::MatrixXd posterior_covariance(const qmc::PointSet& queries) const;

  /// k(t, x_i) for every training point.
  void cross_kernel(std::span<const double> t, std::span<double> out) const;

 private:
  void transform_cross_kernel(std::span<const double> t, std::vector<double>& work,
                              std::vector<std::complex<double>>& spec) const;
  [[nodiscard]] double reduce_quadratic(const std::vector<std::complex<double>>& a,
                                        const std::vector<std::complex<double>>& b) const;
  [[nodiscard]] double clamp_variance(double v) const;
  [[nodiscard]] double dot_coefficients(const std::vector<double>& k) const;

  qmc::LatticeGenerator generator_;
  std::size_t n_;
  qmc::PointSet points_;
  Eigen::MatrixXd columns_;  // points_ stored column-major
  Eigen::VectorXd y_;
  PeriodicKernel kernel_;
  double noise_;
  Eigen::VectorXd half_spectrum_;    // n/2 + 1 real eigenvalues
  Eigen::VectorXd inverse_weights_;  // multiplicity / (n (eigenvalue + zeta))
  Eigen::VectorXd coefficients_;   // (K + zeta I)^{-1} y
  double log_likelihood_ = 0.0;
  FitDiagnostics diagnostics_;
};

/// First column of the lattice Gram matrix, K[i][0] = k(frac(i z / n), 0),
/// evaluated from exact integer residues. Parallel over i.
Eigen::VectorXd kernel_column(const PeriodicKernel& kernel, const qmc::LatticeGenerator& generator, std::size_t n);

/// Eigenvalues of the circulant Gram matrix (length n, DFT order).
Eigen::VectorXd gram_spectrum(const PeriodicKernel& kernel, const qmc::LatticeGenerator& generator, std::size_t n);

/// Real parts and largest imaginary magnitude of the transformed first column.
struct RawSpectrum {
  Eigen::VectorXd real;
  double max_imag = 0.0;
};
RawSpectrum gram_spectrum_raw(const PeriodicKernel& kernel, const qmc::LatticeGenerator& generator, std::size_t n);

struct FitOptions {
  int order = 4;
  std::vector<double> initial_weights;  // empty: 1 per dimension
  double initial_scale = 0.0;           // <= 0: mean(y^2)
  OptimizerOptions optimizer;
};

/// Fits on the first n lattice points, one input per generator dimension.
/// With `optimize`, maximizes the log marginal likelihood over (scale,
/// weights, noise) in log space; noise_init = 0 keeps the noise fixed at zero.
FastGpModel fit(const qmc::LatticeGenerator& generator, std::size_t n, const Eigen::VectorXd& y, double noise_init,
                bool optimize, const FitOptions& options = {});

/// Log marginal likelihood and its gradient with respect to
/// (log scale, log weight_1..p, log noise), O(p n log n).
double fast_log_likelihood(const PeriodicKernel& kernel, const qmc::LatticeGenerator& generator,
                           const Eigen::VectorXd& y, double noise, Eigen::VectorXd* grad = nullptr);

namespace serial {
Eigen::VectorXd kernel_column(const PeriodicKernel& kernel, const qmc::LatticeGenerator& generator, std::size_t n);
Eigen::VectorXd posterior_mean(const FastGpModel& model, const qmc::PointSet& queries);
Eigen::VectorXd posterior_variance(const FastGpModel& model, const qmc::PointSet& queries);
PosteriorMoments posterior_moments(const FastGpModel& model, const qmc::PointSet& queries);
}  // namespace serial

}  // namespace darcygp::fastgp
