#include "darcygp/dense_gp.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "darcygp/optimizer.hpp"

namespace darcygp::fastgp {

namespace {

std::span<const double> row_span(const qmc::PointSet& x, Eigen::Index i) {
  return {x.row(i).data(), static_cast<std::size_t>(x.cols())};
}

void require_dense_size(Eigen::Index n) {
  if (static_cast<std::size_t>(n) > kDenseMaxPoints)
    throw std::invalid_argument("dense GP limited to " + std::to_string(kDenseMaxPoints) + " points");
}

Eigen::MatrixXd gram_impl(const PeriodicKernel& kernel, const qmc::PointSet& points, bool parallel) {
  kernel.validate();
  if (points.cols() != kernel.dimension()) throw std::invalid_argument("point dimension differs from the kernel");
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd k(n, n);
#pragma omp parallel for schedule(dynamic, 8) if (parallel)
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) k(i, j) = kernel(row_span(points, i), row_span(points, j));
  k.triangularView<Eigen::StrictlyUpper>() = k.transpose();
  return k;
}

Eigen::LLT<Eigen::MatrixXd> factor(Eigen::MatrixXd k, double noise) {
  k.diagonal().array() += noise;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("Cholesky factorization of K + zeta I failed (noise " + std::to_string(noise) + ")");
  return llt;
}

double log_likelihood(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& y, const Eigen::VectorXd& a) {
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * y.dot(a) - 0.5 * logdet - 0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

}  // namespace

Eigen::MatrixXd gram_matrix(const PeriodicKernel& kernel, const qmc::PointSet& points) {
  return gram_impl(kernel, points, true);
}

Eigen::MatrixXd serial::gram_matrix(const PeriodicKernel& kernel, const qmc::PointSet& points) {
  return gram_impl(kernel, points, false);
}

DenseGp::DenseGp(qmc::PointSet points, Eigen::VectorXd y, PeriodicKernel kernel, double noise)
    : points_(std::move(points)), y_(std::move(y)), kernel_(std::move(kernel)), noise_(noise) {
  require_dense_size(points_.rows());
  if (points_.rows() != y_.size()) throw std::invalid_argument("observation count must equal the point count");
  if (!(noise_ >= 0.0)) throw std::invalid_argument("noise variance must be >= 0");
  if (y_.size() == 0) return;
  llt_ = factor(gram_matrix(kernel_, points_), noise_);
  alpha_ = llt_.solve(y_);
  log_likelihood_ = log_likelihood(llt_, y_, alpha_);
}

Eigen::VectorXd DenseGp::cross_kernel(std::span<const double> t) const {
  Eigen::VectorXd k(points_.rows());
  for (Eigen::Index i = 0; i < points_.rows(); ++i) k[i] = kernel_(t, row_span(points_, i));
  return k;
}

double DenseGp::posterior_mean(std::span<const double> t) const {
  if (y_.size() == 0) return 0.0;
  return cross_kernel(t).dot(alpha_);
}

double DenseGp::posterior_variance(std::span<const double> t) const {
  return posterior_covariance(t, t);
}

double DenseGp::posterior_covariance(std::span<const double> t, std::span<const double> u) const {
  const double prior = kernel_(t, u);
  if (y_.size() == 0) return prior;
  const Eigen::VectorXd kt = cross_kernel(t);
  const Eigen::VectorXd ku = cross_kernel(u);
  return prior - kt.dot(llt_.solve(ku));
}

double dense_log_likelihood(const PeriodicKernel& kernel, const qmc::PointSet& points, const Eigen::VectorXd& y,
                            double noise, Eigen::VectorXd* grad) {
  require_dense_size(points.rows());
  const Eigen::MatrixXd k = gram_matrix(kernel, points);
  const auto llt = factor(k, noise);
  const Eigen::VectorXd a = llt.solve(y);
  const double value = log_likelihood(llt, y, a);
  if (!grad) return value;

  const Eigen::Index n = points.rows();
  const int p = kernel.dimension();
  // W = a a^T - (K + zeta I)^{-1}; dL/dtheta = 1/2 sum_ij W_ij dK_ij
  const Eigen::MatrixXd w = a * a.transpose() - llt.solve(Eigen::MatrixXd::Identity(n, n));
  grad->resize(p + 2);
  (*grad)[0] = 0.5 * (w.array() * k.array()).sum();
  for (int j = 0; j < p; ++j) {
    double g = 0.0;
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) {
        const double b = periodic_bernoulli(kernel.order, points(r, j) - points(c, j));
        // dK/dlog w_j = scale w_j b prod_{l != j}(1 + w_l b_l)
        double rest = kernel.scale;
        for (int l = 0; l < p; ++l)
          if (l != j) rest *= 1.0 + kernel.weights[l] * periodic_bernoulli(kernel.order, points(r, l) - points(c, l));
        g += w(r, c) * rest * kernel.weights[j] * b;
      }
    (*grad)[j + 1] = 0.5 * g;
  }
  (*grad)[p + 1] = 0.5 * noise * w.trace();
  return value;
}

DenseGp dense_fit(const qmc::PointSet& points, const Eigen::VectorXd& y, double noise_init, bool optimize,
                  const FitOptions& options) {
  require_dense_size(points.rows());
  if (!y.allFinite()) throw std::invalid_argument("observations must be finite");
  if (!(noise_init >= 0.0)) throw std::invalid_argument("initial noise variance must be >= 0");
  const int p = static_cast<int>(points.cols());
  std::vector<double> weights = options.initial_weights;
  if (weights.empty()) weights.assign(p, 1.0);
  PeriodicKernel kernel(options.order, weights, 1.0);
  double scale = options.initial_scale;
  if (!(scale > 0.0)) {
    const double second_moment = y.size() > 0 ? y.squaredNorm() / static_cast<double>(y.size()) : 0.0;
    scale = (second_moment > 0.0 ? second_moment : 1.0) / kernel.diagonal();
  }
  kernel.scale = scale;
  if (!optimize) return DenseGp(points, y, kernel, noise_init);

  Eigen::VectorXd start(p + 2);
  start[0] = std::log(kernel.scale);
  for (int j = 0; j < p; ++j) start[j + 1] = std::log(weights[j]);
  start[p + 1] = std::log(noise_init);
  Eigen::Array<bool, -1, 1> mask(p + 2);
  mask[0] = options.optimizer.optimize_scale;
  for (int j = 0; j < p; ++j) mask[j + 1] = options.optimizer.optimize_weights && weights[j] > 0.0;
  mask[p + 1] = options.optimizer.optimize_noise && noise_init > 0.0;

  auto objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    PeriodicKernel trial = kernel;
    trial.scale = std::exp(theta[0]);
    for (int j = 0; j < p; ++j) trial.weights[j] = std::exp(theta[j + 1]);
    try {
      return dense_log_likelihood(trial, points, y, std::exp(theta[p + 1]), &grad);
    } catch (const std::runtime_error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
  const auto result = gradient_ascent(objective, start, mask, options.optimizer);
  kernel.scale = std::exp(result.params[0]);
  for (int j = 0; j < p; ++j) kernel.weights[j] = std::exp(result.params[j + 1]);
  return DenseGp(points, y, kernel, std::exp(result.params[p + 1]));
}

}  // namespace darcygp::fastgp
