#include "darcygp/fastgp.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "darcygp/fft.hpp"

namespace darcygp::fastgp {

namespace {

using cvec = std::vector<std::complex<double>>;

double multiplicity(std::size_t k, std::size_t n) { return (k == 0 || 2 * k == n) ? 1.0 : 2.0; }

void require_lattice_size(std::size_t n) {
  if (!qmc::is_power_of_two(n))
    throw std::invalid_argument("structured GP needs a power-of-two sample size, got " + std::to_string(n));
}

/// Periodic Bernoulli values at the exact lattice residues frac(i z_j / n), n x p column-major.
Eigen::MatrixXd lattice_bernoulli(int order, const qmc::LatticeGenerator& gen, std::size_t n, int p) {
  Eigen::MatrixXd b(static_cast<Eigen::Index>(n), p);
  const auto& z = gen.generating_vector();
  const double inv_n = 1.0 / static_cast<double>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
    for (int j = 0; j < p; ++j)
      b(i, j) = periodic_bernoulli(order, static_cast<double>((static_cast<std::uint64_t>(i) * z[j]) % n) * inv_n);
  return b;
}

/// Likelihood over the fixed lattice design; only the hyperparameters vary.
class LatticeLikelihood {
 public:
  LatticeLikelihood(int order, const qmc::LatticeGenerator& gen, const Eigen::VectorXd& y)
      : n_(static_cast<std::size_t>(y.size())),
        p_(gen.dimension()),
        bern_(lattice_bernoulli(order, gen, n_, p_)),
        fft_(RealFft::of_size(n_)),
        yhat_sq_(fft_.spectrum_size()) {
    cvec yhat(fft_.spectrum_size());
    fft_.forward(std::span(y.data(), n_), yhat);
    for (std::size_t k = 0; k < yhat.size(); ++k) yhat_sq_[k] = std::norm(yhat[k]) / static_cast<double>(n_);
  }

  /// params = (log scale, log w_1..w_p, log noise).
  double operator()(const Eigen::VectorXd& params, Eigen::VectorXd* grad) const {
    const double scale = std::exp(params[0]);
    const Eigen::ArrayXd w = params.segment(1, p_).array().exp();
    const double noise = std::exp(params[p_ + 1]);
    const auto n = static_cast<Eigen::Index>(n_);

    Eigen::VectorXd col(n);
    Eigen::MatrixXd dcol;
    if (grad) dcol.resize(n, p_);
#pragma omp parallel
    {
      std::vector<double> prefix(p_ + 1), suffix(p_ + 1);
#pragma omp for schedule(static)
      for (Eigen::Index i = 0; i < n; ++i) {
        prefix[0] = 1.0;
        for (int j = 0; j < p_; ++j) prefix[j + 1] = prefix[j] * (1.0 + w[j] * bern_(i, j));
        col[i] = scale * prefix[p_];
        if (grad) {
          suffix[p_] = 1.0;
          for (int j = p_ - 1; j >= 0; --j) suffix[j] = suffix[j + 1] * (1.0 + w[j] * bern_(i, j));
          for (int j = 0; j < p_; ++j) dcol(i, j) = scale * w[j] * bern_(i, j) * prefix[j] * suffix[j + 1];
        }
      }
    }

    const std::size_t m = fft_.spectrum_size();
    cvec spec(m);
    fft_.forward(std::span(col.data(), n_), spec);
    std::vector<double> denom(m);
    double quad = 0.0, logdet = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      denom[k] = spec[k].real() + noise;
      if (!(denom[k] > 0.0)) return -std::numeric_limits<double>::infinity();
      const double mult = multiplicity(k, n_);
      quad += mult * yhat_sq_[k] / denom[k];
      logdet += mult * std::log(denom[k]);
    }
    const double value = -0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(n_) * std::log(2.0 * std::numbers::pi);
    if (!grad) return value;

    // dL/dtheta = 1/2 sum_k mult (|yhat|^2/n * mu_k / denom^2 - mu_k / denom)
    auto contract = [&](auto&& mu) {
      double g = 0.0;
      for (std::size_t k = 0; k < m; ++k)
        g += multiplicity(k, n_) * (yhat_sq_[k] / (denom[k] * denom[k]) - 1.0 / denom[k]) * mu(k);
      return 0.5 * g;
    };
    grad->resize(p_ + 2);
    (*grad)[0] = contract([&](std::size_t k) { return spec[k].real(); });
    (*grad)[p_ + 1] = contract([&](std::size_t) { return noise; });
#pragma omp parallel
    {
      cvec dspec(m);
#pragma omp for schedule(static)
      for (int j = 0; j < p_; ++j) {
        fft_.forward(std::span(dcol.col(j).data(), n_), dspec);
        (*grad)[j + 1] = contract([&](std::size_t k) { return dspec[k].real(); });
      }
    }
    return value;
  }

 private:
  std::size_t n_;
  int p_;
  Eigen::MatrixXd bern_;
  const RealFft& fft_;
  std::vector<double> yhat_sq_;
};

Eigen::VectorXd pack(const PeriodicKernel& kernel, double noise) {
  const int p = kernel.dimension();
  Eigen::VectorXd theta(p + 2);
  theta[0] = std::log(kernel.scale);
  for (int j = 0; j < p; ++j) theta[j + 1] = std::log(kernel.weights[j]);
  theta[p + 1] = std::log(noise);
  return theta;
}

Eigen::VectorXd column_impl(const PeriodicKernel& kernel, const qmc::LatticeGenerator& gen, std::size_t n,
                            bool parallel) {
  kernel.validate();
  require_lattice_size(n);
  const int p = kernel.dimension();
  if (gen.dimension() < p) throw std::invalid_argument("lattice generator has fewer dimensions than the kernel");
  if (n > (std::size_t{1} << gen.max_log2_points())) throw std::out_of_range("lattice size exceeds generator capacity");
  const auto& z = gen.generating_vector();
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::VectorXd c(static_cast<Eigen::Index>(n));
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    double k = kernel.scale;
    for (int j = 0; j < p; ++j) {
      const double delta = static_cast<double>((static_cast<std::uint64_t>(i) * z[j]) % n) * inv_n;
      k *= 1.0 + kernel.weights[j] * periodic_bernoulli(kernel.order, delta);
    }
    c[i] = k;
  }
  return c;
}

}  // namespace

Eigen::VectorXd kernel_column(const PeriodicKernel& kernel, const qmc::LatticeGenerator& generator, std::size_t n) {
  return column_impl(kernel, generator, n, true);
}

Eigen::VectorXd serial::kernel_column(const PeriodicKernel& kernel, const qmc::LatticeGenerator& generator,
                                      std::size_t n) {
  return column_impl(kernel, generator, n, false);
}

RawSpectrum gram_spectrum_raw(const PeriodicKernel& kernel, const qmc::LatticeGenerator& generator, std::size_t n) {
  const Eigen::VectorXd c = kernel_column(kernel, generator, n);
  const auto& fft = RealFft::of_size(n);
  cvec spec(fft.spectrum_size());
  fft.forward(std::span(c.data(), n), spec);
  RawSpectrum out;
  out.real.resize(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const auto& v = spec[k <= n / 2 ? k : n - k];
    out.real[static_cast<Eigen::Index>(k)] = v.real();
    out.max_imag = std::max(out.max_imag, std::abs(v.imag()));
  }
  return out;
}

Eigen::VectorXd gram_spectrum(const PeriodicKernel& kernel, const qmc::LatticeGenerator& generator, std::size_t n) {
  return gram_spectrum_raw(kernel, generator, n).real;
}

double fast_log_likelihood(const PeriodicKernel& kernel, const qmc::LatticeGenerator& generator,
                           const Eigen::VectorXd& y, double noise, Eigen::VectorXd* grad) {
  kernel.validate();
  require_lattice_size(static_cast<std::size_t>(y.size()));
  LatticeLikelihood lik(kernel.order, generator.truncated(kernel.dimension()), y);
  return lik(pack(kernel, noise), grad);
}

FastGpModel::FastGpModel(const qmc::LatticeGenerator& generator, std::size_t n, Eigen::VectorXd y,
                         PeriodicKernel kernel, double noise, FitDiagnostics diagnostics)
    : generator_(generator.truncated(kernel.dimension())),
      n_(n),
      y_(std::move(y)),
      kernel_(std::move(kernel)),
      noise_(noise),
      diagnostics_(diagnostics) {
  kernel_.validate();
  if (!(noise_ >= 0.0) || !std::isfinite(noise_)) throw std::invalid_argument("noise variance must be finite and >= 0");
  if (static_cast<std::size_t>(y_.size()) != n_) throw std::invalid_argument("observation count must equal n");
  if (!y_.allFinite()) throw std::invalid_argument("observations must be finite");
  if (n_ == 0) return;
  require_lattice_size(n_);
  points_ = qmc::lattice_points(generator_, n_, kernel_.dimension());
  columns_ = points_;

  const Eigen::VectorXd c = kernel_column(kernel_, generator_, n_);
  const auto& fft = RealFft::of_size(n_);
  const std::size_t m = fft.spectrum_size();
  cvec spec(m), yhat(m);
  fft.forward(std::span(c.data(), n_), spec);
  fft.forward(std::span(y_.data(), n_), yhat);
  half_spectrum_.resize(static_cast<Eigen::Index>(m));
  inverse_weights_.resize(static_cast<Eigen::Index>(m));
  double quad = 0.0, logdet = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double lam = spec[k].real();
    half_spectrum_[static_cast<Eigen::Index>(k)] = lam;
    const double denom = lam + noise_;
    if (!(denom > 0.0)) {
      std::ostringstream msg;
      msg << "regularized Gram matrix is singular: eigenvalue " << lam << " + noise " << noise_ << " at frequency "
          << k;
      throw std::runtime_error(msg.str());
    }
    const double mult = multiplicity(k, n_);
    inverse_weights_[static_cast<Eigen::Index>(k)] = mult / (denom * static_cast<double>(n_));
    quad += mult * std::norm(yhat[k]) / static_cast<double>(n_) / denom;
    logdet += mult * std::log(denom);
    yhat[k] /= denom;
  }
  coefficients_.resize(static_cast<Eigen::Index>(n_));
  fft.inverse(yhat, std::span(coefficients_.data(), n_));
  coefficients_ /= static_cast<double>(n_);
  log_likelihood_ = -0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(n_) * std::log(2.0 * std::numbers::pi);
  if (!std::isfinite(log_likelihood_)) throw std::runtime_error("log marginal likelihood is not finite");
}

Eigen::VectorXd FastGpModel::spectrum() const {
  Eigen::VectorXd full(static_cast<Eigen::Index>(n_));
  for (std::size_t k = 0; k < n_; ++k)
    full[static_cast<Eigen::Index>(k)] = half_spectrum_[static_cast<Eigen::Index>(k <= n_ / 2 ? k : n_ - k)];
  return full;
}

namespace {

// out[i] *= 1 + w * B(t - x[i]) for t in [0, 1) and x[i] in [0, 1), with the
// same rounding as periodic_bernoulli.
template <int Order>
void scale_by_factor(double t, double w, const double* x, double* out, std::size_t n) {
  constexpr double two_pi_sq = 2.0 * std::numbers::pi * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = t - x[i];
    const double u = d + static_cast<double>(d < 0.0);
    double b;
    if constexpr (Order == 2) {
      b = two_pi_sq * (u * u - u + 1.0 / 6.0);
    } else {
      b = -(two_pi_sq * two_pi_sq / 6.0) * (u * u * (u * u - 2.0 * u + 1.0) - 1.0 / 30.0);
    }
    out[i] *= 1.0 + w * b;
  }
}

}  // namespace

void FastGpModel::cross_kernel(std::span<const double> t, std::span<double> out) const {
  const int p = dimension();
  if (static_cast<int>(t.size()) != p) throw std::invalid_argument("query dimension mismatch");
  if (out.size() != n_) throw std::invalid_argument("cross-kernel buffer must have length n");
  std::fill(out.begin(), out.end(), kernel_.scale);
  for (int j = 0; j < p; ++j) {
    const double tj = t[j] - std::floor(t[j]);
    const double* x = columns_.col(j).data();
    if (kernel_.order == 2)
      scale_by_factor<2>(tj, kernel_.weights[j], x, out.data(), n_);
    else
      scale_by_factor<4>(tj, kernel_.weights[j], x, out.data(), n_);
  }
}

double FastGpModel::posterior_mean(std::span<const double> t) const {
  if (static_cast<int>(t.size()) != dimension()) throw std::invalid_argument("query dimension mismatch");
  if (n_ == 0) return 0.0;
  std::vector<double> k(n_);
  cross_kernel(t, k);
  return dot_coefficients(k);
}

void FastGpModel::transform_cross_kernel(std::span<const double> t, std::vector<double>& work, cvec& spec) const {
  work.resize(n_);
  spec.resize(n_ / 2 + 1);
  cross_kernel(t, work);
  RealFft::of_size(n_).forward(work, spec);
}

double FastGpModel::dot_coefficients(const std::vector<double>& k) const {
  double m = 0.0;
  for (std::size_t i = 0; i < n_; ++i) m += k[i] * coefficients_[static_cast<Eigen::Index>(i)];
  return m;
}

double FastGpModel::reduce_quadratic(const cvec& a, const cvec& b) const {
  double v = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    v += inverse_weights_[static_cast<Eigen::Index>(k)] * (a[k].real() * b[k].real() + a[k].imag() * b[k].imag());
  return v;
}

double FastGpModel::clamp_variance(double v) const {
  if (v >= 0.0) return v;
  if (v < -1e-8) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) spdlog::warn("posterior variance {} below -1e-8 clamped to zero", v);
  }
  return 0.0;
}

double FastGpModel::posterior_variance(std::span<const double> t) const {
  if (static_cast<int>(t.size()) != dimension()) throw std::invalid_argument("query dimension mismatch");
  if (n_ == 0) return kernel_.diagonal();
  std::vector<double> work;
  cvec spec;
  transform_cross_kernel(t, work, spec);
  return clamp_variance(kernel_.diagonal() - reduce_quadratic(spec, spec));
}

double FastGpModel::posterior_covariance(std::span<const double> t, std::span<const double> u) const {
  const double prior = kernel_(t, u);
  if (n_ == 0) return prior;
  std::vector<double> work;
  cvec st, su;
  transform_cross_kernel(t, work, st);
  transform_cross_kernel(u, work, su);
  return prior - reduce_quadratic(st, su);
}

Eigen::VectorXd FastGpModel::posterior_mean(const qmc::PointSet& queries) const {
  if (queries.cols() != dimension()) throw std::invalid_argument("query dimension mismatch");
  Eigen::VectorXd out(queries.rows());
#pragma omp parallel
  {
    std::vector<double> k(n_);
#pragma omp for schedule(static)
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
      if (n_ == 0) {
        out[q] = 0.0;
        continue;
      }
      cross_kernel(std::span(queries.row(q).data(), static_cast<std::size_t>(queries.cols())), k);
      out[q] = dot_coefficients(k);
    }
  }
  return out;
}

Eigen::VectorXd FastGpModel::posterior_variance(const qmc::PointSet& queries) const {
  if (queries.cols() != dimension()) throw std::invalid_argument("query dimension mismatch");
  Eigen::VectorXd out(queries.rows());
  if (n_ == 0) return Eigen::VectorXd::Constant(queries.rows(), kernel_.diagonal());
  const double prior = kernel_.diagonal();
#pragma omp parallel
  {
    std::vector<double> work;
    cvec spec;
#pragma omp for schedule(static)
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
      transform_cross_kernel(std::span(queries.row(q).data(), static_cast<std::size_t>(queries.cols())), work, spec);
      out[q] = clamp_variance(prior - reduce_quadratic(spec, spec));
    }
  }
  return out;
}

PosteriorMoments FastGpModel::posterior_moments(const qmc::PointSet& queries) const {
  if (queries.cols() != dimension()) throw std::invalid_argument("query dimension mismatch");
  PosteriorMoments out{Eigen::VectorXd(queries.rows()), Eigen::VectorXd(queries.rows())};
  if (n_ == 0) {
    out.mean.setZero();
    out.variance.setConstant(kernel_.diagonal());
    return out;
  }
  const double prior = kernel_.diagonal();
  const auto& fft = RealFft::of_size(n_);
#pragma omp parallel
  {
    std::vector<double> work(n_);
    cvec spec(fft.spectrum_size());
#pragma omp for schedule(static)
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
      cross_kernel(std::span(queries.row(q).data(), static_cast<std::size_t>(queries.cols())), work);
      out.mean[q] = dot_coefficients(work);
      fft.forward(work, spec);
      out.variance[q] = clamp_variance(prior - reduce_quadratic(spec, spec));
    }
  }
  return out;
}

Eigen::MatrixXd FastGpModel::posterior_covariance(const qmc::PointSet& queries) const {
  if (queries.cols() != dimension()) throw std::invalid_argument("query dimension mismatch");
  const auto nq = queries.rows();
  const auto row = [&](Eigen::Index q) { return std::span(queries.row(q).data(), static_cast<std::size_t>(queries.cols())); };
  Eigen::MatrixXd cov(nq, nq);
  for (Eigen::Index a = 0; a < nq; ++a)
    for (Eigen::Index b = 0; b <= a; ++b) cov(a, b) = cov(b, a) = kernel_(row(a), row(b));
  if (n_ == 0) return cov;
  std::vector<cvec> specs(static_cast<std::size_t>(nq));
#pragma omp parallel
  {
    std::vector<double> work;
#pragma omp for schedule(static)
    for (Eigen::Index q = 0; q < nq; ++q) transform_cross_kernel(row(q), work, specs[static_cast<std::size_t>(q)]);
  }
  for (Eigen::Index a = 0; a < nq; ++a)
    for (Eigen::Index b = 0; b <= a; ++b) {
      const double v = cov(a, b) - reduce_quadratic(specs[a], specs[b]);
      cov(a, b) = cov(b, a) = v;
    }
  for (Eigen::Index a = 0; a < nq; ++a) cov(a, a) = clamp_variance(cov(a, a));
  return cov;
}

Eigen::VectorXd serial::posterior_mean(const FastGpModel& model, const qmc::PointSet& queries) {
  Eigen::VectorXd out(queries.rows());
  for (Eigen::Index q = 0; q < queries.rows(); ++q)
    out[q] = model.posterior_mean(std::span(queries.row(q).data(), static_cast<std::size_t>(queries.cols())));
  return out;
}

Eigen::VectorXd serial::posterior_variance(const FastGpModel& model, const qmc::PointSet& queries) {
  Eigen::VectorXd out(queries.rows());
  for (Eigen::Index q = 0; q < queries.rows(); ++q)
    out[q] = model.posterior_variance(std::span(queries.row(q).data(), static_cast<std::size_t>(queries.cols())));
  return out;
}

PosteriorMoments serial::posterior_moments(const FastGpModel& model, const qmc::PointSet& queries) {
  return {serial::posterior_mean(model, queries), serial::posterior_variance(model, queries)};
}

FastGpModel fit(const qmc::LatticeGenerator& generator, std::size_t n, const Eigen::VectorXd& y, double noise_init,
                bool optimize, const FitOptions& options) {
  require_lattice_size(n);
  if (static_cast<std::size_t>(y.size()) != n) throw std::invalid_argument("observation count must equal n");
  if (!y.allFinite()) throw std::invalid_argument("observations must be finite");
  if (!(noise_init >= 0.0) || !std::isfinite(noise_init))
    throw std::invalid_argument("initial noise variance must be finite and >= 0");
  const int p = generator.dimension();
  std::vector<double> weights = options.initial_weights;
  if (weights.empty()) weights.assign(p, 1.0);
  if (static_cast<int>(weights.size()) != p) throw std::invalid_argument("initial weights must match the dimension");

  PeriodicKernel kernel(options.order, weights, 1.0);
  double scale = options.initial_scale;
  if (!(scale > 0.0)) {
    const double second_moment = y.squaredNorm() / static_cast<double>(n);
    scale = second_moment > 0.0 ? second_moment : 1.0;
  }
  kernel.scale = scale;

  FitDiagnostics diag;
  diag.noise_init = noise_init;
  if (!optimize) {
    diag.log_likelihood = fast_log_likelihood(kernel, generator, y, noise_init);
    return FastGpModel(generator, n, y, kernel, noise_init, diag);
  }

  LatticeLikelihood lik(kernel.order, generator, y);
  const Eigen::VectorXd start = pack(kernel, noise_init);
  Eigen::Array<bool, -1, 1> mask(p + 2);
  mask[0] = options.optimizer.optimize_scale;
  for (int j = 0; j < p; ++j) mask[j + 1] = options.optimizer.optimize_weights && weights[j] > 0.0;
  mask[p + 1] = options.optimizer.optimize_noise && noise_init > 0.0;

  const auto result = gradient_ascent(
      [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) { return lik(theta, &grad); }, start, mask,
      options.optimizer);
  if (!std::isfinite(result.value)) {
    std::ostringstream msg;
    msg << "log marginal likelihood is not finite at the initial hyperparameters (noise " << noise_init << ")";
    throw std::runtime_error(msg.str());
  }
  kernel.scale = std::exp(result.params[0]);
  for (int j = 0; j < p; ++j) kernel.weights[j] = std::exp(result.params[j + 1]);
  const double noise = std::exp(result.params[p + 1]);

  diag.optimized = true;
  diag.log_likelihood = result.value;
  diag.iterations = result.iterations;
  diag.evaluations = result.evaluations;
  diag.converged = result.converged;
  return FastGpModel(generator, n, y, kernel, noise, diag);
}

}  // namespace darcygp::fastgp
