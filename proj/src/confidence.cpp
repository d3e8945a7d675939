#include "darcygp/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "darcygp/random_field.hpp"

namespace darcygp::confidence {

namespace {

std::uint64_t replicate_seed(std::uint64_t seed, int k) {
  // splitmix64 finalizer, so neighbouring replicates get unrelated shifts
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(k + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

void require_model(const fastgp::FastGpModel& model, const SurrogateDomainMap& map) {
  map.validate();
  if (model.dimension() != map.dimension())
    throw std::invalid_argument("model dimension " + std::to_string(model.dimension()) + " differs from 1 + s = " +
                                std::to_string(map.dimension()));
}

void require_grid(std::span<const double> grid, const char* what) {
  if (grid.empty()) throw std::invalid_argument(std::string(what) + " grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument(std::string(what) + " grid must be strictly ascending");
}

}  // namespace

void SurrogateDomainMap::validate() const {
  if (!(injection_rate > 0.0) || !std::isfinite(injection_rate))
    throw std::invalid_argument("injection rate must be positive");
  if (truncation < 1) throw std::invalid_argument("truncation s must be >= 1");
}

double SurrogateDomainMap::rate_coordinate(double r) const {
  if (!(r >= 0.0 && r <= injection_rate)) {
    std::ostringstream msg;
    msg << "rate " << r << " outside [0, " << injection_rate << "]";
    throw std::out_of_range(msg.str());
  }
  return baker ? r / (2.0 * injection_rate) : r / injection_rate;
}

double SurrogateDomainMap::rate(double u0) const { return injection_rate * (baker ? qmc::baker(u0) : u0); }

double SurrogateDomainMap::coefficient(double u) const {
  const double v = std::clamp(baker ? qmc::baker(u) : u, kQuantileClamp, 1.0 - kQuantileClamp);
  return field::uniform_to_gaussian(v);
}

void ConfidenceOptions::validate(int s) const {
  if (!qmc::is_power_of_two(nodes)) throw std::invalid_argument("QMC node count must be a power of two");
  if (shifts < 0) throw std::invalid_argument("shift count must be >= 0");
  if (generator.dimension() < s) throw std::invalid_argument("node generator has fewer than s dimensions");
  if (nodes > (std::size_t{1} << generator.max_log2_points()))
    throw std::invalid_argument("QMC node count exceeds the generator capacity");
}

double confidence_term(double h, double mean, double sd) {
  if (sd > 0.0) return field::normal_cdf((h - mean) / sd);
  return mean <= h ? 1.0 : 0.0;
}

NodePosterior node_posterior(const fastgp::FastGpModel& model, const SurrogateDomainMap& map, double r,
                             const ConfidenceOptions& options) {
  require_model(model, map);
  const int s = map.truncation;
  options.validate(s);
  const double x0 = map.rate_coordinate(r);
  const int reps = std::max(options.shifts, 1);
  const auto n = static_cast<Eigen::Index>(options.nodes);
  const qmc::LatticeGenerator base = options.generator.truncated(s).with_shift(std::nullopt);

  qmc::PointSet queries(reps * n, 1 + s);
  for (int k = 0; k < reps; ++k) {
    const auto gen = options.shifts > 0 ? qmc::random_shift(base, replicate_seed(options.seed, k)) : base;
    const qmc::PointSet u = qmc::lattice_points(gen, options.nodes, s);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index row = k * n + i;
      queries(row, 0) = x0;
      for (int j = 0; j < s; ++j) queries(row, j + 1) = options.fold_nodes ? qmc::baker(u(i, j)) : u(i, j);
    }
  }
  const auto [mean, var] = model.posterior_moments(queries);

  NodePosterior out;
  out.r = r;
  out.mean.resize(reps, n);
  out.sd.resize(reps, n);
  for (int k = 0; k < reps; ++k)
    for (Eigen::Index i = 0; i < n; ++i) {
      out.mean(k, i) = mean[k * n + i];
      out.sd(k, i) = std::sqrt(var[k * n + i]);
    }
  return out;
}

ConfidenceResult evaluate(const NodePosterior& posterior, double h) {
  if (!std::isfinite(h)) throw std::invalid_argument("threshold must be finite");
  const Eigen::Index reps = posterior.mean.rows();
  const Eigen::Index n = posterior.mean.cols();
  std::vector<double> est(static_cast<std::size_t>(reps));
  for (Eigen::Index k = 0; k < reps; ++k) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) sum += confidence_term(h, posterior.mean(k, i), posterior.sd(k, i));
    est[static_cast<std::size_t>(k)] = sum / static_cast<double>(n);
  }
  double mean = 0.0;
  for (double e : est) mean += e;
  mean /= static_cast<double>(reps);
  double se = 0.0;
  if (reps > 1) {
    double ss = 0.0;
    for (double e : est) ss += (e - mean) * (e - mean);
    se = std::sqrt(ss / static_cast<double>(reps * (reps - 1)));
  }
  ConfidenceResult res;
  res.r = posterior.r;
  res.h = h;
  res.estimate = std::clamp(mean, 0.0, 1.0);
  res.nodes = static_cast<std::size_t>(n);
  res.replicates = static_cast<int>(reps);
  res.standard_error = se;
  return res;
}

ConfidenceResult expected_confidence(const fastgp::FastGpModel& model, const SurrogateDomainMap& map, double r,
                                     double h, const ConfidenceOptions& options) {
  return evaluate(node_posterior(model, map, r, options), h);
}

std::vector<ConfidenceResult> confidence_curve(const fastgp::FastGpModel& model, const SurrogateDomainMap& map,
                                               std::span<const double> rates, double h,
                                               const ConfidenceOptions& options) {
  if (rates.empty()) throw std::invalid_argument("rate grid is empty");
  std::vector<ConfidenceResult> out;
  out.reserve(rates.size());
  for (double r : rates) out.push_back(evaluate(node_posterior(model, map, r, options), h));
  return out;
}

Heatmap confidence_heatmap(const fastgp::FastGpModel& model, const SurrogateDomainMap& map,
                           std::span<const double> rates, std::span<const double> thresholds,
                           const ConfidenceOptions& options) {
  require_grid(rates, "rate");
  require_grid(thresholds, "threshold");
  Heatmap hm;
  hm.rates.assign(rates.begin(), rates.end());
  hm.thresholds.assign(thresholds.begin(), thresholds.end());
  const auto nr = static_cast<Eigen::Index>(rates.size());
  const auto nh = static_cast<Eigen::Index>(thresholds.size());
  hm.estimate.resize(nr, nh);
  hm.standard_error.resize(nr, nh);
  for (Eigen::Index i = 0; i < nr; ++i) {
    const NodePosterior post = node_posterior(model, map, rates[i], options);
    for (Eigen::Index j = 0; j < nh; ++j) {
      const auto res = evaluate(post, thresholds[j]);
      hm.estimate(i, j) = res.estimate;
      hm.standard_error(i, j) = res.standard_error;
    }
  }
  return hm;
}

std::optional<double> min_rate_from_curve(std::span<const ConfidenceResult> curve, double target) {
  if (!(target >= 0.0 && target <= 1.0)) throw std::out_of_range("target confidence must lie in [0, 1]");
  for (const auto& c : curve)
    if (c.estimate >= target) return c.r;
  return std::nullopt;
}

std::optional<double> min_rate_for_confidence(const fastgp::FastGpModel& model, const SurrogateDomainMap& map,
                                              double h, double target, std::span<const double> rates,
                                              const ConfidenceOptions& options) {
  if (!(target >= 0.0 && target <= 1.0)) throw std::out_of_range("target confidence must lie in [0, 1]");
  require_grid(rates, "rate");
  for (double r : rates) {
    const auto res = expected_confidence(model, map, r, h, options);
    if (res.estimate >= target) return r;
  }
  return std::nullopt;
}

ConfidenceResult monte_carlo_confidence(const fastgp::FastGpModel& model, const SurrogateDomainMap& map, double r,
                                        double h, std::size_t draws, std::uint64_t seed) {
  require_model(model, map);
  if (draws < 2) throw std::invalid_argument("Monte Carlo needs at least two draws");
  const int s = map.truncation;
  const double x0 = map.rate_coordinate(r);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  constexpr std::size_t chunk = 1 << 15;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t start = 0; start < draws; start += chunk) {
    const auto m = static_cast<Eigen::Index>(std::min(chunk, draws - start));
    qmc::PointSet q(m, 1 + s);
    for (Eigen::Index i = 0; i < m; ++i) {
      q(i, 0) = x0;
      for (int j = 0; j < s; ++j) q(i, j + 1) = unif(rng);
    }
    const auto [mu, sigma2] = model.posterior_moments(q);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double t = confidence_term(h, mu[i], std::sqrt(sigma2[i]));
      sum += t;
      sum_sq += t * t;
    }
  }
  const auto nd = static_cast<double>(draws);
  const double mean = sum / nd;
  const double var = std::max(sum_sq / nd - mean * mean, 0.0) * nd / (nd - 1.0);
  ConfidenceResult res;
  res.r = r;
  res.h = h;
  res.estimate = mean;
  res.nodes = draws;
  res.replicates = 1;
  res.standard_error = std::sqrt(var / nd);
  return res;
}

std::pair<double, double> threshold_range(const fastgp::FastGpModel& model, double y_min, double y_max) {
  if (!(y_max >= y_min)) throw std::invalid_argument("observation range out of order");
  const int p = model.dimension();
  const auto probe_gen = qmc::random_shift(qmc::LatticeGenerator().truncated(p), 0);
  const Eigen::VectorXd var = model.posterior_variance(qmc::lattice_points(probe_gen, 256, p));
  const double sd = std::sqrt(var.maxCoeff());
  double lo = y_min - 3.0 * sd, hi = y_max + 3.0 * sd;
  if (!(hi - lo > 1e-12 * std::max(1.0, std::abs(hi)))) {
    lo -= 0.5;
    hi += 0.5;
  }
  return {lo, hi};
}

std::vector<double> linspace(double lo, double hi, int points) {
  if (points < 1) throw std::invalid_argument("grid needs at least one point");
  if (!(hi >= lo)) throw std::invalid_argument("grid bounds out of order");
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i)
    g[static_cast<std::size_t>(i)] = points == 1 ? lo : lo + (hi - lo) * i / (points - 1);
  if (points > 1) g.back() = hi;
  return g;
}

std::vector<double> rate_grid(double injection_rate, int points) { return linspace(0.0, injection_rate, points); }

void write_csv(std::ostream& out, std::span<const ConfidenceResult> results) {
  out.precision(17);
  out << "r,h,estimate,stderr\n";
  for (const auto& c : results) out << c.r << ',' << c.h << ',' << c.estimate << ',' << c.standard_error << '\n';
}

void write_csv(std::ostream& out, const Heatmap& hm) {
  out.precision(17);
  out << "r,h,estimate,stderr\n";
  for (std::size_t i = 0; i < hm.rates.size(); ++i)
    for (std::size_t j = 0; j < hm.thresholds.size(); ++j) {
      const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
      out << hm.rates[i] << ',' << hm.thresholds[j] << ',' << hm.estimate(a, b) << ',' << hm.standard_error(a, b)
          << '\n';
    }
}

}  // namespace darcygp::confidence
