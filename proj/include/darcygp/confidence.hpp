#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "darcygp/fastgp.hpp"
#include "darcygp/qmc.hpp"

namespace darcygp::confidence {

/// Maps the unit cube [0,1]^(1+s) to physical inputs (r, z). With the baker
/// flag, r = w b(u_0) and z_j = Phi^{-1}(b(u_j)); otherwise the baker map is
/// skipped. Normal quantiles are taken after clamping into [2^-32, 1 - 2^-32].
struct SurrogateDomainMap {
  double injection_rate = 0.031688;
  int truncation = 1;  // s
  bool baker = true;

  void validate() const;
  [[nodiscard]] int dimension() const { return 1 + truncation; }
  /// First query coordinate for rate r: r / (2w) with the baker map, r / w without.
  [[nodiscard]] double rate_coordinate(double r) const;
  [[nodiscard]] double rate(double u0) const;
  [[nodiscard]] double coefficient(double u) const;
};

inline constexpr double kQuantileClamp = 0x1p-32;

struct ConfidenceOptions {
  std::size_t nodes = 4096;  // power of two
  int shifts = 8;            // 0: one unshifted node set and no standard error
  std::uint64_t seed = 0;
  bool fold_nodes = false;  // evaluate at b(U) instead of U
  qmc::LatticeGenerator generator{};

  void validate(int s) const;
};

struct ConfidenceResult {
  double r = 0.0;
  double h = 0.0;
  double estimate = 0.0;
  std::size_t nodes = 0;
  int replicates = 0;
  double standard_error = 0.0;  // over replicates, 0 with fewer than two
};

/// Posterior mean and standard deviation at every QMC node for one rate,
/// replicates x nodes. Reused across thresholds.
struct NodePosterior {
  double r = 0.0;
  Eigen::MatrixXd mean;
  Eigen::MatrixXd sd;
};

/// Phi((h - m) / sigma), or the indicator of m <= h when sigma = 0.
double confidence_term(double h, double mean, double sd);

NodePosterior node_posterior(const fastgp::FastGpModel& model, const SurrogateDomainMap& map, double r,
                             const ConfidenceOptions& options);

ConfidenceResult evaluate(const NodePosterior& posterior, double h);

/// (1/N) sum_i Phi((h - m(r, U_i)) / sigma(r, U_i)) averaged over shifted replicates.
ConfidenceResult expected_confidence(const fastgp::FastGpModel& model, const SurrogateDomainMap& map, double r,
                                     double h, const ConfidenceOptions& options = {});

std::vector<ConfidenceResult> confidence_curve(const fastgp::FastGpModel& model, const SurrogateDomainMap& map,
                                               std::span<const double> rates, double h,
                                               const ConfidenceOptions& options = {});

struct Heatmap {
  std::vector<double> rates;       // ascending
  std::vector<double> thresholds;  // ascending
  Eigen::MatrixXd estimate;        // rates x thresholds
  Eigen::MatrixXd standard_error;
};

Heatmap confidence_heatmap(const fastgp::FastGpModel& model, const SurrogateDomainMap& map,
                           std::span<const double> rates, std::span<const double> thresholds,
                           const ConfidenceOptions& options = {});

/// Smallest rate whose estimate reaches `target`, scanning the curve in order.
std::optional<double> min_rate_from_curve(std::span<const ConfidenceResult> curve, double target);

std::optional<double> min_rate_for_confidence(const fastgp::FastGpModel& model, const SurrogateDomainMap& map,
                                              double h, double target, std::span<const double> rates,
                                              const ConfidenceOptions& options = {});

/// Plain Monte Carlo with i.i.d. uniform nodes; standard_error is the sample standard error.
ConfidenceResult monte_carlo_confidence(const fastgp::FastGpModel& model, const SurrogateDomainMap& map, double r,
                                        double h, std::size_t draws, std::uint64_t seed);

/// [y_min - 3 sd, y_max + 3 sd], sd the largest posterior standard deviation
/// over a fixed probe set of 256 shifted lattice points.
std::pair<double, double> threshold_range(const fastgp::FastGpModel& model, double y_min, double y_max);

/// `points` equispaced rates on [0, w]; a single point gives {0}.
std::vector<double> rate_grid(double injection_rate, int points);

/// `points` equispaced values on [lo, hi].
std::vector<double> linspace(double lo, double hi, int points);

void write_csv(std::ostream& out, std::span<const ConfidenceResult> results);
void write_csv(std::ostream& out, const Heatmap& heatmap);

}  // namespace darcygp::confidence
