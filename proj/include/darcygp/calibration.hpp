#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace darcygp::calibration {

/// Dimension pairs (s_j, d_j) = (v_s 2^j, v_d 2^j) for j = 0..N.
struct LevelSchedule {
  int v_s = 1;
  int v_d = 4;
  int levels = 3;  // N

  void validate() const;
  [[nodiscard]] int s(int j) const { return v_s << j; }
  [[nodiscard]] int d(int j) const { return v_d << j; }
};

/// Shared sample set: extraction rates and standard-normal coefficient vectors
/// of the finest truncation. Coarser truncations use the prefix of each row.
struct LevelSamples {
  std::vector<double> rates;
  Eigen::MatrixXd z;  // m x s_N
};

LevelSamples draw_level_samples(const LevelSchedule& schedule, int m, double injection_rate, std::uint64_t seed);

/// H^c_{s,d}(r, z). Must be safe to call concurrently.
using CriticalPressureFn = std::function<double(int s, int d, double r, std::span<const double> z)>;

/// Root-mean-square level differences for j = 1..N.
///   delta_s[j-1] compares (s_j, d_{j-1}) against (s_{j-1}, d_{j-1})
///   delta_d[j-1] compares (s_j, d_j)     against (s_j, d_{j-1})
struct LevelNorms {
  std::vector<int> s;
  std::vector<int> d;
  std::vector<double> delta_s;
  std::vector<double> delta_d;
};

class LevelFailure : public std::runtime_error {
 public:
  LevelFailure(int s, int d, int sample, const std::string& what);
  int s, d, sample;
};

LevelNorms level_differences(const LevelSchedule& schedule, const LevelSamples& samples,
                             const CriticalPressureFn& solve, int workers = 0);

LevelNorms level_differences(const LevelSchedule& schedule, int m, double injection_rate, std::uint64_t seed,
                             const CriticalPressureFn& solve, int workers = 0);

/// Log2-domain power laws ||Delta_s|| = 2^b_s s^a_s and ||Delta_d|| = 2^b_d d^a_d.
struct DecayFit {
  double a_s = 0.0, b_s = 0.0;
  double a_d = 0.0, b_d = 0.0;

  [[nodiscard]] bool converges() const { return a_s < 0.0 && a_d < 0.0; }
};

/// Least-squares slope and intercept of y against x.
std::pair<double, double> fit_line(std::span<const double> x, std::span<const double> y);

DecayFit fit_decay(const LevelNorms& norms);

struct RmseBound {
  double value = 0.0;  // +inf when a slope is non-negative
  int s = 0;
  int d = 0;

  [[nodiscard]] bool finite() const;
};

/// Geometric tail sum of the fitted model beyond level N.
RmseBound rmse_upper_bound(const DecayFit& fit, const LevelSchedule& schedule, int level);

struct CalibrationReport {
  LevelSchedule schedule;
  int samples = 0;
  std::uint64_t seed = 0;
  LevelNorms norms;
  DecayFit fit;
  std::vector<RmseBound> bounds;  // j = 0..N
  double noise_init = 0.0;        // zeta used to initialize the GP
  std::string config_hash;
};

CalibrationReport make_report(const LevelSchedule& schedule, int samples, std::uint64_t seed, LevelNorms norms,
                              bool square_bound);

void save_report(const CalibrationReport& report, const std::filesystem::path& path);
CalibrationReport load_report(const std::filesystem::path& path);

}  // namespace darcygp::calibration
