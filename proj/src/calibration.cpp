#include "darcygp/calibration.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <random>

#include <omp.h>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace darcygp::calibration {

void LevelSchedule::validate() const {
  if (v_s < 1) throw std::invalid_argument("v_s must be >= 1");
  if (v_d < 2) throw std::invalid_argument("v_d must be >= 2");
  if (levels < 2) throw std::invalid_argument("calibration needs N >= 2 levels");
  if (levels > 20) throw std::invalid_argument("calibration level count is unreasonably large");
}

LevelFailure::LevelFailure(int s_, int d_, int sample_, const std::string& what)
    : std::runtime_error("solve failed at level (s=" + std::to_string(s_) + ", d=" + std::to_string(d_) +
                         "), sample " + std::to_string(sample_) + ": " + what),
      s(s_), d(d_), sample(sample_) {}

LevelSamples draw_level_samples(const LevelSchedule& schedule, int m, double injection_rate, std::uint64_t seed) {
  schedule.validate();
  if (m < 8) throw std::invalid_argument("calibration needs at least 8 samples per level");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, injection_rate);
  std::normal_distribution<double> normal(0.0, 1.0);
  LevelSamples out;
  out.rates.resize(m);
  out.z.resize(m, schedule.s(schedule.levels));
  for (int i = 0; i < m; ++i) {
    out.rates[i] = unif(rng);
    for (Eigen::Index k = 0; k < out.z.cols(); ++k) out.z(i, k) = normal(rng);
  }
  return out;
}

LevelNorms level_differences(const LevelSchedule& schedule, const LevelSamples& samples,
                             const CriticalPressureFn& solve, int workers) {
  schedule.validate();
  const int m = static_cast<int>(samples.rates.size());
  const int n_levels = schedule.levels;
  if (samples.z.rows() != m || samples.z.cols() < schedule.s(n_levels))
    throw std::invalid_argument("level samples do not cover the finest truncation");

  // Every (j, i) sample needs three solves: (s_{j-1}, d_{j-1}), (s_j, d_{j-1}), (s_j, d_j).
  Eigen::MatrixXd sq_s = Eigen::MatrixXd::Zero(n_levels, m);
  Eigen::MatrixXd sq_d = Eigen::MatrixXd::Zero(n_levels, m);
  std::mutex failure_mutex;
  std::optional<LevelFailure> failure;

  const int tasks = n_levels * m;
  const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (int task = 0; task < tasks; ++task) {
    const int j = task / m + 1;
    const int i = task % m;
    const double r = samples.rates[i];
    const Eigen::RowVectorXd row = samples.z.row(i);
    auto eval = [&](int s, int d) {
      try {
        return solve(s, d, r, std::span<const double>(row.data(), static_cast<std::size_t>(s)));
      } catch (const std::exception& e) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure.emplace(s, d, i, e.what());
        return std::numeric_limits<double>::quiet_NaN();
      }
    };
    const double coarse = eval(schedule.s(j - 1), schedule.d(j - 1));
    const double mid = eval(schedule.s(j), schedule.d(j - 1));
    const double fine = eval(schedule.s(j), schedule.d(j));
    sq_s(j - 1, i) = (mid - coarse) * (mid - coarse);
    sq_d(j - 1, i) = (fine - mid) * (fine - mid);
  }
  if (failure) throw *failure;

  LevelNorms out;
  for (int j = 1; j <= n_levels; ++j) {
    out.s.push_back(schedule.s(j));
    out.d.push_back(schedule.d(j));
    // Row sums over samples in index order keep the result independent of thread count.
    out.delta_s.push_back(std::sqrt(sq_s.row(j - 1).sum() / m));
    out.delta_d.push_back(std::sqrt(sq_d.row(j - 1).sum() / m));
  }
  return out;
}

LevelNorms level_differences(const LevelSchedule& schedule, int m, double injection_rate, std::uint64_t seed,
                             const CriticalPressureFn& solve, int workers) {
  return level_differences(schedule, draw_level_samples(schedule, m, injection_rate, seed), solve, workers);
}

std::pair<double, double> fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("line fit needs >= 2 matched points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("line fit needs distinct abscissae");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

namespace {

std::pair<double, double> fit_family(const std::vector<int>& dims, const std::vector<double>& norms,
                                     const char* family) {
  std::vector<double> x, y;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (!(norms[k] > 0.0))
      throw std::invalid_argument(std::string("level norm ||Delta_") + family + "|| is zero at level " +
                                  std::to_string(k + 1) + "; log-log fit undefined");
    x.push_back(std::log2(static_cast<double>(dims[k])));
    y.push_back(std::log2(norms[k]));
  }
  return fit_line(x, y);
}

double tail(double a, double b, int v, int level) {
  return std::exp2(b) * std::pow(static_cast<double>(v), a) * std::exp2((level + 1) * a) / (1.0 - std::exp2(a));
}

}  // namespace

DecayFit fit_decay(const LevelNorms& norms) {
  if (norms.s.size() < 2) throw std::invalid_argument("decay fit needs at least two levels");
  DecayFit fit;
  std::tie(fit.a_s, fit.b_s) = fit_family(norms.s, norms.delta_s, "s");
  std::tie(fit.a_d, fit.b_d) = fit_family(norms.d, norms.delta_d, "d");
  if (!fit.converges())
    spdlog::warn("non-negative decay slope (a_s={}, a_d={}); the RMSE bound is infinite", fit.a_s, fit.a_d);
  return fit;
}

bool RmseBound::finite() const { return std::isfinite(value); }

RmseBound rmse_upper_bound(const DecayFit& fit, const LevelSchedule& schedule, int level) {
  RmseBound out{0.0, schedule.s(level), schedule.d(level)};
  if (!fit.converges()) {
    out.value = std::numeric_limits<double>::infinity();
    return out;
  }
  out.value = tail(fit.a_s, fit.b_s, schedule.v_s, level) + tail(fit.a_d, fit.b_d, schedule.v_d, level);
  return out;
}

CalibrationReport make_report(const LevelSchedule& schedule, int samples, std::uint64_t seed, LevelNorms norms,
                              bool square_bound) {
  CalibrationReport rep;
  rep.schedule = schedule;
  rep.samples = samples;
  rep.seed = seed;
  rep.fit = fit_decay(norms);
  rep.norms = std::move(norms);
  for (int j = 0; j <= schedule.levels; ++j) rep.bounds.push_back(rmse_upper_bound(rep.fit, schedule, j));
  const double b = rep.bounds.back().value;
  rep.noise_init = square_bound ? b * b : b;
  return rep;
}

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double number_or_inf(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

void save_report(const CalibrationReport& rep, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "darcygp.calibration";
  j["version"] = 1;
  j["config_hash"] = rep.config_hash;
  j["schedule"] = {{"v_s", rep.schedule.v_s}, {"v_d", rep.schedule.v_d}, {"levels", rep.schedule.levels}};
  j["samples"] = rep.samples;
  j["seed"] = rep.seed;
  j["levels"] = nlohmann::json::array();
  for (std::size_t k = 0; k < rep.norms.s.size(); ++k)
    j["levels"].push_back({{"j", k + 1},
                           {"s", rep.norms.s[k]},
                           {"d", rep.norms.d[k]},
                           {"delta_s", rep.norms.delta_s[k]},
                           {"delta_d", rep.norms.delta_d[k]}});
  j["fit"] = {{"a_s", rep.fit.a_s}, {"b_s", rep.fit.b_s}, {"a_d", rep.fit.a_d}, {"b_d", rep.fit.b_d}};
  j["bounds"] = nlohmann::json::array();
  for (std::size_t k = 0; k < rep.bounds.size(); ++k)
    j["bounds"].push_back(
        {{"j", k}, {"s", rep.bounds[k].s}, {"d", rep.bounds[k].d}, {"value", finite_or_null(rep.bounds[k].value)}});
  j["noise_init"] = finite_or_null(rep.noise_init);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

CalibrationReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("calibration report " + path.string() + " not found");
  const auto j = nlohmann::json::parse(in);
  if (j.value("format", "") != "darcygp.calibration" || j.value("version", 0) != 1)
    throw std::runtime_error(path.string() + " is not a version-1 calibration report");
  CalibrationReport rep;
  rep.config_hash = j.value("config_hash", "");
  rep.schedule = {j["schedule"]["v_s"], j["schedule"]["v_d"], j["schedule"]["levels"]};
  rep.samples = j["samples"];
  rep.seed = j["seed"];
  for (const auto& l : j["levels"]) {
    rep.norms.s.push_back(l["s"]);
    rep.norms.d.push_back(l["d"]);
    rep.norms.delta_s.push_back(l["delta_s"]);
    rep.norms.delta_d.push_back(l["delta_d"]);
  }
  rep.fit = {j["fit"]["a_s"], j["fit"]["b_s"], j["fit"]["a_d"], j["fit"]["b_d"]};
  for (const auto& b : j["bounds"]) rep.bounds.push_back({number_or_inf(b["value"]), b["s"], b["d"]});
  rep.noise_init = number_or_inf(j["noise_init"]);
  return rep;
}

}  // namespace darcygp::calibration
