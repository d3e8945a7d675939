#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "darcygp/calibration.hpp"
#include "darcygp/confidence.hpp"
#include "darcygp/darcy.hpp"
#include "darcygp/fastgp.hpp"
#include "darcygp/model_io.hpp"
#include "darcygp/qmc.hpp"
#include "darcygp/random_field.hpp"

namespace darcygp::pipeline {

/// Everything a run depends on. Stored as flat JSON; missing keys take the
/// defaults below and unknown keys are rejected.
struct RunConfig {
  double side_length = 200.0;
  int d = 32;
  int s = 8;
  std::size_t n = 1024;

  double injection_rate = 0.031688;
  double injection_x = 50.0, injection_y = 100.0;
  double extraction_x = 150.0, extraction_y = 100.0;
  double critical_x = 100.0, critical_y = 100.0;

  double variance = 1.0;
  double correlation_length = 50.0;
  double smoothness = 1.5;
  std::string transform = "exp";            // exp | identity
  std::string linear_solver = "automatic";  // automatic | direct | iterative

  int v_s = 1;
  int v_d = 4;
  int levels = 3;
  int calibration_samples = 32;
  bool square_bound = true;

  bool baker = true;
  bool training_shift = false;
  std::string generating_vector;  // file path; empty for the built-in vector

  int kernel_order = 4;
  bool optimize = true;
  int max_iterations = 200;
  double relative_tolerance = 1e-8;

  std::size_t qmc_nodes = 4096;
  int qmc_shifts = 8;
  int grid_points = 65;

  std::uint64_t sampling_seed = 1;
  std::uint64_t calibration_seed = 2;
  std::uint64_t qmc_seed = 3;

  int workers = 0;  // 0: all available threads; excluded from the config hash

  /// Rejects inconsistent (s, d, n) and out-of-range values.
  void validate() const;

  [[nodiscard]] Mesh mesh() const { return Mesh{d, side_length}; }
  [[nodiscard]] darcy::WellConfig wells() const;
  [[nodiscard]] field::MaternCovariance covariance() const;
  [[nodiscard]] calibration::LevelSchedule schedule() const { return {v_s, v_d, levels}; }
  [[nodiscard]] darcy::SolverOptions solver() const;
  [[nodiscard]] confidence::SurrogateDomainMap domain_map() const { return {injection_rate, s, baker}; }
  [[nodiscard]] confidence::ConfidenceOptions confidence_options() const;
  [[nodiscard]] fastgp::FitOptions fit_options() const;
};

/// Calls f(name, member) for every field, in declaration order.
template <class Config, class F>
void for_each_field(Config& c, F&& f) {
  f("side_length", c.side_length);
  f("d", c.d);
  f("s", c.s);
  f("n", c.n);
  f("injection_rate", c.injection_rate);
  f("injection_x", c.injection_x);
  f("injection_y", c.injection_y);
  f("extraction_x", c.extraction_x);
  f("extraction_y", c.extraction_y);
  f("critical_x", c.critical_x);
  f("critical_y", c.critical_y);
  f("variance", c.variance);
  f("correlation_length", c.correlation_length);
  f("smoothness", c.smoothness);
  f("transform", c.transform);
  f("linear_solver", c.linear_solver);
  f("v_s", c.v_s);
  f("v_d", c.v_d);
  f("levels", c.levels);
  f("calibration_samples", c.calibration_samples);
  f("square_bound", c.square_bound);
  f("baker", c.baker);
  f("training_shift", c.training_shift);
  f("generating_vector", c.generating_vector);
  f("kernel_order", c.kernel_order);
  f("optimize", c.optimize);
  f("max_iterations", c.max_iterations);
  f("relative_tolerance", c.relative_tolerance);
  f("qmc_nodes", c.qmc_nodes);
  f("qmc_shifts", c.qmc_shifts);
  f("grid_points", c.grid_points);
  f("sampling_seed", c.sampling_seed);
  f("calibration_seed", c.calibration_seed);
  f("qmc_seed", c.qmc_seed);
  f("workers", c.workers);
}

nlohmann::json to_json(const RunConfig& config);
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

/// SHA-256 of the canonical JSON dump (sorted keys), without `workers`.
std::string config_hash(const RunConfig& config);
std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);

/// Training lattice: built-in or file-loaded vector, truncated to 1 + s, with
/// a seeded random shift when `training_shift` is set.
qmc::LatticeGenerator training_generator(const RunConfig& config);

struct TrainingSet {
  Eigen::MatrixXd locations;  // n x (1 + s), unit cube
  std::vector<double> rates;
  Eigen::MatrixXd z;  // n x s
  Eigen::VectorXd y;
  Eigen::VectorXd residuals;
  std::vector<std::size_t> failures;  // indices whose solve failed (y is NaN there)
  std::string config_hash;
  std::uint64_t sampling_seed = 0;

  [[nodiscard]] std::size_t size() const { return rates.size(); }
};

/// Mesh, KL basis, wells and solver options for the finest (s, d).
struct Problem {
  Mesh mesh;
  field::KlBasis basis;
  darcy::WellConfig wells;
  darcy::SolverOptions solver;
};
Problem make_problem(const RunConfig& config);

/// First n lattice points mapped to (r, z); y and residuals left empty.
TrainingSet run_sampling(const RunConfig& config);

/// Solves every location in parallel. Throws if more than 0.1% of solves fail.
TrainingSet run_ensemble(const RunConfig& config, TrainingSet locations, const Problem& problem);
TrainingSet run_ensemble(const RunConfig& config, TrainingSet locations);

calibration::CalibrationReport run_calibration(const RunConfig& config, const Problem& problem);
calibration::CalibrationReport run_calibration(const RunConfig& config);

/// Fits with noise initialized from the calibration report and, when `model_path`
/// is given, writes the model file.
fastgp::FastGpModel run_fit(const RunConfig& config, const TrainingSet& training,
                            const calibration::CalibrationReport& report,
                            const std::optional<std::filesystem::path>& model_path = std::nullopt);
fastgp::FastGpModel run_fit(const RunConfig& config, const std::filesystem::path& training_csv,
                            const std::filesystem::path& calibration_json,
                            const std::optional<std::filesystem::path>& model_path = std::nullopt);

fastgp::ModelMetadata model_metadata(const RunConfig& config, const TrainingSet& training);

/// Header `r,z1..zs,y,residual`, preceded by one `#` provenance line.
void save_training_csv(const TrainingSet& training, const std::filesystem::path& path);
TrainingSet load_training_csv(const std::filesystem::path& path);

/// Artifact paths inside a run directory.
struct Workspace {
  std::filesystem::path root;
  [[nodiscard]] std::filesystem::path config() const { return root / "config.json"; }
  [[nodiscard]] std::filesystem::path training() const { return root / "training.csv"; }
  [[nodiscard]] std::filesystem::path calibration() const { return root / "calibration.json"; }
  [[nodiscard]] std::filesystem::path model() const { return root / "model.dgp"; }
};

struct RunResult {
  TrainingSet training;
  calibration::CalibrationReport report;
  fastgp::FastGpModel model;
};

/// sample -> solve -> calibrate -> fit, persisting every artifact in `workspace`.
RunResult run_all(const RunConfig& config, const Workspace& workspace);

}  // namespace darcygp::pipeline
