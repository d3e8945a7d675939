#include "darcygp/pipeline.hpp"

#include <omp.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

namespace darcygp::pipeline {

namespace {

template <class T>
void require(bool ok, const T& message) {
  if (!ok) throw std::invalid_argument(message);
}

void warn_hash(const std::string& what, const std::string& stored, const std::string& expected) {
  if (!stored.empty() && stored != expected)
    spdlog::warn("{} was produced with config {} but the current config hashes to {}", what, stored.substr(0, 12),
                 expected.substr(0, 12));
}

double parse_double(const std::string& cell, const std::filesystem::path& path, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size())
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": cannot parse '" + cell + "'");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

void RunConfig::validate() const {
  require(side_length > 0.0 && std::isfinite(side_length), "side_length must be positive");
  require(d >= 2, "d must be >= 2");
  require(s >= 1, "s must be >= 1");
  require(qmc::is_power_of_two(n), "n must be a power of two");
  require(injection_rate > 0.0 && std::isfinite(injection_rate), "injection_rate must be positive");
  schedule().validate();
  require(s == (v_s << levels),
          "inconsistent s: the calibration schedule ends at s_N = v_s 2^N = " + std::to_string(v_s << levels) +
              ", config has s = " + std::to_string(s));
  require(d == (v_d << levels),
          "inconsistent d: the calibration schedule ends at d_N = v_d 2^N = " + std::to_string(v_d << levels) +
              ", config has d = " + std::to_string(d));
  wells().validate(mesh());
  covariance().validate();
  require(transform == "exp" || transform == "identity", "transform must be exp or identity");
  require(linear_solver == "automatic" || linear_solver == "direct" || linear_solver == "iterative",
          "linear_solver must be automatic, direct or iterative");
  require(calibration_samples >= 8, "calibration_samples must be >= 8");
  require(kernel_order == 2 || kernel_order == 4, "kernel_order must be 2 or 4");
  require(max_iterations >= 0, "max_iterations must be >= 0");
  require(relative_tolerance > 0.0, "relative_tolerance must be positive");
  require(qmc::is_power_of_two(qmc_nodes), "qmc_nodes must be a power of two");
  require(qmc_shifts >= 0, "qmc_shifts must be >= 0");
  require(grid_points >= 1, "grid_points must be >= 1");
  require(workers >= 0, "workers must be >= 0");
  if (generating_vector.empty()) {
    const qmc::LatticeGenerator builtin;
    require(1 + s <= builtin.dimension(), "built-in generating vector has only " +
                                              std::to_string(builtin.dimension()) + " components; need 1 + s");
    require(n <= (std::size_t{1} << builtin.max_log2_points()), "n exceeds the built-in lattice capacity");
  }
}

darcy::WellConfig RunConfig::wells() const {
  darcy::WellConfig w;
  w.injection = {injection_x, injection_y};
  w.extraction = {extraction_x, extraction_y};
  w.critical = {critical_x, critical_y};
  w.injection_rate = injection_rate;
  return w;
}

field::MaternCovariance RunConfig::covariance() const { return {variance, correlation_length, smoothness}; }

darcy::SolverOptions RunConfig::solver() const {
  darcy::SolverOptions o;
  o.transform = transform == "identity" ? darcy::FieldTransform::identity : darcy::FieldTransform::exp;
  if (linear_solver == "direct") o.solver = darcy::LinearSolver::direct;
  if (linear_solver == "iterative") o.solver = darcy::LinearSolver::iterative;
  return o;
}

confidence::ConfidenceOptions RunConfig::confidence_options() const {
  confidence::ConfidenceOptions o;
  o.nodes = qmc_nodes;
  o.shifts = qmc_shifts;
  o.seed = qmc_seed;
  return o;
}

fastgp::FitOptions RunConfig::fit_options() const {
  fastgp::FitOptions o;
  o.order = kernel_order;
  o.optimizer.max_iterations = max_iterations;
  o.optimizer.relative_tolerance = relative_tolerance;
  return o;
}

nlohmann::json to_json(const RunConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  for_each_field(config, [&](const char* name, const auto& value) { j[name] = value; });
  return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for_each_field(c, [&](const char* name, auto& field) {
      if (key != name) return;
      known = true;
      try {
        field = value.get<std::decay_t<decltype(field)>>();
      } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument("config key '" + key + "' has the wrong type: " + value.dump());
      }
    });
    if (!known) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write config file " + path.string());
  out << to_json(config).dump(2) << '\n';
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{md[i]};
  return hex.str();
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

std::string config_hash(const RunConfig& config) {
  auto j = to_json(config);
  j.erase("workers");
  return sha256_hex(j.dump());
}

qmc::LatticeGenerator training_generator(const RunConfig& config) {
  qmc::LatticeGenerator gen = config.generating_vector.empty()
                                  ? qmc::LatticeGenerator()
                                  : qmc::LatticeGenerator::from_file(config.generating_vector);
  if (gen.dimension() < 1 + config.s)
    throw std::invalid_argument("generating vector has " + std::to_string(gen.dimension()) +
                                " components; need 1 + s = " + std::to_string(1 + config.s));
  gen = gen.truncated(1 + config.s);
  return config.training_shift ? qmc::random_shift(gen, config.sampling_seed) : gen;
}

Problem make_problem(const RunConfig& config) {
  config.validate();
  const Mesh mesh = config.mesh();
  return {mesh, field::build_kl(config.covariance(), mesh, config.s), config.wells(), config.solver()};
}

TrainingSet run_sampling(const RunConfig& config) {
  config.validate();
  const auto map = config.domain_map();
  const int s = config.s;
  const qmc::PointSet u = qmc::lattice_points(training_generator(config), config.n, 1 + s);
  TrainingSet t;
  t.locations = u;
  t.rates.resize(config.n);
  t.z.resize(u.rows(), s);
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    t.rates[static_cast<std::size_t>(i)] = map.rate(u(i, 0));
    for (int j = 0; j < s; ++j) t.z(i, j) = map.coefficient(u(i, j + 1));
  }
  t.config_hash = config_hash(config);
  t.sampling_seed = config.sampling_seed;
  return t;
}

TrainingSet run_ensemble(const RunConfig& config, TrainingSet t, const Problem& problem) {
  const auto n = static_cast<Eigen::Index>(t.size());
  if (t.z.rows() != n || t.z.cols() != config.s) throw std::invalid_argument("training locations do not match s");
  if (problem.basis.size() < config.s) throw std::invalid_argument("KL basis has fewer than s terms");
  const auto basis = problem.basis.truncated(config.s);
  t.y.resize(n);
  t.residuals.resize(n);
  std::vector<char> failed(static_cast<std::size_t>(n), 0);
  std::string first_error;
  std::mutex error_mutex;
  const int threads = config.workers > 0 ? config.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (Eigen::Index i = 0; i < n; ++i) {
    try {
      const Eigen::RowVectorXd z = t.z.row(i);
      const auto realization = field::sample_field(basis, std::span<const double>(z.data(), z.size()));
      const auto head =
          darcy::solve_pressure(problem.mesh, problem.wells, realization, t.rates[static_cast<std::size_t>(i)],
                                problem.solver);
      t.y[i] = head.interpolate(problem.wells.critical);
      t.residuals[i] = head.relative_residual;
    } catch (const std::exception& e) {
      t.y[i] = std::numeric_limits<double>::quiet_NaN();
      t.residuals[i] = std::numeric_limits<double>::quiet_NaN();
      failed[static_cast<std::size_t>(i)] = 1;
      std::lock_guard lock(error_mutex);
      if (first_error.empty()) first_error = "sample " + std::to_string(i) + ": " + e.what();
    }
  }
  t.failures.clear();
  for (std::size_t i = 0; i < failed.size(); ++i)
    if (failed[i]) t.failures.push_back(i);
  if (!t.failures.empty()) {
    spdlog::warn("{} of {} ensemble solves failed; first: {}", t.failures.size(), n, first_error);
    if (static_cast<double>(t.failures.size()) > 1e-3 * static_cast<double>(n))
      throw std::runtime_error("ensemble aborted: " + std::to_string(t.failures.size()) + " of " +
                               std::to_string(n) + " solves failed (limit 0.1%); first: " + first_error);
  }
  return t;
}

TrainingSet run_ensemble(const RunConfig& config, TrainingSet locations) {
  return run_ensemble(config, std::move(locations), make_problem(config));
}

calibration::CalibrationReport run_calibration(const RunConfig& config, const Problem& problem) {
  config.validate();
  const auto schedule = config.schedule();
  calibration::CriticalPressureFn solve = [&](int /*s*/, int d, double r, std::span<const double> z) {
    return darcy::critical_pressure(Mesh{d, config.side_length}, problem.basis, problem.wells, r, z,
                                    problem.solver);
  };
  auto norms = calibration::level_differences(schedule, config.calibration_samples, config.injection_rate,
                                              config.calibration_seed, solve, config.workers);
  auto report = calibration::make_report(schedule, config.calibration_samples, config.calibration_seed,
                                         std::move(norms), config.square_bound);
  report.config_hash = config_hash(config);
  return report;
}

calibration::CalibrationReport run_calibration(const RunConfig& config) {
  return run_calibration(config, make_problem(config));
}

fastgp::ModelMetadata model_metadata(const RunConfig& config, const TrainingSet& training) {
  fastgp::ModelMetadata m;
  m.injection_rate = config.injection_rate;
  m.truncation = config.s;
  m.mesh_cells = config.d;
  m.baker = config.baker;
  if (training.y.size() > 0) {
    m.y_min = training.y.minCoeff();
    m.y_max = training.y.maxCoeff();
  }
  m.config_hash = config_hash(config);
  m.qmc_nodes = config.qmc_nodes;
  m.qmc_shifts = config.qmc_shifts;
  m.qmc_seed = config.qmc_seed;
  m.grid_points = config.grid_points;
  return m;
}

fastgp::FastGpModel run_fit(const RunConfig& config, const TrainingSet& training,
                            const calibration::CalibrationReport& report,
                            const std::optional<std::filesystem::path>& model_path) {
  config.validate();
  const std::string hash = config_hash(config);
  warn_hash("training set", training.config_hash, hash);
  warn_hash("calibration report", report.config_hash, hash);
  if (!training.failures.empty())
    throw std::runtime_error("training set has " + std::to_string(training.failures.size()) +
                             " failed solves; the lattice design cannot drop points");
  if (training.size() != config.n || static_cast<std::size_t>(training.y.size()) != config.n)
    throw std::invalid_argument("training set has " + std::to_string(training.size()) + " rows, config n = " +
                                std::to_string(config.n));
  if (!std::isfinite(report.noise_init) || report.noise_init < 0.0)
    throw std::runtime_error("calibration bound is not finite (a fitted decay slope is non-negative); "
                             "cannot initialize the noise variance");

  const auto gen = training_generator(config);
  const auto expected = run_sampling(config);
  for (std::size_t i = 0; i < config.n; ++i)
    if (std::abs(expected.rates[i] - training.rates[i]) > 1e-12 * config.injection_rate)
      throw std::invalid_argument("training row " + std::to_string(i) +
                                  " does not match the configured lattice design");

  auto model = fastgp::fit(gen, config.n, training.y, report.noise_init, config.optimize, config.fit_options());
  const auto& diag = model.diagnostics();
  spdlog::info("fit: n = {}, p = {}, noise {:.4g} -> {:.4g}, log likelihood {:.6g}, {} iterations{}", model.size(),
               model.dimension(), diag.noise_init, model.noise(), model.log_marginal_likelihood(), diag.iterations,
               diag.converged ? "" : " (not converged)");
  if (model_path) fastgp::save_model(model, model_metadata(config, training), *model_path);
  return model;
}

fastgp::FastGpModel run_fit(const RunConfig& config, const std::filesystem::path& training_csv,
                            const std::filesystem::path& calibration_json,
                            const std::optional<std::filesystem::path>& model_path) {
  if (!std::filesystem::exists(calibration_json))
    throw std::runtime_error("calibration report not found: " + calibration_json.string() +
                             " (run the calibrate step first)");
  if (!std::filesystem::exists(training_csv))
    throw std::runtime_error("training data not found: " + training_csv.string() + " (run the solve step first)");
  return run_fit(config, load_training_csv(training_csv), calibration::load_report(calibration_json), model_path);
}

void save_training_csv(const TrainingSet& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# config_hash=" << t.config_hash << " sampling_seed=" << t.sampling_seed << '\n';
  out << 'r';
  for (Eigen::Index j = 0; j < t.z.cols(); ++j) out << ",z" << j + 1;
  out << ",y,residual\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    out << t.rates[i];
    for (Eigen::Index j = 0; j < t.z.cols(); ++j) out << ',' << t.z(row, j);
    out << ',' << (t.y.size() ? t.y[row] : std::numeric_limits<double>::quiet_NaN()) << ','
        << (t.residuals.size() ? t.residuals[row] : std::numeric_limits<double>::quiet_NaN()) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

TrainingSet load_training_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  TrainingSet t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind('#', 0) != 0) break;
    std::istringstream meta(line.substr(1));
    std::string item;
    while (meta >> item) {
      if (item.rfind("config_hash=", 0) == 0) t.config_hash = item.substr(12);
      if (item.rfind("sampling_seed=", 0) == 0) t.sampling_seed = std::stoull(item.substr(14));
    }
  }
  const auto header = split(line, ',');
  if (header.size() < 4 || header.front() != "r" || header[header.size() - 2] != "y" || header.back() != "residual")
    throw std::runtime_error(path.string() + ": expected header r,z1..zs,y,residual");
  const auto s = static_cast<Eigen::Index>(header.size() - 3);
  for (Eigen::Index j = 0; j < s; ++j)
    if (header[static_cast<std::size_t>(j + 1)] != "z" + std::to_string(j + 1))
      throw std::runtime_error(path.string() + ": expected column z" + std::to_string(j + 1));

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size())
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_double(c, path, line_no));
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  t.rates.resize(rows.size());
  t.z.resize(n, s);
  t.y.resize(n);
  t.residuals.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    t.rates[static_cast<std::size_t>(i)] = row[0];
    for (Eigen::Index j = 0; j < s; ++j) t.z(i, j) = row[static_cast<std::size_t>(j + 1)];
    t.y[i] = row[static_cast<std::size_t>(s + 1)];
    t.residuals[i] = row[static_cast<std::size_t>(s + 2)];
    if (!std::isfinite(t.y[i])) t.failures.push_back(static_cast<std::size_t>(i));
  }
  return t;
}

RunResult run_all(const RunConfig& config, const Workspace& ws) {
  config.validate();
  std::filesystem::create_directories(ws.root);
  save_config(config, ws.config());
  const Problem problem = make_problem(config);
  TrainingSet training = run_ensemble(config, run_sampling(config), problem);
  save_training_csv(training, ws.training());
  auto report = run_calibration(config, problem);
  calibration::save_report(report, ws.calibration());
  auto model = run_fit(config, training, report, ws.model());
  return {std::move(training), std::move(report), std::move(model)};
}

}  // namespace darcygp::pipeline
