#include "darcygp/model_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

namespace darcygp::fastgp {

namespace {

constexpr const char* kFormat = "darcygp.model";
constexpr int kVersion = 1;

void write_doubles(std::ostream& out, const Eigen::VectorXd& v) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(v.size()) * 8);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(v[i]);
    for (int b = 0; b < 8; ++b) bytes[static_cast<std::size_t>(i) * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Eigen::VectorXd read_doubles(std::istream& in, std::size_t count) {
  std::vector<unsigned char> bytes(count * 8);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw std::runtime_error("model payload is truncated");
  Eigen::VectorXd v(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    v[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(bits);
  }
  return v;
}

}  // namespace

void save_model(const FastGpModel& model, const ModelMetadata& meta, const std::filesystem::path& path) {
  using nlohmann::json;
  const auto& gen = model.generator();
  const auto& diag = model.diagnostics();
  json header = {
      {"format", kFormat},
      {"version", kVersion},
      {"n", model.size()},
      {"p", model.dimension()},
      {"kernel", {{"order", model.kernel().order}, {"scale", model.kernel().scale}, {"weights", model.kernel().weights}}},
      {"noise", model.noise()},
      {"generator",
       {{"generating_vector", gen.generating_vector()},
        {"max_log2_points", gen.max_log2_points()},
        {"shift", gen.shift() ? json(*gen.shift()) : json(nullptr)}}},
      {"diagnostics",
       {{"optimized", diag.optimized},
        {"noise_init", diag.noise_init},
        {"log_likelihood", diag.log_likelihood},
        {"iterations", diag.iterations},
        {"evaluations", diag.evaluations},
        {"converged", diag.converged}}},
      {"metadata",
       {{"injection_rate", meta.injection_rate},
        {"s", meta.truncation},
        {"d", meta.mesh_cells},
        {"baker", meta.baker},
        {"y_min", meta.y_min},
        {"y_max", meta.y_max},
        {"config_hash", meta.config_hash},
        {"qmc_nodes", meta.qmc_nodes},
        {"qmc_shifts", meta.qmc_shifts},
        {"qmc_seed", meta.qmc_seed},
        {"grid_points", meta.grid_points}}},
      {"payload", {{"encoding", "float64-le"}, {"arrays", {"observations", "coefficients"}}, {"length", model.size()}}},
  };
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write model file " + path.string());
  out << header.dump() << '\n';
  write_doubles(out, model.observations());
  write_doubles(out, model.coefficients());
  if (!out) throw std::runtime_error("failed writing model file " + path.string());
}

StoredModel load_model(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("model file has no header: " + path.string());
  json h;
  try {
    h = json::parse(line);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("corrupt model header in " + path.string() + ": " + e.what());
  }
  if (h.value("format", "") != kFormat) throw std::runtime_error("not a model file: " + path.string());
  if (h.at("version").get<int>() != kVersion)
    throw std::runtime_error("unsupported model file version " + h.at("version").dump());

  try {
    const auto n = h.at("n").get<std::size_t>();
    const auto& g = h.at("generator");
    std::optional<std::vector<double>> shift;
    if (!g.at("shift").is_null()) shift = g.at("shift").get<std::vector<double>>();
    qmc::LatticeGenerator gen(g.at("generating_vector").get<std::vector<std::uint64_t>>(),
                              g.at("max_log2_points").get<int>(), shift);
    const auto& k = h.at("kernel");
    PeriodicKernel kernel(k.at("order").get<int>(), k.at("weights").get<std::vector<double>>(),
                          k.at("scale").get<double>());
    if (kernel.dimension() != h.at("p").get<int>()) throw std::runtime_error("kernel dimension differs from p");
    const auto& d = h.at("diagnostics");
    FitDiagnostics diag{d.at("optimized").get<bool>(),  d.at("noise_init").get<double>(),
                        d.at("log_likelihood").get<double>(), d.at("iterations").get<int>(),
                        d.at("evaluations").get<int>(), d.at("converged").get<bool>()};
    const auto& m = h.at("metadata");
    ModelMetadata meta;
    meta.injection_rate = m.at("injection_rate").get<double>();
    meta.truncation = m.at("s").get<int>();
    meta.mesh_cells = m.at("d").get<int>();
    meta.baker = m.at("baker").get<bool>();
    meta.y_min = m.at("y_min").get<double>();
    meta.y_max = m.at("y_max").get<double>();
    meta.config_hash = m.at("config_hash").get<std::string>();
    meta.qmc_nodes = m.at("qmc_nodes").get<std::size_t>();
    meta.qmc_shifts = m.at("qmc_shifts").get<int>();
    meta.qmc_seed = m.at("qmc_seed").get<std::uint64_t>();
    meta.grid_points = m.at("grid_points").get<int>();

    Eigen::VectorXd y = read_doubles(in, n);
    const Eigen::VectorXd stored = read_doubles(in, n);
    if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes after model payload");

    FastGpModel model(gen, n, std::move(y), std::move(kernel), h.at("noise").get<double>(), diag);
    const double scale = std::max(stored.lpNorm<Eigen::Infinity>(), 1e-300);
    if (n > 0 && (model.coefficients() - stored).lpNorm<Eigen::Infinity>() > 1e-9 * scale)
      throw std::runtime_error("stored coefficients disagree with the recomputed solve");
    return {std::move(model), std::move(meta)};
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt model header in " + path.string() + ": " + e.what());
  }
}

}  // namespace darcygp::fastgp
