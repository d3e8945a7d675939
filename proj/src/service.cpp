#include "darcygp/service.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace darcygp::service {

namespace {

using Query = std::map<std::string, std::string>;

/// A request that cannot be served; carries its HTTP status.
struct RequestError : std::runtime_error {
  RequestError(int status_, const std::string& what) : std::runtime_error(what), status(status_) {}
  int status;
};

ApiResponse error(int status, const std::string& message) { return {status, {{"error", message}}}; }

double parse_number(const Query& q, const std::string& key, std::optional<double> fallback = std::nullopt) {
  const auto it = q.find(key);
  if (it == q.end()) {
    if (fallback) return *fallback;
    throw RequestError(400, "missing parameter '" + key + "'");
  }
  const std::string& text = it->second;
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size() || !std::isfinite(v))
    throw RequestError(400, "parameter '" + key + "' is not a finite number: '" + text + "'");
  return v;
}

int parse_count(const Query& q, const std::string& key, int fallback, int max) {
  const auto it = q.find(key);
  if (it == q.end()) return fallback;
  const std::string& text = it->second;
  long long v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size())
    throw RequestError(400, "parameter '" + key + "' is not an integer: '" + text + "'");
  if (v < 1 || v > max)
    throw RequestError(422, "parameter '" + key + "' must lie in [1, " + std::to_string(max) + "]");
  return static_cast<int>(v);
}

}  // namespace

nlohmann::json to_json(const confidence::ConfidenceResult& c) {
  return {{"r", c.r},        {"h", c.h},           {"estimate", c.estimate},
          {"stderr", c.standard_error}, {"nodes", c.nodes}, {"replicates", c.replicates}};
}

ConfidenceService::ConfidenceService(fastgp::StoredModel stored, ServiceOptions options)
    : stored_(std::move(stored)), options_(std::move(options)) {
  const auto& meta = stored_.metadata;
  map_ = {meta.injection_rate, meta.truncation, meta.baker};
  map_.validate();
  if (stored_.model.dimension() != map_.dimension())
    throw std::runtime_error("model dimension does not match 1 + s from its metadata");
  qmc_.nodes = options_.qmc_nodes.value_or(meta.qmc_nodes);
  qmc_.shifts = options_.qmc_shifts.value_or(meta.qmc_shifts);
  qmc_.seed = meta.qmc_seed;
  qmc_.validate(map_.truncation);
  h_range_ = confidence::threshold_range(stored_.model, meta.y_min, meta.y_max);
}

ApiResponse ConfidenceService::handle(std::string_view path, const Query& query) const {
  try {
    if (path == "/health") return {200, {{"status", "ok"}}};
    if (path == "/model-info") return info();
    if (path == "/confidence") return confidence(query);
    if (path == "/curve") return curve(query);
    if (path == "/heatmap") return heatmap(query);
    if (path == "/min-rate") return min_rate(query);
    return error(404, "unknown endpoint " + std::string(path));
  } catch (const RequestError& e) {
    return error(e.status, e.what());
  } catch (const std::out_of_range& e) {
    return error(422, e.what());
  } catch (const std::exception& e) {
    spdlog::error("request {} failed: {}", path, e.what());
    return error(500, e.what());
  }
}

ApiResponse ConfidenceService::info() const {
  const auto& m = stored_.model;
  const auto& meta = stored_.metadata;
  const auto& d = m.diagnostics();
  return {200,
          {{"config_hash", meta.config_hash},
           {"n", m.size()},
           {"s", meta.truncation},
           {"d", meta.mesh_cells},
           {"p", m.dimension()},
           {"zeta", m.noise()},
           {"injection_rate", meta.injection_rate},
           {"rate_range", {0.0, meta.injection_rate}},
           {"threshold_range", {h_range_.first, h_range_.second}},
           {"observed_range", {meta.y_min, meta.y_max}},
           {"baker", meta.baker},
           {"grid_points", meta.grid_points},
           {"qmc", {{"nodes", qmc_.nodes}, {"shifts", qmc_.shifts}, {"seed", qmc_.seed}}},
           {"kernel", {{"order", m.kernel().order}, {"scale", m.kernel().scale}, {"weights", m.kernel().weights}}},
           {"fit",
            {{"optimized", d.optimized},
             {"noise_init", d.noise_init},
             {"log_likelihood", m.log_marginal_likelihood()},
             {"iterations", d.iterations},
             {"evaluations", d.evaluations},
             {"converged", d.converged}}}}};
}

ApiResponse ConfidenceService::confidence(const Query& q) const {
  const double r = parse_number(q, "r");
  const double h = parse_number(q, "h");
  return {200, to_json(confidence::expected_confidence(stored_.model, map_, r, h, qmc_))};
}

ApiResponse ConfidenceService::curve(const Query& q) const {
  const double h = parse_number(q, "h");
  const int points = parse_count(q, "points", stored_.metadata.grid_points, options_.max_grid_points);
  const auto rates = confidence::rate_grid(map_.injection_rate, points);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : confidence::confidence_curve(stored_.model, map_, rates, h, qmc_)) out.push_back(to_json(c));
  return {200, out};
}

ApiResponse ConfidenceService::heatmap(const Query& q) const {
  const int nr = parse_count(q, "rs", stored_.metadata.grid_points, options_.max_grid_points);
  const int nh = parse_count(q, "hs", stored_.metadata.grid_points, options_.max_grid_points);
  const auto rates = confidence::rate_grid(map_.injection_rate, nr);
  const auto hs = confidence::linspace(h_range_.first, h_range_.second, nh);
  const auto hm = confidence::confidence_heatmap(stored_.model, map_, rates, hs, qmc_);
  nlohmann::json est = nlohmann::json::array(), se = nlohmann::json::array();
  for (Eigen::Index i = 0; i < hm.estimate.rows(); ++i) {
    nlohmann::json row_e = nlohmann::json::array(), row_s = nlohmann::json::array();
    for (Eigen::Index j = 0; j < hm.estimate.cols(); ++j) {
      row_e.push_back(hm.estimate(i, j));
      row_s.push_back(hm.standard_error(i, j));
    }
    est.push_back(std::move(row_e));
    se.push_back(std::move(row_s));
  }
  return {200, {{"rates", hm.rates}, {"thresholds", hm.thresholds}, {"estimate", est}, {"stderr", se}}};
}

ApiResponse ConfidenceService::min_rate(const Query& q) const {
  const double h = parse_number(q, "h");
  const double target = parse_number(q, "target", 0.9);
  if (!(target >= 0.0 && target <= 1.0)) throw RequestError(422, "target must lie in [0, 1]");
  const int points = parse_count(q, "points", stored_.metadata.grid_points, options_.max_grid_points);
  const auto rates = confidence::rate_grid(map_.injection_rate, points);
  const auto rate = confidence::min_rate_for_confidence(stored_.model, map_, h, target, rates, qmc_);
  return {200, {{"h", h}, {"target", target}, {"rate", rate ? nlohmann::json(*rate) : nlohmann::json(nullptr)}}};
}

std::unique_ptr<httplib::Server> make_server(const ConfidenceService& service) {
  auto server = std::make_unique<httplib::Server>();
  server->set_default_headers({{"Access-Control-Allow-Origin", service.options().cors_origin},
                               {"Access-Control-Allow-Methods", "GET, OPTIONS"}});
  server->Get(R"(/.*)", [&service](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const ApiResponse r = service.handle(req.path, query);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  });
  server->Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  return server;
}

void serve(const std::filesystem::path& model_path, const std::string& host, int port, ServiceOptions options) {
  ConfidenceService service(fastgp::load_model(model_path), std::move(options));
  auto server = make_server(service);
  spdlog::info("serving {} on http://{}:{}", model_path.string(), host, port);
  if (!server->listen(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
}

}  // namespace darcygp::service
