#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "darcygp/confidence.hpp"
#include "darcygp/model_io.hpp"

namespace httplib {
class Server;
}

namespace darcygp::service {

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

struct ServiceOptions {
  std::string cors_origin = "*";
  std::optional<std::size_t> qmc_nodes;  // override the model file defaults
  std::optional<int> qmc_shifts;
  int max_grid_points = 257;
};

/// Read-only JSON API over one loaded model. Safe for concurrent requests.
class ConfidenceService {
 public:
  explicit ConfidenceService(fastgp::StoredModel stored, ServiceOptions options = {});

  /// Dispatches GET `path` with decoded query parameters. 400 for malformed
  /// parameters, 422 for values outside the model domain, 404 for unknown paths.
  [[nodiscard]] ApiResponse handle(std::string_view path, const std::map<std::string, std::string>& query) const;

  [[nodiscard]] const fastgp::FastGpModel& model() const { return stored_.model; }
  [[nodiscard]] const fastgp::ModelMetadata& metadata() const { return stored_.metadata; }
  [[nodiscard]] const confidence::SurrogateDomainMap& domain_map() const { return map_; }
  [[nodiscard]] const confidence::ConfidenceOptions& confidence_options() const { return qmc_; }
  /// Default threshold range: observed critical pressures widened by 3 posterior std.
  [[nodiscard]] std::pair<double, double> threshold_range() const { return h_range_; }
  [[nodiscard]] const ServiceOptions& options() const { return options_; }

 private:
  [[nodiscard]] ApiResponse info() const;
  [[nodiscard]] ApiResponse confidence(const std::map<std::string, std::string>& q) const;
  [[nodiscard]] ApiResponse curve(const std::map<std::string, std::string>& q) const;
  [[nodiscard]] ApiResponse heatmap(const std::map<std::string, std::string>& q) const;
  [[nodiscard]] ApiResponse min_rate(const std::map<std::string, std::string>& q) const;

  fastgp::StoredModel stored_;
  ServiceOptions options_;
  confidence::SurrogateDomainMap map_;
  confidence::ConfidenceOptions qmc_;
  std::pair<double, double> h_range_;
};

nlohmann::json to_json(const confidence::ConfidenceResult& result);

/// HTTP server routing every GET endpoint to `service`, with CORS headers.
/// The service must outlive the server.
std::unique_ptr<httplib::Server> make_server(const ConfidenceService& service);

/// Loads the model and blocks serving on host:port.
void serve(const std::filesystem::path& model_path, const std::string& host, int port, ServiceOptions options = {});

}  // namespace darcygp::service
