#include <doctest.h>

#include <filesystem>
#include <thread>

#include "darcygp/service.hpp"

#include <httplib.h>

using namespace darcygp;
using namespace darcygp::service;

namespace {

constexpr int kS = 3;
constexpr double kW = 0.031688;

fastgp::StoredModel stored_model() {
  const confidence::SurrogateDomainMap map{kW, kS, true};
  const auto gen = qmc::LatticeGenerator().truncated(1 + kS);
  const std::size_t n = 256;
  const auto u = qmc::lattice_points(gen, n, 1 + kS);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double v = 1.0 - 20.0 * map.rate(u(i, 0));
    for (int j = 1; j <= kS; ++j) v += 0.2 * map.coefficient(u(i, j)) / j;
    y[i] = v;
  }
  fastgp::FastGpModel model(gen, n, y, fastgp::PeriodicKernel(4, {0.5, 0.3, 0.2, 0.1}, 1.0), 1e-4);
  fastgp::ModelMetadata meta;
  meta.injection_rate = kW;
  meta.truncation = kS;
  meta.mesh_cells = 16;
  meta.y_min = y.minCoeff();
  meta.y_max = y.maxCoeff();
  meta.config_hash = "feedface";
  meta.qmc_nodes = 256;
  meta.qmc_shifts = 4;
  meta.qmc_seed = 5;
  meta.grid_points = 9;

  const auto path = std::filesystem::temp_directory_path() / "darcygp_test_service.dgp";
  fastgp::save_model(model, meta, path);
  auto stored = fastgp::load_model(path);
  std::filesystem::remove(path);
  return stored;
}

const ConfidenceService& shared_service() {
  static const ConfidenceService service(stored_model());
  return service;
}

}  // namespace

TEST_CASE("health and unknown endpoints") {
  const auto& svc = shared_service();
  CHECK(svc.handle("/health", {}).status == 200);
  CHECK(svc.handle("/health", {}).body["status"] == "ok");
  const auto missing = svc.handle("/nope", {});
  CHECK(missing.status == 404);
  CHECK(missing.body.contains("error"));
}

TEST_CASE("confidence endpoint") {
  const auto& svc = shared_service();
  const auto ok = svc.handle("/confidence", {{"r", "0.01"}, {"h", "0.7"}});
  REQUIRE(ok.status == 200);
  const auto direct =
      confidence::expected_confidence(svc.model(), svc.domain_map(), 0.01, 0.7, svc.confidence_options());
  CHECK(ok.body["estimate"].get<double>() == direct.estimate);
  CHECK(ok.body["stderr"].get<double>() == direct.standard_error);
  CHECK(ok.body["r"].get<double>() == 0.01);
  CHECK(ok.body["h"].get<double>() == 0.7);

  CHECK(svc.handle("/confidence", {{"h", "0.7"}}).status == 400);
  CHECK(svc.handle("/confidence", {{"r", "abc"}, {"h", "0.7"}}).status == 400);
  CHECK(svc.handle("/confidence", {{"r", "0.01x"}, {"h", "0.7"}}).status == 400);
  CHECK(svc.handle("/confidence", {{"r", "nan"}, {"h", "0.7"}}).status == 400);
  const auto outside = svc.handle("/confidence", {{"r", "0.05"}, {"h", "0.7"}});
  CHECK(outside.status == 422);
  CHECK(outside.body["error"].get<std::string>().find("outside") != std::string::npos);
  CHECK(svc.handle("/confidence", {{"r", "-0.001"}, {"h", "0.7"}}).status == 422);
}

TEST_CASE("curve endpoint matches the library call exactly") {
  const auto& svc = shared_service();
  const auto res = svc.handle("/curve", {{"h", "0.8"}, {"points", "5"}});
  REQUIRE(res.status == 200);
  const auto rates = confidence::rate_grid(kW, 5);
  const auto direct = confidence::confidence_curve(svc.model(), svc.domain_map(), rates, 0.8, svc.confidence_options());
  REQUIRE(res.body.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(res.body[i]["r"].get<double>() == direct[i].r);
    CHECK(res.body[i]["estimate"].get<double>() == direct[i].estimate);
    CHECK(res.body[i]["stderr"].get<double>() == direct[i].standard_error);
  }
  // Round trip through the JSON text keeps every double.
  const auto reparsed = nlohmann::json::parse(res.body.dump());
  for (std::size_t i = 0; i < 5; ++i) CHECK(reparsed[i]["estimate"].get<double>() == direct[i].estimate);

  CHECK(svc.handle("/curve", {{"h", "0.8"}}).body.size() == 9);
  CHECK(svc.handle("/curve", {{"h", "0.8"}, {"points", "0"}}).status == 422);
  CHECK(svc.handle("/curve", {{"h", "0.8"}, {"points", "100000"}}).status == 422);
  CHECK(svc.handle("/curve", {{"h", "0.8"}, {"points", "2.5"}}).status == 400);
  CHECK(svc.handle("/curve", {}).status == 400);
}

TEST_CASE("heatmap endpoint") {
  const auto& svc = shared_service();
  const auto res = svc.handle("/heatmap", {{"rs", "3"}, {"hs", "4"}});
  REQUIRE(res.status == 200);
  CHECK(res.body["rates"].size() == 3);
  CHECK(res.body["thresholds"].size() == 4);
  CHECK(res.body["thresholds"][0].get<double>() == svc.threshold_range().first);
  CHECK(res.body["thresholds"][3].get<double>() == svc.threshold_range().second);
  const auto& est = res.body["estimate"];
  REQUIRE(est.size() == 3);
  for (const auto& row : est) {
    REQUIRE(row.size() == 4);
    for (std::size_t j = 1; j < 4; ++j) CHECK(row[j].get<double>() >= row[j - 1].get<double>());
  }
  CHECK(svc.handle("/heatmap", {{"rs", "-1"}}).status == 422);
}

TEST_CASE("min-rate endpoint") {
  const auto& svc = shared_service();
  const auto zero = svc.handle("/min-rate", {{"h", "0.8"}, {"target", "0"}});
  REQUIRE(zero.status == 200);
  CHECK(zero.body["rate"].get<double>() == 0.0);
  const auto never = svc.handle("/min-rate", {{"h", "-10"}});
  REQUIRE(never.status == 200);
  CHECK(never.body["rate"].is_null());
  CHECK(never.body["target"].get<double>() == 0.9);
  const auto some = svc.handle("/min-rate", {{"h", "0.8"}, {"target", "0.5"}, {"points", "9"}});
  REQUIRE(some.status == 200);
  const auto expected = confidence::min_rate_for_confidence(svc.model(), svc.domain_map(), 0.8, 0.5,
                                                            confidence::rate_grid(kW, 9), svc.confidence_options());
  CHECK(some.body["rate"].is_null() == !expected.has_value());
  if (expected) CHECK(some.body["rate"].get<double>() == *expected);
  CHECK(svc.handle("/min-rate", {{"h", "0.8"}, {"target", "1.5"}}).status == 422);
}

TEST_CASE("model-info reports the fitted model") {
  const auto& svc = shared_service();
  const auto res = svc.handle("/model-info", {});
  REQUIRE(res.status == 200);
  const auto& b = res.body;
  CHECK(b["config_hash"] == "feedface");
  CHECK(b["n"] == 256);
  CHECK(b["s"] == kS);
  CHECK(b["d"] == 16);
  CHECK(b["p"] == 1 + kS);
  CHECK(b["zeta"].get<double>() == svc.model().noise());
  CHECK(b["rate_range"][1].get<double>() == kW);
  CHECK(b["grid_points"] == 9);
  CHECK(b["qmc"]["nodes"] == 256);
  CHECK(b["kernel"]["weights"].size() == 1 + kS);
  CHECK(b["fit"].contains("log_likelihood"));
  CHECK(b["fit"].contains("converged"));
  CHECK(b["threshold_range"][0].get<double>() < b["observed_range"][0].get<double>());
}

TEST_CASE("service options override the node count") {
  ServiceOptions o;
  o.qmc_nodes = 64;
  o.qmc_shifts = 2;
  const ConfidenceService svc(stored_model(), o);
  CHECK(svc.confidence_options().nodes == 64);
  const auto res = svc.handle("/confidence", {{"r", "0"}, {"h", "1"}});
  CHECK(res.body["nodes"] == 64);
  CHECK(res.body["replicates"] == 2);
  o.qmc_nodes = 100;
  CHECK_THROWS(ConfidenceService(stored_model(), o));
}

TEST_CASE("HTTP server with CORS") {
  const auto& svc = shared_service();
  auto server = make_server(svc);
  const int port = server->bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread thread([&] { server->listen_after_bind(); });
  server->wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");
  CHECK(health->get_header_value("Content-Type") == "application/json");
  CHECK(nlohmann::json::parse(health->body)["status"] == "ok");

  auto conf = client.Get("/confidence?r=0.01&h=0.7");
  REQUIRE(conf);
  CHECK(conf->status == 200);
  const auto direct =
      confidence::expected_confidence(svc.model(), svc.domain_map(), 0.01, 0.7, svc.confidence_options());
  CHECK(nlohmann::json::parse(conf->body)["estimate"].get<double>() == direct.estimate);

  auto bad = client.Get("/confidence?r=1&h=0.7");
  REQUIRE(bad);
  CHECK(bad->status == 422);
  CHECK(bad->get_header_value("Access-Control-Allow-Origin") == "*");

  auto malformed = client.Get("/confidence?r=x&h=0.7");
  REQUIRE(malformed);
  CHECK(malformed->status == 400);

  auto preflight = client.Options("/curve");
  REQUIRE(preflight);
  CHECK(preflight->status == 204);
  CHECK(preflight->get_header_value("Access-Control-Allow-Methods").find("GET") != std::string::npos);

  server->stop();
  thread.join();
}

TEST_CASE("concurrent requests agree") {
  const auto& svc = shared_service();
  const auto reference = svc.handle("/confidence", {{"r", "0.02"}, {"h", "0.5"}}).body;
  std::vector<std::thread> threads;
  std::vector<nlohmann::json> results(4);
  for (std::size_t t = 0; t < results.size(); ++t)
    threads.emplace_back([&, t] { results[t] = svc.handle("/confidence", {{"r", "0.02"}, {"h", "0.5"}}).body; });
  for (auto& th : threads) th.join();
  for (const auto& r : results) CHECK(r == reference);
}
