#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "darcygp/confidence.hpp"
#include "darcygp/model_io.hpp"
#include "darcygp/pipeline.hpp"
#include "darcygp/plot.hpp"
#include "darcygp/service.hpp"

namespace fs = std::filesystem;
using namespace darcygp;

namespace {

std::string dashed(std::string name) {
  for (auto& c : name)
    if (c == '_') c = '-';
  return name;
}

/// Registers one flag per RunConfig field and applies the given ones on top of a base config.
class ConfigFlags {
 public:
  explicit ConfigFlags(CLI::App& app) {
    pipeline::for_each_field(values_, [&](const char* name, auto& field) {
      options_[name] = app.add_option("--" + dashed(name), field, std::string("override config ") + name)
                           ->group("Config overrides");
    });
  }

  [[nodiscard]] bool given(const std::string& name) const { return options_.at(name)->count() > 0; }

  void apply(pipeline::RunConfig& config) const {
    pipeline::for_each_field(config, [&](const char* name, auto& target) {
      if (!given(name)) return;
      pipeline::for_each_field(values_, [&](const char* other, const auto& value) {
        if constexpr (std::is_same_v<std::decay_t<decltype(value)>, std::decay_t<decltype(target)>>)
          if (std::string(name) == other) target = value;
      });
    });
  }

  [[nodiscard]] const pipeline::RunConfig& values() const { return values_; }

 private:
  pipeline::RunConfig values_;
  std::map<std::string, CLI::Option*> options_;
};

void write_or_print(const std::optional<fs::path>& path, const std::string& text) {
  if (!path) {
    std::cout << text;
    return;
  }
  std::ofstream out(*path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path->string());
  out << text;
  spdlog::info("wrote {}", path->string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Error-aware Gaussian-process surrogates for Darcy flow critical pressure"};
  app.require_subcommand(1);
  app.fallthrough();

  fs::path config_path;
  fs::path workdir = "run";
  std::string log_level = "info";
  app.add_option("-c,--config", config_path, "run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("-w,--workdir", workdir, "directory holding run artifacts")->capture_default_str();
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error")->capture_default_str();
  ConfigFlags flags(app);

  std::optional<fs::path> model_path, out_path, training_path, calibration_path;
  double h = 0.0, target = 0.9;
  std::optional<double> r_opt;
  int points = 0, rate_points = 0, threshold_points = 0;

  auto* sample = app.add_subcommand("sample", "generate the training design (unit-cube points and (r, z))");
  sample->add_option("-o,--out", out_path, "CSV output (default <workdir>/locations.csv)");

  auto* solve = app.add_subcommand("solve", "solve the Darcy problem at every design point");
  auto* calibrate = app.add_subcommand("calibrate", "estimate level differences and the RMSE bound");

  auto* fit = app.add_subcommand("fit", "fit the structured GP surrogate");
  fit->add_option("--training", training_path, "training CSV (default <workdir>/training.csv)");
  fit->add_option("--calibration", calibration_path, "calibration report (default <workdir>/calibration.json)");
  fit->add_option("-m,--model", model_path, "model output (default <workdir>/model.dgp)");

  auto* run = app.add_subcommand("run", "sample, solve, calibrate and fit in one go");

  auto* conf = app.add_subcommand("confidence", "expected confidence at (r, h), or the curve over r");
  conf->add_option("-r,--rate", r_opt, "extraction rate; omit for the whole curve");
  conf->add_option("--threshold", h, "head threshold")->required();
  conf->add_option("--points", points, "rate grid size for the curve (default from the model)");
  conf->add_option("-m,--model", model_path);
  conf->add_option("-o,--out", out_path, "curve CSV output (default stdout)");

  auto* heat = app.add_subcommand("heatmap", "confidence over a rate x threshold grid as CSV");
  heat->add_option("--rates", rate_points, "rate grid size (default from the model)");
  heat->add_option("--thresholds", threshold_points, "threshold grid size (default from the model)");
  heat->add_option("-m,--model", model_path);
  heat->add_option("-o,--out", out_path, "CSV output (default stdout)");

  auto* minrate = app.add_subcommand("min-rate", "smallest grid rate reaching a target confidence");
  minrate->add_option("--threshold", h, "head threshold")->required();
  minrate->add_option("--target", target, "target confidence")->capture_default_str();
  minrate->add_option("--points", points, "rate grid size (default from the model)");
  minrate->add_option("-m,--model", model_path);

  std::string plot_kind;
  std::optional<double> plot_target;
  auto* plot = app.add_subcommand("plot", "SVG figure: confidence curve, heatmap or calibration decay");
  plot->add_option("kind", plot_kind, "curve | heatmap | calibration")
      ->required()
      ->check(CLI::IsMember({"curve", "heatmap", "calibration"}));
  plot->add_option("--threshold", h, "head threshold (curve)");
  plot->add_option("--target", plot_target, "target confidence line (curve)");
  plot->add_option("--points", points, "grid size (default from the model)");
  plot->add_option("-m,--model", model_path);
  plot->add_option("-o,--out", out_path, "SVG output")->required();

  std::string host = "127.0.0.1";
  int port = 8080;
  service::ServiceOptions service_options;
  auto* serve = app.add_subcommand("serve", "HTTP JSON API over a fitted model");
  serve->add_option("-m,--model", model_path);
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--cors-origin", service_options.cors_origin)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    pipeline::RunConfig config = config_path.empty() ? pipeline::RunConfig{} : pipeline::load_config(config_path);
    flags.apply(config);
    const pipeline::Workspace ws{workdir};
    const fs::path model_file = model_path.value_or(ws.model());

    // QMC settings come from the model file unless given as flags.
    auto load_stored = [&] {
      auto stored = fastgp::load_model(model_file);
      if (!config_path.empty() && stored.metadata.config_hash != pipeline::config_hash(config))
        spdlog::warn("model {} was fitted with a different config", model_file.string());
      if (flags.given("qmc_nodes")) stored.metadata.qmc_nodes = config.qmc_nodes;
      if (flags.given("qmc_shifts")) stored.metadata.qmc_shifts = config.qmc_shifts;
      if (flags.given("qmc_seed")) stored.metadata.qmc_seed = config.qmc_seed;
      if (flags.given("grid_points")) stored.metadata.grid_points = config.grid_points;
      return stored;
    };
    auto make_service = [&] { return service::ConfidenceService(load_stored(), service_options); };
    auto grid = [&](const service::ConfidenceService& svc, int requested) {
      return requested > 0 ? requested : svc.metadata().grid_points;
    };

    if (app.got_subcommand(sample)) {
      const auto t = pipeline::run_sampling(config);
      fs::create_directories(workdir);
      std::ostringstream csv;
      csv.precision(17);
      csv << "u0";
      for (int j = 1; j <= config.s; ++j) csv << ",u" << j;
      csv << ",r";
      for (int j = 1; j <= config.s; ++j) csv << ",z" << j;
      csv << '\n';
      for (Eigen::Index i = 0; i < t.locations.rows(); ++i) {
        for (Eigen::Index j = 0; j < t.locations.cols(); ++j) csv << (j ? "," : "") << t.locations(i, j);
        csv << ',' << t.rates[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < t.z.cols(); ++j) csv << ',' << t.z(i, j);
        csv << '\n';
      }
      write_or_print(out_path.value_or(workdir / "locations.csv"), csv.str());
    } else if (app.got_subcommand(solve)) {
      fs::create_directories(workdir);
      pipeline::save_config(config, ws.config());
      const auto t = pipeline::run_ensemble(config, pipeline::run_sampling(config));
      pipeline::save_training_csv(t, ws.training());
      spdlog::info("solved {} problems, max relative residual {:.3g}; wrote {}", t.size(), t.residuals.maxCoeff(),
                   ws.training().string());
    } else if (app.got_subcommand(calibrate)) {
      fs::create_directories(workdir);
      const auto report = pipeline::run_calibration(config);
      calibration::save_report(report, ws.calibration());
      spdlog::info("decay a_s = {:.4f}, a_d = {:.4f}; bound {:.4g}, noise init {:.4g}; wrote {}", report.fit.a_s,
                   report.fit.a_d, report.bounds.back().value, report.noise_init, ws.calibration().string());
    } else if (app.got_subcommand(fit)) {
      pipeline::run_fit(config, training_path.value_or(ws.training()), calibration_path.value_or(ws.calibration()),
                        model_file);
      spdlog::info("wrote {}", model_file.string());
    } else if (app.got_subcommand(run)) {
      pipeline::run_all(config, ws);
      spdlog::info("model {} (sha256 {})", ws.model().string(), pipeline::file_sha256(ws.model()));
    } else if (app.got_subcommand(conf)) {
      const auto svc = make_service();
      if (r_opt) {
        const auto res = confidence::expected_confidence(svc.model(), svc.domain_map(), *r_opt, h,
                                                         svc.confidence_options());
        std::cout << service::to_json(res).dump() << '\n';
      } else {
        const auto rates = confidence::rate_grid(svc.domain_map().injection_rate, grid(svc, points));
        const auto curve =
            confidence::confidence_curve(svc.model(), svc.domain_map(), rates, h, svc.confidence_options());
        std::ostringstream csv;
        confidence::write_csv(csv, curve);
        write_or_print(out_path, csv.str());
      }
    } else if (app.got_subcommand(heat)) {
      const auto svc = make_service();
      const auto rates = confidence::rate_grid(svc.domain_map().injection_rate, grid(svc, rate_points));
      const auto [lo, hi] = svc.threshold_range();
      const auto hs = confidence::linspace(lo, hi, grid(svc, threshold_points));
      const auto hm = confidence::confidence_heatmap(svc.model(), svc.domain_map(), rates, hs,
                                                     svc.confidence_options());
      std::ostringstream csv;
      confidence::write_csv(csv, hm);
      write_or_print(out_path, csv.str());
    } else if (app.got_subcommand(minrate)) {
      const auto svc = make_service();
      const auto rates = confidence::rate_grid(svc.domain_map().injection_rate, grid(svc, points));
      const auto rate = confidence::min_rate_for_confidence(svc.model(), svc.domain_map(), h, target, rates,
                                                            svc.confidence_options());
      nlohmann::json j = {{"h", h}, {"target", target}, {"rate", rate ? nlohmann::json(*rate) : nlohmann::json(nullptr)}};
      std::cout << j.dump() << '\n';
    } else if (app.got_subcommand(plot)) {
      std::ostringstream svg;
      if (plot_kind == "calibration") {
        plot::calibration_svg(svg, calibration::load_report(ws.calibration()));
      } else {
        const auto svc = make_service();
        const auto rates = confidence::rate_grid(svc.domain_map().injection_rate, grid(svc, points));
        if (plot_kind == "curve") {
          const auto curve =
              confidence::confidence_curve(svc.model(), svc.domain_map(), rates, h, svc.confidence_options());
          plot::curve_svg(svg, curve, plot_target);
        } else {
          const auto [lo, hi] = svc.threshold_range();
          const auto hs = confidence::linspace(lo, hi, grid(svc, points));
          plot::heatmap_svg(svg, confidence::confidence_heatmap(svc.model(), svc.domain_map(), rates, hs,
                                                                svc.confidence_options()));
        }
      }
      write_or_print(out_path, svg.str());
    } else if (app.got_subcommand(serve)) {
      if (flags.given("qmc_nodes")) service_options.qmc_nodes = config.qmc_nodes;
      if (flags.given("qmc_shifts")) service_options.qmc_shifts = config.qmc_shifts;
      service::serve(model_file, host, port, service_options);
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
