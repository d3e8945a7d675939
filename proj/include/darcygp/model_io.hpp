#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "darcygp/fastgp.hpp"

namespace darcygp::fastgp {

/// What a served model needs beyond the GP itself.
struct ModelMetadata {
  double injection_rate = 0.031688;
  int truncation = 0;  // s
  int mesh_cells = 0;  // d
  bool baker = true;
  double y_min = 0.0;
  double y_max = 0.0;
  std::string config_hash;
  std::size_t qmc_nodes = 4096;
  int qmc_shifts = 8;
  std::uint64_t qmc_seed = 0;
  int grid_points = 65;
};

struct StoredModel {
  FastGpModel model;
  ModelMetadata metadata;
};

/// One JSON header line followed by little-endian float64 arrays
/// (observations, then coefficients). Byte-for-byte deterministic.
void save_model(const FastGpModel& model, const ModelMetadata& metadata, const std::filesystem::path& path);

/// Rebuilds the model from the stored hyperparameters and observations and
/// checks the recomputed coefficients against the stored ones.
StoredModel load_model(const std::filesystem::path& path);

}  // namespace darcygp::fastgp
