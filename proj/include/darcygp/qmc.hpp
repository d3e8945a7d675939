#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace darcygp::qmc {

/// Row-major point set, one row per point.
using PointSet = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rank-1 lattice sequence in base 2.
///
/// Points are produced in natural (index) order, x_i = frac(i * z / n + shift).
/// Unshifted sets of size 2^m are groups under addition mod 1, which is what
/// makes Gram matrices of shift-invariant kernels circulant.
class LatticeGenerator {
 public:
  /// Default: the first 32 components of the Cools-Kuo-Nuyens embedded
  /// lattice sequence `lattice-32001-1024-1048575.3600` (up to 2^20 points).
  LatticeGenerator();
  LatticeGenerator(std::vector<std::uint64_t> generating_vector, int max_log2_points,
                   std::optional<std::vector<double>> shift = std::nullopt);

  /// Reads one integer per line; blank lines and lines starting with '#' are skipped.
  static LatticeGenerator from_file(const std::filesystem::path& path, int max_log2_points = 20);

  [[nodiscard]] const std::vector<std::uint64_t>& generating_vector() const { return z_; }
  [[nodiscard]] int max_log2_points() const { return m_max_; }
  [[nodiscard]] int dimension() const { return static_cast<int>(z_.size()); }
  [[nodiscard]] const std::optional<std::vector<double>>& shift() const { return shift_; }

  /// Copy restricted to the first `dim` coordinates (shift truncated accordingly).
  [[nodiscard]] LatticeGenerator truncated(int dim) const;
  [[nodiscard]] LatticeGenerator with_shift(std::optional<std::vector<double>> shift) const;

 private:
  std::vector<std::uint64_t> z_;
  int m_max_;
  std::optional<std::vector<double>> shift_;
};

/// Digital sequence in base 2 built from per-dimension generating matrices.
///
/// Column k of a dimension's matrix is stored as an integer whose most
/// significant of `max_log2_points` bits is row 0 (the usual Sobol' direction
/// numbers V_k = m_k 2^(m_max - k)).
class DigitalGenerator {
 public:
  /// Default: Sobol' direction numbers (Joe-Kuo) for up to 21 dimensions, 2^32 points.
  DigitalGenerator();
  DigitalGenerator(std::vector<std::vector<std::uint64_t>> columns, int max_log2_points,
                   std::optional<std::vector<std::uint64_t>> digital_shift = std::nullopt);

  /// Reads one dimension per line, each line holding `max_log2_points`
  /// whitespace-separated column integers.
  static DigitalGenerator from_file(const std::filesystem::path& path, int max_log2_points);

  [[nodiscard]] int max_log2_points() const { return m_max_; }
  [[nodiscard]] int dimension() const { return static_cast<int>(columns_.size()); }
  [[nodiscard]] const std::vector<std::vector<std::uint64_t>>& columns() const { return columns_; }
  [[nodiscard]] const std::optional<std::vector<std::uint64_t>>& digital_shift() const { return shift_; }
  [[nodiscard]] DigitalGenerator with_shift(std::optional<std::vector<std::uint64_t>> shift) const;

 private:
  std::vector<std::vector<std::uint64_t>> columns_;
  int m_max_;
  std::optional<std::vector<std::uint64_t>> shift_;
};

/// Sobol' direction-number seed for one dimension: primitive polynomial of
/// `degree` with interior coefficients `coefficients`, and initial odd m_k.
struct SobolSeed {
  int degree;
  std::uint32_t coefficients;
  std::vector<std::uint32_t> initial;
};

/// Seeds for dimensions 2..21 of the Joe-Kuo table (dimension 1 is the identity).
const std::vector<SobolSeed>& sobol_seeds();

/// Generating-matrix columns for one dimension from a seed, `m_max` columns.
std::vector<std::uint64_t> sobol_columns(const SobolSeed& seed, int m_max);

PointSet lattice_points(const LatticeGenerator& gen, std::size_t n, int dim);
PointSet digital_points(const DigitalGenerator& gen, std::size_t n, int dim);

/// Tent map b(u) = 1 - 2|u - 1/2| on [0, 1].
double baker(double u);

LatticeGenerator random_shift(const LatticeGenerator& gen, std::uint64_t seed);
DigitalGenerator random_shift(const DigitalGenerator& gen, std::uint64_t seed);

bool is_power_of_two(std::size_t n);

}  // namespace darcygp::qmc
