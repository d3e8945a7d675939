#include "darcygp/qmc.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace darcygp::qmc {

namespace {

// lattice-32001-1024-1048575.3600 (Cools, Kuo, Nuyens), first 32 components.
constexpr std::uint64_t kDefaultLattice[] = {
    1,      182667, 469891, 498753, 110745, 446247, 250185, 118627, 245333, 283199, 408519,
    391023, 246327, 126539, 399185, 461527, 300343, 69681,  516695, 436179, 106383, 238523,
    413283, 70841,  47719,  300129, 113029, 123925, 410745, 211325, 17489,  511893};

std::vector<std::string> data_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

void check_capacity(std::size_t n, int m_max, int dim, int available) {
  if (dim < 1 || dim > available)
    throw std::out_of_range("requested dimension " + std::to_string(dim) + " but generator has " +
                            std::to_string(available));
  if (n > (std::size_t{1} << m_max))
    throw std::out_of_range("requested " + std::to_string(n) + " points but generator supports 2^" +
                            std::to_string(m_max));
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

LatticeGenerator::LatticeGenerator()
    : LatticeGenerator(std::vector<std::uint64_t>(std::begin(kDefaultLattice), std::end(kDefaultLattice)),
                       20) {}

LatticeGenerator::LatticeGenerator(std::vector<std::uint64_t> generating_vector, int max_log2_points,
                                   std::optional<std::vector<double>> shift)
    : z_(std::move(generating_vector)), m_max_(max_log2_points), shift_(std::move(shift)) {
  if (z_.empty()) throw std::invalid_argument("generating vector must have at least one entry");
  if (m_max_ < 1 || m_max_ > 31) throw std::invalid_argument("max_log2_points must lie in [1, 31]");
  for (auto zj : z_) {
    if (zj % 2 == 0) throw std::invalid_argument("generating vector entries must be odd");
    if (zj >= (std::uint64_t{1} << 32)) throw std::invalid_argument("generating vector entry too large");
  }
  if (shift_) {
    if (shift_->size() != z_.size()) throw std::invalid_argument("shift length must match dimension");
    for (double s : *shift_)
      if (!(s >= 0.0 && s < 1.0)) throw std::invalid_argument("shift entries must lie in [0, 1)");
  }
}

LatticeGenerator LatticeGenerator::from_file(const std::filesystem::path& path, int max_log2_points) {
  std::vector<std::uint64_t> z;
  for (const auto& line : data_lines(path)) z.push_back(std::stoull(line));
  return LatticeGenerator(std::move(z), max_log2_points);
}

LatticeGenerator LatticeGenerator::truncated(int dim) const {
  if (dim < 1 || dim > dimension()) throw std::out_of_range("cannot truncate lattice generator");
  std::vector<std::uint64_t> z(z_.begin(), z_.begin() + dim);
  std::optional<std::vector<double>> shift;
  if (shift_) shift.emplace(shift_->begin(), shift_->begin() + dim);
  return LatticeGenerator(std::move(z), m_max_, std::move(shift));
}

LatticeGenerator LatticeGenerator::with_shift(std::optional<std::vector<double>> shift) const {
  return LatticeGenerator(z_, m_max_, std::move(shift));
}

std::vector<std::uint64_t> sobol_columns(const SobolSeed& seed, int m_max) {
  const int s = seed.degree;
  std::vector<std::uint64_t> m(static_cast<std::size_t>(std::max(m_max, s)) + 1, 0);
  for (int k = 1; k <= s; ++k) m[k] = seed.initial.at(k - 1);
  for (int k = s + 1; k <= m_max; ++k) {
    std::uint64_t v = m[k - s] ^ (m[k - s] << s);
    for (int j = 1; j < s; ++j) {
      if ((seed.coefficients >> (s - 1 - j)) & 1U) v ^= m[k - j] << j;
    }
    m[k] = v;
  }
  std::vector<std::uint64_t> cols(m_max);
  for (int k = 1; k <= m_max; ++k) cols[k - 1] = m[k] << (m_max - k);
  return cols;
}

const std::vector<SobolSeed>& sobol_seeds() {
  static const std::vector<SobolSeed> seeds = {
      {1, 0, {1}},
      {2, 1, {1, 3}},
      {3, 1, {1, 3, 1}},
      {3, 2, {1, 1, 1}},
      {4, 1, {1, 1, 3, 3}},
      {4, 4, {1, 3, 5, 13}},
      {5, 2, {1, 1, 5, 5, 17}},
      {5, 4, {1, 1, 5, 5, 5}},
      {5, 7, {1, 1, 7, 11, 19}},
      {5, 11, {1, 1, 5, 1, 1}},
      {5, 13, {1, 1, 1, 3, 11}},
      {5, 14, {1, 3, 5, 5, 31}},
      {6, 1, {1, 3, 3, 9, 7, 49}},
      {6, 13, {1, 1, 1, 15, 21, 21}},
      {6, 16, {1, 3, 1, 13, 27, 49}},
      {6, 19, {1, 1, 1, 15, 7, 5}},
      {6, 22, {1, 3, 1, 15, 13, 25}},
      {6, 25, {1, 1, 5, 5, 19, 61}},
      {7, 1, {1, 3, 7, 11, 23, 15, 103}},
      {7, 4, {1, 3, 7, 13, 13, 15, 69}},
  };
  return seeds;
}

DigitalGenerator::DigitalGenerator() : m_max_(32) {
  std::vector<std::uint64_t> identity(m_max_);
  for (int k = 0; k < m_max_; ++k) identity[k] = std::uint64_t{1} << (m_max_ - 1 - k);
  columns_.push_back(std::move(identity));
  for (const auto& seed : sobol_seeds()) columns_.push_back(sobol_columns(seed, m_max_));
}

DigitalGenerator::DigitalGenerator(std::vector<std::vector<std::uint64_t>> columns, int max_log2_points,
                                   std::optional<std::vector<std::uint64_t>> digital_shift)
    : columns_(std::move(columns)), m_max_(max_log2_points), shift_(std::move(digital_shift)) {
  if (columns_.empty()) throw std::invalid_argument("digital generator needs at least one dimension");
  if (m_max_ < 1 || m_max_ > 52) throw std::invalid_argument("max_log2_points must lie in [1, 52]");
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    const auto& cols = columns_[j];
    if (static_cast<int>(cols.size()) != m_max_)
      throw std::invalid_argument("dimension " + std::to_string(j) + " must have max_log2_points columns");
    for (int k = 0; k < m_max_; ++k) {
      // Column k has rows 0..k populated and a one on the diagonal (row k).
      const std::uint64_t diag = std::uint64_t{1} << (m_max_ - 1 - k);
      if (!(cols[k] & diag) || (cols[k] & (diag - 1)) || (cols[k] >> m_max_) != 0)
        throw std::invalid_argument("generating matrix of dimension " + std::to_string(j) +
                                    " is not unit upper-triangular");
    }
  }
  if (shift_) {
    if (shift_->size() != columns_.size()) throw std::invalid_argument("digital shift length must match dimension");
    for (auto s : *shift_)
      if ((s >> m_max_) != 0) throw std::invalid_argument("digital shift exceeds precision");
  }
}

DigitalGenerator DigitalGenerator::from_file(const std::filesystem::path& path, int max_log2_points) {
  std::vector<std::vector<std::uint64_t>> columns;
  for (const auto& line : data_lines(path)) {
    std::istringstream row(line);
    std::vector<std::uint64_t> cols;
    std::uint64_t v;
    while (row >> v) cols.push_back(v);
    columns.push_back(std::move(cols));
  }
  return DigitalGenerator(std::move(columns), max_log2_points);
}

DigitalGenerator DigitalGenerator::with_shift(std::optional<std::vector<std::uint64_t>> shift) const {
  return DigitalGenerator(columns_, m_max_, std::move(shift));
}

PointSet lattice_points(const LatticeGenerator& gen, std::size_t n, int dim) {
  check_capacity(n, gen.max_log2_points(), dim, gen.dimension());
  PointSet x(static_cast<Eigen::Index>(n), dim);
  const auto& z = gen.generating_vector();
  const auto& shift = gen.shift();
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) {
      double v = static_cast<double>((i * z[j]) % n) * inv_n;
      if (shift) {
        v += (*shift)[j];
        v -= std::floor(v);
      }
      x(static_cast<Eigen::Index>(i), j) = v;
    }
  }
  return x;
}

PointSet digital_points(const DigitalGenerator& gen, std::size_t n, int dim) {
  check_capacity(n, gen.max_log2_points(), dim, gen.dimension());
  PointSet x(static_cast<Eigen::Index>(n), dim);
  const double scale = std::ldexp(1.0, -gen.max_log2_points());
  for (int j = 0; j < dim; ++j) {
    const auto& cols = gen.columns()[j];
    const std::uint64_t shift = gen.digital_shift() ? (*gen.digital_shift())[j] : 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t acc = 0;
      std::size_t bits = i;
      for (int k = 0; bits != 0; ++k, bits >>= 1)
        if (bits & 1U) acc ^= cols[k];
      x(static_cast<Eigen::Index>(i), j) = static_cast<double>(acc ^ shift) * scale;
    }
  }
  return x;
}

double baker(double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("baker transform requires u in [0, 1]");
  return 1.0 - 2.0 * std::abs(u - 0.5);
}

LatticeGenerator random_shift(const LatticeGenerator& gen, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> shift(gen.dimension());
  for (auto& s : shift) {
    s = unif(rng);
    if (s >= 1.0) s = 0.0;
  }
  return gen.with_shift(std::move(shift));
}

DigitalGenerator random_shift(const DigitalGenerator& gen, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::uint64_t mask =
      gen.max_log2_points() == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << gen.max_log2_points()) - 1;
  std::vector<std::uint64_t> shift(gen.dimension());
  for (auto& s : shift) s = rng() & mask;
  return gen.with_shift(std::move(shift));
}

}  // namespace darcygp::qmc
