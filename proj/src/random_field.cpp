#include "darcygp/random_field.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>
#include <nlohmann/json.hpp>

namespace darcygp::field {

void MaternCovariance::validate() const {
  if (!(variance >= 0.0)) throw std::invalid_argument("Matérn variance must be non-negative");
  if (!(correlation_length > 0.0)) throw std::invalid_argument("Matérn correlation length must be positive");
  if (!(smoothness > 0.0)) throw std::invalid_argument("Matérn smoothness must be positive");
}

double MaternCovariance::operator()(double distance) const {
  if (distance <= 0.0) return variance;
  const double nu = smoothness;
  const double x = std::sqrt(2.0 * nu) * distance / correlation_length;
  if (nu == 0.5) return variance * std::exp(-x);
  if (nu == 1.5) return variance * (1.0 + x) * std::exp(-x);
  if (nu == 2.5) return variance * (1.0 + x + x * x / 3.0) * std::exp(-x);
  if (x > 700.0) return 0.0;
  return variance * std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(x, nu) * std::cyl_bessel_k(nu, x);
}

Eigen::VectorXd node_weights(const Mesh& mesh) {
  const int np = mesh.nodes_per_axis();
  const double h2 = mesh.spacing() * mesh.spacing();
  Eigen::VectorXd w(mesh.node_count());
  for (int j = 0; j < np; ++j) {
    const double wy = (j == 0 || j == mesh.d) ? 0.5 : 1.0;
    for (int i = 0; i < np; ++i) {
      const double wx = (i == 0 || i == mesh.d) ? 0.5 : 1.0;
      w[mesh.node(i, j)] = wx * wy * h2;
    }
  }
  return w;
}

namespace {

inline double node_distance(const Mesh& mesh, std::size_t a, std::size_t b) {
  const int np = mesh.nodes_per_axis();
  const double dx = (static_cast<int>(a % np) - static_cast<int>(b % np)) * mesh.spacing();
  const double dy = (static_cast<int>(a / np) - static_cast<int>(b / np)) * mesh.spacing();
  return std::hypot(dx, dy);
}

}  // namespace

Eigen::MatrixXd node_covariance(const MaternCovariance& cov, const Mesh& mesh) {
  cov.validate();
  const auto n = static_cast<Eigen::Index>(mesh.node_count());
  Eigen::MatrixXd c(n, n);
#pragma omp parallel for schedule(dynamic, 16)
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index a = b; a < n; ++a) {
      c(a, b) = cov(node_distance(mesh, static_cast<std::size_t>(a), static_cast<std::size_t>(b)));
    }
  }
  c.triangularView<Eigen::StrictlyUpper>() = c.transpose().triangularView<Eigen::StrictlyUpper>();
  return c;
}

Eigen::MatrixXd serial::node_covariance(const MaternCovariance& cov, const Mesh& mesh) {
  cov.validate();
  const auto n = static_cast<Eigen::Index>(mesh.node_count());
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index b = 0; b < n; ++b)
    for (Eigen::Index a = 0; a < n; ++a)
      c(a, b) = cov(node_distance(mesh, static_cast<std::size_t>(a), static_cast<std::size_t>(b)));
  return c;
}

KlBasis KlBasis::truncated(int s) const {
  if (s < 0 || s > size()) throw std::out_of_range("cannot truncate KL basis to " + std::to_string(s));
  return KlBasis{mesh, covariance, eigenvalues.head(s), eigenfunctions.leftCols(s), weights};
}

Eigen::MatrixXd KlBasis::covariance_reconstruction(int s) const {
  if (s < 0 || s > size()) throw std::out_of_range("reconstruction rank exceeds basis size");
  const auto phi = eigenfunctions.leftCols(s);
  return phi * eigenvalues.head(s).asDiagonal() * phi.transpose();
}

KlBasis build_kl(const MaternCovariance& cov, const Mesh& mesh, int s) {
  mesh.validate();
  const auto nodes = static_cast<int>(mesh.node_count());
  if (s < 1 || s > nodes)
    throw std::invalid_argument("KL truncation must lie in [1, " + std::to_string(nodes) + "]");

  const Eigen::VectorXd w = node_weights(mesh);
  const Eigen::VectorXd sqrt_w = w.cwiseSqrt();
  // Symmetric form of the weighted eigenproblem C W phi = lambda phi.
  Eigen::MatrixXd a = sqrt_w.asDiagonal() * node_covariance(cov, mesh) * sqrt_w.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  if (eig.info() != Eigen::Success) throw std::runtime_error("KL eigendecomposition failed");

  const Eigen::VectorXd& lam = eig.eigenvalues();  // ascending
  const double most_negative = lam[0];
  const double tol = 1e-9 * std::max(lam[nodes - 1], std::numeric_limits<double>::min());
  if (most_negative < -tol) {
    std::ostringstream msg;
    msg << "covariance matrix is not positive semi-definite: most negative eigenvalue " << most_negative;
    throw std::runtime_error(msg.str());
  }

  KlBasis basis;
  basis.mesh = mesh;
  basis.covariance = cov;
  basis.weights = w;
  basis.eigenvalues.resize(s);
  basis.eigenfunctions.resize(nodes, s);
  for (int k = 0; k < s; ++k) {
    const int src = nodes - 1 - k;
    basis.eigenvalues[k] = std::max(lam[src], 0.0);
    basis.eigenfunctions.col(k) = eig.eigenvectors().col(src).cwiseQuotient(sqrt_w);
  }
  return basis;
}

FieldRealization sample_field(const KlBasis& basis, std::span<const double> z) {
  if (static_cast<int>(z.size()) != basis.size())
    throw std::invalid_argument("coefficient vector has length " + std::to_string(z.size()) +
                                " but basis has " + std::to_string(basis.size()) + " terms");
  FieldRealization out;
  out.mesh = basis.mesh;
  out.coefficients = Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
  const Eigen::VectorXd scaled = basis.eigenvalues.cwiseSqrt().cwiseProduct(out.coefficients);
  out.values = basis.eigenfunctions * scaled;
  return out;
}

FieldRealization restrict_to(const FieldRealization& field, const Mesh& coarse) {
  if (field.mesh == coarse) return field;
  if (!field.mesh.refines(coarse))
    throw std::invalid_argument("mesh d=" + std::to_string(coarse.d) + " is not nested in d=" +
                                std::to_string(field.mesh.d));
  const int stride = field.mesh.d / coarse.d;
  FieldRealization out;
  out.mesh = coarse;
  out.coefficients = field.coefficients;
  out.values.resize(coarse.node_count());
  for (int j = 0; j <= coarse.d; ++j)
    for (int i = 0; i <= coarse.d; ++i)
      out.values[coarse.node(i, j)] = field.values[field.mesh.node(i * stride, j * stride)];
  return out;
}

double uniform_to_gaussian(double u) {
  if (u == 0.0 || u == 1.0) throw std::domain_error("inverse normal CDF is unbounded at 0 and 1");
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("inverse normal CDF requires u in (0, 1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

void save_kl_basis(const KlBasis& basis, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "darcygp.kl_basis";
  j["version"] = 1;
  j["mesh"] = {{"d", basis.mesh.d}, {"side_length", basis.mesh.side_length}};
  j["covariance"] = {{"variance", basis.covariance.variance},
                     {"correlation_length", basis.covariance.correlation_length},
                     {"smoothness", basis.covariance.smoothness}};
  j["s"] = basis.size();
  j["eigenvalues"] = std::vector<double>(basis.eigenvalues.begin(), basis.eigenvalues.end());
  j["weights"] = std::vector<double>(basis.weights.begin(), basis.weights.end());
  j["eigenfunctions"] = std::vector<double>(basis.eigenfunctions.data(),
                                            basis.eigenfunctions.data() + basis.eigenfunctions.size());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << '\n';
}

KlBasis load_kl_basis(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto j = nlohmann::json::parse(in);
  if (j.value("format", "") != "darcygp.kl_basis" || j.value("version", 0) != 1)
    throw std::runtime_error(path.string() + " is not a version-1 KL basis file");
  KlBasis b;
  b.mesh = Mesh(j["mesh"]["d"].get<int>(), j["mesh"]["side_length"].get<double>());
  b.covariance = {j["covariance"]["variance"], j["covariance"]["correlation_length"],
                  j["covariance"]["smoothness"]};
  const int s = j["s"];
  const auto lam = j["eigenvalues"].get<std::vector<double>>();
  const auto w = j["weights"].get<std::vector<double>>();
  const auto phi = j["eigenfunctions"].get<std::vector<double>>();
  const auto nodes = static_cast<Eigen::Index>(b.mesh.node_count());
  if (static_cast<int>(lam.size()) != s || static_cast<Eigen::Index>(w.size()) != nodes ||
      static_cast<Eigen::Index>(phi.size()) != nodes * s)
    throw std::runtime_error(path.string() + ": inconsistent array sizes");
  b.eigenvalues = Eigen::Map<const Eigen::VectorXd>(lam.data(), s);
  b.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), nodes);
  b.eigenfunctions = Eigen::Map<const Eigen::MatrixXd>(phi.data(), nodes, s);
  return b;
}

}  // namespace darcygp::field
