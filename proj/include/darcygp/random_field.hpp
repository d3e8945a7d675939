#pragma once

#include <filesystem>
#include <span>

#include <Eigen/Dense>

#include "darcygp/mesh.hpp"

namespace darcygp::field {

/// Isotropic Matérn covariance, C(r) = v 2^(1-nu)/Gamma(nu) x^nu K_nu(x), x = sqrt(2 nu) r / l.
struct MaternCovariance {
  double variance = 1.0;
  double correlation_length = 50.0;  // meters
  double smoothness = 1.5;

  void validate() const;
  [[nodiscard]] double operator()(double distance) const;
};

/// Trapezoidal quadrature weights of the mesh nodes (sum to L^2).
Eigen::VectorXd node_weights(const Mesh& mesh);

/// Dense node-to-node covariance matrix. Parallel over rows.
Eigen::MatrixXd node_covariance(const MaternCovariance& cov, const Mesh& mesh);

namespace serial {
Eigen::MatrixXd node_covariance(const MaternCovariance& cov, const Mesh& mesh);
}

/// Truncated Karhunen-Loève basis over the nodes of `mesh`.
///
/// Eigenfunctions are orthonormal in the weighted inner product
/// <f, g> = sum_i w_i f_i g_i and eigenvalues are sorted non-increasing.
struct KlBasis {
  Mesh mesh;
  MaternCovariance covariance;
  Eigen::VectorXd eigenvalues;     // length s
  Eigen::MatrixXd eigenfunctions;  // node_count x s
  Eigen::VectorXd weights;         // node_count

  [[nodiscard]] int size() const { return static_cast<int>(eigenvalues.size()); }

  /// The leading `s` terms.
  [[nodiscard]] KlBasis truncated(int s) const;

  /// sum_j lambda_j phi_j phi_j^T over the leading `s` terms.
  [[nodiscard]] Eigen::MatrixXd covariance_reconstruction(int s) const;
};

KlBasis build_kl(const MaternCovariance& cov, const Mesh& mesh, int s);

struct FieldRealization {
  Mesh mesh;
  Eigen::VectorXd values;        // node_count
  Eigen::VectorXd coefficients;  // the standard-normal vector that produced it

  [[nodiscard]] int truncation() const { return static_cast<int>(coefficients.size()); }
};

/// values = sum_j sqrt(lambda_j) phi_j z_j. Requires z.size() == basis.size().
FieldRealization sample_field(const KlBasis& basis, std::span<const double> z);

/// Node values of `field` on a coarser nested mesh.
FieldRealization restrict_to(const FieldRealization& field, const Mesh& coarse);

/// Inverse standard normal CDF. Throws std::domain_error at 0 and 1 (unbounded)
/// and outside (0, 1).
double uniform_to_gaussian(double u);

/// Standard normal CDF.
double normal_cdf(double x);

void save_kl_basis(const KlBasis& basis, const std::filesystem::path& path);
KlBasis load_kl_basis(const std::filesystem::path& path);

}  // namespace darcygp::field
