#pragma once

#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "darcygp/mesh.hpp"
#include "darcygp/random_field.hpp"

namespace darcygp::darcy {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Fixed injection rate w at one well, extraction r in [0, w] at the other, and
/// the location where the head is monitored. Coordinates in meters.
struct WellConfig {
  Point injection{50.0, 100.0};
  Point extraction{150.0, 100.0};
  Point critical{100.0, 100.0};
  double injection_rate = 0.031688;  // m^3/s

  void validate(const Mesh& mesh) const;
};

enum class FieldTransform { exp, identity };

struct BoundarySide {
  enum class Kind { dirichlet, no_flow };
  Kind kind = Kind::dirichlet;
  double head = 0.0;
};

struct BoundaryConditions {
  BoundarySide left, right, bottom, top;

  static BoundaryConditions dirichlet(double head) {
    BoundarySide s{BoundarySide::Kind::dirichlet, head};
    return {s, s, s, s};
  }
  [[nodiscard]] bool all_no_flow() const;
};

enum class LinearSolver { automatic, direct, iterative };

struct SolverOptions {
  BoundaryConditions boundary = BoundaryConditions::dirichlet(0.0);
  FieldTransform transform = FieldTransform::exp;
  LinearSolver solver = LinearSolver::automatic;
  int direct_max_d = 128;  // automatic: direct factorization up to this d
  double tolerance = 1e-10;
};

class SolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cell-centered head field from the two-point flux scheme.
struct PressureField {
  Mesh mesh;
  Eigen::VectorXd head;         // cell_count, x-fastest
  Eigen::VectorXd coefficient;  // per-cell G used for the solve
  BoundaryConditions boundary;
  double relative_residual = 0.0;

  /// Bilinear interpolation between cell centers, with boundary values on the
  /// domain edges (Dirichlet head, or the adjacent cell for no-flow sides).
  [[nodiscard]] double interpolate(Point p) const;

  /// Net flux leaving through the boundary faces.
  [[nodiscard]] double boundary_outflow() const;
};

/// Cell index whose closed square contains p (ties go to the higher index,
/// except on the far edges).
std::size_t containing_cell(const Mesh& mesh, Point p);

/// Source density per cell: +w at the injection cell, -r at the extraction
/// cell, each divided by the cell area.
Eigen::VectorXd forcing(const Mesh& mesh, const WellConfig& wells, double r);

/// Node values -> positive per-cell coefficient: transform each node value,
/// then take the arithmetic mean of the four corners.
Eigen::VectorXd cell_coefficients(const Mesh& mesh, std::span<const double> node_values, FieldTransform t);

/// Solves -div(G grad H) = q on the mesh; q is a source density (positive
/// sources raise the head).
PressureField solve_head(const Mesh& mesh, const Eigen::VectorXd& coefficient, const Eigen::VectorXd& source,
                         const SolverOptions& options = {});

/// Head for a permeability realization and extraction rate r. The realization
/// may live on a finer nested mesh; it is restricted to `mesh` first.
PressureField solve_pressure(const Mesh& mesh, const WellConfig& wells, const field::FieldRealization& perm,
                             double r, const SolverOptions& options = {});

/// H^c_{s,d}(r, z): head at the critical location for the first z.size() KL terms on mesh d.
double critical_pressure(const Mesh& mesh, const field::KlBasis& basis, const WellConfig& wells, double r,
                         std::span<const double> z, const SolverOptions& options = {});

}  // namespace darcygp::darcy
