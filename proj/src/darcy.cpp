#include "darcygp/darcy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace darcygp::darcy {

namespace {

std::string describe(Point p) {
  std::ostringstream s;
  s << '(' << p.x << ", " << p.y << ')';
  return s.str();
}

double ghost_value(const BoundarySide& side, double interior) {
  return side.kind == BoundarySide::Kind::dirichlet ? side.head : interior;
}

}  // namespace

bool BoundaryConditions::all_no_flow() const {
  for (const auto* s : {&left, &right, &bottom, &top})
    if (s->kind == BoundarySide::Kind::dirichlet) return false;
  return true;
}

void WellConfig::validate(const Mesh& mesh) const {
  for (auto [name, p] : {std::pair{"injection", injection}, {"extraction", extraction}, {"critical", critical}})
    if (!mesh.contains(p.x, p.y))
      throw std::invalid_argument(std::string(name) + " location " + describe(p) + " lies outside the domain");
  if (injection == extraction || injection == critical || extraction == critical)
    throw std::invalid_argument("injection, extraction and critical locations must be distinct");
  if (!(injection_rate >= 0.0)) throw std::invalid_argument("injection rate must be non-negative");
}

std::size_t containing_cell(const Mesh& mesh, Point p) {
  if (!mesh.contains(p.x, p.y)) throw std::invalid_argument("point " + describe(p) + " lies outside the domain");
  const double h = mesh.spacing();
  const int i = std::min(static_cast<int>(std::floor(p.x / h)), mesh.d - 1);
  const int j = std::min(static_cast<int>(std::floor(p.y / h)), mesh.d - 1);
  return mesh.cell(i, j);
}

Eigen::VectorXd forcing(const Mesh& mesh, const WellConfig& wells, double r) {
  const double area = mesh.spacing() * mesh.spacing();
  Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.cell_count()));
  q[static_cast<Eigen::Index>(containing_cell(mesh, wells.injection))] += wells.injection_rate / area;
  q[static_cast<Eigen::Index>(containing_cell(mesh, wells.extraction))] -= r / area;
  return q;
}

Eigen::VectorXd cell_coefficients(const Mesh& mesh, std::span<const double> node_values, FieldTransform t) {
  if (node_values.size() != mesh.node_count())
    throw std::invalid_argument("permeability must have one value per mesh node");
  auto g = [&](int i, int j) {
    const double v = node_values[mesh.node(i, j)];
    return t == FieldTransform::exp ? std::exp(v) : v;
  };
  Eigen::VectorXd c(static_cast<Eigen::Index>(mesh.cell_count()));
  for (int j = 0; j < mesh.d; ++j)
    for (int i = 0; i < mesh.d; ++i)
      c[static_cast<Eigen::Index>(mesh.cell(i, j))] = 0.25 * (g(i, j) + g(i + 1, j) + g(i, j + 1) + g(i + 1, j + 1));
  return c;
}

PressureField solve_head(const Mesh& mesh, const Eigen::VectorXd& coefficient, const Eigen::VectorXd& source,
                         const SolverOptions& options) {
  mesh.validate();
  const int d = mesh.d;
  const auto cells = static_cast<Eigen::Index>(mesh.cell_count());
  if (coefficient.size() != cells || source.size() != cells)
    throw std::invalid_argument("coefficient and source need one entry per cell");
  for (Eigen::Index k = 0; k < cells; ++k)
    if (!(coefficient[k] > 0.0) || !std::isfinite(coefficient[k]))
      throw SolveError("coefficient must be strictly positive and finite (cell " + std::to_string(k) + ")");
  const auto& bc = options.boundary;
  if (bc.all_no_flow()) throw SolveError("all-no-flow boundary makes the system singular");

  const double area = mesh.spacing() * mesh.spacing();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(cells) * 5);
  Eigen::VectorXd rhs = source * area;

  auto face = [&](int i, int j, int ni, int nj) {
    const auto a = static_cast<Eigen::Index>(mesh.cell(i, j));
    const auto b = static_cast<Eigen::Index>(mesh.cell(ni, nj));
    const double ga = coefficient[a], gb = coefficient[b];
    const double t = 2.0 * ga * gb / (ga + gb);
    triplets.emplace_back(a, a, t);
    triplets.emplace_back(b, b, t);
    triplets.emplace_back(a, b, -t);
    triplets.emplace_back(b, a, -t);
  };
  auto boundary_face = [&](int i, int j, const BoundarySide& side) {
    if (side.kind != BoundarySide::Kind::dirichlet) return;
    const auto a = static_cast<Eigen::Index>(mesh.cell(i, j));
    const double t = 2.0 * coefficient[a];  // half-cell distance to the boundary
    triplets.emplace_back(a, a, t);
    rhs[a] += t * side.head;
  };

  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < d; ++i) {
      if (i + 1 < d) face(i, j, i + 1, j);
      if (j + 1 < d) face(i, j, i, j + 1);
      if (i == 0) boundary_face(i, j, bc.left);
      if (i == d - 1) boundary_face(i, j, bc.right);
      if (j == 0) boundary_face(i, j, bc.bottom);
      if (j == d - 1) boundary_face(i, j, bc.top);
    }
  }
  Eigen::SparseMatrix<double> a(cells, cells);
  a.setFromTriplets(triplets.begin(), triplets.end());

  const bool direct = options.solver == LinearSolver::direct ||
                      (options.solver == LinearSolver::automatic && d <= options.direct_max_d);
  Eigen::VectorXd x;
  if (direct) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
    if (ldlt.info() != Eigen::Success) throw SolveError("sparse LDLT factorization failed");
    x = ldlt.solve(rhs);
    // One step of iterative refinement keeps the residual at round-off level.
    x += ldlt.solve(rhs - a * x);
  } else {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg(a);
    cg.setTolerance(options.tolerance * 0.5);
    cg.setMaxIterations(20 * static_cast<Eigen::Index>(cells));
    x = cg.solve(rhs);
    if (cg.info() != Eigen::Success) throw SolveError("conjugate gradient did not converge");
  }

  const double rhs_norm = rhs.norm();
  const double res = (a * x - rhs).norm();
  const double rel = rhs_norm > 0.0 ? res / rhs_norm : res;
  if (!x.allFinite() || rel > options.tolerance) {
    std::ostringstream msg;
    msg << "linear solve residual " << rel << " exceeds tolerance " << options.tolerance;
    throw SolveError(msg.str());
  }
  return PressureField{mesh, std::move(x), coefficient, bc, rel};
}

double PressureField::interpolate(Point p) const {
  if (!mesh.contains(p.x, p.y)) throw std::invalid_argument("point " + describe(p) + " lies outside the domain");
  const int d = mesh.d;
  // Tensor grid: 0, cell centers..., L  (d + 2 coordinates per axis).
  std::vector<double> coords(d + 2);
  coords[0] = 0.0;
  for (int i = 0; i < d; ++i) coords[i + 1] = mesh.cell_center(i);
  coords[d + 1] = mesh.side_length;

  auto bracket = [&](double v) {
    auto it = std::upper_bound(coords.begin(), coords.end(), v);
    int k = static_cast<int>(it - coords.begin()) - 1;
    return std::clamp(k, 0, d);
  };
  auto value = [&](int a, int b) {
    const int ci = std::clamp(a - 1, 0, d - 1);
    const int cj = std::clamp(b - 1, 0, d - 1);
    const double interior = head[static_cast<Eigen::Index>(mesh.cell(ci, cj))];
    const bool xb = a == 0 || a == d + 1;
    const bool yb = b == 0 || b == d + 1;
    if (!xb && !yb) return interior;
    const BoundarySide& xs = a == 0 ? boundary.left : boundary.right;
    const BoundarySide& ys = b == 0 ? boundary.bottom : boundary.top;
    if (xb && !yb) return ghost_value(xs, interior);
    if (yb && !xb) return ghost_value(ys, interior);
    const bool xd = xs.kind == BoundarySide::Kind::dirichlet;
    const bool yd = ys.kind == BoundarySide::Kind::dirichlet;
    if (xd && yd) return 0.5 * (xs.head + ys.head);
    if (xd) return xs.head;
    if (yd) return ys.head;
    return interior;
  };

  const int a = bracket(p.x), b = bracket(p.y);
  const double tx = (p.x - coords[a]) / (coords[a + 1] - coords[a]);
  const double ty = (p.y - coords[b]) / (coords[b + 1] - coords[b]);
  return (1 - tx) * (1 - ty) * value(a, b) + tx * (1 - ty) * value(a + 1, b) + (1 - tx) * ty * value(a, b + 1) +
         tx * ty * value(a + 1, b + 1);
}

double PressureField::boundary_outflow() const {
  const int d = mesh.d;
  double flux = 0.0;
  auto add = [&](int i, int j, const BoundarySide& side) {
    if (side.kind != BoundarySide::Kind::dirichlet) return;
    const auto c = static_cast<Eigen::Index>(mesh.cell(i, j));
    flux += 2.0 * coefficient[c] * (head[c] - side.head);
  };
  for (int k = 0; k < d; ++k) {
    add(0, k, boundary.left);
    add(d - 1, k, boundary.right);
    add(k, 0, boundary.bottom);
    add(k, d - 1, boundary.top);
  }
  return flux;
}

PressureField solve_pressure(const Mesh& mesh, const WellConfig& wells, const field::FieldRealization& perm,
                             double r, const SolverOptions& options) {
  wells.validate(mesh);
  if (!(r >= 0.0 && r <= wells.injection_rate))
    throw std::invalid_argument("extraction rate must lie in [0, w]");
  const auto local = field::restrict_to(perm, mesh);
  const auto coeff = cell_coefficients(mesh, std::span(local.values.data(), local.values.size()), options.transform);
  return solve_head(mesh, coeff, forcing(mesh, wells, r), options);
}

double critical_pressure(const Mesh& mesh, const field::KlBasis& basis, const WellConfig& wells, double r,
                         std::span<const double> z, const SolverOptions& options) {
  const auto realization = field::sample_field(basis.truncated(static_cast<int>(z.size())), z);
  return solve_pressure(mesh, wells, realization, r, options).interpolate(wells.critical);
}

}  // namespace darcygp::darcy
