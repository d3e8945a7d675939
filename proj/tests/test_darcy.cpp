#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "darcygp/darcy.hpp"
#include "darcygp/random_field.hpp"

using namespace darcygp;
using namespace darcygp::darcy;

namespace {

Eigen::VectorXd constant_cells(const Mesh& mesh, double v) {
  return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(mesh.cell_count()), v);
}

std::vector<double> normals(std::mt19937_64& rng, int s) {
  std::normal_distribution<double> normal;
  std::vector<double> z(s);
  for (auto& v : z) v = normal(rng);
  return z;
}

// Max-norm error of the manufactured solution sin(pi x / L) sin(pi y / L) with unit coefficient.
double manufactured_error(int d, LinearSolver solver = LinearSolver::automatic) {
  const Mesh mesh(d, 200.0);
  const double k = std::numbers::pi / mesh.side_length;
  Eigen::VectorXd q(static_cast<Eigen::Index>(mesh.cell_count())), exact(q.size());
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) {
      const double h = std::sin(k * mesh.cell_center(i)) * std::sin(k * mesh.cell_center(j));
      exact[static_cast<Eigen::Index>(mesh.cell(i, j))] = h;
      q[static_cast<Eigen::Index>(mesh.cell(i, j))] = 2.0 * k * k * h;
    }
  SolverOptions opt;
  opt.solver = solver;
  return (solve_head(mesh, constant_cells(mesh, 1.0), q, opt).head - exact).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("forcing places the well rates") {
  const Mesh mesh(8, 200.0);
  const WellConfig wells;
  const double area = mesh.spacing() * mesh.spacing();

  const auto q0 = forcing(mesh, wells, 0.0);
  CHECK((q0.array() != 0.0).count() == 1);
  CHECK(q0.sum() * area == doctest::Approx(wells.injection_rate));

  CHECK(std::abs(forcing(mesh, wells, wells.injection_rate).sum()) <= 1e-18);

  WellConfig doubled = wells;
  doubled.injection_rate *= 2.0;
  CHECK(forcing(mesh, doubled, 0.02) == 2.0 * forcing(mesh, wells, 0.01));

  WellConfig outside = wells;
  outside.extraction = {250.0, 10.0};
  CHECK_THROWS_AS(forcing(mesh, outside, 0.0), std::invalid_argument);
}

TEST_CASE("constant head without sources") {
  for (int d : {4, 8, 16}) {
    const Mesh mesh(d, 200.0);
    SolverOptions opt;
    opt.boundary = BoundaryConditions::dirichlet(2.5);
    const auto p = solve_head(mesh, constant_cells(mesh, 1.0), constant_cells(mesh, 0.0), opt);
    CHECK((p.head.array() - 2.5).abs().maxCoeff() <= 1e-12);
    CHECK(p.interpolate({100.0, 100.0}) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(p.interpolate({0.0, 37.0}) == doctest::Approx(2.5).epsilon(1e-12));
  }
}

TEST_CASE("critical pressure at zero forcing is the boundary head at every resolution") {
  WellConfig wells;
  wells.injection_rate = 0.0;
  SolverOptions opt;
  opt.boundary = BoundaryConditions::dirichlet(-1.25);
  opt.transform = FieldTransform::exp;
  const auto basis = field::build_kl(field::MaternCovariance{}, Mesh(32, 200.0), 3);
  const std::vector<double> z{0.0, 0.0, 0.0};
  for (int d : {8, 16, 32})
    CHECK(critical_pressure(Mesh(d, 200.0), basis, wells, 0.0, z, opt) == doctest::Approx(-1.25).epsilon(1e-12));
}

TEST_CASE("head perturbation is linear in the rates") {
  const Mesh mesh(16, 200.0);
  const auto basis = field::build_kl(field::MaternCovariance{}, mesh, 4);
  const auto perm = field::sample_field(basis, std::vector<double>{0.4, -0.7, 1.2, 0.1});
  SolverOptions opt;
  opt.boundary = BoundaryConditions::dirichlet(3.0);
  auto head = [&](double w, double r) {
    WellConfig wells;
    wells.injection_rate = w;
    return solve_pressure(mesh, wells, perm, r, opt).head;
  };
  const Eigen::VectorXd base = head(0.0, 0.0);
  const Eigen::VectorXd a = head(0.02, 0.005) - base;
  const Eigen::VectorXd b = head(0.01, 0.01) - base;
  const Eigen::VectorXd c = head(0.03, 0.015) - base;
  CHECK((c - a - b).cwiseAbs().maxCoeff() <= 1e-10 * c.cwiseAbs().maxCoeff());
  CHECK((head(0.04, 0.01) - base - 2.0 * a).cwiseAbs().maxCoeff() <= 1e-10 * a.cwiseAbs().maxCoeff());
}

TEST_CASE("manufactured solution converges at second order") {
  const double e16 = manufactured_error(16), e32 = manufactured_error(32), e64 = manufactured_error(64);
  const double order = std::log2(e16 / e64) / 2.0;
  CHECK(order >= 1.8);
  CHECK(order <= 2.2);
  CHECK(e32 < e16);
  CHECK(manufactured_error(32, LinearSolver::iterative) == doctest::Approx(e32).epsilon(1e-6));
}

TEST_CASE("boundary fluxes balance the net source") {
  const Mesh mesh(16, 200.0);
  const WellConfig wells;
  const auto basis = field::build_kl(field::MaternCovariance{}, mesh, 8);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unif(0.0, wells.injection_rate);
  for (int k = 0; k < 10; ++k) {
    const double r = unif(rng);
    const auto p = solve_pressure(mesh, wells, field::sample_field(basis, normals(rng, 8)), r);
    const double net = wells.injection_rate - r;
    CHECK(std::abs(p.boundary_outflow() - net) <= 1e-8 * wells.injection_rate);
    CHECK(p.relative_residual <= 1e-10);
  }

  // Mixed boundary: no flow on the top and bottom.
  SolverOptions opt;
  opt.boundary.top = {BoundarySide::Kind::no_flow, 0.0};
  opt.boundary.bottom = {BoundarySide::Kind::no_flow, 0.0};
  const auto p = solve_pressure(mesh, wells, field::sample_field(basis, normals(rng, 8)), 0.01, opt);
  CHECK(std::abs(p.boundary_outflow() - (wells.injection_rate - 0.01)) <= 1e-8 * wells.injection_rate);
}

TEST_CASE("head is symmetric for a symmetric configuration") {
  const int d = 33;  // odd, so the wells sit at cell centers on the mirror lines
  const Mesh mesh(d, 200.0);
  const WellConfig wells;
  SUBCASE("mirror across the well axis") {
    const auto p = solve_head(mesh, constant_cells(mesh, 1.7), forcing(mesh, wells, 0.01));
    double worst = 0.0;
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i)
        worst = std::max(worst, std::abs(p.head[static_cast<Eigen::Index>(mesh.cell(i, j))] -
                                         p.head[static_cast<Eigen::Index>(mesh.cell(i, d - 1 - j))]));
    CHECK(worst <= 1e-10 * p.head.cwiseAbs().maxCoeff());
  }
  SUBCASE("balanced wells are antisymmetric across the center line") {
    // A coefficient symmetric under x -> L - x.
    Eigen::VectorXd g(static_cast<Eigen::Index>(mesh.cell_count()));
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) g[static_cast<Eigen::Index>(mesh.cell(i, j))] = 1.0 + 0.5 * std::cos(0.3 * (i - 16)) + 0.1 * j;
    const auto p = solve_head(mesh, g, forcing(mesh, wells, wells.injection_rate));
    double worst = 0.0;
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i)
        worst = std::max(worst, std::abs(p.head[static_cast<Eigen::Index>(mesh.cell(i, j))] +
                                         p.head[static_cast<Eigen::Index>(mesh.cell(d - 1 - i, j))]));
    CHECK(worst <= 1e-10 * p.head.cwiseAbs().maxCoeff());
    CHECK(std::abs(p.interpolate(wells.critical)) <= 1e-10 * p.head.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("maximum principle without sources") {
  const Mesh mesh(16, 200.0);
  const auto basis = field::build_kl(field::MaternCovariance{}, mesh, 6);
  std::mt19937_64 rng(3);
  SolverOptions opt;
  opt.boundary.left = {BoundarySide::Kind::dirichlet, 1.0};
  opt.boundary.right = {BoundarySide::Kind::dirichlet, 2.0};
  opt.boundary.bottom = {BoundarySide::Kind::dirichlet, 0.0};
  opt.boundary.top = {BoundarySide::Kind::dirichlet, 0.5};
  WellConfig wells;
  wells.injection_rate = 0.0;
  for (int k = 0; k < 5; ++k) {
    const auto p = solve_pressure(mesh, wells, field::sample_field(basis, normals(rng, 6)), 0.0, opt);
    CHECK(p.head.minCoeff() >= 0.0);
    CHECK(p.head.maxCoeff() <= 2.0);
  }
}

TEST_CASE("critical pressure does not increase with extraction") {
  const Mesh mesh(32, 200.0);
  const WellConfig wells;
  const auto basis = field::build_kl(field::MaternCovariance{}, mesh, 8);
  std::mt19937_64 rng(17);
  for (int k = 0; k < 5; ++k) {
    const auto z = normals(rng, 8);
    double prev = INFINITY;
    for (int i = 0; i <= 8; ++i) {
      const double h = critical_pressure(mesh, basis, wells, wells.injection_rate * i / 8.0, z);
      CHECK(h <= prev);
      prev = h;
    }
  }
}

TEST_CASE("direct and iterative solvers agree") {
  const Mesh mesh(32, 200.0);
  const WellConfig wells;
  const auto basis = field::build_kl(field::MaternCovariance{}, mesh, 8);
  std::mt19937_64 rng(23);
  const auto perm = field::sample_field(basis, normals(rng, 8));
  SolverOptions direct, iterative;
  direct.solver = LinearSolver::direct;
  iterative.solver = LinearSolver::iterative;
  const auto a = solve_pressure(mesh, wells, perm, 0.01, direct);
  const auto b = solve_pressure(mesh, wells, perm, 0.01, iterative);
  CHECK((a.head - b.head).cwiseAbs().maxCoeff() <= 1e-8 * a.head.cwiseAbs().maxCoeff());
  CHECK(b.relative_residual <= 1e-10);
}

TEST_CASE("solver rejects ill-posed input") {
  const Mesh mesh(8, 200.0);
  const WellConfig wells;
  Eigen::VectorXd g = constant_cells(mesh, 1.0);
  g[5] = 0.0;
  CHECK_THROWS_AS(solve_head(mesh, g, forcing(mesh, wells, 0.0)), SolveError);

  SolverOptions sealed;
  sealed.boundary.left.kind = sealed.boundary.right.kind = BoundarySide::Kind::no_flow;
  sealed.boundary.top.kind = sealed.boundary.bottom.kind = BoundarySide::Kind::no_flow;
  CHECK_THROWS_AS(solve_head(mesh, constant_cells(mesh, 1.0), forcing(mesh, wells, 0.0), sealed), SolveError);

  const auto basis = field::build_kl(field::MaternCovariance{}, mesh, 2);
  const auto perm = field::sample_field(basis, std::vector<double>{0.0, 0.0});
  CHECK_THROWS_AS(solve_pressure(mesh, wells, perm, -0.001), std::invalid_argument);
  CHECK_THROWS_AS(solve_pressure(mesh, wells, perm, wells.injection_rate * 1.01), std::invalid_argument);

  SolverOptions identity;
  identity.transform = FieldTransform::identity;
  // The second eigenfunction changes sign, so some cells go negative.
  const auto negative = field::sample_field(basis, std::vector<double>{0.0, 50.0});
  CHECK_THROWS_AS(solve_pressure(mesh, wells, negative, 0.0, identity), SolveError);

  WellConfig clash = wells;
  clash.critical = clash.injection;
  CHECK_THROWS_AS(clash.validate(mesh), std::invalid_argument);
}

TEST_CASE("coefficients average the transformed corner values") {
  const Mesh mesh(2, 10.0);
  const std::vector<double> nodes{0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0};
  const auto id = cell_coefficients(mesh, nodes, FieldTransform::identity);
  CHECK(id[0] == doctest::Approx(2.0));
  CHECK(id[3] == doctest::Approx(6.0));
  const auto ex = cell_coefficients(mesh, nodes, FieldTransform::exp);
  CHECK(ex[0] == doctest::Approx(0.25 * (std::exp(0.0) + std::exp(1.0) + std::exp(3.0) + std::exp(4.0))));
}
