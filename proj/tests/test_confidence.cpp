#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "darcygp/confidence.hpp"
#include "darcygp/random_field.hpp"

using namespace darcygp;
using namespace darcygp::confidence;

namespace {

constexpr int kS = 3;
const SurrogateDomainMap kMap{0.031688, kS, true};

// Surrogate of a head that falls with extraction and varies with the field coefficients.
fastgp::FastGpModel synthetic_model(bool optimize = false) {
  const auto gen = qmc::LatticeGenerator().truncated(1 + kS);
  const std::size_t n = 512;
  const auto u = qmc::lattice_points(gen, n, 1 + kS);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double r = kMap.rate(u(i, 0));
    double v = 1.0 - 20.0 * r;
    for (int j = 1; j <= kS; ++j) v += 0.2 * kMap.coefficient(u(i, j)) / j;
    y[i] = v;
  }
  if (optimize) return fastgp::fit(gen, n, y, 1e-4, true);
  return fastgp::FastGpModel(gen, n, y, fastgp::PeriodicKernel(4, {0.5, 0.3, 0.2, 0.1}, 1.0), 1e-4);
}

ConfidenceOptions options(std::size_t nodes = 1024, int shifts = 8) {
  ConfidenceOptions o;
  o.nodes = nodes;
  o.shifts = shifts;
  o.seed = 17;
  return o;
}

}  // namespace

TEST_CASE("domain map") {
  CHECK(kMap.dimension() == 1 + kS);
  for (double r : {0.0, 0.004, 0.0158, 0.031688}) {
    CHECK(kMap.rate(kMap.rate_coordinate(r)) == doctest::Approx(r).epsilon(1e-15));
    const SurrogateDomainMap plain{0.031688, kS, false};
    CHECK(plain.rate(plain.rate_coordinate(r)) == doctest::Approx(r).epsilon(1e-15));
  }
  CHECK(kMap.rate_coordinate(0.031688) == 0.5);
  CHECK_THROWS_AS((void)kMap.rate_coordinate(-1e-9), std::out_of_range);
  CHECK_THROWS_AS((void)kMap.rate_coordinate(0.04), std::out_of_range);
  CHECK(std::isfinite(kMap.coefficient(0.0)));
  CHECK(kMap.coefficient(0.0) == doctest::Approx(field::uniform_to_gaussian(kQuantileClamp)));
  CHECK(kMap.coefficient(0.25) == 0.0);
}

TEST_CASE("confidence term") {
  CHECK(confidence_term(1.0, 0.0, 0.0) == 1.0);
  CHECK(confidence_term(0.0, 0.0, 0.0) == 1.0);
  CHECK(confidence_term(-1.0, 0.0, 0.0) == 0.0);
  CHECK(confidence_term(1.0, 0.0, 1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-15));
}

TEST_CASE("constant posterior gives the closed form") {
  // With no data the posterior is the prior: mean 0 and a constant variance.
  const fastgp::PeriodicKernel k(4, {0.4, 0.3, 0.2, 0.1}, 0.7);
  const fastgp::FastGpModel prior(qmc::LatticeGenerator(), 0, Eigen::VectorXd(), k, 0.0);
  const double sd = std::sqrt(k.diagonal());
  for (std::size_t nodes : {1UL, 64UL, 4096UL})
    for (double h : {-2.0, 0.0, 0.3, 1.7}) {
      const auto res = expected_confidence(prior, kMap, 0.01, h, options(nodes, 2));
      CHECK(std::abs(res.estimate - field::normal_cdf(h / sd)) <= 1e-12);
      CHECK(res.standard_error <= 1e-15);
    }
}

TEST_CASE("estimate saturates far above the posterior") {
  const auto model = synthetic_model();
  const auto post = node_posterior(model, kMap, 0.01, options());
  const double h = (post.mean + 10.0 * post.sd).maxCoeff();
  CHECK(evaluate(post, h).estimate >= 1.0 - 1e-12);
  const double low = (post.mean - 10.0 * post.sd).minCoeff();
  CHECK(evaluate(post, low).estimate <= 1e-12);
}

TEST_CASE("curve is monotone in the threshold and bounded") {
  const auto model = synthetic_model();
  const auto rates = rate_grid(kMap.injection_rate, 9);
  const auto hs = linspace(-1.0, 2.0, 31);
  const auto hm = confidence_heatmap(model, kMap, rates, hs, options(256, 4));
  CHECK(hm.estimate.minCoeff() >= 0.0);
  CHECK(hm.estimate.maxCoeff() <= 1.0);
  for (Eigen::Index i = 0; i < hm.estimate.rows(); ++i)
    for (Eigen::Index j = 1; j < hm.estimate.cols(); ++j) CHECK(hm.estimate(i, j) >= hm.estimate(i, j - 1));
  // Each threshold column is the curve at that threshold.
  for (std::size_t j : {0UL, 11UL, 30UL}) {
    const auto curve = confidence_curve(model, kMap, rates, hs[j], options(256, 4));
    for (std::size_t i = 0; i < rates.size(); ++i) {
      CHECK(curve[i].estimate == hm.estimate(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      CHECK(curve[i].standard_error == hm.standard_error(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
}

TEST_CASE("confidence rises with extraction on a falling head") {
  const auto model = synthetic_model();
  const auto curve = confidence_curve(model, kMap, rate_grid(kMap.injection_rate, 17), 0.8, options(512, 4));
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].estimate >= curve[i - 1].estimate - 0.02);
  CHECK(curve.back().estimate > curve.front().estimate + 0.1);
}

TEST_CASE("single-point grid reduces to one estimate") {
  const auto model = synthetic_model();
  const std::vector<double> grid{0.02};
  const auto curve = confidence_curve(model, kMap, grid, 0.6, options());
  REQUIRE(curve.size() == 1);
  CHECK(curve[0].estimate == expected_confidence(model, kMap, 0.02, 0.6, options()).estimate);
  CHECK_THROWS_AS(confidence_curve(model, kMap, std::vector<double>{}, 0.6, options()), std::invalid_argument);
  CHECK_THROWS_AS(confidence_heatmap(model, kMap, grid, std::vector<double>{}, options()), std::invalid_argument);
  CHECK_THROWS_AS(confidence_heatmap(model, kMap, std::vector<double>{0.02, 0.01}, grid, options()),
                  std::invalid_argument);
}

TEST_CASE("estimator rejects bad input") {
  const auto model = synthetic_model();
  CHECK_THROWS_AS(expected_confidence(model, kMap, -0.001, 0.5, options()), std::out_of_range);
  CHECK_THROWS_AS(expected_confidence(model, kMap, 0.05, 0.5, options()), std::out_of_range);
  CHECK_THROWS_AS(expected_confidence(model, kMap, 0.01, 0.5, options(1000)), std::invalid_argument);
  CHECK_THROWS_AS(expected_confidence(model, SurrogateDomainMap{0.031688, 5, true}, 0.01, 0.5, options()),
                  std::invalid_argument);
}

TEST_CASE("estimate does not depend on node order") {
  const auto model = synthetic_model();
  auto post = node_posterior(model, kMap, 0.012, options(512, 2));
  const auto base = evaluate(post, 0.7);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(post.mean.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(1));
  NodePosterior shuffled = post;
  for (Eigen::Index k = 0; k < post.mean.rows(); ++k)
    for (std::size_t i = 0; i < perm.size(); ++i) {
      shuffled.mean(k, static_cast<Eigen::Index>(i)) = post.mean(k, perm[i]);
      shuffled.sd(k, static_cast<Eigen::Index>(i)) = post.sd(k, perm[i]);
    }
  CHECK(evaluate(shuffled, 0.7).estimate == doctest::Approx(base.estimate).epsilon(1e-14));
}

TEST_CASE("replicate standard error shrinks with more nodes") {
  const auto model = synthetic_model();
  // Lattice quality varies between neighbouring sizes, so compare over a factor of 16.
  const double coarse = expected_confidence(model, kMap, 0.015, 0.75, options(256, 16)).standard_error;
  const double fine = expected_confidence(model, kMap, 0.015, 0.75, options(4096, 16)).standard_error;
  CHECK(fine < 0.5 * coarse);
}

TEST_CASE("folded and plain nodes estimate the same probability") {
  const auto model = synthetic_model();
  auto folded_options = options(4096, 8);
  folded_options.fold_nodes = true;
  const auto plain = node_posterior(model, kMap, 0.01, options(4096, 8));
  const auto folded = node_posterior(model, kMap, 0.01, folded_options);
  for (double h : {0.5, 0.75, 1.0}) {
    const auto a = evaluate(plain, h), b = evaluate(folded, h);
    CHECK(std::abs(a.estimate - b.estimate) <= 3.0 * std::hypot(a.standard_error, b.standard_error) + 1e-12);
  }
}

TEST_CASE("QMC estimate agrees with plain Monte Carlo") {
  const auto model = synthetic_model();
  const auto qmc = expected_confidence(model, kMap, 0.01, 0.7, options(4096, 8));
  const auto mc = monte_carlo_confidence(model, kMap, 0.01, 0.7, 100000, 99);
  CHECK(mc.nodes == 100000);
  CHECK(std::abs(qmc.estimate - mc.estimate) <= 3.0 * std::hypot(mc.standard_error, qmc.standard_error));
}

TEST_CASE("minimum rate search") {
  const auto model = synthetic_model();
  const auto rates = rate_grid(kMap.injection_rate, 9);
  CHECK(min_rate_for_confidence(model, kMap, 0.8, 0.0, rates, options(256, 2)) == rates.front());
  CHECK_FALSE(min_rate_for_confidence(model, kMap, -5.0, 0.9, rates, options(256, 2)).has_value());

  // Analytic curve c(r) = r / w crossing 0.9 between grid points 0.875 w and w.
  std::vector<ConfidenceResult> curve;
  for (double r : rates) curve.push_back({r, 0.0, r / kMap.injection_rate, 1, 1, 0.0});
  const auto hit = min_rate_from_curve(curve, 0.9);
  REQUIRE(hit.has_value());
  CHECK(*hit == rates.back());
  CHECK(*min_rate_from_curve(curve, 0.5) == rates[4]);
  CHECK_THROWS_AS(min_rate_from_curve(curve, 1.5), std::out_of_range);
}

TEST_CASE("threshold range covers the observations") {
  const auto model = synthetic_model();
  const auto [lo, hi] = threshold_range(model, 0.2, 1.4);
  CHECK(lo < 0.2);
  CHECK(hi > 1.4);
  CHECK(hi - 1.4 == doctest::Approx(0.2 - lo));
}

TEST_CASE("grids") {
  CHECK(linspace(1.0, 3.0, 1) == std::vector<double>{1.0});
  CHECK(linspace(0.0, 1.0, 5) == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  const auto g = rate_grid(0.031688, 65);
  CHECK(g.size() == 65);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == 0.031688);
  CHECK_THROWS_AS(linspace(0.0, 1.0, 0), std::invalid_argument);
}

TEST_CASE("CSV export") {
  std::vector<ConfidenceResult> curve{{0.0, 1.0, 0.25, 4096, 8, 0.001}};
  std::ostringstream out;
  write_csv(out, curve);
  CHECK(out.str() == "r,h,estimate,stderr\n0,1,0.25,0.001\n");
}
