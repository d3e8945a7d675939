#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "darcygp/calibration.hpp"

using namespace darcygp::calibration;

namespace {

// Norms following 2^b s^a exactly on the schedule levels j = 1..N.
LevelNorms power_law(const LevelSchedule& sch, double a_s, double b_s, double a_d, double b_d) {
  LevelNorms n;
  for (int j = 1; j <= sch.levels; ++j) {
    n.s.push_back(sch.s(j));
    n.d.push_back(sch.d(j));
    n.delta_s.push_back(std::exp2(b_s) * std::pow(sch.s(j), a_s));
    n.delta_d.push_back(std::exp2(b_d) * std::pow(sch.d(j), a_d));
  }
  return n;
}

// Sum of the fitted per-level model beyond `level`, term by term.
long double numeric_tail(double a, double b, int v, int level) {
  long double sum = 0.0L;
  for (int j = 2000; j > level; --j)  // smallest terms first
    sum += std::exp2(static_cast<long double>(b)) * std::pow(static_cast<long double>(v) * std::exp2((long double)j), (long double)a);
  return sum;
}

// Synthetic solver: a truncation error decaying in s plus a mesh error decaying in d.
double synthetic(int s, int d, double r, std::span<const double> z) {
  double acc = r;
  for (std::size_t k = 0; k < z.size(); ++k) acc += z[k] / ((k + 1.0) * (k + 1.0));
  return acc + std::sin(3.0 * r + z[0]) / (static_cast<double>(d) * d) + 0.0 * s;
}

}  // namespace

TEST_CASE("schedule dimensions double per level") {
  const LevelSchedule sch;
  CHECK(sch.s(0) == 1);
  CHECK(sch.d(0) == 4);
  CHECK(sch.s(3) == 8);
  CHECK(sch.d(3) == 32);
  CHECK_THROWS_AS((LevelSchedule{0, 4, 3}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((LevelSchedule{1, 1, 3}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((LevelSchedule{1, 4, 1}.validate()), std::invalid_argument);
}

TEST_CASE("level norms vanish for a level-independent solver") {
  const LevelSchedule sch;
  const auto norms = level_differences(sch, 16, 0.03, 5, [](int, int, double r, std::span<const double> z) {
    return r + (z.empty() ? 0.0 : 0.0 * z[0]);
  });
  for (double v : norms.delta_s) CHECK(v == 0.0);
  for (double v : norms.delta_d) CHECK(v == 0.0);
}

TEST_CASE("level norms follow the telescoping pairs") {
  const LevelSchedule sch{1, 4, 3};
  const auto samples = draw_level_samples(sch, 12, 0.03, 8);
  const auto norms = level_differences(sch, samples, synthetic);
  REQUIRE(norms.delta_s.size() == 3);
  for (int j = 1; j <= 3; ++j) {
    double ss = 0.0, sd = 0.0;
    for (int i = 0; i < 12; ++i) {
      const Eigen::RowVectorXd row = samples.z.row(i);
      auto h = [&](int s, int d) { return synthetic(s, d, samples.rates[i], std::span(row.data(), s)); };
      ss += std::pow(h(sch.s(j), sch.d(j - 1)) - h(sch.s(j - 1), sch.d(j - 1)), 2);
      sd += std::pow(h(sch.s(j), sch.d(j)) - h(sch.s(j), sch.d(j - 1)), 2);
    }
    CHECK(norms.delta_s[j - 1] == doctest::Approx(std::sqrt(ss / 12)).epsilon(1e-14));
    CHECK(norms.delta_d[j - 1] == doctest::Approx(std::sqrt(sd / 12)).epsilon(1e-14));
  }
}

TEST_CASE("level norms ignore sample order and worker count") {
  const LevelSchedule sch;
  const auto samples = draw_level_samples(sch, 16, 0.03, 21);
  const auto base = level_differences(sch, samples, synthetic, 1);
  const auto threaded = level_differences(sch, samples, synthetic, 3);
  CHECK(base.delta_s == threaded.delta_s);
  CHECK(base.delta_d == threaded.delta_d);

  std::vector<int> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(4));
  LevelSamples shuffled = samples;
  for (int i = 0; i < 16; ++i) {
    shuffled.rates[i] = samples.rates[perm[i]];
    shuffled.z.row(i) = samples.z.row(perm[i]);
  }
  const auto other = level_differences(sch, shuffled, synthetic);
  for (int j = 0; j < 3; ++j) {
    CHECK(other.delta_s[j] == doctest::Approx(base.delta_s[j]).epsilon(1e-13));
    CHECK(other.delta_d[j] == doctest::Approx(base.delta_d[j]).epsilon(1e-13));
  }
}

TEST_CASE("shared samples are reproducible from the seed") {
  const LevelSchedule sch;
  const auto a = draw_level_samples(sch, 32, 0.03, 2), b = draw_level_samples(sch, 32, 0.03, 2);
  CHECK(a.rates == b.rates);
  CHECK(a.z == b.z);
  CHECK(a.z.cols() == 8);
  CHECK(*std::max_element(a.rates.begin(), a.rates.end()) <= 0.03);
  CHECK_THROWS_AS(draw_level_samples(sch, 4, 0.03, 2), std::invalid_argument);
}

TEST_CASE("solve failures name the level") {
  const LevelSchedule sch;
  try {
    level_differences(sch, 8, 0.03, 1, [](int s, int d, double, std::span<const double>) -> double {
      if (s == 4 && d == 16) throw std::runtime_error("boom");
      return 0.0;
    });
    FAIL("expected a LevelFailure");
  } catch (const LevelFailure& e) {
    CHECK(e.s == 4);
    CHECK(e.d == 16);
    CHECK(std::string(e.what()).find("s=4, d=16") != std::string::npos);
  }
}

TEST_CASE("decay fit recovers exact power laws") {
  for (const LevelSchedule sch : {LevelSchedule{1, 4, 3}, LevelSchedule{2, 8, 5}, LevelSchedule{3, 2, 2}}) {
    const auto fit = fit_decay(power_law(sch, -1.3, 0.7, -2.1, -3.25));
    CHECK(std::abs(fit.a_s + 1.3) <= 1e-10);
    CHECK(std::abs(fit.b_s - 0.7) <= 1e-10);
    CHECK(std::abs(fit.a_d + 2.1) <= 1e-10);
    CHECK(std::abs(fit.b_d + 3.25) <= 1e-10);
  }
}

TEST_CASE("two levels give the line through both points") {
  const auto [a, b] = fit_line(std::vector<double>{1.0, 3.0}, std::vector<double>{-2.0, -7.0});
  CHECK(a == doctest::Approx(-2.5));
  CHECK(b == doctest::Approx(0.5));
  CHECK_THROWS_AS(fit_line(std::vector<double>{1.0}, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("decay fit tolerates one percent multiplicative noise") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> noise(0.99, 1.01);
  const LevelSchedule sch{1, 4, 6};
  for (int trial = 0; trial < 20; ++trial) {
    auto norms = power_law(sch, -1.5, -2.0, -0.8, 1.0);
    for (auto& v : norms.delta_s) v *= noise(rng);
    for (auto& v : norms.delta_d) v *= noise(rng);
    const auto fit = fit_decay(norms);
    CHECK(std::abs(fit.a_s + 1.5) <= 0.05);
    CHECK(std::abs(fit.a_d + 0.8) <= 0.05);
  }
}

TEST_CASE("decay fit rejects zero norms and flags growth") {
  auto norms = power_law(LevelSchedule{}, -1.0, 0.0, -1.0, 0.0);
  norms.delta_d[1] = 0.0;
  CHECK_THROWS_AS(fit_decay(norms), std::invalid_argument);

  const auto growing = fit_decay(power_law(LevelSchedule{}, 0.5, 0.0, -1.0, 0.0));
  CHECK_FALSE(growing.converges());
  CHECK_FALSE(rmse_upper_bound(growing, LevelSchedule{}, 3).finite());
}

TEST_CASE("unit slopes give a bound of 2^(1-N)") {
  const DecayFit fit{-1.0, 0.0, -1.0, 0.0};
  for (int n = 0; n <= 20; ++n) {
    const auto bound = rmse_upper_bound(fit, LevelSchedule{1, 1, 2}, n);
    CHECK(bound.value == std::ldexp(2.0, -n));
  }
}

TEST_CASE("closed-form bound equals the numeric tail sum") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> slope(-2.5, -0.5), icpt(-6.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const DecayFit fit{slope(rng), icpt(rng), slope(rng), icpt(rng)};
    const LevelSchedule sch{1 + trial % 3, 2 + trial % 5, 3};
    for (int n = 0; n <= 6; ++n) {
      const long double numeric =
          numeric_tail(fit.a_s, fit.b_s, sch.v_s, n) + numeric_tail(fit.a_d, fit.b_d, sch.v_d, n);
      const double bound = rmse_upper_bound(fit, sch, n).value;
      CHECK(std::abs(bound - static_cast<double>(numeric)) <= 1e-12 * static_cast<double>(numeric));
    }
  }
}

TEST_CASE("bound decreases with N and dominates the next fitted term") {
  const DecayFit fit{-0.9, -1.0, -1.7, 0.5};
  const LevelSchedule sch{1, 4, 3};
  double prev = INFINITY;
  for (int n = 0; n <= 12; ++n) {
    const double b = rmse_upper_bound(fit, sch, n).value;
    CHECK(b < prev);
    const double next = std::exp2(fit.b_s) * std::pow(sch.s(n + 1), fit.a_s) +
                        std::exp2(fit.b_d) * std::pow(sch.d(n + 1), fit.a_d);
    CHECK(b >= next);
    prev = b;
  }
}

TEST_CASE("bound dominates a telescoped tail with exactly geometric differences") {
  // Signed differences with geometric magnitudes; their partial sums converge to the limit.
  const LevelSchedule sch{1, 4, 3};
  const double a_s = -1.2, a_d = -0.7, b_s = -3.0, b_d = -2.0;
  std::mt19937_64 rng(2);
  std::bernoulli_distribution sign;
  for (int trial = 0; trial < 20; ++trial) {
    double tail_error = 0.0;
    for (int j = 26; j > sch.levels; --j) {
      tail_error += (sign(rng) ? 1.0 : -1.0) * std::exp2(b_s) * std::pow(sch.s(j), a_s);
      tail_error += (sign(rng) ? 1.0 : -1.0) * std::exp2(b_d) * std::pow(sch.d(j), a_d);
    }
    const auto fit = fit_decay(power_law(sch, a_s, b_s, a_d, b_d));
    CHECK(rmse_upper_bound(fit, sch, sch.levels).value >= std::abs(tail_error));
  }
}

TEST_CASE("report squares the bound and round-trips through JSON") {
  const LevelSchedule sch{1, 4, 3};
  auto rep = make_report(sch, 32, 7, power_law(sch, -1.0, -2.0, -1.5, -1.0), true);
  CHECK(rep.bounds.size() == 4);
  CHECK(rep.noise_init == doctest::Approx(std::pow(rep.bounds.back().value, 2)).epsilon(1e-15));
  CHECK(make_report(sch, 32, 7, power_law(sch, -1.0, -2.0, -1.5, -1.0), false).noise_init == rep.bounds.back().value);
  rep.config_hash = "abc";

  const auto path = std::filesystem::temp_directory_path() / "darcygp_test_calibration.json";
  save_report(rep, path);
  const auto back = load_report(path);
  CHECK(back.config_hash == "abc");
  CHECK(back.samples == 32);
  CHECK(back.seed == 7);
  CHECK(back.norms.delta_s == rep.norms.delta_s);
  CHECK(back.fit.a_d == rep.fit.a_d);
  CHECK(back.noise_init == rep.noise_init);
  CHECK(back.bounds.back().value == rep.bounds.back().value);

  const auto growing = make_report(sch, 32, 7, power_law(sch, 0.5, -2.0, -1.5, -1.0), true);
  save_report(growing, path);
  CHECK_FALSE(load_report(path).bounds.back().finite());
  std::filesystem::remove(path);
}
