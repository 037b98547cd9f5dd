#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <thread>

#include <Eigen/Dense>

#include "cvnn/errors.hpp"
#include "cvnn/spaces.hpp"

using namespace cvnn;

namespace {

double trace3(std::span<const double> x) { return x[0] + x[4] + x[8]; }

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("distance examples") {
  const std::vector<double> o{0, 0}, p{3, 4};
  CHECK(distance(MetricKind::Euclidean, o, p) == 5.0);

  const std::vector<double> e1{1, 0, 0}, m1{-1, 0, 0};
  CHECK(distance(MetricKind::GreatCircle, e1, m1) == doctest::Approx(std::numbers::pi).epsilon(1e-15));

  const std::vector<double> id{1, 0, 0, 1}, neg{-1, 0, 0, -1};
  CHECK(distance(MetricKind::FrobeniusMatrix, id, neg) == doctest::Approx(2.0 * std::sqrt(2.0)));
}

TEST_CASE("distance errors") {
  const std::vector<double> a{1, 0}, b{1, 0, 0};
  CHECK_THROWS_AS(distance(MetricKind::Euclidean, a, b), InvalidInput);
  const std::vector<double> long1{2, 0, 0}, unit{1, 0, 0};
  CHECK_THROWS_AS(distance(MetricKind::GreatCircle, long1, unit), InvalidInput);
  const std::vector<double> not_square{1, 0, 0};
  CHECK_THROWS_AS(distance(MetricKind::FrobeniusMatrix, not_square, not_square), InvalidInput);
}

TEST_CASE("distance is symmetric, nonnegative and zero on the diagonal") {
  const std::vector<std::pair<DistributionSpec, MetricKind>> cases{
      {UniformCube{3}, MetricKind::Euclidean},
      {UniformSphere{3}, MetricKind::GreatCircle},
      {HaarOrthogonal{3}, MetricKind::FrobeniusMatrix},
  };
  for (const auto& [spec, kind] : cases) {
    const Sample s = sample(spec, 2000, 11);
    for (std::size_t t = 0; t < 1000; ++t) {
      const auto a = s.point(2 * t);
      const auto b = s.point(2 * t + 1);
      const double ab = distance(kind, a, b);
      CHECK(ab == distance(kind, b, a));
      CHECK(ab > 0.0);
      CHECK(distance(kind, a, a) == 0.0);
    }
  }
}

TEST_CASE("great circle dominates the chord and orders candidates like it") {
  const Sample s = sample(UniformSphere{3}, 3000, 5);
  for (std::size_t t = 0; t < 1000; ++t) {
    const auto a = s.point(3 * t), b = s.point(3 * t + 1), c = s.point(3 * t + 2);
    const double gab = distance(MetricKind::GreatCircle, a, b);
    const double gac = distance(MetricKind::GreatCircle, a, c);
    const double eab = distance(MetricKind::Euclidean, a, b);
    const double eac = distance(MetricKind::Euclidean, a, c);
    CHECK(gab >= eab);
    CHECK((gab < gac) == (eab < eac));
  }
}

TEST_CASE("sample preconditions and determinism") {
  CHECK_THROWS_AS(sample(UniformCube{2}, 0, 1), InvalidInput);
  CHECK_THROWS_AS(sample(UniformSphere{1}, 10, 1), InvalidInput);
  CHECK_THROWS_AS(sample(HaarOrthogonal{1}, 10, 1), InvalidInput);

  const Sample a = sample(StandardGaussian{4}, 100, 99);
  const Sample b = sample(StandardGaussian{4}, 100, 99);
  CHECK(std::equal(a.coords().begin(), a.coords().end(), b.coords().begin()));

  std::vector<std::jthread> threads;
  std::vector<std::optional<Sample>> slots(4);
  for (std::size_t t = 0; t < 4; ++t)
    threads.emplace_back([&, t] { slots[t] = sample(StandardGaussian{4}, 100, 99); });
  threads.clear();
  for (const auto& s : slots)
    CHECK(std::equal(a.coords().begin(), a.coords().end(), s->coords().begin()));
}

TEST_CASE("sphere points have unit norm") {
  const Sample s = sample(UniformSphere{3}, 100, 3);
  for (std::size_t i = 0; i < s.size(); ++i) {
    double n2 = 0.0;
    for (double v : s.point(i)) n2 += v * v;
    CHECK(std::abs(std::sqrt(n2) - 1.0) <= 1e-9);
  }
}

TEST_CASE("Haar draws are orthogonal") {
  const Sample s = sample(HaarOrthogonal{3}, 50, 3);
  for (std::size_t i = 0; i < s.size(); ++i) {
    Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> x(s.point(i).data());
    const double err = (x.transpose() * x - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    CHECK(err <= 1e-9);
  }
}

TEST_CASE("Haar trace has mean zero") {
  const std::size_t n = 1'000'000;
  const Sample s = sample(HaarOrthogonal{3}, n, 17);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = trace3(s.point(i));
    sum += t;
    sum_sq += t * t;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  CHECK(std::abs(mean) <= 4.0 * se);
}

TEST_CASE("Haar law is invariant under left multiplication") {
  const std::size_t n = 10'000;
  const Sample x = sample(HaarOrthogonal{3}, n, 21);
  const Sample y = sample(HaarOrthogonal{3}, n, 22);
  const Sample fixed = sample(HaarOrthogonal{3}, 1, 23);
  Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> q(fixed.point(0).data());

  std::vector<double> plain(n), rotated(n);
  for (std::size_t i = 0; i < n; ++i) {
    plain[i] = trace3(x.point(i));
    Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> yi(y.point(i).data());
    rotated[i] = (q * yi).trace();
  }
  // Critical value c(0.01) = 1.628 for the two-sample test.
  const double critical = 1.628 * std::sqrt(2.0 / static_cast<double>(n));
  CHECK(ks_statistic(plain, rotated) <= critical);
}

TEST_CASE("Black-Scholes with zero volatility is deterministic") {
  const BlackScholes bs{100.0, 0.1, 0.0, 2.0 / 12.0};
  const std::size_t steps = 240;
  const Sample paths = simulate_paths(bs, 3, steps, 1);
  const double dt = bs.maturity / (steps - 1);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 100.0;
    CHECK(paths.point(i)[0] == 100.0);
    for (std::size_t k = 1; k < steps; ++k) {
      s *= 1.0 + bs.rate * dt;
      CHECK(paths.point(i)[k] == doctest::Approx(s).epsilon(1e-14));
    }
  }
}

TEST_CASE("Black-Scholes Euler mean") {
  const BlackScholes bs{100.0, 0.1, 0.3, 2.0 / 12.0};
  const std::size_t steps = 240, n = 100'000;
  const Sample paths = simulate_paths(bs, n, steps, 4);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double st = paths.point(i)[steps - 1];
    sum += st;
    sum_sq += st * st;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  // Independent multiplicative steps: E[S_T] = S0 (1 + r dt)^(m-1) exactly.
  const double euler_mean = 100.0 * std::pow(1.0 + bs.rate * bs.maturity / (steps - 1), steps - 1);
  CHECK(std::abs(mean - euler_mean) <= 4.0 * se);
  CHECK(std::abs(mean - 100.0 * std::exp(bs.rate * bs.maturity)) <= 4.0 * se + std::abs(euler_mean - 100.0 * std::exp(bs.rate * bs.maturity)));
}

TEST_CASE("Heston with zero vol-of-vol relaxes deterministically") {
  const Heston h{100.0, 0.1, 0.1, 0.02, 4.0, 0.0, 0.8, 2.0 / 12.0};
  const std::size_t steps = 240;
  Rng rng(5);
  std::vector<double> prices(steps), variances(steps);
  simulate_path(h, steps, rng, prices, variances);
  const double dt = h.maturity / (steps - 1);
  double v = h.v0;
  for (std::size_t k = 1; k < steps; ++k) {
    v += h.mean_reversion * (h.long_run_variance - v) * dt;
    CHECK(variances[k] == doctest::Approx(v).epsilon(1e-13));
    const double ode = h.long_run_variance + (h.v0 - h.long_run_variance) * std::exp(-h.mean_reversion * k * dt);
    CHECK(std::abs(variances[k] - ode) <= 0.1 * dt);
  }
}

TEST_CASE("market model validation") {
  CHECK_THROWS_AS(simulate_paths(BlackScholes{0.0, 0.1, 0.3, 1.0}, 2, 10, 1), InvalidInput);
  CHECK_THROWS_AS(simulate_paths(BlackScholes{100.0, 0.1, -0.3, 1.0}, 2, 10, 1), InvalidInput);
  CHECK_THROWS_AS(simulate_paths(BlackScholes{100.0, 0.1, 0.3, 0.0}, 2, 10, 1), InvalidInput);
  CHECK_THROWS_AS(simulate_paths(BlackScholes{100.0, 0.1, 0.3, 1.0}, 2, 1, 1), InvalidInput);
  CHECK_THROWS_AS(simulate_paths(Heston{100, 0.1, 0.1, 0.02, 4, 0.9, 1.5, 1}, 2, 10, 1), InvalidInput);
  CHECK_THROWS_AS(simulate_paths(Heston{100, 0.1, 0.0, 0.02, 4, 0.9, 0.5, 1}, 2, 10, 1), InvalidInput);
  CHECK_THROWS_AS(simulate_paths(Heston{100, 0.1, 0.1, 0.02, 0, 0.9, 0.5, 1}, 2, 10, 1), InvalidInput);
  CHECK_THROWS_AS(simulate_paths(Heston{100, 0.1, 0.1, 0.0, 4, 0.9, 0.5, 1}, 2, 10, 1), InvalidInput);
  CHECK_NOTHROW(simulate_paths(Heston{100, 0.1, 0.1, 0.02, 4, 0.0, 0.5, 1}, 2, 10, 1));
}

TEST_CASE("intrinsic dimensions") {
  CHECK(intrinsic_dim(UniformCube{5}) == 5.0);
  CHECK(intrinsic_dim(UniformSphere{3}) == 2.0);
  CHECK(intrinsic_dim(HaarOrthogonal{3}) == 3.0);
  CHECK(intrinsic_dim(HaarOrthogonal{4}) == 6.0);
  CHECK(ambient_dim(HaarOrthogonal{4}) == 16);
}
