#include "cvnn/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "cvnn/errors.hpp"

namespace cvnn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

void draw_haar(std::size_t m, Rng& rng, std::span<double> out) {
  Eigen::MatrixXd gaussian(m, m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < m; ++c) gaussian(r, c) = rng.normal();

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd& packed = qr.matrixQR();
  // Q diag(sign R_ii) is Haar distributed; plain Householder Q is not.
  for (std::size_t j = 0; j < m; ++j) {
    if (packed(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = q(r, c);
}

}  // namespace

std::string metric_label(MetricKind kind) {
  switch (kind) {
    case MetricKind::Euclidean:
      return "euclidean";
    case MetricKind::GreatCircle:
      return "great-circle";
    case MetricKind::FrobeniusMatrix:
      return "frobenius";
  }
  return "unknown";
}

void validate(const MarketModel& model) {
  std::visit(Overloaded{
                 [](const BlackScholes& bs) {
                   require(bs.spot > 0.0, "Black-Scholes spot must be positive");
                   require(bs.maturity > 0.0, "Black-Scholes maturity must be positive");
                   require(bs.volatility >= 0.0, "Black-Scholes volatility must be nonnegative");
                   require(std::isfinite(bs.rate), "Black-Scholes rate must be finite");
                 },
                 [](const Heston& h) {
                   require(h.spot > 0.0, "Heston spot must be positive");
                   require(h.maturity > 0.0, "Heston maturity must be positive");
                   require(h.v0 > 0.0, "Heston v0 must be positive");
                   require(h.long_run_variance > 0.0, "Heston theta must be positive");
                   require(h.mean_reversion > 0.0, "Heston kappa must be positive");
                   require(h.vol_of_vol >= 0.0, "Heston xi must be nonnegative");
                   require(std::abs(h.correlation) <= 1.0, "Heston |rho| must be at most 1");
                   require(std::isfinite(h.rate), "Heston rate must be finite");
                 },
             },
             model);
}

void validate(const DistributionSpec& spec) {
  std::visit(Overloaded{
                 [](const UniformCube& s) { require(s.dim >= 1, "cube dimension must be >= 1"); },
                 [](const StandardGaussian& s) {
                   require(s.dim >= 1, "Gaussian dimension must be >= 1");
                 },
                 [](const UniformSphere& s) {
                   require(s.ambient_dim >= 2, "sphere ambient dimension must be >= 2");
                 },
                 [](const HaarOrthogonal& s) {
                   require(s.size >= 2, "orthogonal group size must be >= 2");
                 },
                 [](const PathLaw& s) {
                   require(s.steps >= 2, "path grid needs at least 2 times");
                   validate(s.model);
                 },
             },
             spec);
}

std::size_t ambient_dim(const DistributionSpec& spec) {
  return std::visit(Overloaded{
                        [](const UniformCube& s) { return s.dim; },
                        [](const StandardGaussian& s) { return s.dim; },
                        [](const UniformSphere& s) { return s.ambient_dim; },
                        [](const HaarOrthogonal& s) { return s.size * s.size; },
                        [](const PathLaw& s) { return s.steps; },
                    },
                    spec);
}

double intrinsic_dim(const DistributionSpec& spec) {
  return std::visit(
      Overloaded{
          [](const UniformCube& s) { return static_cast<double>(s.dim); },
          [](const StandardGaussian& s) { return static_cast<double>(s.dim); },
          [](const UniformSphere& s) { return static_cast<double>(s.ambient_dim - 1); },
          [](const HaarOrthogonal& s) { return static_cast<double>(s.size * (s.size - 1) / 2); },
          [](const PathLaw& s) {
            // One Gaussian driver per step, two for Heston.
            const double drivers = std::holds_alternative<Heston>(s.model) ? 2.0 : 1.0;
            return drivers * static_cast<double>(s.steps - 1);
          },
      },
      spec);
}

MetricKind natural_metric(const DistributionSpec& spec) {
  if (std::holds_alternative<UniformSphere>(spec)) return MetricKind::GreatCircle;
  if (std::holds_alternative<HaarOrthogonal>(spec)) return MetricKind::FrobeniusMatrix;
  return MetricKind::Euclidean;
}

std::string space_label(const DistributionSpec& spec) {
  return std::visit(Overloaded{
                        [](const UniformCube&) { return std::string("cube"); },
                        [](const StandardGaussian&) { return std::string("gaussian"); },
                        [](const UniformSphere&) { return std::string("sphere"); },
                        [](const HaarOrthogonal&) { return std::string("orthogonal"); },
                        [](const PathLaw&) { return std::string("paths"); },
                    },
                    spec);
}

std::size_t space_parameter(const DistributionSpec& spec) {
  return std::visit(Overloaded{
                        [](const UniformCube& s) { return s.dim; },
                        [](const StandardGaussian& s) { return s.dim; },
                        [](const UniformSphere& s) { return s.ambient_dim; },
                        [](const HaarOrthogonal& s) { return s.size; },
                        [](const PathLaw& s) { return s.steps; },
                    },
                    spec);
}

double maturity(const MarketModel& model) {
  return std::visit([](const auto& m) { return m.maturity; }, model);
}

double rate(const MarketModel& model) {
  return std::visit([](const auto& m) { return m.rate; }, model);
}

double spot(const MarketModel& model) {
  return std::visit([](const auto& m) { return m.spot; }, model);
}

Sample::Sample(DistributionSpec spec, std::uint64_t seed, std::size_t dim,
               std::vector<double> coords)
    : spec_(std::move(spec)), seed_(seed), dim_(dim), coords_(std::move(coords)) {
  require(dim_ > 0, "sample dimension must be positive");
  require(coords_.size() % dim_ == 0, "coordinate count is not a multiple of the dimension");
}

void validate_point(MetricKind kind, std::span<const double> point) {
  switch (kind) {
    case MetricKind::Euclidean:
      return;
    case MetricKind::GreatCircle: {
      double norm2 = 0.0;
      for (double v : point) norm2 += v * v;
      require(std::abs(std::sqrt(norm2) - 1.0) <= kPointTolerance,
              "great-circle distance needs unit-norm points");
      return;
    }
    case MetricKind::FrobeniusMatrix: {
      const auto m = static_cast<std::size_t>(std::llround(std::sqrt(point.size())));
      require(m * m == point.size(), "Frobenius distance needs a flattened square matrix");
      return;
    }
  }
}

double distance(MetricKind kind, std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dimension mismatch: " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
  validate_point(kind, a);
  validate_point(kind, b);

  if (kind == MetricKind::GreatCircle) {
    // Chord form: acos of the dot product loses half the digits near 0.
    double chord2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) chord2 += (a[i] - b[i]) * (a[i] - b[i]);
    return 2.0 * std::asin(std::min(1.0, 0.5 * std::sqrt(chord2)));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

void simulate_path(const MarketModel& model, std::size_t steps, Rng& rng,
                   std::span<double> prices, std::span<double> variances) {
  require(steps >= 2, "path grid needs at least 2 times");
  require(prices.size() == steps, "price buffer does not match the grid");
  require(variances.empty() || variances.size() == steps, "variance buffer does not match the grid");

  const double dt = maturity(model) / static_cast<double>(steps - 1);
  const double sqrt_dt = std::sqrt(dt);

  if (const auto* bs = std::get_if<BlackScholes>(&model)) {
    double s = bs->spot;
    prices[0] = s;
    for (std::size_t k = 1; k < steps; ++k) {
      s *= 1.0 + bs->rate * dt + bs->volatility * sqrt_dt * rng.normal();
      prices[k] = s;
    }
    if (!variances.empty()) std::fill(variances.begin(), variances.end(), bs->volatility * bs->volatility);
    return;
  }

  const auto& h = std::get<Heston>(model);
  const double rho_perp = std::sqrt(std::max(0.0, 1.0 - h.correlation * h.correlation));
  double s = h.spot;
  double v = h.v0;
  prices[0] = s;
  if (!variances.empty()) variances[0] = v;
  for (std::size_t k = 1; k < steps; ++k) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    const double zv = h.correlation * z1 + rho_perp * z2;
    // Full truncation: negative variance is read as zero inside both updates.
    const double vp = std::max(v, 0.0);
    const double vol = std::sqrt(vp);
    s *= 1.0 + h.rate * dt + vol * sqrt_dt * z1;
    v += h.mean_reversion * (h.long_run_variance - vp) * dt + h.vol_of_vol * vol * sqrt_dt * zv;
    prices[k] = s;
    if (!variances.empty()) variances[k] = v;
  }
}

void draw_points(const DistributionSpec& spec, Rng& rng, std::span<double> out) {
  const std::size_t dim = ambient_dim(spec);
  require(out.size() % dim == 0, "output buffer is not a whole number of points");
  const std::size_t count = out.size() / dim;

  std::visit(Overloaded{
                 [&](const UniformCube&) {
                   for (double& v : out) v = rng.uniform();
                 },
                 [&](const StandardGaussian&) {
                   for (double& v : out) v = rng.normal();
                 },
                 [&](const UniformSphere&) {
                   for (std::size_t i = 0; i < count; ++i) {
                     auto p = out.subspan(i * dim, dim);
                     double norm2 = 0.0;
                     do {
                       norm2 = 0.0;
                       for (double& v : p) {
                         v = rng.normal();
                         norm2 += v * v;
                       }
                     } while (norm2 == 0.0);
                     const double inv = 1.0 / std::sqrt(norm2);
                     for (double& v : p) v *= inv;
                   }
                 },
                 [&](const HaarOrthogonal& s) {
                   for (std::size_t i = 0; i < count; ++i) draw_haar(s.size, rng, out.subspan(i * dim, dim));
                 },
                 [&](const PathLaw& s) {
                   for (std::size_t i = 0; i < count; ++i)
                     simulate_path(s.model, s.steps, rng, out.subspan(i * dim, dim));
                 },
             },
             spec);
}

Sample sample(const DistributionSpec& spec, std::size_t n, std::uint64_t seed) {
  require(n >= 1, "sample size must be at least 1");
  validate(spec);
  const std::size_t dim = ambient_dim(spec);
  std::vector<double> coords(n * dim);
  Rng rng(seed);
  draw_points(spec, rng, coords);
  return Sample(spec, seed, dim, std::move(coords));
}

Sample simulate_paths(const MarketModel& model, std::size_t n, std::size_t steps,
                      std::uint64_t seed) {
  return sample(PathLaw{model, steps}, n, seed);
}

}  // namespace cvnn
