#pragma once

// Metric spaces and the sampling laws used by the integration experiments.
//
// Points are stored in their ambient embedding: cube and Gaussian points in
// R^d, sphere points as unit vectors in R^q, orthogonal matrices flattened
// row-major into R^{m*m}, and price paths as the vector of grid prices.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cvnn/rng.hpp"

namespace cvnn {

using Point = std::vector<double>;

enum class MetricKind { Euclidean, GreatCircle, FrobeniusMatrix };

std::string metric_label(MetricKind kind);

/// Tolerance used for the unit-norm and orthogonality invariants.
inline constexpr double kPointTolerance = 1e-9;

struct UniformCube {
  std::size_t dim;
};

struct StandardGaussian {
  std::size_t dim;
};

/// Uniform law on S^{q-1} embedded in R^q.
struct UniformSphere {
  std::size_t ambient_dim;
};

/// Haar law on O_m(R).
struct HaarOrthogonal {
  std::size_t size;
};

struct BlackScholes {
  double spot;
  double rate;
  double volatility;
  double maturity;
};

struct Heston {
  double spot;
  double rate;
  double v0;
  double long_run_variance;
  double mean_reversion;
  double vol_of_vol;
  double correlation;
  double maturity;
};

using MarketModel = std::variant<BlackScholes, Heston>;

/// Law of the discretized price path (S_{t_1}, ..., S_{t_m}) with t_1 = 0, t_m = T.
struct PathLaw {
  MarketModel model;
  std::size_t steps;
};

using DistributionSpec =
    std::variant<UniformCube, StandardGaussian, UniformSphere, HaarOrthogonal, PathLaw>;

/// Throws InvalidInput if the spec's parameters are out of range.
void validate(const DistributionSpec& spec);
void validate(const MarketModel& model);

/// Length of a point's coordinate vector.
std::size_t ambient_dim(const DistributionSpec& spec);

/// Dimension d in the ball-mass condition mu(B(x, r)) ~ r^d; drives the
/// theory auxiliary-sample rule N = n^{1 + 2/d}.
double intrinsic_dim(const DistributionSpec& spec);

/// The metric the experiments pair with each law.
MetricKind natural_metric(const DistributionSpec& spec);

/// Short label: cube, gaussian, sphere, orthogonal or paths.
std::string space_label(const DistributionSpec& spec);

/// The parameter that follows the label on the command line (d, q, m or steps).
std::size_t space_parameter(const DistributionSpec& spec);

double maturity(const MarketModel& model);
double rate(const MarketModel& model);
double spot(const MarketModel& model);

/// An ordered, immutable collection of points together with the law and seed
/// that produced it.
class Sample {
 public:
  Sample(DistributionSpec spec, std::uint64_t seed, std::size_t dim, std::vector<double> coords);

  std::size_t size() const noexcept { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * dim_, dim_};
  }
  std::span<const double> coords() const noexcept { return coords_; }
  const DistributionSpec& spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  DistributionSpec spec_;
  std::uint64_t seed_;
  std::size_t dim_;
  std::vector<double> coords_;
};

/// Checks a single point against the invariants of `kind`.
void validate_point(MetricKind kind, std::span<const double> point);

double distance(MetricKind kind, std::span<const double> a, std::span<const double> b);

/// Fills `out` (a whole number of points) with independent draws from `spec`.
void draw_points(const DistributionSpec& spec, Rng& rng, std::span<double> out);

/// n independent draws; bit-reproducible for a given (spec, n, seed).
Sample sample(const DistributionSpec& spec, std::size_t n, std::uint64_t seed);

/// One Euler path on the uniform grid of `steps` times. `variances`, when
/// non-empty, receives the variance process (Heston) or sigma^2 (Black-Scholes).
void simulate_path(const MarketModel& model, std::size_t steps, Rng& rng,
                   std::span<double> prices, std::span<double> variances = {});

Sample simulate_paths(const MarketModel& model, std::size_t n, std::size_t steps,
                      std::uint64_t seed);

}  // namespace cvnn
