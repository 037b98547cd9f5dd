#include "cvnn/applications.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cvnn/errors.hpp"
#include "cvnn/rng.hpp"

namespace cvnn {

namespace {

void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

double wpp_sorted(std::span<const double> xs, std::span<const double> ys, double p) {
  double sum = 0.0;
  if (p == 2.0) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double d = xs[i] - ys[i];
      sum += d * d;
    }
  } else {
    for (std::size_t i = 0; i < xs.size(); ++i) sum += std::pow(std::abs(xs[i] - ys[i]), p);
  }
  return sum / static_cast<double>(xs.size());
}

void project(const EmpiricalMeasure& measure, std::span<const double> theta, std::vector<double>& out) {
  const std::size_t q = measure.dim();
  out.resize(measure.size());
  const double* a = measure.atoms().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < q; ++j) dot += a[i * q + j] * theta[j];
    out[i] = dot;
  }
}

std::string barrier_label(BarrierKind kind) { return kind == BarrierKind::UpIn ? "up-in" : "up-out"; }

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> atoms)
    : dim_(dim), atoms_(std::move(atoms)) {
  require(dim_ >= 1, "empirical measure dimension must be positive");
  require(!atoms_.empty() && atoms_.size() % dim_ == 0,
          "empirical measure needs at least one atom of the stated dimension");
}

double w1d_pp(std::span<const double> xs, std::span<const double> ys, double p) {
  require(xs.size() == ys.size(), "W_p between measures of different sizes (" +
                                      std::to_string(xs.size()) + " vs " + std::to_string(ys.size()) + ")");
  require(!xs.empty(), "W_p of empty measures");
  require(p >= 1.0, "W_p needs p >= 1");
  std::vector<double> a(xs.begin(), xs.end());
  std::vector<double> b(ys.begin(), ys.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return wpp_sorted(a, b, p);
}

double projected_wpp(const EmpiricalMeasure& P, const EmpiricalMeasure& Q,
                     std::span<const double> theta, double p) {
  require(P.dim() == Q.dim() && theta.size() == P.dim(), "projection dimension mismatch");
  require(P.size() == Q.size(), "measures must have equal atom counts");
  require(p >= 1.0, "W_p needs p >= 1");
  std::vector<double> xs;
  std::vector<double> ys;
  project(P, theta, xs);
  project(Q, theta, ys);
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  return wpp_sorted(xs, ys, p);
}

double sw_estimate(const EmpiricalMeasure& P, const EmpiricalMeasure& Q, double p,
                   std::size_t n_proj, Method method, std::uint64_t seed, std::size_t aux_n) {
  const std::size_t q = P.dim();
  require(Q.dim() == q, "measures live in different dimensions (" + std::to_string(q) + " vs " +
                            std::to_string(Q.dim()) + ")");
  require(P.size() == Q.size(), "measures must have equal atom counts");
  require(p >= 1.0, "W_p needs p >= 1");
  require(n_proj >= 1, "need at least one projection");
  require(method != Method::CVNNLoo, "sliced Wasserstein supports mc and cvnn");

  const std::uint64_t theta_seed = stream_seed(seed, Stream::Projection);
  if (q == 1) {
    require(method == Method::MC, "control neighbours need a sphere of positive dimension (q >= 2)");
    Rng rng(theta_seed);
    double sum = 0.0;
    for (std::size_t i = 0; i < n_proj; ++i) {
      const double theta = rng.uniform() < 0.5 ? -1.0 : 1.0;
      sum += projected_wpp(P, Q, std::span<const double>(&theta, 1), p);
    }
    return sum / static_cast<double>(n_proj);
  }

  const DistributionSpec directions = UniformSphere{q};
  const Sample thetas = sample(directions, n_proj, theta_seed);
  std::vector<double> values(n_proj);
  for (std::size_t i = 0; i < n_proj; ++i) values[i] = projected_wpp(P, Q, thetas.point(i), p);

  if (method == Method::MC) return estimate_mc(values);
  require(n_proj >= 2, "control neighbours need at least 2 projections");
  return estimate_cvnn(thetas, values, MetricKind::GreatCircle, directions, aux_n,
                       stream_seed(seed, Stream::Auxiliary))
      .estimate;
}

double GaussianPair::closed_form_sw2() const {
  double d2 = 0.0;
  for (std::size_t j = 0; j < mean_x.size(); ++j) {
    const double d = mean_x[j] - mean_y[j];
    d2 += d * d;
  }
  const double ds = sigma_x - sigma_y;
  return d2 / static_cast<double>(mean_x.size()) + ds * ds;
}

GaussianPair make_gaussian_pair(std::size_t q, std::size_t m, double sigma_x, double sigma_y,
                                std::uint64_t seed) {
  require(q >= 1 && m >= 1, "need q >= 1 and m >= 1");
  require(sigma_x > 0.0 && sigma_y > 0.0, "standard deviations must be positive");
  Rng rng(stream_seed(seed, Stream::Atoms));
  std::vector<double> mx(q);
  std::vector<double> my(q);
  for (double& v : mx) v = rng.normal();
  for (double& v : my) v = rng.normal();
  std::vector<double> px(m * q);
  std::vector<double> qy(m * q);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < q; ++j) px[i * q + j] = mx[j] + sigma_x * rng.normal();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < q; ++j) qy[i * q + j] = my[j] + sigma_y * rng.normal();
  return GaussianPair{EmpiricalMeasure(q, std::move(px)), EmpiricalMeasure(q, std::move(qy)),
                      std::move(mx), std::move(my), sigma_x, sigma_y};
}

void validate(const OptionContract& contract) {
  require(contract.strike > 0.0, "strike must be positive");
  require(contract.barrier > 0.0, "barrier must be positive");
  require(contract.maturity > 0.0, "maturity must be positive");
  require(std::isfinite(contract.rate), "rate must be finite");
}

double vanilla_payoff(double strike, std::span<const double> path) {
  require(!path.empty(), "empty price path");
  return std::max(path.back() - strike, 0.0);
}

double payoff(const OptionContract& contract, std::span<const double> path) {
  const double call = vanilla_payoff(contract.strike, path);
  const bool crossed = *std::max_element(path.begin(), path.end()) >= contract.barrier;
  const bool alive = contract.kind == BarrierKind::UpIn ? crossed : !crossed;
  return alive ? call : 0.0;
}

EstimateRecord price_option(const OptionContract& contract, const MarketModel& model,
                            std::size_t n_paths, std::size_t steps, Method method,
                            std::uint64_t seed, std::size_t aux_n, const CvnnOptions& options) {
  validate(contract);
  validate(model);
  require(std::abs(contract.maturity - maturity(model)) <= 1e-12,
          "contract and model maturities differ");
  require(method != Method::CVNNLoo, "option pricing supports mc and cvnn");
  require(n_paths >= (method == Method::MC ? 1u : 2u), "not enough paths for this method");

  const Sample paths = simulate_paths(model, n_paths, steps, stream_seed(seed, Stream::Primary));
  std::vector<double> values(n_paths);
  for (std::size_t i = 0; i < n_paths; ++i) values[i] = payoff(contract, paths.point(i));

  EstimateRecord record;
  if (method == Method::MC) {
    record.estimate = estimate_mc(values);
    record.aux_n = 0;
  } else {
    CvnnOptions opts = options;
    if (opts.backend == Backend::Auto) opts.backend = Backend::Exhaustive;
    record = estimate_cvnn(paths, values, MetricKind::Euclidean, PathLaw{model, steps}, aux_n,
                           stream_seed(seed, Stream::Auxiliary), opts);
  }
  record.method = method;
  record.space = "paths";
  record.dim = steps;
  record.integrand = barrier_label(contract.kind);
  record.n = n_paths;
  record.seed = seed;
  record.estimate *= std::exp(-contract.rate * contract.maturity);
  return record;
}

double black_scholes_call(double spot, double strike, double rate, double volatility,
                          double maturity) {
  require(spot > 0.0 && strike > 0.0 && volatility > 0.0 && maturity > 0.0,
          "Black-Scholes inputs must be positive");
  const double sd = volatility * std::sqrt(maturity);
  const double d1 = (std::log(spot / strike) + (rate + 0.5 * volatility * volatility) * maturity) / sd;
  const double d2 = d1 - sd;
  const auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  return spot * cdf(d1) - strike * std::exp(-rate * maturity) * cdf(d2);
}

}  // namespace cvnn
