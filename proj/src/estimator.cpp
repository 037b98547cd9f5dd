#include "cvnn/estimator.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include "cvnn/errors.hpp"

namespace cvnn {

namespace {

void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

void require_stats(std::span<const double> values, const CellStats& stats) {
  const std::size_t n = values.size();
  require(n >= 2, "control-neighbours estimates need at least 2 points");
  require(stats.volumes.size() == n && stats.degrees.size() == n &&
              stats.loo_neighbors.size() == n,
          "cell statistics do not match the value count");
}

EstimateRecord base_record(Method method, const Sample& sample, std::size_t aux_n,
                           std::uint64_t seed) {
  EstimateRecord record;
  record.method = method;
  record.space = space_label(sample.spec());
  record.dim = space_parameter(sample.spec());
  record.n = sample.size();
  record.aux_n = aux_n;
  record.seed = seed;
  return record;
}

CellStats build_stats(const Sample& sample, std::span<const double> values, MetricKind metric,
                      const DistributionSpec& spec, std::size_t aux_n, std::uint64_t seed,
                      const CvnnOptions& options, bool second_neighbors) {
  require(values.size() == sample.size(), "value count does not match the sample");
  const auto index = NnIndex::build(sample, metric, options.backend);
  AuxOptions aux = options.aux;
  aux.second_neighbors = second_neighbors;
  return cell_stats_mc(index, spec, values, aux_n, seed, aux);
}

}  // namespace

void EstimateRecord::set_truth(double truth) {
  true_value = truth;
  abs_error = std::abs(estimate - truth);
}

std::string method_label(Method method) {
  switch (method) {
    case Method::MC:
      return "mc";
    case Method::CVNN:
      return "cvnn";
    case Method::CVNNLoo:
      return "cvnn-loo";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view label) {
  if (label == "mc") return Method::MC;
  if (label == "cvnn") return Method::CVNN;
  if (label == "cvnn-loo") return Method::CVNNLoo;
  return std::nullopt;
}

std::size_t AuxPolicy::resolve(std::size_t n, double intrinsic_dim) const {
  double wanted = 0.0;
  switch (kind) {
    case Kind::Square:
      wanted = static_cast<double>(n) * static_cast<double>(n);
      break;
    case Kind::Theory:
      require(intrinsic_dim > 0.0, "theory rule needs a positive intrinsic dimension");
      wanted = std::pow(static_cast<double>(n), 1.0 + 2.0 / intrinsic_dim);
      // pow(100, 2) may land one ulp above 10000.
      wanted = std::abs(wanted - std::round(wanted)) <= 1e-9 * wanted ? std::round(wanted)
                                                                      : std::ceil(wanted);
      break;
    case Kind::Fixed:
      wanted = static_cast<double>(fixed);
      break;
  }
  const double clipped = std::min(wanted, static_cast<double>(cap));
  return std::max<std::size_t>(1, static_cast<std::size_t>(clipped));
}

std::string AuxPolicy::label() const {
  switch (kind) {
    case Kind::Square:
      return "square";
    case Kind::Theory:
      return "theory";
    case Kind::Fixed:
      return std::to_string(fixed);
  }
  return "unknown";
}

std::optional<AuxPolicy> AuxPolicy::parse(std::string_view text, std::size_t cap) {
  AuxPolicy policy;
  policy.cap = cap;
  if (text == "square") return policy;
  if (text == "theory") {
    policy.kind = Kind::Theory;
    return policy;
  }
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value == 0) return std::nullopt;
  policy.kind = Kind::Fixed;
  policy.fixed = value;
  return policy;
}

double estimate_mc(std::span<const double> values) {
  require(!values.empty(), "Monte Carlo estimate of an empty sample");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double cvnn_from_stats(std::span<const double> values, const CellStats& stats) {
  require_stats(values, stats);
  double correction = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    correction += values[i] - values[stats.loo_neighbors[i]];
  return correction / static_cast<double>(values.size()) + stats.interp_integral;
}

double cvnn_loo_from_stats(std::span<const double> values, const CellStats& stats) {
  require_stats(values, stats);
  require(stats.loo_integrals.has_value(), "leave-one-out integrals are missing");
  const auto& loo = *stats.loo_integrals;
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    sum += values[i] - values[stats.loo_neighbors[i]] + loo[i];
  return sum / static_cast<double>(values.size());
}

QuadratureRule quadrature_weights(const CellStats& stats, WeightVariant variant) {
  const std::size_t n = stats.volumes.size();
  require(n >= 2 && stats.degrees.size() == n, "incomplete cell statistics");
  if (variant == WeightVariant::NNLoo)
    require(stats.cum_volumes.has_value(), "NN-loo weights need cumulative volumes");

  const double dn = static_cast<double>(n);
  QuadratureRule rule;
  rule.variant = variant;
  rule.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mass = variant == WeightVariant::NN ? dn * stats.volumes[i] : (*stats.cum_volumes)[i];
    rule.weights[i] = (1.0 + mass - static_cast<double>(stats.degrees[i])) / dn;
  }
  return rule;
}

double estimate_from_rule(const QuadratureRule& rule, std::span<const double> values) {
  require(rule.weights.size() == values.size(),
          "rule has " + std::to_string(rule.weights.size()) + " weights but got " +
              std::to_string(values.size()) + " values");
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) sum += rule.weights[i] * values[i];
  return sum;
}

EstimateRecord estimate_cvnn(const Sample& sample, std::span<const double> values,
                             MetricKind metric, const DistributionSpec& spec, std::size_t aux_n,
                             std::uint64_t seed, const CvnnOptions& options) {
  const auto stats = build_stats(sample, values, metric, spec, aux_n, seed, options, false);
  auto record = base_record(Method::CVNN, sample, aux_n, seed);
  record.estimate = cvnn_from_stats(values, stats);
  return record;
}

EstimateRecord estimate_cvnn_loo(const Sample& sample, std::span<const double> values,
                                 MetricKind metric, const DistributionSpec& spec,
                                 std::size_t aux_n, std::uint64_t seed,
                                 const CvnnOptions& options) {
  const auto stats = build_stats(sample, values, metric, spec, aux_n, seed, options, true);
  auto record = base_record(Method::CVNNLoo, sample, aux_n, seed);
  record.estimate = cvnn_loo_from_stats(values, stats);
  return record;
}

CvnnPair estimate_cvnn_both(const Sample& sample, std::span<const double> values,
                            MetricKind metric, const DistributionSpec& spec, std::size_t aux_n,
                            std::uint64_t seed, const CvnnOptions& options) {
  CvnnPair out;
  out.stats = build_stats(sample, values, metric, spec, aux_n, seed, options, true);
  out.nn = base_record(Method::CVNN, sample, aux_n, seed);
  out.nn.estimate = cvnn_from_stats(values, out.stats);
  out.loo = base_record(Method::CVNNLoo, sample, aux_n, seed);
  out.loo.estimate = cvnn_loo_from_stats(values, out.stats);
  return out;
}

}  // namespace cvnn
