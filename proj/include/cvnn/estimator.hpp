#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cvnn/nn_index.hpp"
#include "cvnn/spaces.hpp"

namespace cvnn {

enum class Method { MC, CVNN, CVNNLoo };

std::string method_label(Method method);
std::optional<Method> parse_method(std::string_view label);

/// One integration result; the row unit of the records CSV.
struct EstimateRecord {
  Method method = Method::MC;
  std::string space;
  std::size_t dim = 0;
  std::string integrand;
  std::size_t n = 0;
  std::size_t aux_n = 0;
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  double estimate = 0.0;
  std::optional<double> true_value;
  std::optional<double> abs_error;

  /// Sets true_value and abs_error = |estimate - truth|.
  void set_truth(double truth);
};

/// How many auxiliary points to draw for a sample of size n.
struct AuxPolicy {
  enum class Kind { Square, Theory, Fixed };

  Kind kind = Kind::Square;
  std::size_t fixed = 0;
  std::size_t cap = 10'000'000;

  /// square: n^2; theory: ceil(n^{1 + 2/d}); fixed: N. All clipped to cap.
  std::size_t resolve(std::size_t n, double intrinsic_dim) const;
  std::string label() const;

  /// Accepts "square", "theory" or a positive integer.
  static std::optional<AuxPolicy> parse(std::string_view text, std::size_t cap = 10'000'000);
};

enum class WeightVariant { NN, NNLoo };

/// Integrand-independent weights with estimate = sum_i w_i phi(X_i).
struct QuadratureRule {
  std::vector<double> weights;
  WeightVariant variant = WeightVariant::NN;
};

double estimate_mc(std::span<const double> values);

/// mean(phi) - mean(phi at leave-one-out neighbours) + integral of the 1-NN interpolant.
double cvnn_from_stats(std::span<const double> values, const CellStats& stats);

/// mean over i of phi(X_i) - phi(loo neighbour of X_i) + integral of the i-th
/// leave-one-out interpolant.
double cvnn_loo_from_stats(std::span<const double> values, const CellStats& stats);

/// NN: w_i = (1 + n V_i - d_i) / n.  NN-loo: w_i = (1 + c_i - d_i) / n.
QuadratureRule quadrature_weights(const CellStats& stats, WeightVariant variant);

double estimate_from_rule(const QuadratureRule& rule, std::span<const double> values);

struct CvnnOptions {
  AuxOptions aux;
  Backend backend = Backend::Auto;
};

/// Control-neighbours estimate. Only the index is queried at auxiliary
/// points; the integrand is never evaluated beyond `values`.
EstimateRecord estimate_cvnn(const Sample& sample, std::span<const double> values,
                             MetricKind metric, const DistributionSpec& spec, std::size_t aux_n,
                             std::uint64_t seed, const CvnnOptions& options = {});

EstimateRecord estimate_cvnn_loo(const Sample& sample, std::span<const double> values,
                                 MetricKind metric, const DistributionSpec& spec,
                                 std::size_t aux_n, std::uint64_t seed,
                                 const CvnnOptions& options = {});

/// Both control-neighbours estimates from one shared auxiliary sample.
struct CvnnPair {
  EstimateRecord nn;
  EstimateRecord loo;
  CellStats stats;
};

CvnnPair estimate_cvnn_both(const Sample& sample, std::span<const double> values,
                            MetricKind metric, const DistributionSpec& spec, std::size_t aux_n,
                            std::uint64_t seed, const CvnnOptions& options = {});

}  // namespace cvnn
