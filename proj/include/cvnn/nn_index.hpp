#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cvnn/spaces.hpp"

namespace cvnn {

enum class Backend { Auto, Tree, Exhaustive };

/// Auto picks the tree up to this ambient dimension and scans above it.
inline constexpr std::size_t kTreeMaxDim = 16;

struct Neighbor {
  std::size_t index;
  double distance;
};

/// Immutable exact nearest-neighbour index over a sample.
///
/// Every supported metric is answered in the Euclidean embedding: Frobenius is
/// the Euclidean norm of the flattening, and great-circle distance is a
/// monotone function of the chord, so neighbour order is the same. Ties are
/// resolved to the smallest point index by both backends, which therefore
/// return identical answers.
class NnIndex {
 public:
  /// Throws InvalidInput for n < 2 or points that violate the metric's
  /// invariants, DuplicatePoint when two points coincide.
  static NnIndex build(Sample sample, MetricKind metric, Backend backend = Backend::Auto);

  std::size_t size() const noexcept { return sample_.size(); }
  std::size_t dim() const noexcept { return sample_.dim(); }
  MetricKind metric() const noexcept { return metric_; }
  /// Resolved backend, never Auto.
  Backend backend() const noexcept { return backend_; }
  const Sample& sample() const noexcept { return sample_; }

  /// k nearest points ascending by (distance, index); distances in the index's metric.
  std::vector<Neighbor> query_knn(std::span<const double> x, std::size_t k) const;

  /// Unchecked hot-path queries for points already known to be valid.
  std::size_t nearest(const double* x) const;
  std::pair<std::size_t, std::size_t> nearest_two(const double* x) const;

 private:
  struct Node {
    double split;
    std::uint32_t a;  // leaf: first slot; inner: left child
    std::uint32_t b;  // leaf: one past last slot; inner: right child
    std::uint32_t dim;
    bool leaf;
  };

  NnIndex(Sample sample, MetricKind metric, Backend backend);

  std::uint32_t build_node(std::uint32_t begin, std::uint32_t end, std::vector<std::uint32_t>& order);
  template <class Best>
  void search(const double* x, Best& best) const;
  template <std::size_t D, class Best>
  void search_tree(std::uint32_t node, const double* x, Best& best) const;
  template <class Best>
  void search_exhaustive(const double* x, Best& best) const;
  template <class Best>
  void search_projected(const double* x, Best& best) const;
  void build_projection();

  double metric_distance(double squared_chord) const;

  Sample sample_;
  MetricKind metric_;
  Backend backend_;

  std::vector<Node> nodes_;
  std::vector<double> tree_coords_;
  std::vector<std::uint32_t> tree_ids_;

  // Exhaustive backend in high dimension: points projected on leading
  // principal directions, sorted by the first. Projection cannot increase
  // distances, so it only prunes.
  std::size_t proj_rank_ = 0;
  std::vector<double> proj_mean_;
  std::vector<double> proj_dirs_;
  std::vector<double> proj_coords_;
  std::vector<std::uint32_t> proj_ids_;
  double proj_slack_ = 0.0;
};

/// Leave-one-out nearest neighbour of every X_i: its 2-NN in the full sample.
std::vector<std::size_t> loo_nn(const NnIndex& index);

/// degrees_j = #{i != j : loo_nn_i = j}.
std::vector<std::size_t> degrees(const NnIndex& index);
std::vector<std::size_t> degrees_from_loo(std::span<const std::size_t> loo);

/// Voronoi statistics of a sample.
struct CellStats {
  std::vector<std::size_t> loo_neighbors;
  std::vector<std::size_t> degrees;
  /// mu(S_{n,j}), estimated or exact.
  std::vector<double> volumes;
  /// c_{n,j} = sum over i != j of the leave-one-out volumes V_{n,j}^{(i)}.
  std::optional<std::vector<double>> cum_volumes;
  /// Integral of the 1-NN interpolant.
  double interp_integral = 0.0;
  /// Integral of each leave-one-out interpolant.
  std::optional<std::vector<double>> loo_integrals;
  /// Auxiliary points used; 0 for exact statistics.
  std::size_t aux_count = 0;

  bool has_loo() const noexcept { return cum_volumes.has_value() && loo_integrals.has_value(); }
};

struct AuxOptions {
  /// Also find each auxiliary point's second neighbour. Needed for the
  /// cumulative volumes and the leave-one-out integrals.
  bool second_neighbors = true;
  /// 0 = hardware concurrency. Results do not depend on this.
  std::size_t workers = 1;
  /// Auxiliary points per RNG stream. Results do depend on this.
  std::size_t chunk_size = std::size_t{1} << 16;
};

/// Monte Carlo cell statistics from aux_n fresh draws of `spec`.
///
/// Auxiliary point x is classified by its nearest neighbour j and second
/// neighbour k. Then V_j is the frequency of j as first neighbour,
/// c_j = (n-1) V_j + freq(k = j), and the leave-one-out integral of i adds the
/// mean of (phi(X_k) - phi(X_i)) over points whose first neighbour is i.
CellStats cell_stats_mc(const NnIndex& index, const DistributionSpec& spec,
                        std::span<const double> values, std::size_t aux_n, std::uint64_t seed,
                        const AuxOptions& options = {});

/// Exact statistics for a 1-D sample under the uniform law on [0, 1]:
/// cells are the intervals between midpoints of sorted neighbours.
CellStats cell_stats_exact_1d(const Sample& sample, std::span<const double> values);

/// k-NN regression estimate: mean of the values at the k nearest points.
double knn_predict(const NnIndex& index, std::span<const double> values,
                   std::span<const double> x, std::size_t k);

}  // namespace cvnn
