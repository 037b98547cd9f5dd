#include "cvnn/nn_index.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <string>

#include "cvnn/errors.hpp"
#include "cvnn/parallel.hpp"
#include "cvnn/rng.hpp"

namespace cvnn {

namespace {

constexpr std::uint32_t kLeafSize = 8;
constexpr std::size_t kProjRank = 8;
constexpr std::size_t kProjMinPoints = 32;
constexpr std::size_t kProjFitPoints = 2048;
constexpr double kInf = std::numeric_limits<double>::infinity();

inline bool before(double d_a, std::uint32_t i_a, double d_b, std::uint32_t i_b) {
  return d_a < d_b || (d_a == d_b && i_a < i_b);
}

// The K best candidates, sorted by (squared distance, index).
template <std::size_t K>
struct FixedBest {
  double d2[K];
  std::uint32_t id[K];
  std::size_t count = 0;

  double bound() const { return count < K ? kInf : d2[K - 1]; }

  void offer(double d, std::uint32_t i) {
    if (count == K && !before(d, i, d2[K - 1], id[K - 1])) return;
    std::size_t pos = count < K ? count++ : K - 1;
    while (pos > 0 && before(d, i, d2[pos - 1], id[pos - 1])) {
      d2[pos] = d2[pos - 1];
      id[pos] = id[pos - 1];
      --pos;
    }
    d2[pos] = d;
    id[pos] = i;
  }
};

struct DynamicBest {
  explicit DynamicBest(std::size_t k) : capacity(k) {
    d2.reserve(k);
    id.reserve(k);
  }

  double bound() const { return d2.size() < capacity ? kInf : d2.back(); }

  void offer(double d, std::uint32_t i) {
    if (d2.size() == capacity) {
      if (!before(d, i, d2.back(), id.back())) return;
      d2.pop_back();
      id.pop_back();
    }
    std::size_t pos = d2.size();
    d2.push_back(d);
    id.push_back(i);
    while (pos > 0 && before(d, i, d2[pos - 1], id[pos - 1])) {
      d2[pos] = d2[pos - 1];
      id[pos] = id[pos - 1];
      --pos;
    }
    d2[pos] = d;
    id[pos] = i;
  }

  std::size_t capacity;
  std::vector<double> d2;
  std::vector<std::uint32_t> id;
};

// Both backends accumulate in coordinate order so equal inputs give equal bits.
template <std::size_t D>
inline double squared_distance(const double* x, const double* p, std::size_t dim) {
  double sum = 0.0;
  if constexpr (D > 0) {
    for (std::size_t j = 0; j < D; ++j) {
      const double diff = x[j] - p[j];
      sum += diff * diff;
    }
  } else {
    for (std::size_t j = 0; j < dim; ++j) {
      const double diff = x[j] - p[j];
      sum += diff * diff;
    }
  }
  return sum;
}

void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

}  // namespace

NnIndex::NnIndex(Sample sample, MetricKind metric, Backend backend)
    : sample_(std::move(sample)), metric_(metric), backend_(backend) {}

NnIndex NnIndex::build(Sample sample, MetricKind metric, Backend backend) {
  const std::size_t n = sample.size();
  const std::size_t dim = sample.dim();
  require(n >= 2, "nearest-neighbour index needs at least 2 points, got " + std::to_string(n));
  require(n <= std::numeric_limits<std::uint32_t>::max(), "sample too large for the index");
  for (std::size_t i = 0; i < n; ++i) validate_point(metric, sample.point(i));

  {
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    auto coords = sample.coords();
    auto less = [&](std::uint32_t a, std::uint32_t b) {
      return std::lexicographical_compare(coords.begin() + a * dim, coords.begin() + (a + 1) * dim,
                                          coords.begin() + b * dim, coords.begin() + (b + 1) * dim);
    };
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      return less(a, b) || (!less(b, a) && a < b);
    });
    for (std::size_t r = 1; r < n; ++r) {
      if (!less(order[r - 1], order[r])) {
        throw DuplicatePoint(std::min(order[r - 1], order[r]), std::max(order[r - 1], order[r]));
      }
    }
  }

  if (backend == Backend::Auto) backend = dim <= kTreeMaxDim ? Backend::Tree : Backend::Exhaustive;
  NnIndex index(std::move(sample), metric, backend);

  if (backend == Backend::Tree) {
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    index.nodes_.reserve(2 * n / kLeafSize + 2);
    index.build_node(0, static_cast<std::uint32_t>(n), order);
    index.tree_ids_ = order;
    index.tree_coords_.resize(n * dim);
    for (std::size_t s = 0; s < n; ++s) {
      auto p = index.sample_.point(order[s]);
      std::copy(p.begin(), p.end(), index.tree_coords_.begin() + s * dim);
    }
  } else if (dim > kTreeMaxDim && n >= kProjMinPoints) {
    index.build_projection();
  }
  return index;
}

void NnIndex::build_projection() {
  const std::size_t n = sample_.size();
  const std::size_t dim = sample_.dim();
  const std::size_t rank = std::min(kProjRank, dim);
  const double* base = sample_.coords().data();

  proj_mean_.assign(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j) proj_mean_[j] += base[i * dim + j];
  for (double& m : proj_mean_) m /= static_cast<double>(n);

  // Any orthonormal directions give a valid bound; principal ones give a tight one.
  const std::size_t stride = std::max<std::size_t>(1, n / kProjFitPoints);
  Eigen::MatrixXd centered((n + stride - 1) / stride, dim);
  for (std::size_t r = 0, i = 0; i < n; i += stride, ++r)
    for (std::size_t j = 0; j < dim; ++j) centered(r, j) = base[i * dim + j] - proj_mean_[j];
  const Eigen::MatrixXd cov = centered.transpose() * centered;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) return;

  proj_dirs_.resize(rank * dim);
  for (std::size_t c = 0; c < rank; ++c)
    for (std::size_t j = 0; j < dim; ++j)
      proj_dirs_[c * dim + j] = eig.eigenvectors()(j, dim - 1 - c);

  std::vector<double> coords(n * rank);
  double max_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double norm2 = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = base[i * dim + j] - proj_mean_[j];
      norm2 += v * v;
    }
    max_norm = std::max(max_norm, std::sqrt(norm2));
    for (std::size_t c = 0; c < rank; ++c) {
      double dot = 0.0;
      for (std::size_t j = 0; j < dim; ++j)
        dot += (base[i * dim + j] - proj_mean_[j]) * proj_dirs_[c * dim + j];
      coords[i * rank + c] = dot;
    }
  }

  proj_ids_.resize(n);
  std::iota(proj_ids_.begin(), proj_ids_.end(), 0u);
  std::sort(proj_ids_.begin(), proj_ids_.end(), [&](std::uint32_t a, std::uint32_t b) {
    return coords[a * rank] < coords[b * rank] || (coords[a * rank] == coords[b * rank] && a < b);
  });
  proj_coords_.resize(n * rank);
  for (std::size_t s = 0; s < n; ++s)
    std::copy_n(coords.begin() + proj_ids_[s] * rank, rank, proj_coords_.begin() + s * rank);
  proj_slack_ = 1e-9 * (1.0 + max_norm);
  proj_rank_ = rank;
}

std::uint32_t NnIndex::build_node(std::uint32_t begin, std::uint32_t end,
                                  std::vector<std::uint32_t>& order) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{0.0, begin, end, 0, true});
  if (end - begin <= kLeafSize) return id;

  const std::size_t dim = sample_.dim();
  std::size_t best_dim = 0;
  double best_spread = -1.0;
  for (std::size_t j = 0; j < dim; ++j) {
    double lo = kInf;
    double hi = -kInf;
    for (std::uint32_t s = begin; s < end; ++s) {
      const double v = sample_.point(order[s])[j];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = j;
    }
  }

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     return sample_.point(a)[best_dim] < sample_.point(b)[best_dim];
                   });
  const double split = sample_.point(order[mid])[best_dim];

  const std::uint32_t left = build_node(begin, mid, order);
  const std::uint32_t right = build_node(mid, end, order);
  nodes_[id] = Node{split, left, right, static_cast<std::uint32_t>(best_dim), false};
  return id;
}

template <std::size_t D, class Best>
void NnIndex::search_tree(std::uint32_t node_id, const double* x, Best& best) const {
  const Node& node = nodes_[node_id];
  if (node.leaf) {
    const std::size_t dim = sample_.dim();
    for (std::uint32_t s = node.a; s < node.b; ++s) {
      const double d2 = squared_distance<D>(x, tree_coords_.data() + s * dim, dim);
      if (d2 <= best.bound()) best.offer(d2, tree_ids_[s]);
    }
    return;
  }
  // Left points have coordinate <= split, right points >= split.
  const double diff = x[node.dim] - node.split;
  const std::uint32_t near = diff < 0.0 ? node.a : node.b;
  const std::uint32_t far = diff < 0.0 ? node.b : node.a;
  search_tree<D>(near, x, best);
  if (diff * diff <= best.bound()) search_tree<D>(far, x, best);
}

template <class Best>
void NnIndex::search_exhaustive(const double* x, Best& best) const {
  const std::size_t n = sample_.size();
  const std::size_t dim = sample_.dim();
  const double* base = sample_.coords().data();
  constexpr std::size_t kBlock = 16;
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = base + i * dim;
    double sum = 0.0;
    bool pruned = false;
    for (std::size_t j = 0; j < dim; ++j) {
      const double diff = x[j] - p[j];
      sum += diff * diff;
      // Partial sums only grow, so exceeding the bound is final.
      if ((j + 1) % kBlock == 0 && sum > best.bound()) {
        pruned = true;
        break;
      }
    }
    if (!pruned) best.offer(sum, static_cast<std::uint32_t>(i));
  }
}

template <class Best>
void NnIndex::search_projected(const double* x, Best& best) const {
  const std::size_t n = sample_.size();
  const std::size_t dim = sample_.dim();
  const std::size_t rank = proj_rank_;
  const double* base = sample_.coords().data();

  double px[kProjRank];
  double norm2 = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double v = x[j] - proj_mean_[j];
    norm2 += v * v;
  }
  for (std::size_t c = 0; c < rank; ++c) {
    double dot = 0.0;
    for (std::size_t j = 0; j < dim; ++j) dot += (x[j] - proj_mean_[j]) * proj_dirs_[c * dim + j];
    px[c] = dot;
  }
  // Rounding in the projections is absorbed by a distance slack.
  const double slack = std::max(proj_slack_, 1e-9 * (1.0 + std::sqrt(norm2)));
  auto limit2 = [&] {
    const double b = best.bound();
    if (b == kInf) return kInf;
    const double r = std::sqrt(b) + slack;
    return r * r;
  };

  auto visit = [&](std::size_t s) {
    const double* q = proj_coords_.data() + s * rank;
    double lb = 0.0;
    for (std::size_t c = 0; c < rank; ++c) {
      const double diff = px[c] - q[c];
      lb += diff * diff;
    }
    if (lb > limit2()) return;
    const std::uint32_t i = proj_ids_[s];
    const double d2 = squared_distance<0>(x, base + i * dim, dim);
    if (d2 <= best.bound()) best.offer(d2, i);
  };

  // Walk outwards from the query's position along the first direction.
  std::size_t right = 0;
  {
    std::size_t hi = n;
    while (right < hi) {
      const std::size_t mid = right + (hi - right) / 2;
      if (proj_coords_[mid * rank] < px[0]) right = mid + 1;
      else hi = mid;
    }
  }
  std::size_t left = right;
  bool left_open = left > 0;
  bool right_open = right < n;
  while (left_open || right_open) {
    const double dl = left_open ? px[0] - proj_coords_[(left - 1) * rank] : kInf;
    const double dr = right_open ? proj_coords_[right * rank] - px[0] : kInf;
    const bool go_left = dl <= dr;
    const double gap = go_left ? dl : dr;
    if (gap * gap > limit2()) break;
    if (go_left) {
      visit(--left);
      left_open = left > 0;
    } else {
      visit(right++);
      right_open = right < n;
    }
  }
}

template <class Best>
void NnIndex::search(const double* x, Best& best) const {
  if (backend_ == Backend::Exhaustive) {
    if (proj_rank_ > 0) {
      search_projected(x, best);
    } else {
      search_exhaustive(x, best);
    }
    return;
  }
  switch (sample_.dim()) {
    case 1:
      search_tree<1>(0, x, best);
      break;
    case 2:
      search_tree<2>(0, x, best);
      break;
    case 3:
      search_tree<3>(0, x, best);
      break;
    case 4:
      search_tree<4>(0, x, best);
      break;
    case 9:
      search_tree<9>(0, x, best);
      break;
    default:
      search_tree<0>(0, x, best);
      break;
  }
}

double NnIndex::metric_distance(double squared_chord) const {
  const double chord = std::sqrt(squared_chord);
  if (metric_ == MetricKind::GreatCircle) return 2.0 * std::asin(std::min(1.0, 0.5 * chord));
  return chord;
}

std::vector<Neighbor> NnIndex::query_knn(std::span<const double> x, std::size_t k) const {
  require(x.size() == dim(), "query dimension " + std::to_string(x.size()) +
                                 " does not match index dimension " + std::to_string(dim()));
  validate_point(metric_, x);
  require(k >= 1 && k <= size(), "k must lie in [1, " + std::to_string(size()) + "], got " +
                                     std::to_string(k));
  DynamicBest best(k);
  search(x.data(), best);
  std::vector<Neighbor> out;
  out.reserve(k);
  for (std::size_t r = 0; r < best.d2.size(); ++r)
    out.push_back(Neighbor{best.id[r], metric_distance(best.d2[r])});
  return out;
}

std::size_t NnIndex::nearest(const double* x) const {
  FixedBest<1> best;
  search(x, best);
  return best.id[0];
}

std::pair<std::size_t, std::size_t> NnIndex::nearest_two(const double* x) const {
  FixedBest<2> best;
  search(x, best);
  return {best.id[0], best.id[1]};
}

std::vector<std::size_t> loo_nn(const NnIndex& index) {
  const std::size_t n = index.size();
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [first, second] = index.nearest_two(index.sample().point(i).data());
    out[i] = first != i ? first : second;
  }
  return out;
}

std::vector<std::size_t> degrees_from_loo(std::span<const std::size_t> loo) {
  std::vector<std::size_t> deg(loo.size(), 0);
  for (std::size_t j : loo) ++deg.at(j);
  return deg;
}

std::vector<std::size_t> degrees(const NnIndex& index) { return degrees_from_loo(loo_nn(index)); }

namespace {

struct ChunkTally {
  std::vector<std::uint32_t> first;
  std::vector<std::uint32_t> second;
  std::vector<double> loo_shift;
};

}  // namespace

CellStats cell_stats_mc(const NnIndex& index, const DistributionSpec& spec,
                        std::span<const double> values, std::size_t aux_n, std::uint64_t seed,
                        const AuxOptions& options) {
  const std::size_t n = index.size();
  const std::size_t dim = index.dim();
  require(values.size() == n, "got " + std::to_string(values.size()) + " values for " +
                                  std::to_string(n) + " points");
  require(aux_n >= 1, "auxiliary sample size must be at least 1");
  require(options.chunk_size >= 1, "chunk size must be at least 1");
  validate(spec);
  require(spec.index() == index.sample().spec().index() && ambient_dim(spec) == dim,
          "auxiliary law " + space_label(spec) + " does not match the indexed sample's space " +
              space_label(index.sample().spec()));

  const bool second = options.second_neighbors;
  const std::size_t chunks = (aux_n + options.chunk_size - 1) / options.chunk_size;

  std::vector<std::uint64_t> first_count(n, 0);
  std::vector<std::uint64_t> second_count(second ? n : 0, 0);
  std::vector<double> loo_shift(second ? n : 0, 0.0);

  // Chunks are folded in index order regardless of which worker finishes first.
  std::mutex merge_mutex;
  std::map<std::size_t, ChunkTally> pending;
  std::size_t next_merge = 0;

  parallel_for(chunks, options.workers, [&](std::size_t chunk) {
    const std::size_t begin = chunk * options.chunk_size;
    const std::size_t count = std::min(options.chunk_size, aux_n - begin);
    std::vector<double> points(count * dim);
    Rng rng(stable_mix(stream_seed(seed, Stream::Auxiliary), chunk));
    draw_points(spec, rng, points);

    ChunkTally tally;
    tally.first.assign(n, 0);
    if (second) {
      tally.second.assign(n, 0);
      tally.loo_shift.assign(n, 0.0);
      for (std::size_t t = 0; t < count; ++t) {
        const auto [j, k] = index.nearest_two(points.data() + t * dim);
        ++tally.first[j];
        ++tally.second[k];
        tally.loo_shift[j] += values[k] - values[j];
      }
    } else {
      for (std::size_t t = 0; t < count; ++t) ++tally.first[index.nearest(points.data() + t * dim)];
    }

    std::lock_guard lock(merge_mutex);
    pending.emplace(chunk, std::move(tally));
    for (auto it = pending.find(next_merge); it != pending.end(); it = pending.find(next_merge)) {
      const ChunkTally& done = it->second;
      for (std::size_t j = 0; j < n; ++j) first_count[j] += done.first[j];
      if (second) {
        for (std::size_t j = 0; j < n; ++j) {
          second_count[j] += done.second[j];
          loo_shift[j] += done.loo_shift[j];
        }
      }
      pending.erase(it);
      ++next_merge;
    }
  });

  CellStats stats;
  stats.aux_count = aux_n;
  stats.loo_neighbors = loo_nn(index);
  stats.degrees = degrees_from_loo(stats.loo_neighbors);
  const double inv_aux = 1.0 / static_cast<double>(aux_n);

  stats.volumes.resize(n);
  double weighted = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    stats.volumes[j] = static_cast<double>(first_count[j]) * inv_aux;
    weighted += static_cast<double>(first_count[j]) * values[j];
  }
  stats.interp_integral = weighted * inv_aux;

  if (second) {
    std::vector<double> cum(n);
    std::vector<double> loo(n);
    for (std::size_t j = 0; j < n; ++j) {
      cum[j] = static_cast<double>(n - 1) * stats.volumes[j] +
               static_cast<double>(second_count[j]) * inv_aux;
      loo[j] = stats.interp_integral + loo_shift[j] * inv_aux;
    }
    stats.cum_volumes = std::move(cum);
    stats.loo_integrals = std::move(loo);
  }
  return stats;
}

CellStats cell_stats_exact_1d(const Sample& sample, std::span<const double> values) {
  const std::size_t n = sample.size();
  require(sample.dim() == 1, "exact 1-D statistics need a 1-D sample");
  require(n >= 2, "exact 1-D statistics need at least 2 points");
  require(values.size() == n, "value count does not match the sample");
  for (std::size_t i = 0; i < n; ++i) {
    const double x = sample.point(i)[0];
    require(x >= 0.0 && x <= 1.0, "point " + std::to_string(i) + " lies outside [0, 1]");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto x = [&](std::size_t i) { return sample.point(i)[0]; };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x(a) < x(b) || (x(a) == x(b) && a < b);
  });
  for (std::size_t r = 1; r < n; ++r) {
    if (x(order[r - 1]) == x(order[r]))
      throw DuplicatePoint(std::min(order[r - 1], order[r]), std::max(order[r - 1], order[r]));
  }

  // Cell of sorted rank r is [lo[r], hi[r]].
  std::vector<double> lo(n);
  std::vector<double> hi(n);
  lo[0] = 0.0;
  hi[n - 1] = 1.0;
  for (std::size_t r = 0; r + 1 < n; ++r) {
    const double mid = 0.5 * (x(order[r]) + x(order[r + 1]));
    hi[r] = mid;
    lo[r + 1] = mid;
  }

  CellStats stats;
  stats.volumes.resize(n);
  for (std::size_t r = 0; r < n; ++r) stats.volumes[order[r]] = hi[r] - lo[r];
  double integral = 0.0;
  for (std::size_t i = 0; i < n; ++i) integral += stats.volumes[i] * values[i];
  stats.interp_integral = integral;

  stats.loo_neighbors.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = order[r];
    if (r == 0) {
      stats.loo_neighbors[i] = order[1];
    } else if (r + 1 == n) {
      stats.loo_neighbors[i] = order[r - 1];
    } else {
      const std::size_t left = order[r - 1];
      const std::size_t right = order[r + 1];
      const double dl = x(i) - x(left);
      const double dr = x(right) - x(i);
      const double dl2 = dl * dl;
      const double dr2 = dr * dr;
      stats.loo_neighbors[i] = dl2 < dr2 ? left : dr2 < dl2 ? right : std::min(left, right);
    }
  }
  stats.degrees = degrees_from_loo(stats.loo_neighbors);

  // Removing rank r hands its cell to ranks r-1 and r+1, split at their midpoint.
  std::vector<double> gain(n, 0.0);
  std::vector<double> loo(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = order[r];
    double shift = -stats.volumes[i] * values[i];
    if (r == 0) {
      const std::size_t right = order[1];
      const double g = hi[1] - lo[1];
      const double grown = hi[1] - 0.0;
      gain[right] += grown - g;
      shift += (grown - g) * values[right];
    } else if (r + 1 == n) {
      const std::size_t left = order[r - 1];
      const double g = hi[r - 1] - lo[r - 1];
      const double grown = 1.0 - lo[r - 1];
      gain[left] += grown - g;
      shift += (grown - g) * values[left];
    } else {
      const std::size_t left = order[r - 1];
      const std::size_t right = order[r + 1];
      const double mid = 0.5 * (x(left) + x(right));
      const double left_gain = mid - hi[r - 1];
      const double right_gain = lo[r + 1] - mid;
      gain[left] += left_gain;
      gain[right] += right_gain;
      shift += left_gain * values[left] + right_gain * values[right];
    }
    loo[i] = integral + shift;
  }

  std::vector<double> cum(n);
  for (std::size_t i = 0; i < n; ++i)
    cum[i] = static_cast<double>(n - 1) * stats.volumes[i] + gain[i];
  stats.cum_volumes = std::move(cum);
  stats.loo_integrals = std::move(loo);
  return stats;
}

double knn_predict(const NnIndex& index, std::span<const double> values, std::span<const double> x,
                   std::size_t k) {
  require(values.size() == index.size(), "value count does not match the index");
  const auto neighbors = index.query_knn(x, k);
  double sum = 0.0;
  for (const auto& nb : neighbors) sum += values[nb.index];
  return sum / static_cast<double>(k);
}

}  // namespace cvnn
