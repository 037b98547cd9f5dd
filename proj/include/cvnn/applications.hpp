#pragma once

// Sliced-Wasserstein distance between empirical measures and barrier-option
// pricing, both estimated by plain Monte Carlo or control neighbours.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "cvnn/estimator.hpp"
#include "cvnn/spaces.hpp"

namespace cvnn {

/// Uniform weights 1/m on m atoms in R^q, stored row-major.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(std::size_t dim, std::vector<double> atoms);

  std::size_t size() const noexcept { return atoms_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> atom(std::size_t i) const { return {atoms_.data() + i * dim_, dim_}; }
  std::span<const double> atoms() const noexcept { return atoms_; }

 private:
  std::size_t dim_;
  std::vector<double> atoms_;
};

/// W_p^p between two equal-size empirical measures on the line.
double w1d_pp(std::span<const double> xs, std::span<const double> ys, double p);

/// theta -> W_p^p of the projections of P and Q onto theta.
double projected_wpp(const EmpiricalMeasure& P, const EmpiricalMeasure& Q,
                     std::span<const double> theta, double p);

/// Returns SW_p^p (not its root). Directions are uniform on S^{q-1}; the
/// control-neighbours variant indexes them by great-circle distance.
double sw_estimate(const EmpiricalMeasure& P, const EmpiricalMeasure& Q, double p,
                   std::size_t n_proj, Method method, std::uint64_t seed, std::size_t aux_n);

/// Two isotropic Gaussians N(m_X, s_X^2 I) and N(m_Y, s_Y^2 I) with means
/// drawn from N(0, I_q), and m atoms from each.
struct GaussianPair {
  EmpiricalMeasure P;
  EmpiricalMeasure Q;
  std::vector<double> mean_x;
  std::vector<double> mean_y;
  double sigma_x;
  double sigma_y;

  /// Population SW_2^2 = |m_X - m_Y|^2 / q + (s_X - s_Y)^2.
  double closed_form_sw2() const;
};

GaussianPair make_gaussian_pair(std::size_t q, std::size_t m, double sigma_x, double sigma_y,
                                std::uint64_t seed);

enum class BarrierKind { UpIn, UpOut };

struct OptionContract {
  BarrierKind kind = BarrierKind::UpOut;
  double strike = 100.0;
  /// +infinity makes the barrier unreachable.
  double barrier = 130.0;
  double maturity = 2.0 / 12.0;
  double rate = 0.1;
};

void validate(const OptionContract& contract);

/// Undiscounted payoff on one discretized path; the barrier is monitored on grid values only.
double payoff(const OptionContract& contract, std::span<const double> path);

/// (S_T - K)_+.
double vanilla_payoff(double strike, std::span<const double> path);

/// Discounted price. Control neighbours use Euclidean distance between path
/// vectors and fresh auxiliary paths from the same model.
EstimateRecord price_option(const OptionContract& contract, const MarketModel& model,
                            std::size_t n_paths, std::size_t steps, Method method,
                            std::uint64_t seed, std::size_t aux_n,
                            const CvnnOptions& options = {});

/// Black-Scholes price of a European call.
double black_scholes_call(double spot, double strike, double rate, double volatility,
                          double maturity);

}  // namespace cvnn
