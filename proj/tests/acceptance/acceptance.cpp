// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "cvnn/applications.hpp"
#include "cvnn/errors.hpp"
#include "cvnn/estimator.hpp"
#include "cvnn/harness.hpp"
#include "cvnn/nn_index.hpp"
#include "cvnn/parallel.hpp"
#include "oracles.hpp"

using namespace cvnn;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  m.se = m.sd / std::sqrt(static_cast<double>(v.size()));
  return m;
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// Uniform integer in [0, k).
std::size_t pick(Rng& rng, std::size_t k) {
  return std::uniform_int_distribution<std::size_t>(0, k - 1)(rng.engine());
}

Sample line_sample(std::vector<double> xs) { return Sample(UniformCube{1}, 0, 1, std::move(xs)); }

std::vector<double> uniform_points(Rng& rng, std::size_t n) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform();
  return x;
}

// 1. Both control-neighbour variants are exact on constants.
Outcome exact_on_constants() {
  const std::vector<DistributionSpec> specs{UniformCube{2}, UniformSphere{3}, HaarOrthogonal{3}};
  double worst = 0.0;
  for (const auto& spec : specs) {
    for (std::uint64_t seed : {1, 2, 3}) {
      const Sample s = sample(spec, 100, seed);
      for (double c : {0.0, 1.0, -3.5}) {
        const std::vector<double> values(s.size(), c);
        const auto pair = estimate_cvnn_both(s, values, natural_metric(spec), spec, 10'000, seed + 10);
        worst = std::max({worst, std::abs(pair.nn.estimate - c), std::abs(pair.loo.estimate - c)});
      }
    }
  }
  return {worst <= 1e-12, fmt("max |estimate - c| = %.3g (tol 1e-12)", worst)};
}

// 2. Direct formulas and quadrature rules agree on shared statistics.
Outcome quadrature_equivalence() {
  Rng rng(2002);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + pick(rng, 3);
    const std::size_t n = 2 + pick(rng, 49);
    const Sample s = sample(UniformCube{d}, n, 5000 + trial);
    std::vector<double> phi(n);
    for (auto& v : phi) v = rng.normal();
    const auto index = NnIndex::build(s, MetricKind::Euclidean);
    const CellStats st = cell_stats_mc(index, UniformCube{d}, phi, 2000, trial);

    // Direct formulas with leave-one-out neighbours found by brute force.
    double direct_nn = 0.0, direct_loo = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = oracle::knn(s.coords(), d, s.point(i), 1, i)[0];
      direct_nn += phi[i] - phi[j];
      direct_loo += phi[i] - phi[j] + (*st.loo_integrals)[i];
    }
    direct_nn = direct_nn / n + st.interp_integral;
    direct_loo /= n;

    const double rule_nn = estimate_from_rule(quadrature_weights(st, WeightVariant::NN), phi);
    const double rule_loo = estimate_from_rule(quadrature_weights(st, WeightVariant::NNLoo), phi);
    worst = std::max({worst, std::abs(direct_nn - rule_nn), std::abs(direct_loo - rule_loo)});
  }
  return {worst <= 1e-10, fmt("200 configs, max |direct - rule| = %.3g (tol 1e-10)", worst)};
}

// 3. Leave-one-out identities against the brute-force 1-D oracle.
Outcome loo_identities() {
  Rng rng(3003);
  double worst = 0.0;
  std::size_t sets = 0;
  for (std::size_t n = 2; n <= 8; ++n) {
    for (std::size_t t = 0; t < 100; ++t, ++sets) {
      const auto x = uniform_points(rng, n);
      std::vector<double> phi(n);
      for (auto& v : phi) v = rng.normal();
      const CellStats st = cell_stats_exact_1d(line_sample(x), phi);
      const auto ref = oracle::exact_1d(x, phi);

      // sum_i (mu(phi_hat^(i)) - mu(phi_hat)) = mu(phi_bar - phi_hat).
      double lhs1 = 0.0;
      for (std::size_t i = 0; i < n; ++i) lhs1 += (*st.loo_integrals)[i] - st.interp_integral;
      // sum phi_i d_i = sum phi_hat^(i)(X_i), sum phi_i c_i = sum mu(phi_hat^(i)).
      double lhs_d = 0.0, rhs_d = 0.0, lhs_c = 0.0, rhs_c = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        lhs_d += phi[i] * static_cast<double>(st.degrees[i]);
        rhs_d += phi[ref.loo_nn[i]];
        lhs_c += phi[i] * (*st.cum_volumes)[i];
        rhs_c += ref.loo_interp[i];
      }
      worst = std::max({worst, std::abs(lhs1 - ref.loo_cell_integral), std::abs(lhs_d - rhs_d),
                        std::abs(lhs_c - rhs_c)});
    }
  }
  return {worst <= 1e-12, fmt("%zu point sets, n = 2..8, max deviation = %.3g (tol 1e-12)", sets, worst)};
}

// 4. The leave-one-out estimate is unbiased.
Outcome loo_unbiased() {
  const std::size_t n = 16, reps = 20'000;
  Rng rng(4004);
  std::vector<double> err(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const auto x = uniform_points(rng, n);
    std::vector<double> phi(n);
    for (std::size_t i = 0; i < n; ++i) phi[i] = x[i] * x[i];
    const CellStats st = cell_stats_exact_1d(line_sample(x), phi);
    err[r] = cvnn_loo_from_stats(phi, st) - 1.0 / 3.0;
  }
  const auto m = moments(err);
  return {std::abs(m.mean) <= 4.0 * m.se,
          fmt("mean error %.3g, 4 SE = %.3g over %zu reps", m.mean, 4.0 * m.se, reps)};
}

// 5. Degrees sum to n; E[d_{n,1}] = E[c_{n,1}] = 1.
Outcome degree_volume_laws() {
  const std::size_t reps = 5000;
  bool sums_ok = true;
  std::vector<double> d1(reps), c1(reps), d2(reps), c2(reps);
  Rng rng(5005);
  for (std::size_t r = 0; r < reps; ++r) {
    // Exact statistics on the line, n = 10.
    const auto x = uniform_points(rng, 10);
    const CellStats st = cell_stats_exact_1d(line_sample(x), std::vector<double>(10, 0.0));
    std::size_t total = 0;
    for (auto d : st.degrees) total += d;
    sums_ok = sums_ok && total == 10;
    d1[r] = static_cast<double>(st.degrees[0]);
    c1[r] = (*st.cum_volumes)[0];

    // Monte Carlo statistics on the square, n = 20.
    const Sample s = sample(UniformCube{2}, 20, 70'000 + r);
    const auto index = NnIndex::build(s, MetricKind::Euclidean);
    const CellStats mc = cell_stats_mc(index, UniformCube{2}, std::vector<double>(20, 0.0), 4000, r);
    total = 0;
    for (auto d : mc.degrees) total += d;
    sums_ok = sums_ok && total == 20;
    d2[r] = static_cast<double>(mc.degrees[0]);
    c2[r] = (*mc.cum_volumes)[0];
  }
  std::string detail = sums_ok ? "sum d = n in every rep" : "sum d != n in some rep";
  bool pass = sums_ok;
  const char* names[] = {"d (1-D exact)", "c (1-D exact)", "d (2-D)", "c (2-D MC)"};
  const std::vector<double>* series[] = {&d1, &c1, &d2, &c2};
  for (int k = 0; k < 4; ++k) {
    const auto m = moments(*series[k]);
    pass = pass && std::abs(m.mean - 1.0) <= 4.0 * m.se;
    detail += fmt("; E[%s] = %.4f +- %.4f", names[k], m.mean, 4.0 * m.se);
  }
  return {pass, detail};
}

BenchResult rate_bench(const char* integrand, const DistributionSpec& spec, std::uint64_t seed) {
  BenchConfig cfg;
  cfg.methods = {Method::MC, Method::CVNN};
  cfg.n_grid = {64, 128, 256, 512, 1024, 2048, 4096};
  cfg.reps = 100;
  cfg.base_seed = seed;
  cfg.aux = *AuxPolicy::parse("square");
  cfg.workers = 0;
  return run_bench(*builtin_integrands().find(integrand), spec, cfg);
}

std::string rmse_table(const BenchResult& r) {
  std::string out;
  for (const auto& row : r.rows) out += fmt(" %s@%zu=%.3g", method_label(row.method).c_str(), row.n, row.rmse);
  return out;
}

// 6. Rates on the cube.
Outcome cube_rate() {
  const auto r = rate_bench("phi1", UniformCube{2}, 6006);
  const double cv = r.fit(Method::CVNN).slope, mc = r.fit(Method::MC).slope;
  const bool pass = cv >= -1.15 && cv <= -0.85 && mc >= -0.6 && mc <= -0.4;
  return {pass, fmt("cvnn slope %.3f in [-1.15, -0.85], mc slope %.3f in [-0.6, -0.4];", cv, mc) + rmse_table(r)};
}

// 7. Rate on the sphere.
Outcome sphere_rate() {
  const auto r = rate_bench("phi3", UniformSphere{3}, 7007);
  const double cv = r.fit(Method::CVNN).slope;
  const double rc = r.rmse(Method::CVNN, 4096), rm = r.rmse(Method::MC, 4096);
  const bool pass = cv >= -1.15 && cv <= -0.85 && rc < rm;
  return {pass, fmt("cvnn slope %.3f in [-1.15, -0.85], rmse at 4096: cvnn %.3g < mc %.3g;", cv, rc, rm) +
                    rmse_table(r)};
}

// 8. Gap between the two control-neighbour estimates.
Outcome gap_decay() {
  Rng rng(8008);
  std::vector<double> ns, gaps;
  std::string detail;
  for (std::size_t n = 16; n <= 1024; n *= 2) {
    double sum = 0.0;
    for (std::size_t r = 0; r < 200; ++r) {
      const auto x = uniform_points(rng, n);
      std::vector<double> phi(n);
      for (std::size_t i = 0; i < n; ++i) phi[i] = x[i] * x[i];
      const CellStats st = cell_stats_exact_1d(line_sample(x), phi);
      sum += std::abs(cvnn_from_stats(phi, st) - cvnn_loo_from_stats(phi, st));
    }
    ns.push_back(static_cast<double>(n));
    gaps.push_back(sum / 200.0);
    detail += fmt(" %zu:%.3g", n, sum / 200.0);
  }
  const double slope = fit_loglog(ns, gaps).slope;
  return {slope <= -1.5, fmt("slope %.3f <= -1.5; mean gaps", slope) + detail};
}

// 9. 1-NN regression error.
Outcome nn_approximation() {
  const std::size_t reps = 20, tests = 1000;
  std::vector<double> ns, maes;
  std::string detail;
  for (std::size_t n : {100, 1000, 10'000}) {
    double total = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      const Sample s = sample(UniformCube{2}, n, 9000 + 31 * r + n);
      std::vector<double> phi(n);
      for (std::size_t i = 0; i < n; ++i) phi[i] = std::hypot(s.point(i)[0], s.point(i)[1]);
      const auto index = NnIndex::build(s, MetricKind::Euclidean);
      const Sample probe = sample(UniformCube{2}, tests, 19'000 + 31 * r + n);
      for (std::size_t t = 0; t < tests; ++t) {
        const auto x = probe.point(t);
        total += std::abs(knn_predict(index, phi, x, 1) - std::hypot(x[0], x[1]));
      }
    }
    ns.push_back(static_cast<double>(n));
    maes.push_back(total / (reps * tests));
    detail += fmt(" %zu:%.4g", n, total / (reps * tests));
  }
  const double slope = fit_loglog(ns, maes).slope;
  return {std::abs(slope + 0.5) <= 0.15, fmt("slope %.3f in [-0.65, -0.35]; MAE", slope) + detail};
}

// Independent SW_2^2 between two fixed empirical measures: random directions,
// sorted projections.
Moments sw2_oracle(const EmpiricalMeasure& P, const EmpiricalMeasure& Q, std::size_t n_proj) {
  std::mt19937_64 gen(424242);
  std::normal_distribution<double> normal;
  const std::size_t q = P.dim(), m = P.size();
  std::vector<double> vals(n_proj), a(m), b(m), theta(q);
  for (std::size_t t = 0; t < n_proj; ++t) {
    double norm = 0.0;
    for (auto& v : theta) {
      v = normal(gen);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : theta) v /= norm;
    for (std::size_t i = 0; i < m; ++i) {
      a[i] = b[i] = 0.0;
      for (std::size_t j = 0; j < q; ++j) {
        a[i] += P.atom(i)[j] * theta[j];
        b[i] += Q.atom(i)[j] * theta[j];
      }
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    vals[t] = s / static_cast<double>(m);
  }
  return moments(vals);
}

// 10. Sliced-Wasserstein experiment.
Outcome sliced_wasserstein() {
  const std::size_t q = 3, m = 2000, n_proj = 100, reps = 100;
  const auto pair = make_gaussian_pair(q, m, 2.0, 5.0, 10'010);
  const double closed = pair.closed_form_sw2();
  const Moments target = sw2_oracle(pair.P, pair.Q, 10'000);
  const std::size_t aux = AuxPolicy{}.resolve(n_proj, 2.0);

  std::vector<double> mc(reps), cv(reps);
  parallel_for(reps, 0, [&](std::size_t r) {
    const std::uint64_t seed = replication_seed(10'011, r);
    mc[r] = sw_estimate(pair.P, pair.Q, 2.0, n_proj, Method::MC, seed, 0);
    cv[r] = sw_estimate(pair.P, pair.Q, 2.0, n_proj, Method::CVNN, seed, aux);
  });
  const auto mm = moments(mc), mv = moments(cv);
  const double tol = 0.1 * target.mean;
  const bool pass = std::abs(mm.mean - target.mean) <= tol && std::abs(mv.mean - target.mean) <= tol &&
                    mv.sd <= 0.6 * mm.sd;
  return {pass, fmt("target %.4f (closed form %.4f + empirical bias %.4f, oracle SE %.2g); "
                    "mean mc %.4f, cvnn %.4f (tol %.4f); sd cvnn %.4g <= 0.6 x sd mc %.4g",
                    target.mean, closed, target.mean - closed, target.se, mm.mean, mv.mean, tol, mv.sd,
                    0.6 * mm.sd)};
}

// 11. Barrier option pricing under Black-Scholes.
Outcome option_pricing() {
  const BlackScholes bs{100.0, 0.1, 0.3, 2.0 / 12.0};
  const std::size_t steps = 240, n = 1000, reps = 100, aux = 100'000;
  OptionContract up_out, up_in;
  up_out.kind = BarrierKind::UpOut;
  up_in.kind = BarrierKind::UpIn;

  // Streaming oracle with its own Euler loop and generator.
  const std::size_t oracle_paths = 10'000'000;
  std::mt19937_64 gen(111'111);
  std::normal_distribution<double> normal;
  const double dt = bs.maturity / (steps - 1), sq = std::sqrt(dt);
  const double disc = std::exp(-bs.rate * bs.maturity);
  std::vector<double> path(steps);
  double sum = 0.0, sum_sq = 0.0;
  bool partition = true;
  for (std::size_t p = 0; p < oracle_paths; ++p) {
    path[0] = bs.spot;
    double peak = bs.spot;
    for (std::size_t k = 1; k < steps; ++k) {
      path[k] = path[k - 1] * (1.0 + bs.rate * dt + bs.volatility * sq * normal(gen));
      peak = std::max(peak, path[k]);
    }
    const double call = std::max(path[steps - 1] - up_out.strike, 0.0);
    const double v = peak < up_out.barrier ? disc * call : 0.0;
    sum += v;
    sum_sq += v * v;
    partition = partition && payoff(up_in, path) + payoff(up_out, path) == vanilla_payoff(up_out.strike, path);
  }
  const double truth = sum / oracle_paths;
  const double truth_se = std::sqrt((sum_sq / oracle_paths - truth * truth) / oracle_paths);

  std::vector<double> mc(reps), cv(reps);
  parallel_for(reps, 0, [&](std::size_t r) {
    const std::uint64_t seed = replication_seed(11'011, r);
    mc[r] = price_option(up_out, bs, n, steps, Method::MC, seed, 0).estimate - truth;
    cv[r] = price_option(up_out, bs, n, steps, Method::CVNN, seed, aux).estimate - truth;
  });
  const auto mm = moments(mc), mv = moments(cv);
  const bool pass = partition && mv.sd * mv.sd <= mm.sd * mm.sd;
  return {pass, fmt("truth %.5f (SE %.2g, 1e7 paths); error variance cvnn %.4g <= mc %.4g; "
                    "mean error mc %.3g, cvnn %.3g; aux %zu; up-in + up-out = vanilla on all oracle paths: %s",
                    truth, truth_se, mv.sd * mv.sd, mm.sd * mm.sd, mm.mean, mv.mean, aux,
                    partition ? "yes" : "no")};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cvnn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

// 12. Backend equivalence and worker-independent CLI output.
Outcome backends_and_determinism() {
  Rng rng(12'012);
  std::size_t mismatches = 0;
  for (std::size_t c = 0; c < 100; ++c) {
    DistributionSpec spec;
    switch (c % 5) {
      case 0: spec = UniformCube{1 + pick(rng, 6)}; break;
      case 1: spec = StandardGaussian{1 + pick(rng, 8)}; break;
      case 2: spec = UniformSphere{2 + pick(rng, 4)}; break;
      case 3: spec = HaarOrthogonal{2 + pick(rng, 3)}; break;
      default: spec = PathLaw{BlackScholes{100.0, 0.1, 0.3, 2.0 / 12.0}, 2 + pick(rng, 30)}; break;
    }
    const std::size_t n = 2 + pick(rng, 400);
    const Sample s = sample(spec, n, 120'000 + c);
    const auto tree = NnIndex::build(s, natural_metric(spec), Backend::Tree);
    const auto flat = NnIndex::build(s, natural_metric(spec), Backend::Exhaustive);
    mismatches += loo_nn(tree) != loo_nn(flat);
    const Sample probes = sample(spec, 50, 130'000 + c);
    const std::size_t k = std::min<std::size_t>(3, n);
    for (std::size_t t = 0; t < probes.size(); ++t) {
      const auto a = tree.query_knn(probes.point(t), k);
      const auto b = flat.query_knn(probes.point(t), k);
      for (std::size_t j = 0; j < k; ++j) mismatches += a[j].index != b[j].index || a[j].distance != b[j].distance;
    }
  }

  const auto dir = std::filesystem::temp_directory_path();
  const std::vector<std::vector<std::string>> commands{
      {"bench", "--space", "orthogonal", "--dim", "3", "--integrand", "trace_2", "--methods", "mc,cvnn,cvnn-loo",
       "--ngrid", "16,64", "--reps", "8", "--seed", "12"},
      {"sw", "--q", "3", "--atoms", "100", "--n", "20,40", "--reps", "6", "--seed", "12"},
      {"price", "--model", "heston", "--n", "60", "--steps", "30", "--methods", "mc,cvnn", "--reps", "6", "--seed",
       "12", "--aux", "5000"},
  };
  std::size_t differing = 0, failed = 0;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    std::vector<std::string> outputs;
    for (const char* workers : {"1", "4", "1"}) {
      const auto file = dir / ("cvnn_acceptance_" + std::to_string(c) + "_" + workers + ".csv");
      std::filesystem::remove(file);
      auto args = commands[c];
      args.insert(args.end(), {"--workers", workers, "--out", file.string()});
      failed += run_cli(args) != 0;
      outputs.push_back(slurp(file));
      std::filesystem::remove(file);
    }
    differing += outputs[0] != outputs[1] || outputs[0] != outputs[2] || outputs[0].empty();
  }
  const bool pass = mismatches == 0 && differing == 0 && failed == 0;
  return {pass, fmt("100 configs, %zu tree/scan mismatches; %zu of 3 commands differ across runs or workers "
                    "(%zu failed runs)",
                    mismatches, differing, failed)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"exactness on constants", exact_on_constants},
      {"direct and quadrature forms agree", quadrature_equivalence},
      {"leave-one-out identities", loo_identities},
      {"leave-one-out estimate is unbiased", loo_unbiased},
      {"degree and cumulative volume laws", degree_volume_laws},
      {"rate on the cube", cube_rate},
      {"rate on the sphere", sphere_rate},
      {"gap between the two estimates", gap_decay},
      {"nearest-neighbour approximation rate", nn_approximation},
      {"sliced Wasserstein", sliced_wasserstein},
      {"barrier option pricing", option_pricing},
      {"backend equivalence and determinism", backends_and_determinism},
  };

  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::strtoul(argv[i], nullptr, 10));

  bool all = true;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    if (!selected.empty() && !selected.count(c + 1)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[c].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    all = all && o.pass;
    std::printf("%s criterion %zu (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c + 1, criteria[c].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
