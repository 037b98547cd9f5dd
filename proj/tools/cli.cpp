#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cvnn/applications.hpp"
#include "cvnn/errors.hpp"
#include "cvnn/harness.hpp"
#include "cvnn/parallel.hpp"
#include "cvnn/rng.hpp"

namespace cvnn::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // integrate / bench
  std::string space = "cube";
  std::size_t dim = 0;
  std::string integrand;
  std::string method = "cvnn";
  std::vector<std::size_t> n_grid;
  std::string methods = "mc,cvnn";
  std::size_t reps = 100;
  std::string aux = "square";
  std::size_t aux_cap = 10'000'000;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string records;
  std::size_t workers = 1;

  // sw
  std::size_t q = 3;
  std::size_t atoms = 2000;
  double sigma_x = 2.0;
  double sigma_y = 5.0;
  double p = 2.0;

  // price
  std::string model = "bs";
  std::string kind = "up-out";
  double spot = 100.0;
  double strike = 100.0;
  double barrier = 130.0;
  double maturity = 2.0 / 12.0;
  double rate = 0.1;
  double sigma = 0.3;
  double v0 = 0.1;
  double theta = 0.02;
  double kappa = 4.0;
  double xi = 0.9;
  double rho = 0.8;
  std::size_t steps = 240;
  std::optional<double> truth;
};

using Header = std::vector<std::pair<std::string, std::string>>;

std::string join_sizes(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

std::vector<std::string> as_comments(const Header& header) {
  std::vector<std::string> lines;
  for (const auto& [key, value] : header) lines.push_back(key + "=" + value);
  return lines;
}

std::vector<Method> parse_methods(const std::string& text) {
  std::vector<Method> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto m = parse_method(item);
    if (!m) throw UsageError("unknown method '" + item + "' (expected mc, cvnn or cvnn-loo)");
    out.push_back(*m);
  }
  if (out.empty()) throw UsageError("--methods is empty");
  return out;
}

AuxPolicy parse_aux(const RunConfig& cfg) {
  const auto policy = AuxPolicy::parse(cfg.aux, cfg.aux_cap);
  if (!policy) throw UsageError("--aux must be square, theory or a positive count, got '" + cfg.aux + "'");
  return *policy;
}

std::uint64_t require_seed(const RunConfig& cfg, const std::string& command) {
  if (!cfg.seed) throw UsageError(command + " requires --seed");
  return *cfg.seed;
}

DistributionSpec make_space(const RunConfig& cfg) {
  if (cfg.space == "cube") return UniformCube{cfg.dim ? cfg.dim : 2};
  if (cfg.space == "gaussian") return StandardGaussian{cfg.dim ? cfg.dim : 2};
  if (cfg.space == "sphere") return UniformSphere{cfg.dim ? cfg.dim : 3};
  if (cfg.space == "orthogonal") return HaarOrthogonal{cfg.dim ? cfg.dim : 3};
  throw UsageError("unknown space '" + cfg.space + "'; valid spaces: cube, gaussian, sphere, orthogonal");
}

const IntegrandSpec& find_integrand(const IntegrandRegistry& registry, const std::string& label) {
  if (const IntegrandSpec* spec = registry.find(label)) return *spec;
  std::string valid;
  for (const auto& l : registry.labels()) valid += (valid.empty() ? "" : ", ") + l;
  throw UsageError("unknown integrand '" + label + "'; valid integrands: " + valid);
}

Header space_header(const std::string& command, const RunConfig& cfg, const DistributionSpec& spec) {
  return {{"command", command},
          {"space", space_label(spec)},
          {"dim", std::to_string(space_parameter(spec))},
          {"integrand", cfg.integrand}};
}

MarketModel make_model(const RunConfig& cfg) {
  if (cfg.model == "bs") return BlackScholes{cfg.spot, cfg.rate, cfg.sigma, cfg.maturity};
  if (cfg.model == "heston")
    return Heston{cfg.spot, cfg.rate, cfg.v0, cfg.theta, cfg.kappa, cfg.xi, cfg.rho, cfg.maturity};
  throw UsageError("unknown model '" + cfg.model + "'; valid models: bs, heston");
}

BarrierKind make_kind(const std::string& kind) {
  if (kind == "up-out") return BarrierKind::UpOut;
  if (kind == "up-in") return BarrierKind::UpIn;
  throw UsageError("unknown barrier kind '" + kind + "'; valid kinds: up-in, up-out");
}

void print_summary(std::ostream& out, std::span<const EstimateRecord> records) {
  struct Acc {
    Method method;
    std::size_t n;
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t count = 0;
  };
  std::vector<Acc> acc;
  for (const auto& r : records) {
    auto it = std::find_if(acc.begin(), acc.end(),
                           [&](const Acc& a) { return a.method == r.method && a.n == r.n; });
    if (it == acc.end()) it = acc.insert(acc.end(), Acc{r.method, r.n});
    it->sum += r.estimate;
    it->sum_sq += r.estimate * r.estimate;
    ++it->count;
  }
  out << "method,n,mean,sd\n";
  for (const auto& a : acc) {
    const double mean = a.sum / static_cast<double>(a.count);
    const double var = a.count > 1 ? (a.sum_sq - a.count * mean * mean) / (a.count - 1) : 0.0;
    out << method_label(a.method) << ',' << a.n << ',' << format_double(mean) << ','
        << format_double(std::sqrt(std::max(var, 0.0))) << '\n';
  }
}

int cmd_integrate(const RunConfig& cfg, std::ostream& out) {
  const auto registry = builtin_integrands();
  const DistributionSpec spec = make_space(cfg);
  const IntegrandSpec& integrand = find_integrand(registry, cfg.integrand);
  require_compatible(integrand, spec);
  const auto method = parse_method(cfg.method);
  if (!method) throw UsageError("unknown method '" + cfg.method + "'");
  if (cfg.n_grid.size() != 1) throw UsageError("integrate takes a single --n");
  const std::size_t n = cfg.n_grid.front();
  const std::uint64_t seed = cfg.seed.value_or(0);
  const AuxPolicy aux = parse_aux(cfg);

  const Sample points = sample(spec, n, stream_seed(seed, Stream::Primary));
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = integrand.evaluate(points.point(i));

  EstimateRecord record;
  if (*method == Method::MC) {
    record.estimate = estimate_mc(values);
  } else {
    const std::size_t aux_n = aux.resolve(n, intrinsic_dim(spec));
    const std::uint64_t aux_seed = stream_seed(seed, Stream::Auxiliary);
    const MetricKind metric = natural_metric(spec);
    record = *method == Method::CVNN
                 ? estimate_cvnn(points, values, metric, spec, aux_n, aux_seed)
                 : estimate_cvnn_loo(points, values, metric, spec, aux_n, aux_seed);
  }
  record.method = *method;
  record.space = space_label(spec);
  record.dim = space_parameter(spec);
  record.integrand = integrand.label;
  record.n = n;
  record.seed = seed;
  record.estimate *= integrand.measure_scale;
  if (integrand.truth) {
    if (const auto truth = integrand.truth(spec)) record.set_truth(*truth);
  }

  out << kRecordHeader << '\n' << record_csv_line(record) << '\n';
  if (!cfg.out.empty()) append_records_csv(cfg.out, std::span<const EstimateRecord>(&record, 1));
  return 0;
}

int cmd_bench(const RunConfig& cfg, std::ostream& out) {
  const auto registry = builtin_integrands();
  const DistributionSpec spec = make_space(cfg);
  const IntegrandSpec& integrand = find_integrand(registry, cfg.integrand);
  BenchConfig bench;
  bench.methods = parse_methods(cfg.methods);
  bench.n_grid = cfg.n_grid;
  bench.reps = cfg.reps;
  bench.base_seed = require_seed(cfg, "bench");
  bench.aux = parse_aux(cfg);
  bench.workers = cfg.workers;
  if (cfg.out.empty()) throw UsageError("bench requires --out");

  Header header = space_header("bench", cfg, spec);
  header.insert(header.end(), {{"methods", cfg.methods},
                               {"ngrid", join_sizes(cfg.n_grid)},
                               {"reps", std::to_string(cfg.reps)},
                               {"seed", std::to_string(bench.base_seed)},
                               {"aux", cfg.aux},
                               {"aux-cap", std::to_string(cfg.aux_cap)}});
  const auto comments = as_comments(header);

  const BenchResult result = run_bench(integrand, spec, bench);
  write_bench_csv(cfg.out, result, comments);
  if (!cfg.records.empty()) write_records_csv(cfg.records, result.records, comments);

  out << kBenchHeader << '\n';
  for (const auto& row : result.rows)
    out << method_label(row.method) << ',' << row.n << ',' << format_double(row.rmse) << ','
        << result.reps << ',' << format_double(result.fit(row.method).slope) << '\n';
  return 0;
}

int cmd_sw(const RunConfig& cfg, std::ostream& out) {
  const std::uint64_t seed = require_seed(cfg, "sw");
  const auto methods = parse_methods(cfg.methods);
  for (Method m : methods)
    if (m == Method::CVNNLoo) throw UsageError("sw supports mc and cvnn");
  if (cfg.out.empty()) throw UsageError("sw requires --out");
  if (cfg.reps < 1) throw UsageError("--reps must be positive");
  const AuxPolicy aux = parse_aux(cfg);
  const std::vector<std::size_t> grid = cfg.n_grid.empty() ? std::vector<std::size_t>{100} : cfg.n_grid;

  const GaussianPair pair = make_gaussian_pair(cfg.q, cfg.atoms, cfg.sigma_x, cfg.sigma_y, seed);
  const std::optional<double> truth =
      cfg.p == 2.0 ? std::optional<double>(pair.closed_form_sw2()) : std::nullopt;
  const double dim = cfg.q >= 2 ? static_cast<double>(cfg.q - 1) : 1.0;

  const std::size_t per_rep = grid.size() * methods.size();
  std::vector<EstimateRecord> records(cfg.reps * per_rep);
  parallel_for(cfg.reps, cfg.workers, [&](std::size_t rep) {
    const std::uint64_t rep_seed = replication_seed(seed, rep);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const std::size_t n = grid[g];
      const std::size_t aux_n = aux.resolve(n, dim);
      for (std::size_t k = 0; k < methods.size(); ++k) {
        EstimateRecord r;
        r.method = methods[k];
        r.space = "sphere";
        r.dim = cfg.q;
        r.integrand = "sw" + format_double(cfg.p);
        r.n = n;
        r.aux_n = methods[k] == Method::MC ? 0 : aux_n;
        r.rep = rep;
        r.seed = rep_seed;
        r.estimate = sw_estimate(pair.P, pair.Q, cfg.p, n, methods[k], stable_mix(rep_seed, n), aux_n);
        if (truth) r.set_truth(*truth);
        records[rep * per_rep + g * methods.size() + k] = std::move(r);
      }
    }
  });

  const Header header = {{"command", "sw"},
                         {"q", std::to_string(cfg.q)},
                         {"atoms", std::to_string(cfg.atoms)},
                         {"sigma-x", format_double(cfg.sigma_x)},
                         {"sigma-y", format_double(cfg.sigma_y)},
                         {"p", format_double(cfg.p)},
                         {"n", join_sizes(grid)},
                         {"methods", cfg.methods},
                         {"reps", std::to_string(cfg.reps)},
                         {"seed", std::to_string(seed)},
                         {"aux", cfg.aux},
                         {"aux-cap", std::to_string(cfg.aux_cap)}};
  write_records_csv(cfg.out, records, as_comments(header));
  print_summary(out, records);
  return 0;
}

int cmd_price(const RunConfig& cfg, std::ostream& out) {
  const std::uint64_t seed = require_seed(cfg, "price");
  const auto methods = parse_methods(cfg.methods);
  for (Method m : methods)
    if (m == Method::CVNNLoo) throw UsageError("price supports mc and cvnn");
  if (cfg.out.empty()) throw UsageError("price requires --out");
  if (cfg.reps < 1) throw UsageError("--reps must be positive");
  const AuxPolicy aux = parse_aux(cfg);
  const std::vector<std::size_t> grid = cfg.n_grid.empty() ? std::vector<std::size_t>{1000} : cfg.n_grid;

  const MarketModel model = make_model(cfg);
  OptionContract contract;
  contract.kind = make_kind(cfg.kind);
  contract.strike = cfg.strike;
  contract.barrier = cfg.barrier;
  contract.maturity = cfg.maturity;
  contract.rate = cfg.rate;
  validate(contract);
  validate(model);
  const double dim = intrinsic_dim(PathLaw{model, cfg.steps});

  const std::size_t per_rep = grid.size() * methods.size();
  std::vector<EstimateRecord> records(cfg.reps * per_rep);
  parallel_for(cfg.reps, cfg.workers, [&](std::size_t rep) {
    const std::uint64_t rep_seed = replication_seed(seed, rep);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const std::size_t n = grid[g];
      for (std::size_t k = 0; k < methods.size(); ++k) {
        EstimateRecord r = price_option(contract, model, n, cfg.steps, methods[k],
                                        stable_mix(rep_seed, n), aux.resolve(n, dim));
        r.rep = rep;
        r.seed = rep_seed;
        if (cfg.truth) r.set_truth(*cfg.truth);
        records[rep * per_rep + g * methods.size() + k] = std::move(r);
      }
    }
  });

  Header header = {{"command", "price"},
                   {"model", cfg.model},
                   {"kind", cfg.kind},
                   {"spot", format_double(cfg.spot)},
                   {"strike", format_double(cfg.strike)},
                   {"barrier", format_double(cfg.barrier)},
                   {"maturity", format_double(cfg.maturity)},
                   {"rate", format_double(cfg.rate)}};
  if (cfg.model == "bs") {
    header.emplace_back("sigma", format_double(cfg.sigma));
  } else {
    header.insert(header.end(), {{"v0", format_double(cfg.v0)},
                                 {"theta", format_double(cfg.theta)},
                                 {"kappa", format_double(cfg.kappa)},
                                 {"xi", format_double(cfg.xi)},
                                 {"rho", format_double(cfg.rho)}});
  }
  header.insert(header.end(), {{"steps", std::to_string(cfg.steps)},
                               {"n", join_sizes(grid)},
                               {"methods", cfg.methods},
                               {"reps", std::to_string(cfg.reps)},
                               {"seed", std::to_string(seed)},
                               {"aux", cfg.aux},
                               {"aux-cap", std::to_string(cfg.aux_cap)}});
  if (cfg.truth) header.emplace_back("truth", format_double(*cfg.truth));
  write_records_csv(cfg.out, records, as_comments(header));
  print_summary(out, records);
  return 0;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Expands `--config FILE` into `--key value` tokens placed right after the
// subcommand, so flags given on the command line take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!path) return rest;
  if (rest.empty()) throw UsageError("--config must follow a subcommand");

  std::ifstream in(*path);
  if (!in) throw UsageError("cannot read config file " + *path);
  std::vector<std::string> inserted;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw UsageError(*path + ":" + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key == "command") {
      if (value != rest.front())
        throw UsageError(*path + ": written for '" + value + "', not '" + rest.front() + "'");
      continue;
    }
    inserted.push_back("--" + key);
    inserted.push_back(value);
  }
  rest.insert(rest.begin() + 1, inserted.begin(), inserted.end());
  return rest;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Monte Carlo integration with control neighbours", "cvnn"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "Base seed");
    sub->add_option("--workers", cfg.workers, "Worker threads, 0 = all cores (results do not depend on it)");
    sub->add_option("--aux", cfg.aux, "Auxiliary sample size: square, theory or a count");
    sub->add_option("--aux-cap", cfg.aux_cap, "Upper bound on the auxiliary sample size")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", cfg.out, "Output CSV");
  };
  auto space_opts = [&](CLI::App* sub) {
    sub->add_option("--space", cfg.space, "cube, gaussian, sphere (ambient dim) or orthogonal (matrix size)");
    sub->add_option("--dim", cfg.dim, "Space parameter");
    sub->add_option("--integrand", cfg.integrand, "Integrand label")->required();
  };

  CLI::App* integrate = app.add_subcommand("integrate", "One estimate");
  space_opts(integrate);
  common(integrate);
  integrate->add_option("--n", cfg.n_grid, "Sample size")->required()->expected(1);
  integrate->add_option("--method", cfg.method, "mc, cvnn or cvnn-loo");

  CLI::App* bench = app.add_subcommand("bench", "RMSE over replications and a grid of n");
  space_opts(bench);
  common(bench);
  bench->add_option("--methods", cfg.methods, "Comma-separated methods");
  bench->add_option("--ngrid", cfg.n_grid, "Comma-separated sample sizes")->required()->delimiter(',');
  bench->add_option("--reps", cfg.reps, "Replications");
  bench->add_option("--records", cfg.records, "Also write per-replication records here");

  CLI::App* sw = app.add_subcommand("sw", "Sliced-Wasserstein between two Gaussian samples");
  common(sw);
  sw->add_option("--q", cfg.q, "Ambient dimension")->check(CLI::PositiveNumber);
  sw->add_option("--atoms", cfg.atoms, "Atoms per measure")->check(CLI::PositiveNumber);
  sw->add_option("--sigma-x", cfg.sigma_x, "Standard deviation of the first law");
  sw->add_option("--sigma-y", cfg.sigma_y, "Standard deviation of the second law");
  sw->add_option("--p", cfg.p, "Wasserstein order");
  sw->add_option("--n", cfg.n_grid, "Comma-separated projection counts")->delimiter(',');
  sw->add_option("--methods", cfg.methods, "Comma-separated methods");
  sw->add_option("--reps", cfg.reps, "Replications");

  CLI::App* price = app.add_subcommand("price", "Barrier call price by simulation");
  common(price);
  price->add_option("--model", cfg.model, "bs or heston");
  price->add_option("--kind", cfg.kind, "up-in or up-out");
  price->add_option("--spot", cfg.spot);
  price->add_option("--strike", cfg.strike);
  price->add_option("--barrier", cfg.barrier, "Barrier level, inf for none");
  price->add_option("--maturity", cfg.maturity, "Years");
  price->add_option("--rate", cfg.rate);
  price->add_option("--sigma", cfg.sigma, "Black-Scholes volatility");
  price->add_option("--v0", cfg.v0);
  price->add_option("--theta", cfg.theta, "Long-run variance");
  price->add_option("--kappa", cfg.kappa, "Mean reversion");
  price->add_option("--xi", cfg.xi, "Volatility of variance");
  price->add_option("--rho", cfg.rho);
  price->add_option("--steps", cfg.steps, "Grid points per path");
  price->add_option("--n", cfg.n_grid, "Comma-separated path counts")->delimiter(',');
  price->add_option("--methods", cfg.methods, "Comma-separated methods");
  price->add_option("--reps", cfg.reps, "Replications");
  price->add_option("--truth", cfg.truth, "Reference price for the error columns");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*integrate) return cmd_integrate(cfg, out);
    if (*bench) return cmd_bench(cfg, out);
    if (*sw) return cmd_sw(cfg, out);
    if (*price) return cmd_price(cfg, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const DuplicatePoint& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace cvnn::cli
