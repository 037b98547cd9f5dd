#include "cvnn/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cvnn/errors.hpp"
#include "cvnn/parallel.hpp"
#include "cvnn/rng.hpp"

namespace cvnn {

namespace {

void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

double coordinate_sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

double trace(std::span<const double> x) {
  const auto m = static_cast<std::size_t>(std::llround(std::sqrt(x.size())));
  double t = 0.0;
  for (std::size_t i = 0; i < m; ++i) t += x[i * m + i];
  return t;
}

bool is_sphere2(const DistributionSpec& spec) {
  const auto* s = std::get_if<UniformSphere>(&spec);
  return s != nullptr && s->ambient_dim == 3;
}

template <class Law>
bool holds(const DistributionSpec& spec) {
  return std::holds_alternative<Law>(spec);
}

std::string quote_field(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string optional_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

template <class Int>
Int parse_integer(const std::string& text, const std::string& what) {
  Int value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw InvalidInput("cannot parse " + what + " from '" + text + "'");
  return value;
}

double parse_real(const std::string& text, const std::string& what) {
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size())
    throw InvalidInput("cannot parse " + what + " from '" + text + "'");
  return value;
}

std::ofstream open_for_write(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ofstream out(path, mode | std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace

void IntegrandRegistry::add(IntegrandSpec spec) {
  require(find(spec.label) == nullptr, "integrand '" + spec.label + "' already registered");
  specs_.push_back(std::move(spec));
}

const IntegrandSpec* IntegrandRegistry::find(std::string_view label) const {
  for (const auto& spec : specs_)
    if (spec.label == label) return &spec;
  return nullptr;
}

std::vector<std::string> IntegrandRegistry::labels() const {
  std::vector<std::string> out;
  for (const auto& spec : specs_) out.push_back(spec.label);
  return out;
}

OracleValue haar_trace_moment(std::size_t power, std::size_t m, std::size_t samples,
                              std::uint64_t seed) {
  require(samples >= 2, "oracle needs at least 2 samples");
  const DistributionSpec spec = HaarOrthogonal{m};
  validate(spec);
  constexpr std::size_t kChunk = 1 << 14;
  const std::size_t dim = m * m;
  std::vector<double> point(dim);
  // Welford, chunk streams in order.
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t count = 0;
  for (std::size_t begin = 0, chunk = 0; begin < samples; begin += kChunk, ++chunk) {
    Rng rng(stable_mix(stream_seed(seed, Stream::Oracle), chunk));
    const std::size_t len = std::min(kChunk, samples - begin);
    for (std::size_t t = 0; t < len; ++t) {
      draw_points(spec, rng, point);
      const double v = std::pow(trace(point), static_cast<double>(power));
      ++count;
      const double delta = v - mean;
      mean += delta / static_cast<double>(count);
      m2 += delta * (v - mean);
    }
  }
  const double variance = m2 / static_cast<double>(count - 1);
  return OracleValue{mean, std::sqrt(variance / static_cast<double>(count)), count};
}

OracleValue trace2_reference() {
  // haar_trace_moment(2, 3, 10'000'000, 20240601)
  return OracleValue{1.0001622034390849, 0.00044731332903617511, 10'000'000};
}

void require_compatible(const IntegrandSpec& integrand, const DistributionSpec& spec) {
  validate(spec);
  require(integrand.compatible && integrand.compatible(spec),
          "integrand '" + integrand.label + "' is not defined on " + space_label(spec) + "(" +
              std::to_string(space_parameter(spec)) + ")");
}

IntegrandRegistry builtin_integrands() {
  IntegrandRegistry registry;
  constexpr double pi = std::numbers::pi;

  registry.add({
      "phi1",
      "sin(pi (2/d sum x_i - 1)) on [0,1]^d",
      [](std::span<const double> x) {
        const double d = static_cast<double>(x.size());
        return std::sin(pi * (2.0 / d * coordinate_sum(x) - 1.0));
      },
      holds<UniformCube>,
      [](const DistributionSpec&) -> std::optional<double> { return 0.0; },
      "exact: the argument is symmetric about 0 and sin is odd",
  });
  registry.add({
      "phi2",
      "sin(pi/d sum x_i) under N(0, I_d)",
      [](std::span<const double> x) {
        const double d = static_cast<double>(x.size());
        return std::sin(pi / d * coordinate_sum(x));
      },
      holds<StandardGaussian>,
      [](const DistributionSpec&) -> std::optional<double> { return 0.0; },
      "exact: E sin(aZ) = 0 for centred Gaussian Z",
  });
  registry.add({
      "trace_1",
      "tr(X) under Haar measure on O_m",
      [](std::span<const double> x) { return trace(x); },
      holds<HaarOrthogonal>,
      [](const DistributionSpec&) -> std::optional<double> { return 0.0; },
      "exact: Haar law is invariant under X -> -X",
  });
  registry.add({
      "trace_2",
      "tr(X)^2 under Haar measure on O_m",
      [](std::span<const double> x) {
        const double t = trace(x);
        return t * t;
      },
      holds<HaarOrthogonal>,
      [](const DistributionSpec& spec) -> std::optional<double> {
        if (std::get<HaarOrthogonal>(spec).size != 3) return std::nullopt;
        return trace2_reference().mean;
      },
      "Monte Carlo oracle, 1e7 Haar draws on O_3, standard error 4.5e-4",
  });

  const double phi34_truth = 4.0 * pi / std::sqrt(3.0) * std::sin(std::sqrt(3.0));
  const double phi5_truth = pi * std::sqrt(8.0) * std::sinh(std::sqrt(2.0));
  const auto sphere_truth = [](double value) {
    return [value](const DistributionSpec&) -> std::optional<double> { return value; };
  };
  registry.add({
      "phi3",
      "cos(x + y + z) on S^2",
      [](std::span<const double> x) { return std::cos(x[0] + x[1] + x[2]); },
      is_sphere2,
      sphere_truth(phi34_truth),
      "exact surface integral (4 pi / sqrt 3) sin(sqrt 3); estimates scaled by 4 pi",
      4.0 * pi,
  });
  registry.add({
      "phi4",
      "cos(x) cos(y) cos(z) on S^2",
      [](std::span<const double> x) { return std::cos(x[0]) * std::cos(x[1]) * std::cos(x[2]); },
      is_sphere2,
      sphere_truth(phi34_truth),
      "exact surface integral (4 pi / sqrt 3) sin(sqrt 3); estimates scaled by 4 pi",
      4.0 * pi,
  });
  registry.add({
      "phi5",
      "exp(x - y) on S^2",
      [](std::span<const double> x) { return std::exp(x[0] - x[1]); },
      is_sphere2,
      sphere_truth(phi5_truth),
      "exact surface integral pi sqrt 8 sinh(sqrt 2); estimates scaled by 4 pi",
      4.0 * pi,
  });
  registry.add({
      "square",
      "sum x_i^2 on [0,1]^d",
      [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return s;
      },
      holds<UniformCube>,
      [](const DistributionSpec& spec) -> std::optional<double> {
        return static_cast<double>(std::get<UniformCube>(spec).dim) / 3.0;
      },
      "exact: d / 3",
  });
  registry.add({
      "norm",
      "Euclidean norm on [0,1]^d",
      [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return std::sqrt(s);
      },
      holds<UniformCube>,
      [](const DistributionSpec& spec) -> std::optional<double> {
        switch (std::get<UniformCube>(spec).dim) {
          case 1:
            return 0.5;
          case 2:
            return (std::sqrt(2.0) + std::asinh(1.0)) / 3.0;
          default:
            return std::nullopt;
        }
      },
      "exact for d <= 2: 1/2 and (sqrt 2 + asinh 1) / 3",
  });
  return registry;
}

SlopeFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "slope fit needs at least 2 paired points");
  const double k = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, "log-log fit needs positive values");
    sx += std::log10(x[i]);
    sy += std::log10(y[i]);
  }
  const double mx = sx / k;
  const double my = sy / k;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log10(x[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log10(y[i]) - my);
  }
  require(sxx > 0.0, "slope fit needs at least two distinct x values");
  const double slope = sxy / sxx;
  return SlopeFit{slope, my - slope * mx};
}

double BenchResult::rmse(Method method, std::size_t n) const {
  for (const auto& row : rows)
    if (row.method == method && row.n == n) return row.rmse;
  throw InvalidInput("no rmse for " + method_label(method) + " at n = " + std::to_string(n));
}

SlopeFit BenchResult::fit(Method method) const {
  for (const auto& [m, f] : fits)
    if (m == method) return f;
  throw InvalidInput("no slope fit for " + method_label(method));
}

std::uint64_t replication_seed(std::uint64_t base_seed, std::size_t rep) {
  return stable_mix(base_seed, rep);
}

BenchResult run_bench(const IntegrandSpec& integrand, const DistributionSpec& spec,
                      const BenchConfig& config) {
  require_compatible(integrand, spec);
  require(config.reps >= 2, "bench needs at least 2 replications");
  require(!config.methods.empty(), "bench needs at least one method");
  require(!config.n_grid.empty(), "bench needs a non-empty n grid");
  for (std::size_t g = 0; g < config.n_grid.size(); ++g) {
    require(config.n_grid[g] >= 2, "grid sizes must be at least 2");
    require(g == 0 || config.n_grid[g] > config.n_grid[g - 1], "n grid must be ascending");
  }
  const auto truth = integrand.truth ? integrand.truth(spec) : std::nullopt;
  require(truth.has_value(), "integrand '" + integrand.label + "' has no reference value on " +
                                 space_label(spec));

  const auto has = [&](Method m) {
    return std::find(config.methods.begin(), config.methods.end(), m) != config.methods.end();
  };
  const bool want_cvnn = has(Method::CVNN);
  const bool want_loo = has(Method::CVNNLoo);

  const std::size_t grid = config.n_grid.size();
  const std::size_t methods = config.methods.size();
  const MetricKind metric = natural_metric(spec);
  const double dim = intrinsic_dim(spec);

  std::vector<EstimateRecord> records(config.reps * grid * methods);

  parallel_for(config.reps, config.workers, [&](std::size_t rep) {
    const std::uint64_t rep_seed = replication_seed(config.base_seed, rep);
    for (std::size_t g = 0; g < grid; ++g) {
      const std::size_t n = config.n_grid[g];
      const Sample points = sample(spec, n, stream_seed(stable_mix(rep_seed, n), Stream::Primary));
      std::vector<double> values(n);
      for (std::size_t i = 0; i < n; ++i) values[i] = integrand.evaluate(points.point(i));

      const std::size_t aux_n = config.aux.resolve(n, dim);
      const std::uint64_t aux_seed = stream_seed(stable_mix(rep_seed, n), Stream::Auxiliary);
      CvnnOptions options;
      std::optional<CvnnPair> both;
      std::optional<EstimateRecord> nn_only;
      if (want_loo) {
        both = estimate_cvnn_both(points, values, metric, spec, aux_n, aux_seed, options);
      } else if (want_cvnn) {
        nn_only = estimate_cvnn(points, values, metric, spec, aux_n, aux_seed, options);
      }

      for (std::size_t m = 0; m < methods; ++m) {
        EstimateRecord record;
        switch (config.methods[m]) {
          case Method::MC:
            record.method = Method::MC;
            record.estimate = estimate_mc(values);
            record.aux_n = 0;
            break;
          case Method::CVNN:
            record = both ? both->nn : *nn_only;
            break;
          case Method::CVNNLoo:
            record = both->loo;
            break;
        }
        record.space = space_label(spec);
        record.dim = space_parameter(spec);
        record.integrand = integrand.label;
        record.n = n;
        record.rep = rep;
        record.seed = rep_seed;
        record.estimate *= integrand.measure_scale;
        record.set_truth(*truth);
        records[(rep * grid + g) * methods + m] = std::move(record);
      }
    }
  });

  BenchResult result;
  result.reps = config.reps;
  result.base_seed = config.base_seed;
  result.seed_policy = "rep seed = stable_mix(base_seed, rep); primary/aux = stream_seed(stable_mix(rep seed, n), role)";
  for (std::size_t m = 0; m < methods; ++m) {
    std::vector<double> ns;
    std::vector<double> errs;
    for (std::size_t g = 0; g < grid; ++g) {
      double sum_sq = 0.0;
      for (std::size_t rep = 0; rep < config.reps; ++rep) {
        const double e = *records[(rep * grid + g) * methods + m].abs_error;
        sum_sq += e * e;
      }
      const double rmse = std::sqrt(sum_sq / static_cast<double>(config.reps));
      result.rows.push_back(BenchRow{config.methods[m], config.n_grid[g], rmse});
      ns.push_back(static_cast<double>(config.n_grid[g]));
      errs.push_back(rmse);
    }
    // A single grid point, or an exact method, has no slope.
    SlopeFit fit{std::nan(""), std::nan("")};
    if (grid >= 2 && std::all_of(errs.begin(), errs.end(), [](double e) { return e > 0.0; }))
      fit = fit_loglog(ns, errs);
    result.fits.emplace_back(config.methods[m], fit);
  }
  result.records = std::move(records);
  return result;
}

std::string format_double(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

std::string record_csv_line(const EstimateRecord& r) {
  std::string line;
  line += quote_field(method_label(r.method));
  line += ',' + quote_field(r.space);
  line += ',' + std::to_string(r.dim);
  line += ',' + quote_field(r.integrand);
  line += ',' + std::to_string(r.n);
  line += ',' + std::to_string(r.aux_n);
  line += ',' + std::to_string(r.rep);
  line += ',' + std::to_string(r.seed);
  line += ',' + format_double(r.estimate);
  line += ',' + optional_field(r.true_value);
  line += ',' + optional_field(r.abs_error);
  return line;
}

void write_records_csv(const std::filesystem::path& path, std::span<const EstimateRecord> records,
                       std::span<const std::string> comments) {
  auto out = open_for_write(path, std::ios::out | std::ios::trunc);
  for (const auto& c : comments) out << "# " << c << '\n';
  out << kRecordHeader << '\n';
  for (const auto& r : records) out << record_csv_line(r) << '\n';
  finish(out, path);
}

void append_records_csv(const std::filesystem::path& path, std::span<const EstimateRecord> records) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  auto out = open_for_write(path, std::ios::out | std::ios::app);
  if (fresh) out << kRecordHeader << '\n';
  for (const auto& r : records) out << record_csv_line(r) << '\n';
  finish(out, path);
}

void write_bench_csv(const std::filesystem::path& path, const BenchResult& result,
                     std::span<const std::string> comments) {
  auto out = open_for_write(path, std::ios::out | std::ios::trunc);
  for (const auto& c : comments) out << "# " << c << '\n';
  out << kBenchHeader << '\n';
  for (const auto& row : result.rows) {
    out << method_label(row.method) << ',' << row.n << ',' << format_double(row.rmse) << ','
        << result.reps << ',' << format_double(result.fit(row.method).slope) << '\n';
  }
  finish(out, path);
}

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          fields.back() += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw InvalidInput("unterminated quoted field");
  return fields;
}

std::vector<EstimateRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");

  std::vector<EstimateRecord> records;
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kRecordHeader) throw IoError(path.string(), "unexpected header: " + line);
      header_seen = true;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 11)
      throw IoError(path.string(), "line " + std::to_string(line_no) + ": expected 11 fields, got " +
                                       std::to_string(f.size()));
    EstimateRecord r;
    const auto method = parse_method(f[0]);
    if (!method) throw IoError(path.string(), "line " + std::to_string(line_no) + ": bad method");
    r.method = *method;
    r.space = f[1];
    r.dim = parse_integer<std::size_t>(f[2], "dim");
    r.integrand = f[3];
    r.n = parse_integer<std::size_t>(f[4], "n");
    r.aux_n = parse_integer<std::size_t>(f[5], "aux_n");
    r.rep = parse_integer<std::size_t>(f[6], "rep");
    r.seed = parse_integer<std::uint64_t>(f[7], "seed");
    r.estimate = parse_real(f[8], "estimate");
    if (!f[9].empty()) r.true_value = parse_real(f[9], "true_value");
    if (!f[10].empty()) r.abs_error = parse_real(f[10], "abs_error");
    records.push_back(std::move(r));
  }
  if (!header_seen) throw IoError(path.string(), "missing header");
  return records;
}

}  // namespace cvnn
