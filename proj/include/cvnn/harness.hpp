#pragma once

// Integrand registry, seeded replication driver and CSV output.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cvnn/estimator.hpp"
#include "cvnn/spaces.hpp"

namespace cvnn {

struct IntegrandSpec {
  std::string label;
  std::string description;
  std::function<double(std::span<const double>)> evaluate;
  std::function<bool(const DistributionSpec&)> compatible;
  /// Reference value in the units of `measure_scale`, when known for this law.
  std::function<std::optional<double>(const DistributionSpec&)> truth;
  std::string provenance;
  /// Estimates are multiplied by this before comparison. Sphere truths are
  /// surface integrals over S^2, so sphere integrands carry 4 pi.
  double measure_scale = 1.0;
};

class IntegrandRegistry {
 public:
  void add(IntegrandSpec spec);
  const IntegrandSpec* find(std::string_view label) const;
  std::vector<std::string> labels() const;
  const std::vector<IntegrandSpec>& all() const noexcept { return specs_; }

 private:
  std::vector<IntegrandSpec> specs_;
};

/// Mean and standard error of a brute-force Monte Carlo oracle.
struct OracleValue {
  double mean;
  double standard_error;
  std::size_t samples;
};

/// E[tr(X)^power] under Haar measure on O_m(R), by plain Monte Carlo.
OracleValue haar_trace_moment(std::size_t power, std::size_t m, std::size_t samples,
                              std::uint64_t seed);

/// Stored oracle for E[tr(X)^2] on O_3(R) used as the trace_2 truth.
OracleValue trace2_reference();

/// phi1 (cube), phi2 (gaussian), trace_1 / trace_2 (orthogonal),
/// phi3 / phi4 / phi5 (sphere S^2), square and norm (cube).
IntegrandRegistry builtin_integrands();

/// Throws InvalidInput when the integrand cannot be evaluated on `spec`.
void require_compatible(const IntegrandSpec& integrand, const DistributionSpec& spec);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares of log10(y) on log10(x), all points weighted equally.
SlopeFit fit_loglog(std::span<const double> x, std::span<const double> y);

struct BenchConfig {
  std::vector<Method> methods;
  std::vector<std::size_t> n_grid;
  std::size_t reps = 100;
  std::uint64_t base_seed = 0;
  AuxPolicy aux;
  /// Replications run concurrently on this many workers (0 = hardware).
  std::size_t workers = 1;
};

struct BenchRow {
  Method method;
  std::size_t n;
  double rmse;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::vector<std::pair<Method, SlopeFit>> fits;
  std::size_t reps = 0;
  std::uint64_t base_seed = 0;
  std::string seed_policy;
  /// Every per-replication estimate, ordered by (rep, n, method).
  std::vector<EstimateRecord> records;

  double rmse(Method method, std::size_t n) const;
  SlopeFit fit(Method method) const;
};

/// Seed of replication r.
std::uint64_t replication_seed(std::uint64_t base_seed, std::size_t rep);

/// RMSE grid over `config.reps` replications. Within a replication all methods
/// share one primary sample and one set of integrand evaluations; the control
/// neighbour methods share one auxiliary sample.
BenchResult run_bench(const IntegrandSpec& integrand, const DistributionSpec& spec,
                      const BenchConfig& config);

/// Shortest round-trip decimal form ("%.17g").
std::string format_double(double value);

inline constexpr std::string_view kRecordHeader =
    "method,space,dim,integrand,n,aux_n,rep,seed,estimate,true_value,abs_error";
inline constexpr std::string_view kBenchHeader = "method,n,rmse,reps,slope";

std::string record_csv_line(const EstimateRecord& record);

/// Writes `#`-prefixed comment lines, the header, then one row per record.
void write_records_csv(const std::filesystem::path& path, std::span<const EstimateRecord> records,
                       std::span<const std::string> comments = {});

/// Appends rows, writing the header first when the file is new or empty.
void append_records_csv(const std::filesystem::path& path, std::span<const EstimateRecord> records);

void write_bench_csv(const std::filesystem::path& path, const BenchResult& result,
                     std::span<const std::string> comments = {});

/// Splits one RFC 4180 line (no embedded newlines).
std::vector<std::string> split_csv_line(std::string_view line);

/// Reads a records CSV, skipping `#` comment lines.
std::vector<EstimateRecord> read_records_csv(const std::filesystem::path& path);

}  // namespace cvnn
