#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "csrisk/data.hpp"
#include "csrisk/solver.hpp"

namespace csrisk {

enum class Metric {
  SupOnGamma,   // per risk, sup over [0, gamma]
  SupFull,      // causes merged into one risk, sup over the inspection support
  L2G,          // per risk, L2 distance weighted by the inspection law
  Hellinger,    // whole tuple
  SupSurvival,  // reconstructed event survival, sup over [0, gamma]
};

std::string to_string(Metric m);
Metric metric_from_string(const std::string& name);

// Synthetic errors that bypass simulation, for checking the aggregation.
struct Injection {
  enum class Mode { None, Power, PowerLog };
  Mode mode = Mode::None;
  double c = 1.0;  // error = c n^(-1/3), or c n^(-1/3) log^(1/3) n
};

struct RateExperimentConfig {
  Scenario scenario;
  std::vector<std::size_t> sample_sizes;
  std::size_t replications = 100;
  double gamma = 1.0;
  std::vector<Metric> metrics;
  std::uint64_t master_seed = 0;
  // EM tolerance for the replications. The Newton polish certifies each
  // fit, so EM only has to locate the support.
  double em_tol = 1e-8;
  unsigned threads = 0;  // 0: hardware concurrency
  double max_failure_fraction = 0.05;
  Injection injection;

  void validate() const;
};

void to_json(nlohmann::json& j, const RateExperimentConfig& c);
void from_json(const nlohmann::json& j, RateExperimentConfig& c);

// risk is 1..K for per-risk metrics and 0 for hellinger and sup_survival.
struct RateRow {
  std::size_t n = 0;
  Metric metric = Metric::SupOnGamma;
  int risk = 0;
  double median = 0.0;
  double q75 = 0.0;
  double normalized = 0.0;      // median n^(1/3) log^(-1/3) n
  std::vector<double> errors;   // by replication
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

struct RateSlope {
  Metric metric = Metric::SupOnGamma;
  int risk = 0;
  SlopeFit fit;
};

struct RateTable {
  std::vector<RateRow> rows;  // ordered by metric, risk, then n
  std::vector<RateSlope> slopes;
  std::size_t nonconverged = 0;
  std::size_t truncated = 0;  // survival reconstructions stopped early
  std::size_t trace_violations = 0;  // fits with a decreasing log-likelihood trace

  /// Rows of one (metric, risk) series, increasing in n.
  std::vector<const RateRow*> series(Metric metric, int risk) const;
  const RateSlope& slope(Metric metric, int risk) const;
};

void to_json(nlohmann::json& j, const RateTable& t);

/// a_n^(-1) n^(-1/3) scaling: n^(1/3) log^(-1/3) n.
double rate_normalizer(double n);

/// Sample quantile, linear interpolation between order statistics.
double quantile(std::vector<double> values, double p);

/// Least squares of log error on log n.
SlopeFit slope_fit(std::span<const std::pair<double, double>> points);

RateTable run_rate_experiment(const RateExperimentConfig& config);

/// Writes the long-format CSV to `path` and the slopes to the companion
/// JSON returned by slopes_path(path).
void emit_plot_data(const RateTable& table, const std::filesystem::path& path);
std::filesystem::path slopes_path(const std::filesystem::path& csv);

struct PlotRow {
  std::size_t n = 0;
  std::string metric;
  int risk = 0;
  double median = 0.0;
  double q75 = 0.0;
  double normalized = 0.0;
};

std::vector<PlotRow> read_plot_data(const std::filesystem::path& path);

}  // namespace csrisk
