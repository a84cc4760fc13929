#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "csrisk/stepfn.hpp"

namespace csrisk {

// One current-status observation: inspection time and the observed status.
// cause k in 1..K means the failure of type k happened by t; cause K+1 means
// the subject was still event-free at t.
struct Observation {
  double t = 0.0;
  int cause = 0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

// Observations sorted by inspection time (stable on ties).
class Dataset {
 public:
  Dataset() = default;
  Dataset(int K, std::vector<Observation> observations);

  int K() const noexcept { return K_; }
  std::size_t size() const noexcept { return obs_.size(); }
  bool empty() const noexcept { return obs_.empty(); }
  std::span<const Observation> observations() const noexcept { return obs_; }
  const Observation& operator[](std::size_t i) const { return obs_[i]; }

  /// Number of observations with the given cause.
  std::size_t count(int cause) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  int K_ = 1;
  std::vector<Observation> obs_;
};

/// Merges causes 1..K into a single risk (K = 1), keeping cause K+1 as 2.
Dataset collapse_causes(const Dataset& data);

/// Applies a time transform; throws if it is not strictly increasing on the
/// distinct sample times.
Dataset relabel_times(const Dataset& data, const std::function<double(double)>& map);

// ------------------------------------------------------------- scenarios

// A univariate law used to draw inspection, failure and censoring times.
struct Law {
  enum class Kind { Uniform, Exponential, Point, Discrete, Infinite };

  Kind kind = Kind::Uniform;
  double lo = 0.0;    // Uniform
  double hi = 1.0;    // Uniform
  double rate = 1.0;  // Exponential
  double at = 0.0;    // Point
  std::vector<double> atoms;  // Discrete
  std::vector<double> probs;  // Discrete

  static Law uniform(double lo, double hi);
  static Law exponential(double rate);
  static Law point(double at);
  static Law discrete(std::vector<double> atoms, std::vector<double> probs);
  static Law infinite();

  void validate() const;
  bool is_atomic() const noexcept {
    return kind == Kind::Point || kind == Kind::Discrete || kind == Kind::Infinite;
  }
  double sample(std::mt19937_64& rng) const;
  /// P(X <= t) and P(X < t).
  double cdf(double t) const;
  double cdf_left(double t) const;
  /// Atoms with positive probability (atomic laws only).
  std::vector<std::pair<double, double>> support() const;
};

void to_json(nlohmann::json& j, const Law& law);
void from_json(const nlohmann::json& j, Law& law);

enum class ScenarioKind { CompetingRisks, RightCensored };

// Conditional law of the failure cause given the failure time.
enum class CauseModel {
  Uniform,  // Y uniform on 1..K, independent of X
  Linear,   // K = 2 and P(Y = 1 | X = x) = x, with X ~ Uniform(0, 1)
};

// Data-generating model. For CompetingRisks, (X, Y) is drawn from `failure`
// and `cause_model`. For RightCensored, `failure` is the law of the event
// time and `censor` the law of the censoring time; K is always 2.
struct Scenario {
  std::string name;
  ScenarioKind kind = ScenarioKind::CompetingRisks;
  int K = 2;
  Law inspection = Law::uniform(0.0, 1.0);
  Law failure = Law::uniform(0.0, 1.0);
  CauseModel cause_model = CauseModel::Uniform;
  Law censor = Law::infinite();
  // Horizon for uniform-rate evaluation and the identifiability endpoint.
  double gamma = 1.0;
  double gamma_plus = 1.0;
  // Lower bound on dF_0k/dG over (0, gamma]. Zero means the bound fails.
  double epsilon = 0.0;

  void validate() const;
};

/// Built-in scenarios "A", "B" and "RC".
Scenario builtin_scenario(const std::string& name);
std::vector<std::string> builtin_scenario_names();

void to_json(nlohmann::json& j, const Scenario& s);
void from_json(const nlohmann::json& j, Scenario& s);

// Closed-form truths of a scenario.
struct Truth {
  std::vector<Curve> sub;          // F_0k, k = 1..K
  std::optional<Curve> survival;   // S of the event time (RightCensored)
  std::optional<Curve> censoring;  // Q of the censoring time (RightCensored)
};

/// Throws InvalidArgument when no closed form is available for the laws.
Truth truth_of(const Scenario& s);

/// Law of the inspection time as an integrating weight.
Distribution inspection_distribution(const Scenario& s);

// ---------------------------------------------------------------- seeding

struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t replication_index = 0;

  /// Stream seed for this replication; a pure function of both fields.
  std::uint64_t derive() const;
};

Dataset generate_competing(const Scenario& s, std::size_t n, std::uint64_t seed);
Dataset generate_rightcensored(const Scenario& s, std::size_t n, std::uint64_t seed);
/// Dispatches on the scenario kind.
Dataset generate(const Scenario& s, std::size_t n, std::uint64_t seed);

// -------------------------------------------------------------------- I/O

Dataset read_csv(const std::filesystem::path& path, int K);
Dataset parse_csv(const std::string& text, int K);
void write_csv(const Dataset& data, const std::filesystem::path& path);
std::string format_csv(const Dataset& data);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace csrisk
