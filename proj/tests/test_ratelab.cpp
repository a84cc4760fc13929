#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "csrisk/error.hpp"
#include "csrisk/ratelab.hpp"

using namespace csrisk;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("csrisk_ratelab_" + name);
}

RateExperimentConfig injection_config(Injection::Mode mode) {
  RateExperimentConfig c;
  c.scenario = builtin_scenario("A");
  c.sample_sizes = {300, 600, 1200, 2400, 4800};
  c.replications = 3;
  c.gamma = 0.9;
  c.metrics = {Metric::SupOnGamma, Metric::Hellinger};
  c.injection = {mode, 0.7};
  return c;
}

}  // namespace

TEST_CASE("slope_fit") {
  std::vector<std::pair<double, double>> pts;
  for (double n : {10.0, 100.0, 1000.0, 1e4}) pts.emplace_back(n, 3.0 / n);
  SlopeFit f = slope_fit(pts);
  CHECK(f.slope == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(f.r_squared == doctest::Approx(1.0));

  const std::vector<std::pair<double, double>> two{{100.0, 0.1}, {1000.0, 0.05}};
  CHECK(slope_fit(two).slope == doctest::Approx(std::log(0.5) / std::log(10.0)).epsilon(1e-12));
  CHECK(slope_fit(two).slope == doctest::Approx(-0.30103).epsilon(1e-5));

  const std::vector<std::pair<double, double>> flat{{100.0, 0.2}, {400.0, 0.2}, {1600.0, 0.2}};
  CHECK(slope_fit(flat).slope == doctest::Approx(0.0));
  CHECK(slope_fit(flat).r_squared == 1.0);

  const std::vector<std::pair<double, double>> zero{{100.0, 0.0}, {200.0, 0.1}};
  CHECK_THROWS_AS(slope_fit(zero), Error);
  const std::vector<std::pair<double, double>> single{{100.0, 0.1}, {100.0, 0.2}};
  CHECK_THROWS_AS(slope_fit(single), Error);
}

TEST_CASE("quantile interpolates between order statistics") {
  CHECK(quantile({3.0, 1.0, 2.0, 4.0}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({3.0, 1.0, 2.0, 4.0}, 0.75) == doctest::Approx(3.25));
  CHECK(quantile({5.0}, 0.75) == 5.0);
  CHECK(quantile({1.0, 2.0}, 0.0) == 1.0);
  CHECK(quantile({1.0, 2.0}, 1.0) == 2.0);
  CHECK_THROWS_AS(quantile({}, 0.5), Error);
  CHECK_THROWS_AS(quantile({1.0}, 1.5), Error);
}

TEST_CASE("rate_normalizer") {
  CHECK(rate_normalizer(1000.0) == doctest::Approx(std::cbrt(1000.0 / std::log(1000.0))));
  CHECK_THROWS_AS(rate_normalizer(1.0), Error);
}

TEST_CASE("injected power errors give slope -1/3") {
  const RateTable t = run_rate_experiment(injection_config(Injection::Mode::Power));
  CHECK(t.slopes.size() == 3);
  for (const RateSlope& s : t.slopes) CHECK(std::abs(s.fit.slope + 1.0 / 3.0) < 1e-9);
  for (const RateRow& r : t.rows) {
    CHECK(r.median == doctest::Approx(0.7 * std::pow(double(r.n), -1.0 / 3.0)).epsilon(1e-12));
    CHECK(r.q75 == r.median);
  }
}

TEST_CASE("injected power-log errors have a constant normalized median") {
  const RateTable t = run_rate_experiment(injection_config(Injection::Mode::PowerLog));
  for (const RateRow& r : t.rows) CHECK(std::abs(r.normalized - 0.7) < 1e-9);
  // The log factor flattens the fitted slope.
  for (const RateSlope& s : t.slopes) CHECK(s.fit.slope > -1.0 / 3.0);
}

TEST_CASE("emitted plot data round-trips") {
  const RateTable t = run_rate_experiment(injection_config(Injection::Mode::PowerLog));
  const auto csv = temp_path("plot.csv");
  emit_plot_data(t, csv);

  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "n,metric,risk,median,q75,normalized");

  const auto rows = read_plot_data(csv);
  REQUIRE(rows.size() == t.rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].n == t.rows[i].n);
    CHECK(rows[i].metric == to_string(t.rows[i].metric));
    CHECK(rows[i].risk == t.rows[i].risk);
    CHECK(rows[i].median == t.rows[i].median);
    CHECK(rows[i].q75 == t.rows[i].q75);
    CHECK(rows[i].normalized == t.rows[i].normalized);
  }

  std::ifstream sj(slopes_path(csv));
  REQUIRE(sj.good());
  const auto j = nlohmann::json::parse(sj);
  std::set<std::pair<std::string, int>> keys;
  for (const auto& e : j) keys.emplace(e.at("metric").get<std::string>(), e.at("risk").get<int>());
  CHECK(keys == std::set<std::pair<std::string, int>>{{"sup_on_gamma", 1}, {"sup_on_gamma", 2}, {"hellinger", 0}});
  std::filesystem::remove(csv);
  std::filesystem::remove(slopes_path(csv));
}

TEST_CASE("read_plot_data rejects malformed files") {
  const auto csv = temp_path("bad.csv");
  std::ofstream(csv) << "n,metric,risk\n1,sup_full,0\n";
  CHECK_THROWS_AS(read_plot_data(csv), Error);
  std::filesystem::remove(csv);
  CHECK_THROWS_AS(read_plot_data(temp_path("missing.csv")), Error);
}

TEST_CASE("simulated experiment is deterministic across thread counts") {
  RateExperimentConfig c;
  c.scenario = builtin_scenario("A");
  c.sample_sizes = {60, 120};
  c.replications = 4;
  c.gamma = 0.9;
  c.metrics = {Metric::SupOnGamma, Metric::SupFull, Metric::L2G, Metric::Hellinger};
  c.master_seed = 11;
  c.threads = 1;
  const RateTable a = run_rate_experiment(c);
  c.threads = 3;
  const RateTable b = run_rate_experiment(c);
  REQUIRE(a.rows.size() == b.rows.size());
  CHECK(a.rows.size() == 2 * (2 + 1 + 2 + 1));
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].errors == b.rows[i].errors);
    for (double e : a.rows[i].errors) {
      CHECK(e >= 0.0);
      if (a.rows[i].metric == Metric::Hellinger) CHECK(e <= 1.0);
    }
  }
  CHECK(a.series(Metric::L2G, 2).size() == 2);
  CHECK_THROWS_AS(a.slope(Metric::SupSurvival, 0), Error);

  c.master_seed = 12;
  CHECK(run_rate_experiment(c).rows[0].errors != a.rows[0].errors);
}

TEST_CASE("right-censored experiment reports survival errors") {
  RateExperimentConfig c;
  c.scenario = builtin_scenario("RC");
  c.sample_sizes = {80, 160};
  c.replications = 3;
  c.gamma = 1.0;
  c.metrics = {Metric::SupSurvival};
  const RateTable t = run_rate_experiment(c);
  REQUIRE(t.rows.size() == 2);
  for (const RateRow& r : t.rows) {
    CHECK(r.risk == 0);
    for (double e : r.errors) CHECK((e >= 0.0 && e <= 1.0));
  }
}

TEST_CASE("config validation and JSON") {
  RateExperimentConfig c = injection_config(Injection::Mode::Power);
  nlohmann::json j = c;
  const RateExperimentConfig back = j.get<RateExperimentConfig>();
  CHECK(back.sample_sizes == c.sample_sizes);
  CHECK(back.metrics == c.metrics);
  CHECK(back.injection.mode == Injection::Mode::Power);
  CHECK(back.injection.c == 0.7);

  RateExperimentConfig bad = c;
  bad.sample_sizes = {300};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.replications = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.metrics = {Metric::SupSurvival};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.gamma = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);

  CHECK(metric_from_string("l2_g") == Metric::L2G);
  CHECK_THROWS_AS(metric_from_string("sup"), Error);
  j["metrics"] = {"nope"};
  CHECK_THROWS_AS(j.get<RateExperimentConfig>(), Error);
}
