#include "csrisk/ratelab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "csrisk/error.hpp"
#include "csrisk/reconstruct.hpp"

namespace csrisk {
namespace {

const std::pair<Metric, const char*> kMetricNames[] = {
    {Metric::SupOnGamma, "sup_on_gamma"}, {Metric::SupFull, "sup_full"},
    {Metric::L2G, "l2_g"},                {Metric::Hellinger, "hellinger"},
    {Metric::SupSurvival, "sup_survival"},
};

struct Series {
  Metric metric;
  int risk;
};

std::vector<Series> series_of(const RateExperimentConfig& c) {
  std::vector<Series> out;
  for (Metric m : c.metrics) {
    switch (m) {
      case Metric::SupOnGamma:
      case Metric::L2G:
        for (int k = 1; k <= c.scenario.K; ++k) out.push_back({m, k});
        break;
      case Metric::SupFull:
        out.push_back({m, 1});
        break;
      case Metric::Hellinger:
      case Metric::SupSurvival:
        out.push_back({m, 0});
        break;
    }
  }
  return out;
}

Curve sum_of(const std::vector<Curve>& parts) {
  Curve c;
  c.value = [parts](double t) {
    double s = 0.0;
    for (const auto& p : parts) s += p(t);
    return s;
  };
  c.left = [parts](double t) {
    double s = 0.0;
    for (const auto& p : parts) s += p.left_value(t);
    return s;
  };
  for (const auto& p : parts) c.knots.insert(c.knots.end(), p.knots.begin(), p.knots.end());
  std::sort(c.knots.begin(), c.knots.end());
  c.knots.erase(std::unique(c.knots.begin(), c.knots.end()), c.knots.end());
  return c;
}

struct Outcome {
  std::vector<double> errors;
  bool converged = true;
  bool truncated = false;
  bool trace_ok = true;
  std::uint64_t seed = 0;
  std::exception_ptr failure;
};

// Everything a replication needs that does not depend on its data.
struct Context {
  const RateExperimentConfig& config;
  std::vector<Series> series;
  Truth truth;
  Curve collapsed_truth;
  Distribution weight;
  double full_lo = 0.0;
  double full_hi = 0.0;
};

double injected(const Injection& inj, double n) {
  const double base = inj.c * std::pow(n, -1.0 / 3.0);
  return inj.mode == Injection::Mode::PowerLog ? base * std::cbrt(std::log(n)) : base;
}

Outcome replicate(const Context& ctx, std::size_t n, std::uint64_t seed) {
  const auto& cfg = ctx.config;
  Outcome out;
  out.seed = seed;
  if (cfg.injection.mode != Injection::Mode::None) {
    out.errors.assign(ctx.series.size(), injected(cfg.injection, static_cast<double>(n)));
    return out;
  }

  const Dataset data = generate(cfg.scenario, n, seed);
  EmOptions options;
  options.tol = cfg.em_tol;
  const FitResult fit = fit_em(data, options);
  out.converged = fit.converged;
  out.trace_ok = trace_violations(fit) == 0;
  const auto estimate = curves_of(fit.estimate);

  for (const auto& s : ctx.series) {
    const auto k = static_cast<std::size_t>(s.risk - 1);
    switch (s.metric) {
      case Metric::SupOnGamma:
        out.errors.push_back(sup_distance(estimate[k], ctx.truth.sub[k], 0.0, cfg.gamma));
        break;
      case Metric::L2G:
        out.errors.push_back(l2_distance(estimate[k], ctx.truth.sub[k], ctx.weight));
        break;
      case Metric::Hellinger:
        out.errors.push_back(hellinger(estimate, ctx.truth.sub, ctx.weight));
        break;
      case Metric::SupFull: {
        const FitResult merged = fit_pava_k1(collapse_causes(data));
        out.trace_ok = out.trace_ok && trace_violations(merged) == 0;
        out.errors.push_back(sup_distance(Curve::step(merged.estimate[0]), ctx.collapsed_truth,
                                          ctx.full_lo, ctx.full_hi));
        break;
      }
      case Metric::SupSurvival: {
        const auto r = reconstruct_s_truncated(fit.estimate[0], fit.estimate[1], cfg.gamma);
        // The truncated curve is frozen past the boundary; compare only up to it.
        const double hi = r.boundary ? std::min(cfg.gamma, *r.boundary) : cfg.gamma;
        out.truncated = r.boundary.has_value();
        out.errors.push_back(sup_distance(Curve::step(r.survival), *ctx.truth.survival, 0.0, hi));
        break;
      }
    }
  }
  return out;
}

}  // namespace

std::string to_string(Metric m) {
  for (auto [metric, name] : kMetricNames)
    if (metric == m) return name;
  fail("unknown metric");
}

Metric metric_from_string(const std::string& name) {
  for (auto [metric, text] : kMetricNames)
    if (name == text) return metric;
  fail("unknown metric '" + name + "' (expected sup_on_gamma, sup_full, l2_g, hellinger, sup_survival)");
}

void RateExperimentConfig::validate() const {
  scenario.validate();
  require(sample_sizes.size() >= 2, "rate experiment needs at least two sample sizes");
  for (std::size_t i = 0; i < sample_sizes.size(); ++i) {
    require(sample_sizes[i] >= 2, "sample sizes must be at least 2");
    require(i == 0 || sample_sizes[i] > sample_sizes[i - 1], "sample sizes must be increasing");
  }
  require(replications >= 1, "replications must be positive");
  require(gamma > 0.0 && gamma <= scenario.gamma,
          "gamma must lie in (0, scenario gamma = " + format_double(scenario.gamma) + "]");
  require(!metrics.empty(), "no metrics requested");
  require(em_tol > 0.0, "em_tol must be positive");
  require(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0,
          "max_failure_fraction must lie in [0, 1]");
  require(injection.c > 0.0, "injection constant must be positive");
  for (Metric m : metrics) {
    if (m == Metric::SupSurvival)
      require(scenario.kind == ScenarioKind::RightCensored,
              "sup_survival needs a right-censored scenario");
    if (m == Metric::SupFull)
      require(scenario.kind == ScenarioKind::CompetingRisks,
              "sup_full needs a competing-risks scenario");
  }
}

void to_json(nlohmann::json& j, const RateExperimentConfig& c) {
  std::vector<std::string> metrics;
  for (Metric m : c.metrics) metrics.push_back(to_string(m));
  j = {{"scenario", c.scenario},         {"sample_sizes", c.sample_sizes},
       {"replications", c.replications}, {"gamma", c.gamma},
       {"metrics", metrics},             {"master_seed", c.master_seed},
       {"em_tol", c.em_tol},             {"threads", c.threads},
       {"max_failure_fraction", c.max_failure_fraction}};
  if (c.injection.mode != Injection::Mode::None)
    j["injection"] = {{"mode", c.injection.mode == Injection::Mode::Power ? "power" : "power_log"},
                      {"c", c.injection.c}};
}

void from_json(const nlohmann::json& j, RateExperimentConfig& c) {
  try {
    c = RateExperimentConfig{};
    c.scenario = j.at("scenario").get<Scenario>();
    c.sample_sizes = j.at("sample_sizes").get<std::vector<std::size_t>>();
    c.replications = j.value("replications", c.replications);
    c.gamma = j.value("gamma", c.scenario.gamma);
    c.metrics.clear();
    for (const auto& m : j.at("metrics")) c.metrics.push_back(metric_from_string(m.get<std::string>()));
    c.master_seed = j.value("master_seed", c.master_seed);
    c.em_tol = j.value("em_tol", c.em_tol);
    c.threads = j.value("threads", c.threads);
    c.max_failure_fraction = j.value("max_failure_fraction", c.max_failure_fraction);
    if (j.contains("injection")) {
      const auto& inj = j["injection"];
      const auto mode = inj.at("mode").get<std::string>();
      if (mode == "power")
        c.injection.mode = Injection::Mode::Power;
      else if (mode == "power_log")
        c.injection.mode = Injection::Mode::PowerLog;
      else
        fail("unknown injection mode '" + mode + "' (expected power, power_log)");
      c.injection.c = inj.value("c", 1.0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("rate config: ") + e.what());
  }
  c.validate();
}

std::vector<const RateRow*> RateTable::series(Metric metric, int risk) const {
  std::vector<const RateRow*> out;
  for (const auto& r : rows)
    if (r.metric == metric && r.risk == risk) out.push_back(&r);
  return out;
}

const RateSlope& RateTable::slope(Metric metric, int risk) const {
  for (const auto& s : slopes)
    if (s.metric == metric && s.risk == risk) return s;
  fail("no slope for " + to_string(metric) + " risk " + std::to_string(risk));
}

void to_json(nlohmann::json& j, const RateTable& t) {
  j = nlohmann::json::object();
  auto& rows = j["rows"] = nlohmann::json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"n", r.n},
                    {"metric", to_string(r.metric)},
                    {"risk", r.risk},
                    {"median", r.median},
                    {"q75", r.q75},
                    {"normalized", r.normalized}});
  auto& slopes = j["slopes"] = nlohmann::json::array();
  for (const auto& s : t.slopes)
    slopes.push_back({{"metric", to_string(s.metric)},
                      {"risk", s.risk},
                      {"slope", s.fit.slope},
                      {"intercept", s.fit.intercept},
                      {"r_squared", s.fit.r_squared}});
  j["nonconverged"] = t.nonconverged;
  j["truncated"] = t.truncated;
  j["trace_violations"] = t.trace_violations;
}

double rate_normalizer(double n) {
  require(n > 1.0, "rate normalizer needs n > 1");
  return std::cbrt(n / std::log(n));
}

double quantile(std::vector<double> values, double p) {
  require(!values.empty(), "quantile of an empty sample");
  require(p >= 0.0 && p <= 1.0, "quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

SlopeFit slope_fit(std::span<const std::pair<double, double>> points) {
  std::vector<double> xs, ys;
  for (auto [n, e] : points) {
    require(n > 0.0, "slope_fit: sample sizes must be positive");
    require(e > 0.0, "slope_fit: errors must be positive (log undefined)");
    xs.push_back(std::log(n));
    ys.push_back(std::log(e));
  }
  std::vector<double> distinct(xs);
  std::sort(distinct.begin(), distinct.end());
  require(std::unique(distinct.begin(), distinct.end()) - distinct.begin() >= 2,
          "slope_fit: needs at least two distinct sample sizes");

  const auto m = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - fit.intercept - fit.slope * xs[i];
    sse += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  return fit;
}

RateTable run_rate_experiment(const RateExperimentConfig& config) {
  config.validate();
  Context ctx{config, series_of(config), {}, {}, {}, 0.0, 0.0};
  if (config.injection.mode == Injection::Mode::None) {
    ctx.truth = truth_of(config.scenario);
    ctx.weight = inspection_distribution(config.scenario);
    ctx.collapsed_truth = sum_of(ctx.truth.sub);
    ctx.full_lo = ctx.weight.lo();
    ctx.full_hi = ctx.weight.hi();
  }

  const std::size_t sizes = config.sample_sizes.size();
  const std::size_t reps = config.replications;
  const std::size_t jobs = sizes * reps;
  std::vector<Outcome> slots(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job; (job = next.fetch_add(1)) < jobs;) {
      const std::uint64_t seed = SeedSpec{config.master_seed, job}.derive();
      try {
        slots[job] = replicate(ctx, config.sample_sizes[job / reps], seed);
      } catch (...) {
        slots[job].seed = seed;
        slots[job].failure = std::current_exception();
      }
    }
  };
  unsigned threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, jobs));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  RateTable table;
  std::vector<std::uint64_t> failed;
  for (const auto& s : slots) {
    if (s.failure) std::rethrow_exception(s.failure);
    if (!s.converged) failed.push_back(s.seed);
    table.truncated += s.truncated;
    table.trace_violations += !s.trace_ok;
  }
  table.nonconverged = failed.size();
  if (static_cast<double>(failed.size()) > config.max_failure_fraction * static_cast<double>(jobs)) {
    std::ostringstream msg;
    msg << failed.size() << " of " << jobs << " replications did not converge; seeds:";
    for (auto seed : failed) msg << ' ' << seed;
    throw Error(ErrorCode::NonConvergence, msg.str());
  }

  for (std::size_t si = 0; si < ctx.series.size(); ++si) {
    std::vector<std::pair<double, double>> points;
    for (std::size_t ni = 0; ni < sizes; ++ni) {
      RateRow row;
      row.n = config.sample_sizes[ni];
      row.metric = ctx.series[si].metric;
      row.risk = ctx.series[si].risk;
      for (std::size_t r = 0; r < reps; ++r) row.errors.push_back(slots[ni * reps + r].errors[si]);
      row.median = quantile(row.errors, 0.5);
      row.q75 = quantile(row.errors, 0.75);
      row.normalized = row.median * rate_normalizer(static_cast<double>(row.n));
      points.emplace_back(static_cast<double>(row.n), row.median);
      table.rows.push_back(std::move(row));
    }
    table.slopes.push_back({ctx.series[si].metric, ctx.series[si].risk, slope_fit(points)});
  }
  return table;
}

std::filesystem::path slopes_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".slopes.json");
  return p;
}

void emit_plot_data(const RateTable& table, const std::filesystem::path& path) {
  require(!table.rows.empty(), "emit_plot_data: empty table");
  std::ostringstream csv;
  csv << "n,metric,risk,median,q75,normalized\n";
  for (const auto& r : table.rows)
    csv << r.n << ',' << to_string(r.metric) << ',' << r.risk << ',' << format_double(r.median) << ','
        << format_double(r.q75) << ',' << format_double(r.normalized) << '\n';

  nlohmann::json slopes = nlohmann::json::array();
  for (const auto& s : table.slopes)
    slopes.push_back({{"metric", to_string(s.metric)},
                      {"risk", s.risk},
                      {"slope", s.fit.slope},
                      {"intercept", s.fit.intercept},
                      {"r_squared", s.fit.r_squared}});

  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + p.string() + " for writing");
    out << text;
    out.close();
    if (!out) throw Error(ErrorCode::Io, "write to " + p.string() + " failed");
  };
  write(path, csv.str());
  write(slopes_path(path), slopes.dump(2) + "\n");
}

std::vector<PlotRow> read_plot_data(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "n,metric,risk,median,q75,normalized")
    throw Error(ErrorCode::Parse, "line 1: unexpected header '" + line + "'");
  std::vector<PlotRow> rows;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 6)
      throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": expected 6 fields");
    try {
      PlotRow r;
      r.n = std::stoull(f[0]);
      r.metric = f[1];
      r.risk = std::stoi(f[2]);
      r.median = std::stod(f[3]);
      r.q75 = std::stod(f[4]);
      r.normalized = std::stod(f[5]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

}  // namespace csrisk
