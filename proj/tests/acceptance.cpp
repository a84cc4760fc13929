// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion ...]   (default: all of 1..10)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "csrisk/data.hpp"
#include "csrisk/error.hpp"
#include "csrisk/ratelab.hpp"
#include "csrisk/reconstruct.hpp"
#include "csrisk/solver.hpp"
#include "oracles.hpp"

using namespace csrisk;
using namespace csrisk::oracles;

namespace {

constexpr double kBandLo = -0.45, kBandHi = -0.22, kSurvivalBandLo = -0.45, kSurvivalBandHi = -0.20;
const std::vector<std::size_t> kLadder{300, 600, 1200, 2400, 4800};
const std::vector<std::size_t> kHalfLadder{150, 300, 600, 1200, 2400};

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      detail << "; ";
      pass = false;
      detail << "violated: " << what;
    }
  }
};

// Fits counted for the trace criterion.
struct TraceTally {
  std::size_t fits = 0;
  std::size_t violations = 0;

  void add(const FitResult& fit) {
    ++fits;
    violations += trace_violations(fit) > 0;
  }
  void add(const RateTable& table, std::size_t fits_in_table) {
    fits += fits_in_table;
    violations += table.trace_violations;
  }
} tally;

EmOptions tight() {
  EmOptions o;
  o.tol = 1e-12;
  return o;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ------------------------------------------------------------ criterion 1

void criterion1(Outcome& out) {
  const auto start = std::chrono::steady_clock::now();
  std::size_t patterns = 0;
  double worst_ll = 0.0, worst_value = 0.0;
  for (int K = 1; K <= 2; ++K)
    for (int n = 1; n <= 4; ++n) {
      int total = 1;
      for (int i = 0; i < n; ++i) total *= K + 1;
      for (int code = 0; code < total; ++code) {
        std::vector<Observation> obs;
        for (int i = 0, c = code; i < n; ++i, c /= K + 1) obs.push_back({double(i + 1), c % (K + 1) + 1});
        const Dataset data(K, obs);
        const FitResult em = fit_em(data, tight());
        const FitResult bf = brute_force_mle(data);
        tally.add(em);
        ++patterns;
        worst_ll = std::max(worst_ll, std::abs(em.loglik - bf.loglik));
        for (int k = 0; k < K; ++k)
          for (const auto& o : obs)
            worst_value = std::max(worst_value, std::abs(em.estimate[k](o.t) - bf.estimate[k](o.t)));
      }
    }
  const double secs = seconds_since(start);
  out.detail << patterns << " patterns, max |dloglik| " << worst_ll << ", max |dF| " << worst_value << ", "
             << secs << " s";
  out.require(worst_ll <= 1e-5, "loglik within 1e-5");
  out.require(worst_value <= 1e-3, "values within 1e-3");
  out.require(secs < 300.0, "runtime under 5 min");
}

// ------------------------------------------------------------ criterion 2

Dataset random_k1(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(1, 200);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = size(rng);
  // Half of the datasets carry tied inspection times.
  const bool ties = u(rng) < 0.5;
  std::vector<Observation> obs(n);
  for (auto& o : obs) {
    const double t = ties ? std::ceil(u(rng) * 20.0) / 20.0 : u(rng);
    o = {t, u(rng) < t ? 1 : 2};
  }
  return Dataset(1, obs);
}

void criterion2(Outcome& out) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(SeedSpec{2, 0}.derive());
  double worst = 0.0;
  std::size_t kkt_fail = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const Dataset data = random_k1(rng);
    const FitResult em = fit_em(data, tight());
    const FitResult pava = fit_pava_k1(data);
    tally.add(em);
    tally.add(pava);
    for (const auto& o : data.observations())
      worst = std::max(worst, std::abs(em.estimate[0](o.t) - pava.estimate[0](o.t)));
    kkt_fail += !check_characterization(data, em, 1e-8).pass;
    kkt_fail += !check_characterization(data, pava, 1e-8).pass;
  }
  const double secs = seconds_since(start);
  out.detail << "1000 datasets, max |em - pava| " << worst << ", certificate failures " << kkt_fail << ", " << secs
             << " s";
  out.require(worst <= 1e-6, "em matches pava within 1e-6");
  out.require(kkt_fail == 0, "both fits certified at 1e-8");
  out.require(secs < 120.0, "runtime under 2 min");
}

// ------------------------------------------------------------ criterion 3

void criterion3(Outcome& out) {
  const auto start = std::chrono::steady_clock::now();
  const Scenario a = builtin_scenario("A");
  std::size_t converged = 0, kkt_fail = 0, beta_negative = 0, iff_fail = 0;
  double min_beta = INFINITY;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    const Dataset data = generate(a, 200, SeedSpec{3, rep}.derive());
    const FitResult fit = fit_em(data, tight());
    tally.add(fit);
    const KktReport r = check_characterization(data, fit, 1e-6);
    min_beta = std::min(min_beta, r.beta_n);
    beta_negative += r.beta_n < -1e-12;
    iff_fail += !r.beta_iff;
    if (fit.converged) {
      ++converged;
      kkt_fail += !r.pass;
    }
  }
  const double secs = seconds_since(start);
  out.detail << converged << "/100 converged, certificate failures " << kkt_fail << ", min beta_n " << min_beta
             << ", iff failures " << iff_fail << ", " << secs << " s";
  out.require(kkt_fail == 0, "converged fits certified at 1e-6");
  out.require(beta_negative == 0, "beta_n >= -1e-12");
  out.require(iff_fail == 0, "beta_n = 0 iff censored at the maximum");
  out.require(secs < 300.0, "runtime under 5 min");
}

// ------------------------------------------------------- criteria 4 to 7

// The Scenario A ladder is shared by criteria 4, 5 and 6.
struct LadderRun {
  RateTable table;
  double seconds = 0.0;
};

const LadderRun& scenario_a_ladder() {
  static const LadderRun run = [] {
    const auto start = std::chrono::steady_clock::now();
    RateExperimentConfig c;
    c.scenario = builtin_scenario("A");
    c.sample_sizes = kLadder;
    c.replications = 100;
    c.gamma = 0.9;
    c.metrics = {Metric::SupOnGamma, Metric::L2G, Metric::Hellinger, Metric::SupFull};
    c.master_seed = 4;
    LadderRun r{run_rate_experiment(c), 0.0};
    r.seconds = seconds_since(start);
    tally.add(r.table, kLadder.size() * c.replications);
    return r;
  }();
  return run;
}

void describe(Outcome& out, const RateTable& t, Metric m, int risk) {
  const auto& s = t.slope(m, risk);
  out.detail << to_string(m);
  if (risk) out.detail << "[" << risk << "]";
  out.detail << " slope " << s.fit.slope << " (medians";
  for (const RateRow* row : t.series(m, risk)) out.detail << ' ' << row->median;
  out.detail << "); ";
}

bool in_band(double slope, double lo, double hi) { return slope >= lo && slope <= hi; }

void criterion4(Outcome& out) {
  const LadderRun& run = scenario_a_ladder();
  for (int k = 1; k <= 2; ++k) {
    describe(out, run.table, Metric::SupOnGamma, k);
    const auto series = run.table.series(Metric::SupOnGamma, k);
    double lo = INFINITY, hi = 0.0;
    bool shrinking = true;
    for (std::size_t i = 0; i < series.size(); ++i) {
      lo = std::min(lo, series[i]->normalized);
      hi = std::max(hi, series[i]->normalized);
      if (i > 0 && series[i]->median >= series[i - 1]->median) shrinking = false;
    }
    out.detail << "normalized max/min " << hi / lo << (shrinking ? ", medians shrink; " : ", medians not monotone; ");
    out.require(in_band(run.table.slope(Metric::SupOnGamma, k).fit.slope, kBandLo, kBandHi),
                "sup slope of risk " + std::to_string(k) + " in band");
    out.require(hi / lo <= 2.0, "normalized ratio of risk " + std::to_string(k) + " <= 2");
  }
  out.detail << "nonconverged " << run.table.nonconverged << ", ladder " << run.seconds << " s";
  out.require(run.seconds < 1800.0, "runtime under 30 min");
}

void criterion5(Outcome& out) {
  const LadderRun& run = scenario_a_ladder();
  for (int k = 1; k <= 2; ++k) {
    describe(out, run.table, Metric::L2G, k);
    out.require(in_band(run.table.slope(Metric::L2G, k).fit.slope, kBandLo, kBandHi),
                "L2 slope of risk " + std::to_string(k) + " in band");
  }
  describe(out, run.table, Metric::Hellinger, 0);
  double worst = 0.0;
  for (const RateRow* row : run.table.series(Metric::Hellinger, 0))
    for (double e : row->errors) worst = std::max(worst, e);
  out.detail << "max hellinger " << worst;
  out.require(worst <= 1.0, "hellinger errors <= 1");
  out.require(in_band(run.table.slope(Metric::Hellinger, 0).fit.slope, kBandLo, kBandHi), "hellinger slope in band");
}

void criterion6(Outcome& out) {
  const LadderRun& run = scenario_a_ladder();
  describe(out, run.table, Metric::SupFull, 1);
  out.require(in_band(run.table.slope(Metric::SupFull, 1).fit.slope, kBandLo, kBandHi), "collapsed sup slope in band");
}

void criterion7(Outcome& out) {
  const auto start = std::chrono::steady_clock::now();
  RateExperimentConfig c;
  c.scenario = builtin_scenario("RC");
  c.sample_sizes = kHalfLadder;
  c.replications = 100;
  c.gamma = 1.0;
  c.metrics = {Metric::SupSurvival};
  c.master_seed = 7;
  const RateTable t = run_rate_experiment(c);
  tally.add(t, kHalfLadder.size() * c.replications);
  const double secs = seconds_since(start);
  describe(out, t, Metric::SupSurvival, 0);
  out.detail << "truncated " << t.truncated << ", nonconverged " << t.nonconverged << ", " << secs << " s";
  out.require(in_band(t.slope(Metric::SupSurvival, 0).fit.slope, kSurvivalBandLo, kSurvivalBandHi),
              "survival slope in band");
  out.require(secs < 1800.0, "runtime under 30 min");
}

// ------------------------------------------------------------ criterion 8

void criterion8(Outcome& out) {
  std::mt19937_64 rng(SeedSpec{8, 0}.derive());
  std::uniform_int_distribution<int> atoms(1, 6);
  double worst_s = 0.0;
  std::size_t checked = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const DiscreteModel m{random_law(rng, atoms(rng), false), random_law(rng, atoms(rng), true)};
    const auto [F1, F2] = m.subdistributions();
    const TruncatedSurvival r = reconstruct_s_truncated(F1, F2, INFINITY);
    const double limit = r.boundary.value_or(INFINITY);
    for (auto [a, p] : m.event) {
      // Identifiable: before the boundary and with censoring still possible at a.
      if (!(a < limit) || !(m.Q(std::nextafter(a, -INFINITY)) > 0.0)) continue;
      worst_s = std::max(worst_s, std::abs(r.survival(a) - m.S(a)));
      ++checked;
    }
  }
  double worst_d = 0.0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    const StepFn A1 = random_subdist(rng, 20, 0.45), A2 = random_subdist(rng, 20, 0.45);
    const StepFn B1 = random_subdist(rng, 20, 0.45), B2 = random_subdist(rng, 20, 0.45);
    const StepFn Sa = reconstruct_s(A1, A2, INFINITY), Sb = reconstruct_s(B1, B2, INFINITY);
    for (double x : {0.25, 0.5, 0.75, u(rng), 1.0})
      worst_d = std::max(worst_d, duhamel_residual(Sa, Sb, {A1, A2}, {B1, B2}, x));
  }
  out.detail << "100 models, " << checked << " identifiable atoms, max |S - S0| " << worst_s
             << "; 100 pairs, max duhamel residual " << worst_d;
  out.require(worst_s < 1e-12, "survival recovered within 1e-12");
  out.require(worst_d < 1e-10, "duhamel residual below 1e-10");
}

// ------------------------------------------------------------ criterion 9

void criterion9(Outcome& out) {
  std::mt19937_64 rng(SeedSpec{9, 0}.derive());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> size(5, 150), risks(1, 3);
  const std::vector<std::pair<const char*, std::function<double(double)>>> maps{
      {"t^3", [](double t) { return t * t * t; }},
      {"exp", [](double t) { return std::exp(t); }},
      {"t/(1+t)", [](double t) { return t / (1.0 + t); }}};
  std::size_t failures = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const int K = risks(rng);
    std::uniform_int_distribution<int> cause(1, K + 1);
    std::vector<Observation> obs(size(rng));
    for (auto& o : obs) o = {0.05 + 2.0 * u(rng), cause(rng)};
    const Dataset data(K, obs);
    for (const auto& [name, map] : maps) failures += !smirnov_invariance_check(data, map, 1e-8, tight());
  }
  out.detail << "300 checks, failures " << failures;
  out.require(failures == 0, "rank invariance at 1e-8");
}

// ----------------------------------------------------------- criterion 10

void criterion10(Outcome& out, const std::set<int>& ran) {
  out.detail << tally.fits << " fits from criteria";
  for (int c : ran)
    if (c <= 7) out.detail << ' ' << c;
  out.detail << ", trace violations " << tally.violations;
  out.require(tally.fits > 0, "at least one fit examined");
  out.require(tally.violations == 0, "log-likelihood traces nondecreasing");
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const int c = std::atoi(argv[i]);
    if (c < 1 || c > 10) {
      std::fprintf(stderr, "usage: %s [criterion 1..10 ...]\n", argv[0]);
      return 2;
    }
    wanted.insert(c);
  }
  if (wanted.empty())
    for (int c = 1; c <= 10; ++c) wanted.insert(c);

  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria{
      {"oracle equivalence on small instances", criterion1},
      {"K = 1 exactness against PAVA", criterion2},
      {"optimality certificate, Scenario A n = 200", criterion3},
      {"uniform sup rate on [0, 0.9]", criterion4},
      {"L2(G) and Hellinger rates", criterion5},
      {"collapsed K = 1 sup rate", criterion6},
      {"survival reconstruction rate, Scenario RC", criterion7},
      {"reconstruction exactness and Duhamel identity", criterion8},
      {"rank invariance under monotone maps", criterion9},
      {"log-likelihood trace monotonicity", [&](Outcome& o) { criterion10(o, wanted); }},
  };

  int failed = 0;
  for (int c : wanted) {
    Outcome out;
    try {
      criteria[c - 1].second(out);
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    std::string detail = out.detail.str();
    while (!detail.empty() && (detail.back() == ' ' || detail.back() == ';')) detail.pop_back();
    std::printf("criterion %2d %s  %s: %s\n", c, out.pass ? "PASS" : "FAIL", criteria[c - 1].first, detail.c_str());
    std::fflush(stdout);
    failed += !out.pass;
  }
  std::printf("%d of %zu criteria passed\n", int(wanted.size()) - failed, wanted.size());
  return failed ? 1 : 0;
}
