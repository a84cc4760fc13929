#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "csrisk/error.hpp"
#include "csrisk/solver.hpp"

using namespace csrisk;

namespace {

Dataset k1(std::vector<int> delta) {
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < delta.size(); ++i) obs.push_back({static_cast<double>(i + 1), delta[i] ? 1 : 2});
  return Dataset(1, obs);
}

void check_trace(const FitResult& fit) {
  for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i)
    REQUIRE(fit.loglik_trace[i] - fit.loglik_trace[i - 1] >= -1e-12);
}

Dataset random_dataset(std::mt19937_64& rng, int K, std::size_t n, bool ties) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> c(1, K + 1);
  std::vector<Observation> obs(n);
  for (auto& o : obs) {
    o.t = ties ? std::floor(u(rng) * 20.0) / 20.0 : u(rng);
    // Later inspections see more failures.
    o.cause = u(rng) < o.t ? c(rng) % (K + 1) + 1 : K + 1;
    if (o.cause == K + 1 && u(rng) < 0.3) o.cause = c(rng);
  }
  return Dataset(K, obs);
}

// Direct per-observation log-likelihood.
double loglik_oracle(const Dataset& d, const SubDistTuple& F) {
  double s = 0.0;
  for (const auto& o : d.observations()) {
    double p;
    if (o.cause <= d.K()) {
      p = F[o.cause - 1](o.t);
    } else {
      p = 1.0;
      for (int k = 0; k < d.K(); ++k) p -= F[k](o.t);
    }
    s += std::log(p);
  }
  return s / static_cast<double>(d.size());
}

SubDistTuple random_feasible(std::mt19937_64& rng, const SupportSet& support) {
  std::exponential_distribution<double> e(1.0);
  double total = e(rng);  // defect
  std::vector<std::vector<double>> w(support.atoms.size());
  for (std::size_t k = 0; k < w.size(); ++k)
    for (std::size_t j = 0; j < support.atoms[k].size(); ++j) total += w[k].emplace_back(e(rng));
  std::vector<StepFn> comps;
  for (std::size_t k = 0; k < w.size(); ++k) {
    std::vector<std::pair<double, double>> js;
    for (std::size_t j = 0; j < w[k].size(); ++j) js.emplace_back(support.atoms[k][j], w[k][j] / total);
    comps.push_back(StepFn::from_jumps(js));
  }
  return SubDistTuple(comps);
}

}  // namespace

TEST_CASE("loglik") {
  const Dataset one(1, {{0.5, 1}});
  CHECK(loglik(one, SubDistTuple({StepFn(0.0, {0.5}, {0.5})})) == doctest::Approx(std::log(0.5)));
  const Dataset cens(2, {{0.2, 3}, {0.7, 3}});
  CHECK(loglik(cens, SubDistTuple({StepFn(), StepFn()})) == 0.0);
  CHECK(loglik(one, SubDistTuple({StepFn()})) == -INFINITY);

  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const Dataset d = random_dataset(rng, 2, 5, false);
    const SubDistTuple F = random_feasible(rng, SupportSet::of(d));
    CHECK(std::abs(loglik(d, F) - loglik_oracle(d, F)) <= 1e-12);
  }
}

TEST_CASE("SupportSet holds deduplicated cause times") {
  const Dataset d(2, {{1.0, 1}, {1.0, 1}, {2.0, 2}, {3.0, 3}, {4.0, 1}});
  const SupportSet s = SupportSet::of(d);
  CHECK(s.atoms[0] == std::vector<double>{1.0, 4.0});
  CHECK(s.atoms[1] == std::vector<double>{2.0});
  CHECK(s.total() == 3);
}

TEST_CASE("fit_em on the pooled K=1 fixture") {
  const FitResult fit = fit_em(k1({1, 0, 1}));
  check_trace(fit);
  CHECK(fit.estimate[0](1.0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(fit.estimate[0](2.0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(fit.estimate[0](3.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(fit.loglik == doctest::Approx(2.0 * std::log(0.5) / 3.0).epsilon(1e-9));
}

TEST_CASE("fit_em with every observation still at risk") {
  const FitResult fit = fit_em(Dataset(2, {{0.3, 3}, {0.9, 3}}));
  CHECK(fit.estimate[0].limit() == 0.0);
  CHECK(fit.estimate[1].limit() == 0.0);
  CHECK(fit.defect == 1.0);
  CHECK(fit.loglik == 0.0);
}

TEST_CASE("fit_em matches brute force on a K=2 fixture") {
  const Dataset d(2, {{1.0, 1}, {2.0, 3}, {3.0, 2}, {4.0, 1}});
  EmOptions o;
  o.tol = 1e-12;
  const FitResult em = fit_em(d, o);
  const FitResult bf = brute_force_mle(d);
  check_trace(em);
  CHECK(std::abs(em.loglik - bf.loglik) <= 1e-6);
  CHECK(em.loglik >= bf.loglik - 1e-12);
}

TEST_CASE("fit_em rejects bad options") {
  EmOptions o;
  o.tol = 0.0;
  CHECK_THROWS_AS(fit_em(k1({1}), o), Error);
  CHECK_THROWS_AS(fit_em(Dataset(1, {})), Error);
}

TEST_CASE("fit_em without polishing still increases the likelihood") {
  std::mt19937_64 rng(2);
  const Dataset d = random_dataset(rng, 2, 80, false);
  EmOptions o;
  o.polish = false;
  o.max_iter = 50;
  const FitResult fit = fit_em(d, o);
  check_trace(fit);
  CHECK(fit.iterations == 50);
  CHECK_FALSE(fit.converged);
  CHECK(fit.polish_steps == 0);
}

TEST_CASE("fit_pava_k1") {
  const FitResult a = fit_pava_k1(k1({1, 0, 1}));
  CHECK(a.estimate[0](1.0) == doctest::Approx(0.5));
  CHECK(a.estimate[0](2.0) == doctest::Approx(0.5));
  CHECK(a.estimate[0](3.0) == doctest::Approx(1.0));
  const FitResult b = fit_pava_k1(k1({0, 0, 1}));
  CHECK(b.estimate[0](2.0) == 0.0);
  CHECK(b.estimate[0](3.0) == 1.0);
  CHECK_THROWS_AS(fit_pava_k1(Dataset(2, {{1.0, 1}})), Error);
}

TEST_CASE("fit_pava_k1 pools tied times") {
  // Two observations at t = 1 with opposite status must share one value.
  const FitResult f = fit_pava_k1(Dataset(1, {{1.0, 1}, {1.0, 2}, {2.0, 1}}));
  CHECK(f.estimate[0](1.0) == doctest::Approx(0.5));
  CHECK(f.estimate[0](2.0) == doctest::Approx(1.0));
}

TEST_CASE("fit_em and fit_pava_k1 agree on random K=1 data") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> size(1, 60);
  for (int rep = 0; rep < 500; ++rep) {
    const Dataset d = random_dataset(rng, 1, size(rng), rep % 2 == 0);
    const FitResult em = fit_em(d);
    const FitResult pava = fit_pava_k1(d);
    check_trace(em);
    REQUIRE(pava.loglik >= em.loglik - 1e-8);
    for (const auto& o : d.observations()) REQUIRE(std::abs(em.estimate[0](o.t) - pava.estimate[0](o.t)) <= 1e-6);
  }
}

TEST_CASE("isotonic_regression") {
  const std::vector<double> y{1.0, 0.0, 1.0, 0.0};
  const std::vector<double> w{1.0, 3.0, 1.0, 1.0};
  const auto fit = isotonic_regression(y, w);
  CHECK(fit[0] == doctest::Approx(0.25));
  CHECK(fit[1] == doctest::Approx(0.25));
  CHECK(fit[2] == doctest::Approx(0.5));
  CHECK(fit[3] == doctest::Approx(0.5));
}

TEST_CASE("fit_naive") {
  const Dataset d = k1({1, 0, 1, 1, 0});
  const NaiveFit n = fit_naive(d);
  CHECK(n.components[0] == fit_pava_k1(d).estimate[0]);

  // Isotonic fits of the indicator sequences (1, 0) and (0, 1).
  const NaiveFit over = fit_naive(Dataset(2, {{1.0, 1}, {2.0, 2}}));
  CHECK(over.components[0](1.0) == 0.5);
  CHECK(over.components[0](2.0) == 0.5);
  CHECK(over.components[1](1.0) == 0.0);
  CHECK(over.components[1](2.0) == 1.0);
  CHECK_FALSE(over.sum_within_one);

  const NaiveFit none = fit_naive(Dataset(2, {{1.0, 3}, {2.0, 3}}));
  CHECK(none.components[0].limit() == 0.0);
  CHECK(none.components[1].limit() == 0.0);
  CHECK(none.sum_within_one);
}

TEST_CASE("brute_force_mle") {
  const FitResult single = brute_force_mle(k1({1}));
  CHECK(single.loglik == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(single.estimate[0](1.0) == doctest::Approx(1.0));
  const FitResult pooled = brute_force_mle(k1({1, 0, 1}));
  CHECK(std::abs(pooled.loglik - fit_pava_k1(k1({1, 0, 1})).loglik) <= 1e-6);
  try {
    brute_force_mle(k1({1, 1, 1, 1, 1, 1, 1}));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InstanceTooLarge);
  }
}

TEST_CASE("check_characterization") {
  const Dataset d = k1({1, 0, 1});
  CHECK(check_characterization(d, fit_pava_k1(d), 1e-8).pass);

  SUBCASE("a perturbed fit fails") {
    std::mt19937_64 rng(4);
    const Dataset data = random_dataset(rng, 2, 40, false);
    EmOptions o;
    o.tol = 1e-12;
    FitResult fit = fit_em(data, o);
    REQUIRE(check_characterization(data, fit, 1e-6).pass);
    // Shift 0.05 of mass from the first atom of risk 1 to its last atom.
    const StepFn& f = fit.estimate[0];
    REQUIRE(f.size() >= 2);
    std::vector<std::pair<double, double>> js;
    for (std::size_t j = 0; j < f.size(); ++j) js.emplace_back(f.breakpoints()[j], f.jump(j));
    const double shift = std::min(0.05, js.front().second);
    js.front().second -= shift;
    js.back().second += shift;
    fit.estimate = SubDistTuple({StepFn::from_jumps(js), fit.estimate[1]});
    const KktReport r = check_characterization(data, fit, 1e-6);
    CHECK_FALSE(r.pass);
    CHECK((r.risks[0].ineq3_min < -1e-6 || r.risks[0].ineq4_max > 1e-6 || r.risks[0].equality_max > 1e-6));
  }

  SUBCASE("largest time still at risk gives beta zero") {
    const Dataset c(2, {{1.0, 1}, {2.0, 2}, {3.0, 1}, {4.0, 3}});
    EmOptions o;
    o.tol = 1e-12;
    const KktReport r = check_characterization(c, fit_em(c, o), 1e-8);
    CHECK(r.censored_at_max);
    CHECK(std::abs(r.beta_n) <= 1e-8);
    CHECK(r.pass);
  }
}

TEST_CASE("KktReport JSON carries the worst slacks") {
  const Dataset d = k1({1, 0, 1});
  const nlohmann::json j = check_characterization(d, fit_pava_k1(d), 1e-8);
  CHECK(j.at("pass") == true);
  CHECK(j.at("risks").size() == 1);
  CHECK(j.at("risks")[0].contains("ineq3_min_slack"));
  CHECK(j.at("risks")[0].contains("equality_max_residual"));
}

TEST_CASE("smirnov_invariance_check") {
  std::mt19937_64 rng(5);
  const Dataset a = generate(builtin_scenario("A"), 50, 6);
  CHECK(smirnov_invariance_check(a, [](double t) { return t; }, 1e-8));
  CHECK(smirnov_invariance_check(a, [](double t) { return t * t * t; }, 1e-8));
  const Dataset b = random_dataset(rng, 2, 50, false);
  CHECK(smirnov_invariance_check(b, [](double t) { return std::exp(t); }, 1e-8));
  CHECK_THROWS_AS(smirnov_invariance_check(b, [](double t) { return -t; }, 1e-8), Error);
}

TEST_CASE("EM fits are feasible, optimal against random points and satisfy the beta conditions") {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    const Dataset d = random_dataset(rng, 1 + rep % 3, 60, rep % 2 == 1);
    const FitResult fit = fit_em(d);
    check_trace(fit);
    const SupportSet support = SupportSet::of(d);
    CHECK(support.supports(fit.estimate));
    CHECK(fit.beta_n >= -1e-12);
    CHECK(check_characterization(d, fit, 1e-6).beta_iff);
    for (int r = 0; r < 100; ++r) REQUIRE(fit.loglik >= loglik(d, random_feasible(rng, support)) - 1e-9);
  }
}

TEST_CASE("FitResult JSON round-trips") {
  const Dataset d = generate(builtin_scenario("B"), 60, 7);
  const FitResult fit = fit_em(d);
  const nlohmann::json j = fit;
  for (const char* key : {"K", "risks", "defect", "loglik", "beta_n", "iterations", "converged"})
    CHECK(j.contains(key));
  const FitResult back = j.get<FitResult>();
  CHECK(back.estimate[0] == fit.estimate[0]);
  CHECK(back.estimate[1] == fit.estimate[1]);
  CHECK(back.loglik == fit.loglik);
  CHECK(back.defect == fit.defect);
}

TEST_CASE("trace_violations counts drops beyond the slack") {
  FitResult fit;
  fit.loglik_trace = {-2.0, -1.5, -1.5 - 5e-13, -1.6, -1.0, -1.2};
  CHECK(trace_violations(fit) == 2);
  CHECK(trace_violations(fit, 0.5) == 0);
  fit.loglik_trace.clear();
  CHECK(trace_violations(fit) == 0);
}
