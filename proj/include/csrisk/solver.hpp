#pragma once

#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "csrisk/data.hpp"
#include "csrisk/stepfn.hpp"

namespace csrisk {

// Candidate jump locations of the NPMLE: for each risk k, the distinct
// times of observations with cause k. The defect atom at +infinity is
// implicit.
struct SupportSet {
  std::vector<std::vector<double>> atoms;

  static SupportSet of(const Dataset& data);
  std::size_t total() const;
  /// True when every jump of every component lies on the candidate set.
  bool supports(const SubDistTuple& tuple) const;
};

struct FitResult {
  SubDistTuple estimate;
  double defect = 0.0;  // mass at +infinity, 1 - F_+(inf)
  double loglik = 0.0;
  std::vector<double> loglik_trace;
  double beta_n = 0.0;
  int iterations = 0;    // EM iterations
  int polish_steps = 0;  // accepted Newton steps after EM
  bool converged = true;
};

void to_json(nlohmann::json& j, const FitResult& fit);
/// Restores estimate, defect and scalar fields; the trace is not serialized.
void from_json(const nlohmann::json& j, FitResult& fit);

struct EmOptions {
  double tol = 1e-10;  // relative log-likelihood increase
  int max_iter = 100000;
  double prune = 1e-14;  // atoms lighter than this are dropped after convergence
  // Newton refinement on the support EM identified; see fit_em.
  bool polish = true;
};

/// Per-observation average log-likelihood of the current status sample.
/// Returns -infinity when some observation has zero probability.
double loglik(const Dataset& data, const SubDistTuple& F);

/// 1 - sum over still-at-risk observations of 1 / (n F_{K+1}(t_i)).
double beta_n(const Dataset& data, const SubDistTuple& F);

/// NPMLE by mixture EM over the candidate atoms plus the defect atom,
/// started from uniform masses. EM stalls long before the optimality
/// conditions hold to high precision (vanishing atoms decay geometrically
/// at a rate close to one), so by default the EM solution is refined by
/// mass-conserving Newton steps on its support with an add/drop loop on the
/// active atoms. Both stages only ever increase the log-likelihood; the
/// trace records every iterate.
FitResult fit_em(const Dataset& data, const EmOptions& options = {});

/// Number of steps where the log-likelihood trace drops by more than slack.
std::size_t trace_violations(const FitResult& fit, double slack = 1e-12);

/// Exact NPMLE for K = 1 by pool-adjacent-violators.
FitResult fit_pava_k1(const Dataset& data);

/// Weighted isotonic (nondecreasing) least-squares regression.
std::vector<double> isotonic_regression(std::span<const double> values,
                                        std::span<const double> weights);

struct NaiveFit {
  std::vector<StepFn> components;
  bool sum_within_one = true;
};

/// Marginal per-risk current-status MLEs, fitted independently.
NaiveFit fit_naive(const Dataset& data);

/// Grid search plus pairwise-exchange refinement over the mass simplex.
/// Only for tiny instances (n <= 6 and at most 6 candidate atoms).
FitResult brute_force_mle(const Dataset& data);

struct KktRiskReport {
  int risk = 0;
  std::size_t jumps = 0;
  double ineq3_min = 0.0;         // min D_k(tau, s), s < T_(n)
  double ineq4_max = 0.0;         // max of the integral over [s, tau), tau < T_(n)
  double equality_max = 0.0;      // max |D_k(tau, s)| over jump pairs
  double full_form_min = 0.0;     // min of D_k(tau, s) - beta_n 1{T_(n) in [tau, s)}
  double tail_residual = 0.0;     // max |D_k(tau, +inf) - beta_n|, reported only
  bool ineq3_pass = true;
  bool ineq4_pass = true;
  bool equality_pass = true;
  bool full_form_pass = true;
};

struct KktReport {
  double tol = 0.0;
  double beta_n = 0.0;
  bool censored_at_max = false;  // some observation at T_(n) has cause K+1
  bool beta_nonnegative = true;
  bool beta_iff = true;  // (beta_n within tol of 0) == censored_at_max
  std::vector<KktRiskReport> risks;
  bool pass = true;
};

void to_json(nlohmann::json& j, const KktReport& report);

/// Verifies the optimality characterization of the NPMLE for `fit`.
KktReport check_characterization(const Dataset& data, const FitResult& fit, double tol);

/// Fits the sample and its image under a strictly increasing time map and
/// compares fitted values at corresponding observation points.
bool smirnov_invariance_check(const Dataset& data, const std::function<double(double)>& transform,
                              double tol, const EmOptions& options = {});

}  // namespace csrisk
