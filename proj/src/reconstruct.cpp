#include "csrisk/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "csrisk/data.hpp"
#include "csrisk/error.hpp"

namespace csrisk {
namespace {

[[noreturn]] void hit_floor(double x, const char* what) {
  throw JumpError(ErrorCode::DenominatorHitZero, x,
                  std::string(what) + ": denominator at or below " + format_double(kDenominatorFloor) +
                      " at t = " + format_double(x));
}

void check_inputs(const StepFn& F1, const StepFn& F2, double upto) {
  require(!std::isnan(upto), "reconstruct: upto is NaN");
  require(F1.is_subdistribution() && F2.is_subdistribution(),
          "reconstruct: inputs must be sub-distribution functions");
}

// Hazard increment dF1(x) / (1 - F1(x-) - F2(x-)) at breakpoint j of F1.
double hazard_jump(const StepFn& F1, const StepFn& F2, std::size_t j, bool& degenerate) {
  const double x = F1.breakpoints()[j];
  const double den = 1.0 - F1.eval_left(x) - F2.eval_left(x);
  degenerate = !(den > kDenominatorFloor);
  return degenerate ? 0.0 : F1.jump(j) / den;
}

}  // namespace

TruncatedSurvival reconstruct_s_truncated(const StepFn& F1, const StepFn& F2, double upto) {
  check_inputs(F1, F2, upto);
  TruncatedSurvival out;
  std::vector<double> x, v;
  double s = 1.0;
  const auto xs = F1.breakpoints();
  for (std::size_t j = 0; j < xs.size() && xs[j] <= upto; ++j) {
    if (F1.jump(j) == 0.0) continue;
    bool degenerate = false;
    const double h = hazard_jump(F1, F2, j, degenerate);
    if (degenerate) {
      out.boundary = xs[j];
      break;
    }
    s *= 1.0 - h;
    x.push_back(xs[j]);
    v.push_back(s);
  }
  out.survival = StepFn(1.0, std::move(x), std::move(v));
  return out;
}

StepFn reconstruct_s(const StepFn& F1, const StepFn& F2, double upto) {
  auto r = reconstruct_s_truncated(F1, F2, upto);
  if (r.boundary) hit_floor(*r.boundary, "reconstruct_s");
  return std::move(r.survival);
}

StepFn reconstruct_q_hazard(const StepFn& F1, const StepFn& F2, const StepFn& S, double upto) {
  check_inputs(F1, F2, upto);
  std::vector<double> x, v;
  double q = 1.0;
  const auto xs = F2.breakpoints();
  for (std::size_t j = 0; j < xs.size() && xs[j] <= upto; ++j) {
    const double d = F2.jump(j);
    if (d == 0.0) continue;
    const double at_risk = 1.0 - F1.eval_left(xs[j]) - F2.eval_left(xs[j]);
    const double s = S.eval(xs[j]);
    if (!(at_risk > kDenominatorFloor) || !(s > kDenominatorFloor))
      hit_floor(xs[j], "reconstruct_q_hazard");
    q *= 1.0 - S.eval_left(xs[j]) * d / (s * at_risk);
    x.push_back(xs[j]);
    v.push_back(q);
  }
  return StepFn(1.0, std::move(x), std::move(v));
}

StepFn reconstruct_q_integral(const StepFn& F2, const StepFn& S, double upto) {
  require(!std::isnan(upto), "reconstruct_q_integral: upto is NaN");
  require(F2.is_subdistribution(), "reconstruct_q_integral: F2 must be a sub-distribution function");
  std::vector<double> x, v;
  double acc = 0.0;
  const auto xs = F2.breakpoints();
  for (std::size_t j = 0; j < xs.size() && xs[j] <= upto; ++j) {
    const double d = F2.jump(j);
    if (d == 0.0) continue;
    const double s = S.eval(xs[j]);
    if (!(s > kDenominatorFloor)) hit_floor(xs[j], "reconstruct_q_integral");
    acc += d / s;
    x.push_back(xs[j]);
    v.push_back(acc);
  }
  return StepFn(0.0, std::move(x), std::move(v));
}

double duhamel_residual(const StepFn& S_hat, const StepFn& S0,
                        const std::pair<StepFn, StepFn>& F_hat,
                        const std::pair<StepFn, StepFn>& F0, double x) {
  require(std::isfinite(x), "duhamel_residual: x must be finite");
  auto increment = [](const std::pair<StepFn, StepFn>& F, double u) {
    const double d = F.first.eval(u) - F.first.eval_left(u);
    if (d == 0.0) return 0.0;
    const double den = 1.0 - F.first.eval_left(u) - F.second.eval_left(u);
    if (!(den > kDenominatorFloor)) hit_floor(u, "duhamel_residual");
    return d / den;
  };

  std::vector<double> jumps;
  for (const StepFn* f : {&F_hat.first, &F0.first})
    for (double u : f->breakpoints())
      if (u <= x) jumps.push_back(u);
  std::sort(jumps.begin(), jumps.end());
  jumps.erase(std::unique(jumps.begin(), jumps.end()), jumps.end());

  double sum = 0.0;
  for (double u : jumps) {
    const double dl = increment(F_hat, u) - increment(F0, u);
    if (dl == 0.0) continue;
    const double s0 = S0.eval(u);
    if (!(std::abs(s0) > kDenominatorFloor)) hit_floor(u, "duhamel_residual");
    sum += S_hat.eval_left(u) / s0 * dl;
  }
  const double lhs = S_hat.eval(x) - S0.eval(x);
  const double rhs = -S0.eval(x) * sum;
  return std::abs(lhs - rhs);
}

}  // namespace csrisk
