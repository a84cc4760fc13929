#pragma once

#include <optional>
#include <utility>

#include "csrisk/stepfn.hpp"

namespace csrisk {

// Right-censored submodel: F1 is the sub-distribution of observed events,
// F2 that of observed censorings, F3 = 1 - F1 - F2 the still-at-risk mass.
// All routines work on step functions only.

/// Denominators at or below this value are treated as zero.
inline constexpr double kDenominatorFloor = 1e-12;

/// Product-limit survival of the event time,
/// S(t) = prod over jumps x <= min(t, upto) of F1 of (1 - dF1(x) / (1 - F1(x-) - F2(x-))).
/// Throws JumpError(DenominatorHitZero) when a needed denominator is <= the floor.
StepFn reconstruct_s(const StepFn& F1, const StepFn& F2, double upto);

struct TruncatedSurvival {
  StepFn survival;                 // valid strictly before `boundary`
  std::optional<double> boundary;  // first jump whose denominator hit the floor
};

/// As reconstruct_s, but stops at the first degenerate denominator instead
/// of throwing.
TruncatedSurvival reconstruct_s_truncated(const StepFn& F1, const StepFn& F2, double upto);

/// Censoring survival Q(t) = prod over jumps x <= t of F2 of (1 - dL(x)) with
/// dL(x) = S(x-) dF2(x) / (S(x) F3(x-)).
StepFn reconstruct_q_hazard(const StepFn& F1, const StepFn& F2, const StepFn& S, double upto);

/// The running sum of dF2(x) / S(x) over jumps x <= t. Under independent
/// censoring this is P(U <= t), the censoring distribution function, that
/// is 1 - Q rather than Q.
StepFn reconstruct_q_integral(const StepFn& F2, const StepFn& S, double upto);

/// |LHS - RHS| of the Duhamel identity at x for two product-limit survival
/// curves, LHS = S_hat(x) - S0(x) and
/// RHS = -S0(x) * sum over u <= x of S_hat(u-) / S0(u) * (dL_hat(u) - dL0(u)),
/// where dL = dF1(u) / (1 - F1(u-) - F2(u-)). The sum runs over the union of
/// both jump sets, so the identity holds exactly up to rounding.
double duhamel_residual(const StepFn& S_hat, const StepFn& S0,
                        const std::pair<StepFn, StepFn>& F_hat,
                        const std::pair<StepFn, StepFn>& F0, double x);

}  // namespace csrisk
