#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace csrisk {

// Right-continuous step function with finitely many breakpoints.
//
// Value is `base` on (-inf, x[0]) and v[j] on [x[j], x[j+1]). Breakpoints
// are strictly increasing and every value is finite. Monotonicity is not
// imposed here: sub-distribution functions are nondecreasing and grounded at
// zero (checked by SubDistTuple), while reconstructed survival curves are
// nonincreasing from one.
class StepFn {
 public:
  StepFn() = default;
  StepFn(double base, std::vector<double> x, std::vector<double> v);

  /// Builds a function from (time, jump) pairs. Exactly equal times are
  /// merged by summing their jumps.
  static StepFn from_jumps(std::vector<std::pair<double, double>> jumps,
                           double base = 0.0);

  double operator()(double t) const { return eval(t); }
  double eval(double t) const;
  double eval_left(double t) const;

  double base() const noexcept { return base_; }
  std::span<const double> breakpoints() const noexcept { return x_; }
  std::span<const double> values() const noexcept { return v_; }
  std::size_t size() const noexcept { return x_.size(); }
  bool empty() const noexcept { return x_.empty(); }

  /// Jump at breakpoint j: v[j] - v[j-1] (or v[0] - base).
  double jump(std::size_t j) const;
  /// Value at +infinity.
  double limit() const noexcept { return v_.empty() ? base_ : v_.back(); }

  bool nondecreasing() const;
  /// Nondecreasing, grounded at 0, all values >= 0.
  bool is_subdistribution() const;

  /// Pointwise 1 - f.
  StepFn complement() const;
  /// Applies a strictly increasing map to the time axis.
  StepFn relabel(const std::function<double(double)>& map) const;

  friend bool operator==(const StepFn&, const StepFn&) = default;

 private:
  double base_ = 0.0;
  std::vector<double> x_;
  std::vector<double> v_;
};

void to_json(nlohmann::json& j, const StepFn& f);
void from_json(const nlohmann::json& j, StepFn& f);

// K-tuple of sub-distribution step functions with pointwise sum <= 1.
class SubDistTuple {
 public:
  SubDistTuple() = default;
  explicit SubDistTuple(std::vector<StepFn> components);

  int K() const noexcept { return static_cast<int>(components_.size()); }
  const StepFn& operator[](int k) const { return components_.at(k); }
  std::span<const StepFn> components() const noexcept { return components_; }

  /// Merged sorted breakpoints of all components.
  std::vector<double> grid() const;
  /// F_+ = sum of components.
  double total(double t) const;
  double total_left(double t) const;
  /// F_{K+1} = 1 - F_+.
  double survivor(double t) const { return 1.0 - total(t); }

 private:
  std::vector<StepFn> components_;
};

// An evaluable curve: a step function or a closed-form monotone function.
// `knots` lists every point where the curve may fail to be smooth; the
// left limit defaults to the value for continuous curves.
struct Curve {
  std::function<double(double)> value;
  std::function<double(double)> left;
  std::vector<double> knots;

  double operator()(double t) const { return value(t); }
  double left_value(double t) const { return left ? left(t) : value(t); }

  static Curve step(StepFn f);
  static Curve continuous(std::function<double(double)> fn,
                          std::vector<double> knots = {});
  static Curve constant(double c);
};

std::vector<Curve> curves_of(const SubDistTuple& tuple);

// Probability distribution used as an integrating weight (the law G of the
// inspection time). Either discrete, with a CDF step function, or absolutely
// continuous, with CDF and density closures on a finite support.
class Distribution {
 public:
  static Distribution discrete(StepFn cdf);
  static Distribution continuous(std::function<double(double)> cdf,
                                 std::function<double(double)> density,
                                 double lo, double hi,
                                 std::vector<double> knots = {});
  static Distribution uniform(double lo, double hi);

  bool is_discrete() const noexcept { return discrete_; }
  const StepFn& cdf_step() const { return cdf_step_; }
  double cdf(double t) const;
  double density(double t) const { return density_(t); }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  std::span<const double> knots() const noexcept { return knots_; }
  double total_mass() const;

  /// Pushes the distribution forward through a strictly increasing map,
  /// given the map's inverse and derivative (continuous case).
  Distribution relabel(const std::function<double(double)>& map,
                       const std::function<double(double)>& inverse,
                       const std::function<double(double)>& derivative) const;

 private:
  bool discrete_ = true;
  StepFn cdf_step_;
  std::function<double(double)> cdf_;
  std::function<double(double)> density_;
  double lo_ = 0.0;
  double hi_ = 0.0;
  std::vector<double> knots_;
};

struct Interval {
  double lo;
  double hi;
  bool lo_closed = true;
  bool hi_closed = false;

  bool contains(double t) const {
    return (lo_closed ? t >= lo : t > lo) && (hi_closed ? t <= hi : t < hi);
  }
};

/// Sum of g(x) * jump(x) over the jumps x of f lying in `range`.
double ls_integrate(const std::function<double(double)>& g, const StepFn& f,
                    const Interval& range);

/// Finite product over jumps x <= upto of (1 - jump(x) / denominator_left(x)).
/// Throws JumpError(DivisionAtJump) on a zero denominator.
double product_integral(const StepFn& numerator,
                        const std::function<double(double)>& denominator_left,
                        double upto);

/// Supremum of |f - g| over the closed window [lo, hi]. Exact when each
/// argument is a step function or continuous and monotone between knots.
double sup_distance(const Curve& f, const Curve& g, double lo, double hi);
double sup_distance(const StepFn& f, const StepFn& g, double lo, double hi);

/// Integral of an arbitrary integrand against a weight distribution.
/// Continuous weights are integrated piecewise between `knots` (plus the
/// weight's own knots) with 16-point Gauss-Legendre, which is exact for
/// polynomial integrands up to degree 31 on each piece.
double integrate(const std::function<double(double)>& integrand,
                 const Distribution& weight, std::span<const double> knots);

/// (int (f - g)^2 dG)^(1/2).
double l2_distance(const Curve& f, const Curve& g, const Distribution& weight);

/// Hellinger distance between the current-status likelihoods induced by two
/// K-tuples of sub-distribution curves, with inspection law `weight`.
double hellinger(std::span<const Curve> first, std::span<const Curve> second,
                 const Distribution& weight);
double hellinger(const SubDistTuple& first, const SubDistTuple& second,
                 const Distribution& weight);

}  // namespace csrisk
