#include "csrisk/stepfn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csrisk/error.hpp"

namespace csrisk {

namespace {

constexpr double kSumSlack = 1e-12;
constexpr double kMassSlack = 1e-9;

std::string time_str(double t) {
  std::ostringstream os;
  os.precision(17);
  os << t;
  return os.str();
}

// 16-point Gauss-Legendre rule on [-1, 1], computed once by Newton iteration.
struct GaussLegendre {
  static constexpr int kOrder = 16;
  std::array<double, kOrder> nodes{};
  std::array<double, kOrder> weights{};

  GaussLegendre() {
    for (int i = 0; i < kOrder; ++i) {
      double z = std::cos(std::numbers::pi * (i + 0.75) / (kOrder + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = 0.0;
        for (int j = 1; j <= kOrder; ++j) {
          const double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
        }
        dp = kOrder * (z * p0 - p1) / (z * z - 1.0);
        const double dz = p0 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      nodes[i] = z;
      weights[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
  }
};

const GaussLegendre& gauss_legendre() {
  static const GaussLegendre rule;
  return rule;
}

}  // namespace

// ---------------------------------------------------------------- StepFn

StepFn::StepFn(double base, std::vector<double> x, std::vector<double> v)
    : base_(base), x_(std::move(x)), v_(std::move(v)) {
  require(x_.size() == v_.size(), "step function: breakpoint/value size mismatch");
  require(std::isfinite(base_), "step function: non-finite base value");
  for (std::size_t j = 0; j < x_.size(); ++j) {
    require(std::isfinite(x_[j]) && std::isfinite(v_[j]),
            "step function: non-finite breakpoint or value");
    if (j > 0)
      require(x_[j] > x_[j - 1], "step function: breakpoints must be strictly increasing");
  }
}

StepFn StepFn::from_jumps(std::vector<std::pair<double, double>> jumps, double base) {
  std::stable_sort(jumps.begin(), jumps.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<double> x, v;
  double level = base;
  for (const auto& [t, mass] : jumps) {
    level += mass;
    if (!x.empty() && x.back() == t) {
      v.back() = level;
    } else {
      x.push_back(t);
      v.push_back(level);
    }
  }
  return StepFn(base, std::move(x), std::move(v));
}

double StepFn::eval(double t) const {
  const auto it = std::upper_bound(x_.begin(), x_.end(), t);
  if (it == x_.begin()) return base_;
  return v_[static_cast<std::size_t>(it - x_.begin()) - 1];
}

double StepFn::eval_left(double t) const {
  const auto it = std::lower_bound(x_.begin(), x_.end(), t);
  if (it == x_.begin()) return base_;
  return v_[static_cast<std::size_t>(it - x_.begin()) - 1];
}

double StepFn::jump(std::size_t j) const {
  return v_.at(j) - (j == 0 ? base_ : v_[j - 1]);
}

bool StepFn::nondecreasing() const {
  double prev = base_;
  for (double v : v_) {
    if (v < prev) return false;
    prev = v;
  }
  return true;
}

bool StepFn::is_subdistribution() const {
  return base_ == 0.0 && nondecreasing() &&
         std::all_of(v_.begin(), v_.end(), [](double v) { return v >= 0.0; });
}

StepFn StepFn::complement() const {
  std::vector<double> v(v_.size());
  std::transform(v_.begin(), v_.end(), v.begin(), [](double y) { return 1.0 - y; });
  return StepFn(1.0 - base_, x_, std::move(v));
}

StepFn StepFn::relabel(const std::function<double(double)>& map) const {
  std::vector<double> x(x_.size());
  std::transform(x_.begin(), x_.end(), x.begin(), map);
  return StepFn(base_, std::move(x), v_);
}

void to_json(nlohmann::json& j, const StepFn& f) {
  j = nlohmann::json{{"base", f.base()},
                     {"x", std::vector<double>(f.breakpoints().begin(), f.breakpoints().end())},
                     {"v", std::vector<double>(f.values().begin(), f.values().end())}};
}

void from_json(const nlohmann::json& j, StepFn& f) {
  try {
    const double base = j.value("base", 0.0);
    f = StepFn(base, j.at("x").get<std::vector<double>>(), j.at("v").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("step function JSON: ") + e.what());
  }
}

// ---------------------------------------------------------- SubDistTuple

SubDistTuple::SubDistTuple(std::vector<StepFn> components)
    : components_(std::move(components)) {
  require(!components_.empty(), "sub-distribution tuple needs K >= 1");
  for (const auto& f : components_)
    require(f.is_subdistribution(),
            "sub-distribution component must be nondecreasing, nonnegative and grounded at 0");
  for (double t : grid())
    require(total(t) <= 1.0 + kSumSlack,
            "sub-distribution components sum above 1 at t = " + time_str(t));
}

std::vector<double> SubDistTuple::grid() const {
  std::vector<double> out;
  for (const auto& f : components_)
    out.insert(out.end(), f.breakpoints().begin(), f.breakpoints().end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double SubDistTuple::total(double t) const {
  double s = 0.0;
  for (const auto& f : components_) s += f.eval(t);
  return s;
}

double SubDistTuple::total_left(double t) const {
  double s = 0.0;
  for (const auto& f : components_) s += f.eval_left(t);
  return s;
}

// ----------------------------------------------------------------- Curve

Curve Curve::step(StepFn f) {
  Curve c;
  c.knots.assign(f.breakpoints().begin(), f.breakpoints().end());
  auto shared = std::make_shared<const StepFn>(std::move(f));
  c.value = [shared](double t) { return shared->eval(t); };
  c.left = [shared](double t) { return shared->eval_left(t); };
  return c;
}

Curve Curve::continuous(std::function<double(double)> fn, std::vector<double> knots) {
  Curve c;
  c.value = std::move(fn);
  c.knots = std::move(knots);
  return c;
}

Curve Curve::constant(double value) {
  return continuous([value](double) { return value; });
}

std::vector<Curve> curves_of(const SubDistTuple& tuple) {
  std::vector<Curve> out;
  for (const auto& f : tuple.components()) out.push_back(Curve::step(f));
  return out;
}

// ---------------------------------------------------------- Distribution

Distribution Distribution::discrete(StepFn cdf) {
  require(cdf.nondecreasing(), "discrete distribution CDF must be nondecreasing");
  Distribution d;
  d.discrete_ = true;
  d.cdf_step_ = std::move(cdf);
  if (!d.cdf_step_.empty()) {
    d.lo_ = d.cdf_step_.breakpoints().front();
    d.hi_ = d.cdf_step_.breakpoints().back();
  }
  return d;
}

Distribution Distribution::continuous(std::function<double(double)> cdf,
                                      std::function<double(double)> density, double lo,
                                      double hi, std::vector<double> knots) {
  require(std::isfinite(lo) && std::isfinite(hi) && lo < hi,
          "continuous distribution needs a finite support lo < hi");
  Distribution d;
  d.discrete_ = false;
  d.cdf_ = std::move(cdf);
  d.density_ = std::move(density);
  d.lo_ = lo;
  d.hi_ = hi;
  d.knots_ = std::move(knots);
  return d;
}

Distribution Distribution::uniform(double lo, double hi) {
  require(lo < hi, "uniform distribution needs lo < hi");
  const double width = hi - lo;
  return continuous([lo, hi, width](double t) { return std::clamp((t - lo) / width, 0.0, 1.0); },
                    [lo, hi, width](double t) { return (t >= lo && t <= hi) ? 1.0 / width : 0.0; },
                    lo, hi);
}

double Distribution::cdf(double t) const { return discrete_ ? cdf_step_.eval(t) : cdf_(t); }

double Distribution::total_mass() const {
  if (discrete_) return cdf_step_.limit() - cdf_step_.base();
  return cdf_(hi_) - cdf_(lo_);
}

Distribution Distribution::relabel(const std::function<double(double)>& map,
                                   const std::function<double(double)>& inverse,
                                   const std::function<double(double)>& derivative) const {
  if (discrete_) return discrete(cdf_step_.relabel(map));
  std::vector<double> knots(knots_.size());
  std::transform(knots_.begin(), knots_.end(), knots.begin(), map);
  auto cdf = cdf_;
  auto density = density_;
  return continuous([cdf, inverse](double t) { return cdf(inverse(t)); },
                    [density, inverse, derivative](double t) {
                      const double u = inverse(t);
                      return density(u) / derivative(u);
                    },
                    map(lo_), map(hi_), std::move(knots));
}

// ------------------------------------------------------------ operations

double ls_integrate(const std::function<double(double)>& g, const StepFn& f,
                    const Interval& range) {
  require(range.lo <= range.hi, "integration interval is not well ordered");
  double sum = 0.0;
  const auto xs = f.breakpoints();
  for (std::size_t j = 0; j < xs.size(); ++j) {
    if (!range.contains(xs[j])) continue;
    const double dj = f.jump(j);
    if (dj == 0.0) continue;
    const double gx = g(xs[j]);
    require(std::isfinite(gx), "integrand is not finite at jump t = " + time_str(xs[j]));
    sum += gx * dj;
  }
  return sum;
}

double product_integral(const StepFn& numerator,
                        const std::function<double(double)>& denominator_left, double upto) {
  double prod = 1.0;
  const auto xs = numerator.breakpoints();
  for (std::size_t j = 0; j < xs.size() && xs[j] <= upto; ++j) {
    const double dj = numerator.jump(j);
    if (dj == 0.0) continue;
    const double den = denominator_left(xs[j]);
    if (den == 0.0)
      throw JumpError(ErrorCode::DivisionAtJump, xs[j],
                      "zero denominator at jump t = " + time_str(xs[j]));
    prod *= 1.0 - dj / den;
  }
  return prod;
}

double sup_distance(const Curve& f, const Curve& g, double lo, double hi) {
  require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi, "empty sup-distance window");
  std::vector<double> pts{lo, hi};
  for (const auto* knots : {&f.knots, &g.knots})
    for (double t : *knots)
      if (t > lo && t < hi) pts.push_back(t);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  double sup = 0.0;
  for (double t : pts) {
    sup = std::max(sup, std::abs(f(t) - g(t)));
    if (t > lo) sup = std::max(sup, std::abs(f.left_value(t) - g.left_value(t)));
  }
  return sup;
}

double sup_distance(const StepFn& f, const StepFn& g, double lo, double hi) {
  return sup_distance(Curve::step(f), Curve::step(g), lo, hi);
}

double integrate(const std::function<double(double)>& integrand, const Distribution& weight,
                 std::span<const double> knots) {
  if (weight.is_discrete()) {
    const StepFn& cdf = weight.cdf_step();
    double sum = 0.0;
    for (std::size_t j = 0; j < cdf.size(); ++j) {
      const double dj = cdf.jump(j);
      if (dj != 0.0) sum += integrand(cdf.breakpoints()[j]) * dj;
    }
    return sum;
  }

  std::vector<double> cuts{weight.lo(), weight.hi()};
  for (auto list : {knots, weight.knots()})
    for (double t : list)
      if (t > weight.lo() && t < weight.hi()) cuts.push_back(t);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const auto& rule = gauss_legendre();
  double sum = 0.0;
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    const double half = 0.5 * (cuts[p + 1] - cuts[p]);
    const double mid = 0.5 * (cuts[p + 1] + cuts[p]);
    double piece = 0.0;
    for (int i = 0; i < GaussLegendre::kOrder; ++i) {
      const double t = mid + half * rule.nodes[i];
      piece += rule.weights[i] * integrand(t) * weight.density(t);
    }
    sum += half * piece;
  }
  return sum;
}

namespace {

void require_probability(const Distribution& weight) {
  const double mass = weight.total_mass();
  require(mass >= 1.0 - kMassSlack && mass <= 1.0 + kMassSlack,
          "weight distribution has total mass " + time_str(mass) + ", expected 1");
}

std::vector<double> merged_knots(std::span<const Curve> a, std::span<const Curve> b) {
  std::vector<double> out;
  for (auto side : {a, b})
    for (const auto& c : side) out.insert(out.end(), c.knots.begin(), c.knots.end());
  return out;
}

}  // namespace

double l2_distance(const Curve& f, const Curve& g, const Distribution& weight) {
  require_probability(weight);
  std::vector<double> knots = f.knots;
  knots.insert(knots.end(), g.knots.begin(), g.knots.end());
  const double sq = integrate(
      [&](double t) {
        const double d = f(t) - g(t);
        return d * d;
      },
      weight, knots);
  return std::sqrt(std::max(sq, 0.0));
}

double hellinger(std::span<const Curve> first, std::span<const Curve> second,
                 const Distribution& weight) {
  require(first.size() == second.size(), "hellinger: tuples have different K");
  require(!first.empty(), "hellinger: empty tuples");
  require_probability(weight);
  const auto root = [](double p) { return std::sqrt(std::max(p, 0.0)); };
  const auto integrand = [&](double t) {
    double sum = 0.0, plus1 = 0.0, plus2 = 0.0;
    for (std::size_t k = 0; k < first.size(); ++k) {
      const double a = first[k](t), b = second[k](t);
      plus1 += a;
      plus2 += b;
      const double d = root(a) - root(b);
      sum += d * d;
    }
    const double d = root(1.0 - plus1) - root(1.0 - plus2);
    return sum + d * d;
  };
  const double sq = 0.5 * integrate(integrand, weight, merged_knots(first, second));
  return std::sqrt(std::max(sq, 0.0));
}

double hellinger(const SubDistTuple& first, const SubDistTuple& second,
                 const Distribution& weight) {
  require(first.K() == second.K(), "hellinger: tuples have different K");
  const auto a = curves_of(first);
  const auto b = curves_of(second);
  return hellinger(a, b, weight);
}

}  // namespace csrisk
