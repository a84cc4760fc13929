#include "csrisk/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "csrisk/error.hpp"

namespace csrisk {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

StepFn step_from_masses(std::span<const double> times, std::span<const double> masses) {
  std::vector<std::pair<double, double>> jumps;
  for (std::size_t j = 0; j < times.size(); ++j)
    if (masses[j] > 0.0) jumps.emplace_back(times[j], masses[j]);
  return StepFn::from_jumps(std::move(jumps));
}

SubDistTuple tuple_from_masses(const std::vector<std::vector<double>>& times,
                               const std::vector<std::vector<double>>& masses) {
  std::vector<StepFn> comps;
  for (std::size_t k = 0; k < times.size(); ++k) comps.push_back(step_from_masses(times[k], masses[k]));
  return SubDistTuple(std::move(comps));
}

bool censored_at_max(const Dataset& data) {
  if (data.empty()) return false;
  const double tmax = data[data.size() - 1].t;
  for (std::size_t i = data.size(); i-- > 0 && data[i].t == tmax;)
    if (data[i].cause == data.K() + 1) return true;
  return false;
}

}  // namespace

// ------------------------------------------------------------ SupportSet

SupportSet SupportSet::of(const Dataset& data) {
  SupportSet s;
  s.atoms.resize(static_cast<std::size_t>(data.K()));
  for (const auto& o : data.observations())
    if (o.cause <= data.K()) {
      auto& a = s.atoms[static_cast<std::size_t>(o.cause - 1)];
      if (a.empty() || a.back() != o.t) a.push_back(o.t);
    }
  return s;
}

std::size_t SupportSet::total() const {
  std::size_t n = 0;
  for (const auto& a : atoms) n += a.size();
  return n;
}

bool SupportSet::supports(const SubDistTuple& tuple) const {
  if (tuple.K() != static_cast<int>(atoms.size())) return false;
  for (int k = 0; k < tuple.K(); ++k) {
    const auto& f = tuple[k];
    const auto& a = atoms[static_cast<std::size_t>(k)];
    for (std::size_t j = 0; j < f.size(); ++j)
      if (f.jump(j) != 0.0 && !std::binary_search(a.begin(), a.end(), f.breakpoints()[j]))
        return false;
  }
  return true;
}

// ------------------------------------------------------------ likelihood

double loglik(const Dataset& data, const SubDistTuple& F) {
  require(F.K() == data.K(), "loglik: K of estimate and data differ");
  require(!data.empty(), "loglik: empty dataset");
  double sum = 0.0;
  for (const auto& o : data.observations()) {
    const double p = o.cause <= data.K() ? F[o.cause - 1](o.t) : 1.0 - F.total(o.t);
    if (!(p > 0.0)) return kNegInf;
    sum += std::log(p);
  }
  return sum / static_cast<double>(data.size());
}

double beta_n(const Dataset& data, const SubDistTuple& F) {
  require(F.K() == data.K(), "beta_n: K of estimate and data differ");
  const double n = static_cast<double>(data.size());
  double sum = 0.0;
  for (const auto& o : data.observations()) {
    if (o.cause != data.K() + 1) continue;
    const double surv = 1.0 - F.total(o.t);
    if (!(surv > 0.0)) return kNegInf;
    sum += 1.0 / (n * surv);
  }
  return 1.0 - sum;
}

// -------------------------------------------------------------------- EM

namespace {

// Flat coordinate layout shared by the polishing stage: risk-major atoms,
// then the defect atom. Each observation's likelihood is the total mass
// over a union of coordinate ranges, each anchored at the start or the end
// of its risk block, so all likelihoods come from within-block prefix and
// suffix sums of nonnegative terms.
struct Layout {
  std::size_t dim = 0;
  std::size_t n = 0;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> cover;
  std::vector<std::size_t> block;  // block boundaries, defect last
  std::vector<char> block_start;   // j is the first index of a block

  Layout(const Dataset& data, const std::vector<std::vector<double>>& atoms,
         const std::vector<std::size_t>& own, const std::vector<std::size_t>& before) {
    const int K = data.K();
    block.assign(atoms.size() + 1, 0);
    for (std::size_t k = 0; k < atoms.size(); ++k) block[k + 1] = block[k] + atoms[k].size();
    dim = block.back() + 1;
    block.push_back(dim);
    block_start.assign(dim + 1, 0);
    for (std::size_t b : block) block_start[b] = 1;
    n = data.size();
    cover.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int c = data[i].cause;
      if (c <= K) {
        const auto k = static_cast<std::size_t>(c - 1);
        cover[i].emplace_back(block[k], block[k] + own[i] + 1);
      } else {
        for (std::size_t k = 0; k < atoms.size(); ++k)
          if (block[k] + before[i * K + k] < block[k + 1])
            cover[i].emplace_back(block[k] + before[i * K + k], block[k + 1]);
        cover[i].emplace_back(dim - 1, dim);
      }
    }
  }

  std::vector<double> likelihoods(std::span<const double> p) const {
    std::vector<double> prefix(dim), suffix(dim);
    for (std::size_t k = 0; k + 1 < block.size(); ++k) {
      double acc = 0.0;
      for (std::size_t j = block[k]; j < block[k + 1]; ++j) prefix[j] = acc += p[j];
      acc = 0.0;
      for (std::size_t j = block[k + 1]; j-- > block[k];) suffix[j] = acc += p[j];
    }
    std::vector<double> L(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (auto [b, e] : cover[i]) L[i] += block_start[b] ? prefix[e - 1] : suffix[b];
    return L;
  }

  double loglik(std::span<const double> p) const {
    double sum = 0.0;
    for (double L : likelihoods(p)) {
      if (!(L > 0.0)) return kNegInf;
      sum += std::log(L);
    }
    return sum / static_cast<double>(n);
  }

  /// Mixture gradient g_j = (1/n) sum_i a_ij / L_i. At the NPMLE g_j = 1 on
  /// the support and g_j <= 1 elsewhere.
  std::vector<double> gradient(std::span<const double> p) const {
    const auto L = likelihoods(p);
    std::vector<double> ends(dim, 0.0), starts(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 1.0 / (static_cast<double>(n) * L[i]);
      for (auto [b, e] : cover[i]) (block_start[b] ? ends[e - 1] : starts[b]) += w;
    }
    std::vector<double> g(dim, 0.0);
    for (std::size_t k = 0; k + 1 < block.size(); ++k) {
      double acc = 0.0;
      for (std::size_t j = block[k + 1]; j-- > block[k];) g[j] = acc += ends[j];
      acc = 0.0;
      for (std::size_t j = block[k]; j < block[k + 1]; ++j) g[j] += acc += starts[j];
    }
    return g;
  }
};

// Refines an EM solution to the exact NPMLE on the support EM identified.
// Newton steps on the active coordinates (mass-conserving, backtracked so
// the log-likelihood never decreases); coordinates driven to zero leave the
// active set and inactive coordinates with gradient above one re-enter.
// Appends the log-likelihood of every accepted step to `trace`.
struct PolishResult {
  int steps = 0;
  bool optimal = false;  // gradient within tolerance of one on the support, below elsewhere
};

PolishResult polish_support(const Layout& layout, std::vector<double>& p, std::vector<double>& trace) {
  constexpr double kGradTol = 1e-13;
  constexpr double kBinding = 1e-8;
  constexpr double kRounding = 64 * std::numeric_limits<double>::epsilon();
  const std::size_t dim = layout.dim;
  constexpr double kOptimal = 1e-9;
  PolishResult result;
  int& steps = result.steps;

  std::vector<char> active(dim, 0);
  for (std::size_t j = 0; j < dim; ++j) active[j] = p[j] > 0.0;

  double f = layout.loglik(p);
  for (int outer = 0; outer < 200; ++outer) {
    for (int inner = 0; inner < 100; ++inner) {
      const auto full = layout.gradient(p);
      std::vector<std::size_t> idx;
      for (std::size_t j = 0; j < dim; ++j)
        if (active[j]) idx.push_back(j);
      const auto s = static_cast<Eigen::Index>(idx.size());
      if (s <= 1) break;
      Eigen::VectorXd grad(s);
      double spread = 0.0;
      for (Eigen::Index a = 0; a < s; ++a) {
        grad(a) = full[idx[a]];
        spread = std::max(spread, std::abs(grad(a) - 1.0));
      }
      if (spread < kGradTol) break;

      // Light coordinates that the gradient pushes down are pinned at zero
      // and left out of the Newton system.
      std::vector<Eigen::Index> free;
      std::vector<Eigen::Index> pinned;
      std::vector<long> pos(dim, -1);
      for (Eigen::Index a = 0; a < s; ++a) {
        if (p[idx[a]] <= kBinding && grad(a) < 1.0) {
          pinned.push_back(a);
        } else {
          pos[idx[a]] = static_cast<long>(free.size());
          free.push_back(a);
        }
      }
      const auto m = static_cast<Eigen::Index>(free.size());
      if (m == 0) break;
      // Under sum(d) = 0 the gradient is only defined up to a constant;
      // centering it at one keeps the direction free of cancellation once
      // the gradient is close to one everywhere.
      Eigen::VectorXd gf(m);
      for (Eigen::Index a = 0; a < m; ++a) gf(a) = grad(free[a]) - 1.0;
      // Negative Hessian. Each observation covers at most K + 1 runs of
      // free coordinates, so its outer product is a union of blocks; they
      // are accumulated in a two-dimensional difference array.
      std::vector<Eigen::Index> before_free(dim + 1, 0);
      for (std::size_t j = 0; j < dim; ++j) before_free[j + 1] = before_free[j] + (pos[j] >= 0);
      Eigen::MatrixXd diff = Eigen::MatrixXd::Zero(m + 1, m + 1);
      std::vector<std::pair<Eigen::Index, Eigen::Index>> runs;
      const auto lik = layout.likelihoods(p);
      for (std::size_t i = 0; i < layout.n; ++i) {
        runs.clear();
        for (auto [b, e] : layout.cover[i])
          if (before_free[e] > before_free[b]) runs.emplace_back(before_free[b], before_free[e]);
        if (runs.empty()) continue;
        const double w2 = 1.0 / (static_cast<double>(layout.n) * lik[i] * lik[i]);
        for (auto [b1, e1] : runs)
          for (auto [b2, e2] : runs) {
            diff(b1, b2) += w2;
            diff(b1, e2) -= w2;
            diff(e1, b2) -= w2;
            diff(e1, e2) += w2;
          }
      }
      for (Eigen::Index a = 0; a <= m; ++a)
        for (Eigen::Index b = 1; b <= m; ++b) diff(a, b) += diff(a, b - 1);
      for (Eigen::Index a = 1; a <= m; ++a) diff.row(a) += diff.row(a - 1);
      Eigen::MatrixXd hf = diff.topLeftCorner(m, m);

      // Maximize the quadratic model subject to sum(d) = 0.
      const double ridge = 1e-14 * hf.diagonal().maxCoeff();
      hf.diagonal().array() += ridge;
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(hf);
      const Eigen::VectorXd x = ldlt.solve(gf);
      const Eigen::VectorXd y = ldlt.solve(Eigen::VectorXd::Ones(m));
      const double lambda = x.sum() / y.sum();
      const Eigen::VectorXd d = x - lambda * y;
      if (!d.allFinite() || (!(gf.dot(d) > 0.0) && pinned.empty())) break;

      // Projected arc search: clip at zero and renormalize, halving the
      // step until the Armijo condition holds.
      double t = 1.0;
      std::vector<double> q(p);
      for (auto a : pinned) q[idx[a]] = 0.0;
      double fq = kNegInf;
      bool accepted = false;
      for (int bt = 0; bt < 60 && !accepted; ++bt, t *= 0.5) {
        double total = 0.0;
        for (Eigen::Index a = 0; a < m; ++a)
          q[idx[free[a]]] = std::max(0.0, p[idx[free[a]]] + t * d(a));
        for (Eigen::Index a = 0; a < s; ++a) total += q[idx[a]];
        double gain = 0.0;
        for (Eigen::Index a = 0; a < s; ++a) {
          q[idx[a]] /= total;
          gain += (grad(a) - 1.0) * (q[idx[a]] - p[idx[a]]);
        }
        fq = layout.loglik(q);
        // Near the optimum the gain falls below double resolution; a full
        // step is then accepted if it loses no more than rounding.
        accepted = fq >= f + 1e-4 * gain || (bt == 0 && fq >= f - kRounding * std::abs(f));
      }
      if (!accepted) break;
      p = q;
      f = fq;
      trace.push_back(f);
      ++steps;
      for (std::size_t j = 0; j < dim; ++j)
        if (active[j] && p[j] <= 0.0) {
          active[j] = 0;
          p[j] = 0.0;
        }
    }

    // Re-admit the inactive coordinate with the largest gradient above one.
    const auto g = layout.gradient(p);
    std::size_t best = dim;
    double best_g = 1.0 + kGradTol;
    for (std::size_t j = 0; j < dim; ++j)
      if (!active[j] && g[j] > best_g) {
        best_g = g[j];
        best = j;
      }
    if (best == dim) break;
    // Moving mass eps from the active set into `best` has directional
    // derivative g_best - 1 > 0.
    bool moved = false;
    for (double eps = 1e-3; eps > 1e-15; eps *= 0.25) {
      std::vector<double> q(p);
      for (double& v : q) v *= 1.0 - eps;
      q[best] += eps;
      const double fq = layout.loglik(q);
      if (fq > f) {
        p = q;
        f = fq;
        trace.push_back(f);
        active[best] = 1;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  const auto g = layout.gradient(p);
  result.optimal = true;
  for (std::size_t j = 0; j < dim; ++j)
    if (!(p[j] > 0.0 ? std::abs(g[j] - 1.0) <= kOptimal : g[j] <= 1.0 + kOptimal)) result.optimal = false;
  return result;
}

}  // namespace

FitResult fit_em(const Dataset& data, const EmOptions& options) {
  require(!data.empty(), "fit_em: empty dataset");
  require(options.tol > 0.0, "fit_em: tol must be positive");
  require(options.max_iter >= 1, "fit_em: max_iter must be positive");

  const int K = data.K();
  const std::size_t n = data.size();
  const auto nd = static_cast<double>(n);
  const SupportSet support = SupportSet::of(data);
  const auto& atoms = support.atoms;

  // own[i]: index of the atom at t_i for a cause-k observation.
  // before[i*K + k]: number of risk-k atoms at or before t_i for a
  // still-at-risk observation.
  std::vector<std::size_t> own(n, 0);
  std::vector<std::size_t> before(n * static_cast<std::size_t>(K), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& o = data[i];
    if (o.cause <= K) {
      const auto& a = atoms[static_cast<std::size_t>(o.cause - 1)];
      own[i] = static_cast<std::size_t>(std::lower_bound(a.begin(), a.end(), o.t) - a.begin());
    } else {
      for (int k = 0; k < K; ++k) {
        const auto& a = atoms[static_cast<std::size_t>(k)];
        before[i * K + k] =
            static_cast<std::size_t>(std::upper_bound(a.begin(), a.end(), o.t) - a.begin());
      }
    }
  }

  const double start = 1.0 / static_cast<double>(support.total() + 1);
  std::vector<std::vector<double>> mass(atoms.size());
  for (std::size_t k = 0; k < atoms.size(); ++k) mass[k].assign(atoms[k].size(), start);
  double defect = start;

  std::vector<std::vector<double>> cum(atoms.size()), own_w(atoms.size()), cens_w(atoms.size());
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    cum[k].resize(atoms[k].size());
    own_w[k].resize(atoms[k].size());
    cens_w[k].resize(atoms[k].size() + 1);
  }
  std::vector<double> inv(n);

  FitResult fit;
  fit.converged = false;
  double prev = kNegInf;
  int it = 0;
  for (;; ++it) {
    for (std::size_t k = 0; k < atoms.size(); ++k)
      std::partial_sum(mass[k].begin(), mass[k].end(), cum[k].begin());

    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = data[i].cause;
      double L;
      if (c <= K) {
        L = cum[static_cast<std::size_t>(c - 1)][own[i]];
      } else {
        L = defect;
        for (int k = 0; k < K; ++k) {
          const auto& ck = cum[static_cast<std::size_t>(k)];
          if (ck.empty()) continue;
          const std::size_t b = before[i * K + k];
          L += ck.back() - (b > 0 ? ck[b - 1] : 0.0);
        }
      }
      if (!(L > 0.0))
        throw Error(ErrorCode::ZeroConditionalMass,
                    "fit_em: observation at t = " + format_double(data[i].t) +
                        " has zero conditional mass");
      inv[i] = 1.0 / L;
      ll += std::log(L);
    }
    ll /= nd;
    fit.loglik_trace.push_back(ll);

    if (it > 0 && ll - prev <= options.tol * std::abs(prev)) {
      fit.converged = true;
      break;
    }
    if (it >= options.max_iter) break;
    prev = ll;

    // E-step weights: cause-k observations feed atoms at or before t, still
    // at risk observations feed atoms after t and the defect atom.
    double defect_w = 0.0;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      std::fill(own_w[k].begin(), own_w[k].end(), 0.0);
      std::fill(cens_w[k].begin(), cens_w[k].end(), 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int c = data[i].cause;
      if (c <= K) {
        own_w[static_cast<std::size_t>(c - 1)][own[i]] += inv[i];
      } else {
        defect_w += inv[i];
        for (int k = 0; k < K; ++k) cens_w[static_cast<std::size_t>(k)][before[i * K + k]] += inv[i];
      }
    }
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      const std::size_t m = atoms[k].size();
      double suffix = 0.0;
      for (std::size_t j = m; j-- > 0;) {
        suffix += own_w[k][j];
        own_w[k][j] = suffix;
      }
      double prefix = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        prefix += cens_w[k][j];
        mass[k][j] *= (own_w[k][j] + prefix) / nd;
      }
    }
    defect *= defect_w / nd;
  }

  fit.iterations = it;
  if (options.polish) {
    Layout layout(data, atoms, own, before);
    std::vector<double> flat;
    for (const auto& mk : mass) flat.insert(flat.end(), mk.begin(), mk.end());
    flat.push_back(defect);
    const PolishResult polished = polish_support(layout, flat, fit.loglik_trace);
    fit.polish_steps = polished.steps;
    fit.converged = fit.converged || polished.optimal;
    std::size_t j = 0;
    for (auto& mk : mass)
      for (double& p : mk) p = flat[j++];
    defect = flat.back();
  }

  // Prune numerical zeros into the defect atom.
  for (std::size_t k = 0; k < atoms.size(); ++k)
    for (double& p : mass[k])
      if (p < options.prune) {
        defect += p;
        p = 0.0;
      }

  fit.estimate = tuple_from_masses(atoms, mass);
  fit.defect = defect;
  fit.loglik = loglik(data, fit.estimate);
  fit.beta_n = beta_n(data, fit.estimate);
  return fit;
}

// ------------------------------------------------------------------ PAVA

std::vector<double> isotonic_regression(std::span<const double> values,
                                        std::span<const double> weights) {
  require(values.size() == weights.size(), "isotonic regression: size mismatch");
  struct Block {
    double mean;
    double weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < values.size(); ++i) {
    require(weights[i] > 0.0, "isotonic regression: weights must be positive");
    blocks.push_back({values[i], weights[i], 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean >= blocks.back().mean) {
      const Block top = blocks.back();
      blocks.pop_back();
      Block& b = blocks.back();
      const double w = b.weight + top.weight;
      b.mean = (b.mean * b.weight + top.mean * top.weight) / w;
      b.weight = w;
      b.count += top.count;
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& b : blocks) out.insert(out.end(), b.count, b.mean);
  return out;
}

namespace {

// Isotonic fit of the indicator 1{cause == target}, pooled over tied times.
// Returns the distinct times and the fitted value at each.
std::pair<std::vector<double>, std::vector<double>> indicator_isotonic(const Dataset& data,
                                                                      int target) {
  std::vector<double> times, hits, counts;
  for (const auto& o : data.observations()) {
    if (times.empty() || times.back() != o.t) {
      times.push_back(o.t);
      hits.push_back(0.0);
      counts.push_back(0.0);
    }
    hits.back() += o.cause == target ? 1.0 : 0.0;
    counts.back() += 1.0;
  }
  std::vector<double> means(times.size());
  for (std::size_t j = 0; j < times.size(); ++j) means[j] = hits[j] / counts[j];
  return {times, isotonic_regression(means, counts)};
}

StepFn step_from_levels(std::span<const double> times, std::span<const double> levels) {
  std::vector<std::pair<double, double>> jumps;
  double prev = 0.0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (levels[j] > prev) jumps.emplace_back(times[j], levels[j] - prev);
    prev = std::max(prev, levels[j]);
  }
  return StepFn::from_jumps(std::move(jumps));
}

}  // namespace

std::size_t trace_violations(const FitResult& fit, double slack) {
  std::size_t count = 0;
  for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i)
    count += fit.loglik_trace[i] < fit.loglik_trace[i - 1] - slack;
  return count;
}

FitResult fit_pava_k1(const Dataset& data) {
  require(data.K() == 1, "fit_pava_k1 requires K = 1");
  require(!data.empty(), "fit_pava_k1: empty dataset");
  const auto [times, levels] = indicator_isotonic(data, 1);
  FitResult fit;
  fit.estimate = SubDistTuple({step_from_levels(times, levels)});
  fit.defect = 1.0 - fit.estimate[0].limit();
  fit.loglik = loglik(data, fit.estimate);
  fit.loglik_trace = {fit.loglik};
  fit.beta_n = beta_n(data, fit.estimate);
  fit.iterations = 1;
  fit.converged = true;
  return fit;
}

NaiveFit fit_naive(const Dataset& data) {
  require(!data.empty(), "fit_naive: empty dataset");
  NaiveFit out;
  for (int k = 1; k <= data.K(); ++k) {
    const auto [times, levels] = indicator_isotonic(data, k);
    out.components.push_back(step_from_levels(times, levels));
  }
  std::vector<double> grid;
  for (const auto& f : out.components)
    grid.insert(grid.end(), f.breakpoints().begin(), f.breakpoints().end());
  for (double t : grid) {
    double s = 0.0;
    for (const auto& f : out.components) s += f(t);
    if (s > 1.0 + 1e-12) out.sum_within_one = false;
  }
  return out;
}

// ----------------------------------------------------------- brute force

namespace {

// Direct evaluation of the log-likelihood on a flat mass vector, used only
// by the brute-force oracle: coordinate j < m is atom (risk_of[j], time_of[j]),
// coordinate m is the defect.
struct FlatProblem {
  const Dataset* data;
  std::vector<int> risk_of;
  std::vector<double> time_of;

  double operator()(std::span<const double> p) const {
    double sum = 0.0;
    for (const auto& o : data->observations()) {
      double L = 0.0;
      if (o.cause <= data->K()) {
        for (std::size_t j = 0; j < risk_of.size(); ++j)
          if (risk_of[j] == o.cause && time_of[j] <= o.t) L += p[j];
      } else {
        L = p[risk_of.size()];
        for (std::size_t j = 0; j < risk_of.size(); ++j)
          if (time_of[j] > o.t) L += p[j];
      }
      if (!(L > 0.0)) return kNegInf;
      sum += std::log(L);
    }
    return sum / static_cast<double>(data->size());
  }
};

// Enumerates all compositions of `total` into `parts` nonnegative integers.
template <class Visit>
void compositions(int total, std::size_t parts, std::vector<int>& cur, std::size_t idx,
                  const Visit& visit) {
  if (idx + 1 == parts) {
    cur[idx] = total;
    visit(cur);
    return;
  }
  for (int v = 0; v <= total; ++v) {
    cur[idx] = v;
    compositions(total - v, parts, cur, idx + 1, visit);
  }
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

FitResult brute_force_mle(const Dataset& data) {
  require(!data.empty(), "brute_force_mle: empty dataset");
  const SupportSet support = SupportSet::of(data);
  if (data.size() > 6 || support.total() > 6)
    throw Error(ErrorCode::InstanceTooLarge,
                "brute_force_mle: instance too large (n <= 6 and at most 6 atoms)");

  FlatProblem f{&data, {}, {}};
  for (std::size_t k = 0; k < support.atoms.size(); ++k)
    for (double t : support.atoms[k]) {
      f.risk_of.push_back(static_cast<int>(k) + 1);
      f.time_of.push_back(t);
    }
  const std::size_t dim = f.risk_of.size() + 1;

  // Grid step 1/200, coarsened if the simplex grid would be too large.
  constexpr double kBudget = 3e7;
  int steps = 200;
  while (steps > 4 && binomial(steps + static_cast<int>(dim) - 1, static_cast<int>(dim) - 1) > kBudget)
    steps -= 4;

  std::vector<double> best(dim, 1.0 / static_cast<double>(dim));
  double best_ll = f(best);
  std::vector<int> cur(dim);
  std::vector<double> p(dim);
  compositions(steps, dim, cur, 0, [&](const std::vector<int>& c) {
    for (std::size_t j = 0; j < dim; ++j) p[j] = static_cast<double>(c[j]) / steps;
    const double v = f(p);
    if (v > best_ll) {
      best_ll = v;
      best = p;
    }
  });

  // Pairwise mass exchange: move delta from coordinate b to a, with the
  // concave one-dimensional objective maximized by golden-section search.
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int sweep = 0; sweep < 5000; ++sweep) {
    const double before = best_ll;
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = 0; b < dim; ++b) {
        if (a == b || best[b] <= 0.0) continue;
        const auto at = [&](double delta) {
          p = best;
          p[a] += delta;
          p[b] -= delta;
          return f(p);
        };
        double lo = 0.0, hi = best[b];
        double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
        double f1 = at(x1), f2 = at(x2);
        while (hi - lo > 1e-13) {
          if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = at(x2);
          } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = at(x1);
          }
        }
        for (double delta : {0.5 * (lo + hi), best[b]}) {
          const double v = at(delta);
          if (v > best_ll) {
            best_ll = v;
            best = p;
          }
        }
      }
    if (best_ll - before <= 1e-15) break;
  }

  std::vector<std::vector<double>> masses(support.atoms.size());
  for (std::size_t k = 0; k < support.atoms.size(); ++k) masses[k].assign(support.atoms[k].size(), 0.0);
  std::size_t j = 0;
  for (std::size_t k = 0; k < support.atoms.size(); ++k)
    for (std::size_t a = 0; a < support.atoms[k].size(); ++a) masses[k][a] = best[j++];

  FitResult fit;
  fit.estimate = tuple_from_masses(support.atoms, masses);
  fit.defect = best.back();
  fit.loglik = loglik(data, fit.estimate);
  fit.loglik_trace = {fit.loglik};
  fit.beta_n = beta_n(data, fit.estimate);
  fit.iterations = 1;
  fit.converged = true;
  return fit;
}

// ------------------------------------------------------------------ KKT

KktReport check_characterization(const Dataset& data, const FitResult& fit, double tol) {
  require(!data.empty(), "check_characterization: empty dataset");
  require(fit.estimate.K() == data.K(), "check_characterization: K mismatch");
  require(tol >= 0.0, "check_characterization: tol must be nonnegative");
  const SubDistTuple& F = fit.estimate;
  const int K = data.K();
  const double n = static_cast<double>(data.size());

  KktReport report;
  report.tol = tol;
  report.beta_n = beta_n(data, F);
  report.censored_at_max = censored_at_max(data);
  report.beta_nonnegative = report.beta_n >= -tol;
  report.beta_iff = (std::abs(report.beta_n) <= tol) == report.censored_at_max;

  // Distinct observation times; cumulative sums C[j] cover times < u[j],
  // with one extra slot past T_(n).
  std::vector<double> u;
  for (const auto& o : data.observations())
    if (u.empty() || u.back() != o.t) u.push_back(o.t);
  const std::size_t m = u.size();

  for (int k = 1; k <= K; ++k) {
    const StepFn& Fk = F[k - 1];
    std::vector<double> C(m + 1, 0.0);
    {
      std::size_t j = 0;
      double acc = 0.0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        while (u[j] != data[i].t) C[++j] = acc;
        const auto& o = data[i];
        if (o.cause == k) {
          acc += 1.0 / (n * Fk(o.t));
        } else if (o.cause == K + 1) {
          acc -= 1.0 / (n * (1.0 - F.total(o.t)));
        }
      }
      C[m] = acc;
    }

    KktRiskReport r;
    r.risk = k;
    std::vector<std::size_t> jump_idx;
    for (std::size_t j = 0; j < Fk.size(); ++j) {
      if (Fk.jump(j) <= 0.0) continue;
      const double tau = Fk.breakpoints()[j];
      const auto it = std::lower_bound(u.begin(), u.end(), tau);
      require(it != u.end() && *it == tau, "check_characterization: jump off the observation times");
      jump_idx.push_back(static_cast<std::size_t>(it - u.begin()));
    }
    r.jumps = jump_idx.size();

    // prefix/suffix extrema of C over the distinct times.
    std::vector<double> suffix_min(m + 1), prefix_min(m + 1);
    suffix_min[m - 1] = C[m - 1];
    for (std::size_t j = m - 1; j-- > 0;) suffix_min[j] = std::min(C[j], suffix_min[j + 1]);
    prefix_min[0] = C[0];
    for (std::size_t j = 1; j < m; ++j) prefix_min[j] = std::min(C[j], prefix_min[j - 1]);

    double ineq3 = std::numeric_limits<double>::infinity();
    double ineq4 = -std::numeric_limits<double>::infinity();
    double full = std::numeric_limits<double>::infinity();
    double tail = 0.0;
    double cmin = std::numeric_limits<double>::infinity(), cmax = -cmin;
    for (std::size_t a : jump_idx) {
      // s < T_(n): C(s) ranges over C[j], j = a+1 .. m-1.
      const double d3 = a + 1 <= m - 1 ? suffix_min[a + 1] - C[a] : 0.0;
      ineq3 = std::min(ineq3, d3);
      const double dtail = C[m] - C[a];
      full = std::min({full, d3, dtail - report.beta_n});
      tail = std::max(tail, std::abs(dtail - report.beta_n));
      if (a + 1 < m) {
        // s >= T_(1), s < tau: C(s) ranges over C[0 .. a-1].
        ineq4 = std::max(ineq4, 0.0);
        if (a > 0) ineq4 = std::max(ineq4, C[a] - prefix_min[a - 1]);
      }
      cmin = std::min(cmin, C[a]);
      cmax = std::max(cmax, C[a]);
    }
    r.ineq3_min = jump_idx.empty() ? 0.0 : ineq3;
    r.ineq4_max = jump_idx.empty() ? 0.0 : std::max(ineq4, 0.0);
    r.full_form_min = jump_idx.empty() ? 0.0 : full;
    r.tail_residual = tail;
    r.equality_max = jump_idx.empty() ? 0.0 : cmax - cmin;
    const auto ok = [](double v) { return !std::isnan(v); };
    r.ineq3_pass = ok(r.ineq3_min) && r.ineq3_min >= -tol;
    r.ineq4_pass = ok(r.ineq4_max) && r.ineq4_max <= tol;
    r.equality_pass = ok(r.equality_max) && r.equality_max <= tol;
    r.full_form_pass = ok(r.full_form_min) && r.full_form_min >= -tol;
    report.pass = report.pass && r.ineq3_pass && r.ineq4_pass && r.equality_pass && r.full_form_pass;
    report.risks.push_back(r);
  }
  report.pass = report.pass && report.beta_nonnegative && report.beta_iff;
  return report;
}

// -------------------------------------------------------- rank invariance

bool smirnov_invariance_check(const Dataset& data, const std::function<double(double)>& transform,
                              double tol, const EmOptions& options) {
  const Dataset mapped = relabel_times(data, transform);
  const FitResult a = fit_em(data, options);
  const FitResult b = fit_em(mapped, options);
  for (std::size_t i = 0; i < data.size(); ++i)
    for (int k = 0; k < data.K(); ++k)
      if (std::abs(a.estimate[k](data[i].t) - b.estimate[k](mapped[i].t)) > tol) return false;
  return true;
}

// ------------------------------------------------------------------ JSON

void to_json(nlohmann::json& j, const FitResult& fit) {
  nlohmann::json risks = nlohmann::json::array();
  for (const auto& f : fit.estimate.components())
    risks.push_back({{"x", std::vector<double>(f.breakpoints().begin(), f.breakpoints().end())},
                     {"v", std::vector<double>(f.values().begin(), f.values().end())}});
  j = {{"K", fit.estimate.K()},
       {"risks", risks},
       {"defect", fit.defect},
       {"loglik", fit.loglik},
       {"beta_n", fit.beta_n},
       {"iterations", fit.iterations},
       {"converged", fit.converged}};
}

void from_json(const nlohmann::json& j, FitResult& fit) {
  try {
    const int K = j.at("K").get<int>();
    const auto& risks = j.at("risks");
    require(static_cast<int>(risks.size()) == K, "fit JSON: 'risks' length differs from K");
    std::vector<StepFn> comps;
    for (const auto& r : risks)
      comps.emplace_back(0.0, r.at("x").get<std::vector<double>>(), r.at("v").get<std::vector<double>>());
    FitResult out;
    out.estimate = SubDistTuple(std::move(comps));
    out.defect = j.value("defect", 1.0 - out.estimate.total(std::numeric_limits<double>::max()));
    out.loglik = j.value("loglik", 0.0);
    out.beta_n = j.value("beta_n", 0.0);
    out.iterations = j.value("iterations", 0);
    out.converged = j.value("converged", true);
    fit = std::move(out);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("fit JSON: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const KktReport& report) {
  nlohmann::json risks = nlohmann::json::array();
  for (const auto& r : report.risks)
    risks.push_back({{"risk", r.risk},
                     {"jumps", r.jumps},
                     {"ineq3_min_slack", r.ineq3_min},
                     {"ineq4_max", r.ineq4_max},
                     {"equality_max_residual", r.equality_max},
                     {"full_form_min_slack", r.full_form_min},
                     {"tail_residual", r.tail_residual},
                     {"ineq3_pass", r.ineq3_pass},
                     {"ineq4_pass", r.ineq4_pass},
                     {"equality_pass", r.equality_pass},
                     {"full_form_pass", r.full_form_pass}});
  j = {{"tol", report.tol},
       {"beta_n", report.beta_n},
       {"censored_at_max", report.censored_at_max},
       {"beta_nonnegative", report.beta_nonnegative},
       {"beta_iff", report.beta_iff},
       {"risks", risks},
       {"pass", report.pass}};
}

}  // namespace csrisk
