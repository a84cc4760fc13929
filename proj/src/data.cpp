#include "csrisk/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csrisk/error.hpp"

namespace csrisk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double unit(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace

// --------------------------------------------------------------- Dataset

Dataset::Dataset(int K, std::vector<Observation> observations)
    : K_(K), obs_(std::move(observations)) {
  require(K_ >= 1, "dataset needs K >= 1");
  for (const auto& o : obs_) {
    require(std::isfinite(o.t), "observation time must be finite");
    require(o.cause >= 1 && o.cause <= K_ + 1,
            "cause " + std::to_string(o.cause) + " out of range 1.." + std::to_string(K_ + 1));
  }
  std::stable_sort(obs_.begin(), obs_.end(),
                   [](const Observation& a, const Observation& b) { return a.t < b.t; });
}

std::size_t Dataset::count(int cause) const {
  return static_cast<std::size_t>(std::count_if(
      obs_.begin(), obs_.end(), [cause](const Observation& o) { return o.cause == cause; }));
}

Dataset collapse_causes(const Dataset& data) {
  std::vector<Observation> out(data.observations().begin(), data.observations().end());
  for (auto& o : out) o.cause = o.cause <= data.K() ? 1 : 2;
  return Dataset(1, std::move(out));
}

Dataset relabel_times(const Dataset& data, const std::function<double(double)>& map) {
  std::vector<Observation> out(data.observations().begin(), data.observations().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].t = map(data[i].t);
    if (i > 0 && data[i].t > data[i - 1].t)
      require(out[i].t > out[i - 1].t, "time transform is not strictly increasing on the sample");
    if (i > 0 && data[i].t == data[i - 1].t)
      require(out[i].t == out[i - 1].t, "time transform is not a function on the sample");
  }
  return Dataset(data.K(), std::move(out));
}

// ------------------------------------------------------------------- Law

Law Law::uniform(double lo, double hi) {
  Law l;
  l.kind = Kind::Uniform;
  l.lo = lo;
  l.hi = hi;
  return l;
}

Law Law::exponential(double rate) {
  Law l;
  l.kind = Kind::Exponential;
  l.rate = rate;
  return l;
}

Law Law::point(double at) {
  Law l;
  l.kind = Kind::Point;
  l.at = at;
  return l;
}

Law Law::discrete(std::vector<double> atoms, std::vector<double> probs) {
  Law l;
  l.kind = Kind::Discrete;
  l.atoms = std::move(atoms);
  l.probs = std::move(probs);
  return l;
}

Law Law::infinite() {
  Law l;
  l.kind = Kind::Infinite;
  return l;
}

void Law::validate() const {
  switch (kind) {
    case Kind::Uniform:
      require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "uniform law needs lo < hi");
      break;
    case Kind::Exponential:
      require(std::isfinite(rate) && rate > 0.0, "exponential law needs rate > 0");
      break;
    case Kind::Point:
      require(std::isfinite(at), "point law needs a finite location");
      break;
    case Kind::Discrete: {
      require(!atoms.empty() && atoms.size() == probs.size(),
              "discrete law needs matching non-empty atoms and probs");
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        require(std::isfinite(atoms[i]) && probs[i] >= 0.0, "discrete law: bad atom or prob");
        if (i > 0) require(atoms[i] > atoms[i - 1], "discrete law: atoms must increase");
      }
      const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
      require(std::abs(total - 1.0) <= 1e-9, "discrete law: probabilities must sum to 1");
      break;
    }
    case Kind::Infinite:
      break;
  }
}

double Law::sample(std::mt19937_64& rng) const {
  switch (kind) {
    case Kind::Uniform:
      return lo + (hi - lo) * unit(rng);
    case Kind::Exponential:
      return -std::log1p(-unit(rng)) / rate;
    case Kind::Point:
      return at;
    case Kind::Discrete: {
      const double u = unit(rng);
      double acc = 0.0;
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        acc += probs[i];
        if (u < acc) return atoms[i];
      }
      return atoms.back();
    }
    case Kind::Infinite:
      return kInf;
  }
  return kInf;
}

double Law::cdf(double t) const {
  switch (kind) {
    case Kind::Uniform:
      return std::clamp((t - lo) / (hi - lo), 0.0, 1.0);
    case Kind::Exponential:
      return t <= 0.0 ? 0.0 : -std::expm1(-rate * t);
    case Kind::Point:
      return t >= at ? 1.0 : 0.0;
    case Kind::Discrete: {
      double acc = 0.0;
      for (std::size_t i = 0; i < atoms.size() && atoms[i] <= t; ++i) acc += probs[i];
      return acc;
    }
    case Kind::Infinite:
      return 0.0;
  }
  return 0.0;
}

double Law::cdf_left(double t) const {
  switch (kind) {
    case Kind::Point:
      return t > at ? 1.0 : 0.0;
    case Kind::Discrete: {
      double acc = 0.0;
      for (std::size_t i = 0; i < atoms.size() && atoms[i] < t; ++i) acc += probs[i];
      return acc;
    }
    default:
      return cdf(t);
  }
}

std::vector<std::pair<double, double>> Law::support() const {
  switch (kind) {
    case Kind::Point:
      return {{at, 1.0}};
    case Kind::Discrete: {
      std::vector<std::pair<double, double>> out;
      for (std::size_t i = 0; i < atoms.size(); ++i)
        if (probs[i] > 0.0) out.emplace_back(atoms[i], probs[i]);
      return out;
    }
    case Kind::Infinite:
      return {};
    default:
      fail("law has no atomic support");
  }
}

void to_json(nlohmann::json& j, const Law& law) {
  switch (law.kind) {
    case Law::Kind::Uniform:
      j = {{"law", "uniform"}, {"lo", law.lo}, {"hi", law.hi}};
      break;
    case Law::Kind::Exponential:
      j = {{"law", "exponential"}, {"rate", law.rate}};
      break;
    case Law::Kind::Point:
      j = {{"law", "point"}, {"at", law.at}};
      break;
    case Law::Kind::Discrete:
      j = {{"law", "discrete"}, {"atoms", law.atoms}, {"probs", law.probs}};
      break;
    case Law::Kind::Infinite:
      j = {{"law", "infinite"}};
      break;
  }
}

void from_json(const nlohmann::json& j, Law& law) {
  const std::string name = j.at("law").get<std::string>();
  if (name == "uniform") {
    law = Law::uniform(j.at("lo").get<double>(), j.at("hi").get<double>());
  } else if (name == "exponential") {
    law = Law::exponential(j.at("rate").get<double>());
  } else if (name == "point") {
    law = Law::point(j.at("at").get<double>());
  } else if (name == "discrete") {
    law = Law::discrete(j.at("atoms").get<std::vector<double>>(),
                        j.at("probs").get<std::vector<double>>());
  } else if (name == "infinite") {
    law = Law::infinite();
  } else {
    fail("unknown law '" + name + "'");
  }
}

// -------------------------------------------------------------- Scenario

void Scenario::validate() const {
  require(K >= 1, "scenario needs K >= 1");
  inspection.validate();
  failure.validate();
  censor.validate();
  require(inspection.kind != Law::Kind::Infinite, "inspection time must be finite");
  if (kind == ScenarioKind::CompetingRisks && cause_model == CauseModel::Linear) {
    require(K == 2, "linear cause model needs K = 2");
    require(failure.kind == Law::Kind::Uniform && failure.lo == 0.0 && failure.hi == 1.0,
            "linear cause model needs failure ~ Uniform(0, 1)");
  }
  if (kind == ScenarioKind::RightCensored) require(K == 2, "right-censored scenario has K = 2");
  require(std::isfinite(gamma) && gamma > 0.0, "scenario gamma must be positive");
  require(gamma <= gamma_plus, "scenario gamma must not exceed gamma_plus");
  require(epsilon >= 0.0 && epsilon < 1.0, "scenario epsilon must lie in [0, 1)");
}

Scenario builtin_scenario(const std::string& name) {
  Scenario s;
  s.name = name;
  if (name == "A") {
    // X, T ~ U(0,1), Y uniform on {1,2}: F_0k(t) = t/2.
    s.gamma = 0.9;
    s.gamma_plus = 1.0;
    s.epsilon = 0.5;
  } else if (name == "B") {
    // P(Y=1 | X=x) = x: F_01 = t^2/2, F_02 = t - t^2/2. dF_01/dG = t
    // vanishes at 0, so no positive lower bound holds near the origin.
    s.cause_model = CauseModel::Linear;
    s.gamma = 0.9;
    s.gamma_plus = 1.0;
    s.epsilon = 0.0;
  } else if (name == "RC") {
    s.kind = ScenarioKind::RightCensored;
    s.inspection = Law::uniform(0.0, 2.0);
    s.failure = Law::exponential(1.0);
    s.censor = Law::exponential(0.5);
    s.gamma = 1.0;
    s.gamma_plus = 2.0;
    s.epsilon = 0.5;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown scenario '" + name + "' (valid: A, B, RC)");
  }
  s.validate();
  return s;
}

std::vector<std::string> builtin_scenario_names() { return {"A", "B", "RC"}; }

void to_json(nlohmann::json& j, const Scenario& s) {
  nlohmann::json params = {{"K", s.K},
                           {"inspection", s.inspection},
                           {"failure", s.failure},
                           {"gamma_plus", s.gamma_plus}};
  if (s.kind == ScenarioKind::CompetingRisks)
    params["cause_model"] = s.cause_model == CauseModel::Linear ? "linear" : "uniform";
  else
    params["censor"] = s.censor;
  j = {{"name", s.name},
       {"kind", s.kind == ScenarioKind::CompetingRisks ? "CompetingRisks" : "RightCensored"},
       {"params", params},
       {"gamma", s.gamma},
       {"epsilon", s.epsilon}};
}

void from_json(const nlohmann::json& j, Scenario& s) {
  try {
    if (j.is_string()) {
      s = builtin_scenario(j.get<std::string>());
      return;
    }
    if (!j.contains("kind")) {
      s = builtin_scenario(j.at("name").get<std::string>());
      if (j.contains("gamma")) s.gamma = j.at("gamma").get<double>();
      s.validate();
      return;
    }
    Scenario out;
    out.name = j.value("name", std::string{});
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "CompetingRisks") {
      out.kind = ScenarioKind::CompetingRisks;
    } else if (kind == "RightCensored") {
      out.kind = ScenarioKind::RightCensored;
    } else {
      fail("unknown scenario kind '" + kind + "'");
    }
    const auto& p = j.at("params");
    out.K = p.value("K", 2);
    if (p.contains("inspection")) out.inspection = p.at("inspection").get<Law>();
    if (p.contains("failure")) out.failure = p.at("failure").get<Law>();
    if (p.contains("censor")) out.censor = p.at("censor").get<Law>();
    const std::string cm = p.value("cause_model", std::string("uniform"));
    if (cm == "uniform") {
      out.cause_model = CauseModel::Uniform;
    } else if (cm == "linear") {
      out.cause_model = CauseModel::Linear;
    } else {
      fail("unknown cause model '" + cm + "'");
    }
    out.gamma = j.at("gamma").get<double>();
    out.gamma_plus = p.value("gamma_plus", std::max(out.gamma, 1.0));
    out.epsilon = j.value("epsilon", 0.0);
    out.validate();
    s = std::move(out);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("scenario JSON: ") + e.what());
  }
}

// ----------------------------------------------------------------- truth

namespace {

Curve law_cdf_curve(const Law& law, double scale) {
  if (law.is_atomic()) {
    std::vector<std::pair<double, double>> jumps;
    for (auto [x, p] : law.support()) jumps.emplace_back(x, p * scale);
    return Curve::step(StepFn::from_jumps(std::move(jumps)));
  }
  std::vector<double> knots;
  if (law.kind == Law::Kind::Uniform) knots = {law.lo, law.hi};
  return Curve::continuous([law, scale](double t) { return scale * law.cdf(t); }, knots);
}

Curve law_survival_curve(const Law& law) {
  if (law.is_atomic()) {
    std::vector<std::pair<double, double>> jumps;
    for (auto [x, p] : law.support()) jumps.emplace_back(x, -p);
    return Curve::step(StepFn::from_jumps(std::move(jumps), 1.0));
  }
  return Curve::continuous([law](double t) { return 1.0 - law.cdf(t); });
}

double exp_rate(const Law& law) {
  return law.kind == Law::Kind::Infinite ? 0.0 : law.rate;
}

}  // namespace

Truth truth_of(const Scenario& s) {
  s.validate();
  Truth truth;
  if (s.kind == ScenarioKind::CompetingRisks) {
    if (s.cause_model == CauseModel::Uniform) {
      for (int k = 0; k < s.K; ++k)
        truth.sub.push_back(law_cdf_curve(s.failure, 1.0 / s.K));
    } else {
      const auto clamp01 = [](double t) { return std::clamp(t, 0.0, 1.0); };
      truth.sub.push_back(Curve::continuous(
          [clamp01](double t) {
            const double u = clamp01(t);
            return 0.5 * u * u;
          },
          {0.0, 1.0}));
      truth.sub.push_back(Curve::continuous(
          [clamp01](double t) {
            const double u = clamp01(t);
            return u - 0.5 * u * u;
          },
          {0.0, 1.0}));
    }
    return truth;
  }

  const Law& event = s.failure;
  const Law& cens = s.censor;
  truth.survival = law_survival_curve(event);
  truth.censoring = law_survival_curve(cens);
  if (event.is_atomic() && cens.is_atomic()) {
    // F_01 jumps p_a * P(U >= a) at event atoms a.
    std::vector<std::pair<double, double>> j1;
    for (auto [a, p] : event.support()) j1.emplace_back(a, p * (1.0 - cens.cdf_left(a)));
    truth.sub.push_back(Curve::step(StepFn::from_jumps(std::move(j1))));
    // F_02 jumps q_b * P(T > b) at censoring atoms b.
    std::vector<std::pair<double, double>> j2;
    for (auto [b, q] : cens.support()) j2.emplace_back(b, q * (1.0 - event.cdf(b)));
    truth.sub.push_back(Curve::step(StepFn::from_jumps(std::move(j2))));
    return truth;
  }
  if (event.kind == Law::Kind::Exponential &&
      (cens.kind == Law::Kind::Exponential || cens.kind == Law::Kind::Infinite)) {
    const double lam = exp_rate(event), mu = exp_rate(cens), total = lam + mu;
    const auto mass = [total](double x) { return x <= 0.0 ? 0.0 : -std::expm1(-total * x); };
    truth.sub.push_back(Curve::continuous([=](double x) { return lam / total * mass(x); }, {0.0}));
    truth.sub.push_back(Curve::continuous([=](double x) { return mu / total * mass(x); }, {0.0}));
    return truth;
  }
  fail("no closed-form truth for this right-censored scenario");
}

Distribution inspection_distribution(const Scenario& s) {
  const Law& law = s.inspection;
  if (law.kind == Law::Kind::Uniform) return Distribution::uniform(law.lo, law.hi);
  if (law.kind == Law::Kind::Point || law.kind == Law::Kind::Discrete) {
    std::vector<std::pair<double, double>> jumps = law.support();
    return Distribution::discrete(StepFn::from_jumps(std::move(jumps)));
  }
  fail("inspection law has unbounded support; no integrating weight available");
}

// ------------------------------------------------------------ generation

std::uint64_t SeedSpec::derive() const {
  return splitmix64(splitmix64(master_seed) ^ splitmix64(replication_index + 0x632be59bd9b4e019ULL));
}

Dataset generate_competing(const Scenario& s, std::size_t n, std::uint64_t seed) {
  require(s.kind == ScenarioKind::CompetingRisks, "scenario is not a competing-risks scenario");
  require(n >= 1, "sample size must be at least 1");
  s.validate();
  std::mt19937_64 rng(seed);
  std::vector<Observation> obs(n);
  for (auto& o : obs) {
    const double t = s.inspection.sample(rng);
    const double x = s.failure.sample(rng);
    const double u = unit(rng);
    int y;
    if (s.cause_model == CauseModel::Linear) {
      y = u < x ? 1 : 2;
    } else {
      y = std::min(s.K, 1 + static_cast<int>(u * s.K));
    }
    o.t = t;
    o.cause = x <= t ? y : s.K + 1;
  }
  return Dataset(s.K, std::move(obs));
}

Dataset generate_rightcensored(const Scenario& s, std::size_t n, std::uint64_t seed) {
  require(s.kind == ScenarioKind::RightCensored, "scenario is not a right-censored scenario");
  require(n >= 1, "sample size must be at least 1");
  s.validate();
  std::mt19937_64 rng(seed);
  std::vector<Observation> obs(n);
  for (auto& o : obs) {
    const double event = s.failure.sample(rng);
    const double cens = s.censor.sample(rng);
    const double t = s.inspection.sample(rng);
    o.t = t;
    if (event <= cens && event <= t) {
      o.cause = 1;
    } else if (cens < event && cens <= t) {
      o.cause = 2;
    } else {
      o.cause = 3;
    }
  }
  return Dataset(2, std::move(obs));
}

Dataset generate(const Scenario& s, std::size_t n, std::uint64_t seed) {
  return s.kind == ScenarioKind::CompetingRisks ? generate_competing(s, n, seed)
                                                : generate_rightcensored(s, n, seed);
}

// ------------------------------------------------------------------- CSV

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_csv(const Dataset& data) {
  std::string out = "t,cause\n";
  for (const auto& o : data.observations()) {
    out += format_double(o.t);
    out += ',';
    out += std::to_string(o.cause);
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  os << format_csv(data);
  if (!os) throw Error(ErrorCode::Io, "write to '" + path.string() + "' failed");
}

Dataset parse_csv(const std::string& text, int K) {
  require(K >= 1, "K must be at least 1");
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<Observation> obs;
  const auto bad = [&](const std::string& why) {
    throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "t,cause") bad("expected header 't,cause'");
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      bad("expected two comma-separated fields");
    const char* begin = line.data();
    const char* mid = begin + comma;
    const char* end = begin + line.size();
    Observation o;
    auto r1 = std::from_chars(begin, mid, o.t);
    if (r1.ec != std::errc{} || r1.ptr != mid) bad("malformed time '" + line.substr(0, comma) + "'");
    if (!std::isfinite(o.t)) bad("time is not finite");
    auto r2 = std::from_chars(mid + 1, end, o.cause);
    if (r2.ec != std::errc{} || r2.ptr != end) bad("malformed cause '" + line.substr(comma + 1) + "'");
    if (o.cause < 1 || o.cause > K + 1)
      bad("cause " + std::to_string(o.cause) + " out of range 1.." + std::to_string(K + 1));
    obs.push_back(o);
  }
  if (lineno == 0) throw Error(ErrorCode::Parse, "line 1: empty file, expected header 't,cause'");
  return Dataset(K, std::move(obs));
}

Dataset read_csv(const std::filesystem::path& path, int K) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_csv(buf.str(), K);
}

}  // namespace csrisk
