// csrisk command-line tool. Exit codes: 0 ok, 1 I/O, 2 usage, 3 certificate
// failure, 4 non-convergence, 5 slope outside the asserted band.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "csrisk/csrisk.h"

namespace {

constexpr int kOk = 0, kIo = 1, kUsage = 2, kCertificate = 3, kNonConvergence = 4, kBand = 5;

struct Failure {
  int exit_code;
};

int exit_code_of(csr_status s) {
  switch (s) {
    case CSR_OK: return kOk;
    case CSR_INVALID_ARGUMENT: return kUsage;
    case CSR_NONCONVERGENCE: return kNonConvergence;
    default: return kIo;
  }
}

void check(csr_status s) {
  if (s == CSR_OK) return;
  std::cerr << "error: " << csr_last_error() << "\n";
  throw Failure{exit_code_of(s)};
}

std::string take(char* s) {
  std::string out(s);
  csr_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot open " << path << "\n";
    throw Failure{kIo};
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes text plus a newline to `path`, or to stdout when path is empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text << "\n";
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out << text << "\n";
  out.close();
  if (!out) {
    std::cerr << "error: cannot write " << path << "\n";
    throw Failure{kIo};
  }
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using DatasetPtr = std::unique_ptr<csr_dataset, Deleter<csr_dataset, csr_dataset_free>>;
using FitPtr = std::unique_ptr<csr_fit, Deleter<csr_fit, csr_fit_free>>;
using TablePtr = std::unique_ptr<csr_rate_table, Deleter<csr_rate_table, csr_rate_table_free>>;

// ------------------------------------------------------------------ simulate

struct SimulateArgs {
  std::string scenario;
  std::string scenario_file;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  const std::string scenario = a.scenario_file.empty() ? a.scenario : read_file(a.scenario_file);
  csr_dataset* raw = nullptr;
  check(csr_simulate(scenario.c_str(), a.n, a.seed, a.replication, &raw));
  DatasetPtr data(raw);
  check(csr_dataset_write_csv(data.get(), a.out.c_str()));
  const int K = csr_dataset_K(data.get());
  std::cout << "n=" << csr_dataset_size(data.get()) << " K=" << K;
  for (int c = 1; c <= K + 1; ++c) std::cout << " cause" << c << "=" << csr_dataset_count(data.get(), c);
  std::cout << "\n";
  return kOk;
}

// ----------------------------------------------------------------------- fit

struct FitArgs {
  std::string in;
  int K = 1;
  std::string algo = "em";
  double tol = csr_em_defaults().tol;
  int max_iter = csr_em_defaults().max_iter;
  bool no_polish = false;
  bool check_kkt = false;
  double kkt_tol = 1e-6;
  bool allow_nonconverged = false;
  std::string out;
  std::string kkt_out;
};

int cmd_fit(const FitArgs& a) {
  csr_dataset* raw = nullptr;
  check(csr_dataset_read_csv(a.in.c_str(), a.K, &raw));
  DatasetPtr data(raw);

  const csr_algorithm algo = a.algo == "em" ? CSR_ALGO_EM : a.algo == "pava" ? CSR_ALGO_PAVA : CSR_ALGO_NAIVE;
  csr_em_options options = csr_em_defaults();
  options.tol = a.tol;
  options.max_iter = a.max_iter;
  options.polish = a.no_polish ? 0 : 1;
  csr_fit* fraw = nullptr;
  check(csr_fit_dataset(data.get(), algo, &options, &fraw));
  FitPtr fit(fraw);

  char* json = nullptr;
  check(csr_fit_to_json(fit.get(), &json));
  emit(a.out, take(json));

  if (!csr_fit_converged(fit.get()) && !a.allow_nonconverged) {
    std::cerr << "error: solver did not converge (use --allow-nonconverged to accept)\n";
    return kNonConvergence;
  }
  if (a.check_kkt) {
    int pass = 0;
    char* report = nullptr;
    check(csr_fit_check_kkt(data.get(), fit.get(), a.kkt_tol, &pass, &report));
    emit(a.kkt_out, take(report));
    if (!pass) {
      std::cerr << "error: optimality certificate failed at tol " << a.kkt_tol << "\n";
      return kCertificate;
    }
  }
  return kOk;
}

// --------------------------------------------------------------- reconstruct

struct ReconstructArgs {
  std::string in;
  double upto = std::numeric_limits<double>::infinity();
  bool with_q = false;
  std::string out;
};

int cmd_reconstruct(const ReconstructArgs& a) {
  const std::string text = read_file(a.in);
  csr_fit* raw = nullptr;
  check(csr_fit_from_json(text.c_str(), &raw));
  FitPtr fit(raw);
  char* json = nullptr;
  check(csr_reconstruct(fit.get(), a.upto, a.with_q ? 1 : 0, &json));
  const std::string result = take(json);
  emit(a.out, result);
  const auto j = nlohmann::json::parse(result);
  if (!j["boundary"].is_null())
    std::cerr << "survival truncated at identifiability boundary t = " << j["boundary"].get<double>()
              << "\n";
  return kOk;
}

// --------------------------------------------------------------------- rates

struct RatesArgs {
  std::string config;
  std::string scenario = "A";
  std::vector<std::size_t> sizes;
  std::size_t reps = 100;
  std::optional<double> gamma;
  std::vector<std::string> metrics;
  std::uint64_t seed = 0;
  double em_tol = 1e-8;
  std::optional<unsigned> threads;
  std::string inject;
  double inject_c = 1.0;
  std::string out;
  std::string json_out;
  std::string band;
};

int cmd_rates(const RatesArgs& a) {
  std::optional<std::pair<double, double>> band;
  if (!a.band.empty()) {
    double lo = 0.0, hi = 0.0;
    char comma = 0;
    std::istringstream ss(a.band);
    if (!(ss >> lo >> comma >> hi) || comma != ',' || !(ss >> std::ws).eof() || !(lo <= hi)) {
      std::cerr << "error: --assert-band expects lo,hi with lo <= hi\n";
      return kUsage;
    }
    band.emplace(lo, hi);
  }

  nlohmann::json config;
  if (!a.config.empty()) {
    try {
      config = nlohmann::json::parse(read_file(a.config));
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "error: " << a.config << ": " << e.what() << "\n";
      return kIo;
    }
  } else {
    if (a.sizes.empty()) {
      std::cerr << "error: --sizes is required without --config\n";
      return kUsage;
    }
    const bool rc = a.scenario == "RC";
    config = {{"scenario", {{"name", a.scenario}}},
              {"sample_sizes", a.sizes},
              {"replications", a.reps},
              {"metrics", a.metrics.empty() ? std::vector<std::string>{rc ? "sup_survival" : "sup_on_gamma"}
                                            : a.metrics},
              {"master_seed", a.seed},
              {"em_tol", a.em_tol}};
    if (a.gamma) config["gamma"] = *a.gamma;
    if (!a.inject.empty()) config["injection"] = {{"mode", a.inject}, {"c", a.inject_c}};
  }
  if (a.threads) config["threads"] = *a.threads;

  csr_rate_table* raw = nullptr;
  check(csr_rates_run(config.dump().c_str(), &raw));
  TablePtr table(raw);
  check(csr_rate_table_emit(table.get(), a.out.c_str()));
  if (!a.json_out.empty()) {
    char* json = nullptr;
    check(csr_rate_table_to_json(table.get(), &json));
    emit(a.json_out, take(json));
  }

  int code = kOk;
  for (std::size_t i = 0; i < csr_rate_table_slope_count(table.get()); ++i) {
    const char* metric = nullptr;
    int risk = 0;
    double slope = 0.0;
    check(csr_rate_table_slope(table.get(), i, &metric, &risk, &slope));
    const bool inside = !band || (slope >= band->first && slope <= band->second);
    std::printf("%s risk %d slope %.6f%s\n", metric, risk, slope, inside ? "" : "  OUTSIDE BAND");
    if (!inside) code = kBand;
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Current status competing risks: simulation, NPMLE fitting, survival reconstruction "
               "and convergence-rate experiments"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Draw a dataset from a scenario");
  auto* scen = s->add_option("--scenario", sim.scenario,
                             std::string("Built-in scenario (") + csr_scenario_names() + ")");
  auto* scen_file = s->add_option("--scenario-file", sim.scenario_file, "Scenario JSON file");
  scen->excludes(scen_file);
  s->add_option("--n", sim.n, "Sample size")->required()->check(CLI::PositiveNumber);
  s->add_option("--seed", sim.seed, "Master seed")->required();
  s->add_option("--replication", sim.replication, "Replication index");
  s->add_option("--out", sim.out, "Output CSV")->required();

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit the NPMLE to a dataset");
  f->add_option("--in", fit.in, "Input CSV (t,cause)")->required();
  f->add_option("--K", fit.K, "Number of risks")->required()->check(CLI::PositiveNumber);
  f->add_option("--algo", fit.algo, "em, pava (K = 1) or naive")
      ->check(CLI::IsMember({"em", "pava", "naive"}));
  f->add_option("--tol", fit.tol, "EM relative log-likelihood tolerance");
  f->add_option("--max-iter", fit.max_iter, "EM iteration cap");
  f->add_flag("--no-polish", fit.no_polish, "Skip the Newton refinement after EM");
  f->add_flag("--check-kkt", fit.check_kkt, "Verify the optimality characterization");
  f->add_option("--kkt-tol", fit.kkt_tol, "Certificate tolerance");
  f->add_flag("--allow-nonconverged", fit.allow_nonconverged, "Exit 0 even if EM hit its cap");
  f->add_option("--out", fit.out, "FitResult JSON (default stdout)");
  f->add_option("--kkt-out", fit.kkt_out, "Certificate JSON (default stdout)");

  ReconstructArgs rec;
  auto* r = app.add_subcommand("reconstruct", "Reconstruct the event survival from a K = 2 fit");
  r->add_option("--in", rec.in, "FitResult JSON")->required();
  r->add_option("--upto", rec.upto, "Last time to reconstruct");
  r->add_flag("--with-q", rec.with_q, "Also reconstruct the censoring curve by both routes");
  r->add_option("--out", rec.out, "Output JSON (default stdout)");

  RatesArgs rates;
  auto* t = app.add_subcommand("rates", "Monte Carlo convergence-rate experiment");
  t->add_option("--config", rates.config, "Experiment JSON (replaces the inline flags)");
  t->add_option("--scenario", rates.scenario, "Built-in scenario");
  t->add_option("--sizes", rates.sizes, "Sample sizes")->delimiter(',');
  t->add_option("--reps", rates.reps, "Replications per size");
  t->add_option("--gamma", rates.gamma, "Evaluation horizon");
  t->add_option("--metrics", rates.metrics, "sup_on_gamma, sup_full, l2_g, hellinger, sup_survival")
      ->delimiter(',');
  t->add_option("--seed", rates.seed, "Master seed");
  t->add_option("--em-tol", rates.em_tol, "EM tolerance per replication");
  t->add_option("--threads", rates.threads, "Worker threads (0: all cores)");
  t->add_option("--inject", rates.inject, "Synthetic errors: power or power_log")
      ->check(CLI::IsMember({"power", "power_log"}));
  t->add_option("--inject-c", rates.inject_c, "Synthetic error constant");
  t->add_option("--out", rates.out, "Plot CSV; slopes go to <stem>.slopes.json")->required();
  t->add_option("--json-out", rates.json_out, "Full RateTable JSON");
  t->add_option("--assert-band", rates.band, "Fail with exit 5 if any slope leaves lo,hi");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*s) {
      if (sim.scenario.empty() && sim.scenario_file.empty()) {
        std::cerr << "error: one of --scenario or --scenario-file is required\n";
        return kUsage;
      }
      return cmd_simulate(sim);
    }
    if (*f) return cmd_fit(fit);
    if (*r) return cmd_reconstruct(rec);
    return cmd_rates(rates);
  } catch (const Failure& e) {
    return e.exit_code;
  }
}
