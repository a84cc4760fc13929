#include "csrisk/csrisk.h"

#include <cmath>
#include <cstring>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "csrisk/data.hpp"
#include "csrisk/error.hpp"
#include "csrisk/ratelab.hpp"
#include "csrisk/reconstruct.hpp"
#include "csrisk/solver.hpp"

using namespace csrisk;

struct csr_dataset {
  Dataset data;
};

struct csr_fit {
  std::optional<FitResult> result;  // em, pava
  std::optional<NaiveFit> naive;
};

struct csr_rate_table {
  RateTable table;
  std::vector<std::string> metric_names;
};

namespace {

thread_local std::string last_error;

csr_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return CSR_INVALID_ARGUMENT;
    case ErrorCode::DivisionAtJump: return CSR_DIVISION_AT_JUMP;
    case ErrorCode::DenominatorHitZero: return CSR_DENOMINATOR_HIT_ZERO;
    case ErrorCode::Io: return CSR_IO;
    case ErrorCode::Parse: return CSR_PARSE;
    case ErrorCode::InstanceTooLarge: return CSR_INSTANCE_TOO_LARGE;
    case ErrorCode::NonConvergence: return CSR_NONCONVERGENCE;
    case ErrorCode::ZeroConditionalMass: return CSR_ZERO_CONDITIONAL_MASS;
  }
  return CSR_INTERNAL;
}

template <class F>
csr_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return CSR_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const nlohmann::json::exception& e) {
    last_error = e.what();
    return CSR_PARSE;
  } catch (const std::exception& e) {
    last_error = e.what();
    return CSR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return CSR_INTERNAL;
  }
}

char* dup(const std::string& s) {
  char* p = new char[s.size() + 1];
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void need(const void* p, const char* what) {
  require(p != nullptr, std::string(what) + " is NULL");
}

Scenario scenario_from(const char* text) {
  std::string s(text);
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && s[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(s);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, std::string("scenario JSON: ") + e.what());
    }
    return j.get<Scenario>();
  }
  return builtin_scenario(s);
}

nlohmann::json naive_json(const NaiveFit& fit) {
  nlohmann::json risks = nlohmann::json::array();
  for (const auto& f : fit.components) risks.push_back({{"x", f.breakpoints()}, {"v", f.values()}});
  return {{"K", fit.components.size()}, {"algorithm", "naive"}, {"risks", risks},
          {"sum_within_one", fit.sum_within_one}};
}

}  // namespace

extern "C" {

const char* csr_last_error(void) { return last_error.c_str(); }

const char* csr_status_name(csr_status status) {
  switch (status) {
    case CSR_OK: return "ok";
    case CSR_INVALID_ARGUMENT: return "invalid argument";
    case CSR_DIVISION_AT_JUMP: return "division at jump";
    case CSR_DENOMINATOR_HIT_ZERO: return "denominator hit zero";
    case CSR_IO: return "i/o error";
    case CSR_PARSE: return "parse error";
    case CSR_INSTANCE_TOO_LARGE: return "instance too large";
    case CSR_NONCONVERGENCE: return "non-convergence";
    case CSR_ZERO_CONDITIONAL_MASS: return "zero conditional mass";
    case CSR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void csr_string_free(char* s) { delete[] s; }

const char* csr_scenario_names(void) {
  static const std::string names = [] {
    std::string out;
    for (const auto& n : builtin_scenario_names()) out += (out.empty() ? "" : ",") + n;
    return out;
  }();
  return names.c_str();
}

csr_status csr_simulate(const char* scenario, size_t n, uint64_t seed, uint64_t replication,
                        csr_dataset** out) {
  return guarded([&] {
    need(scenario, "scenario");
    need(out, "out");
    const Scenario s = scenario_from(scenario);
    *out = new csr_dataset{generate(s, n, SeedSpec{seed, replication}.derive())};
  });
}

csr_status csr_dataset_read_csv(const char* path, int K, csr_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new csr_dataset{read_csv(path, K)};
  });
}

csr_status csr_dataset_write_csv(const csr_dataset* data, const char* path) {
  return guarded([&] {
    need(data, "dataset");
    need(path, "path");
    write_csv(data->data, path);
  });
}

size_t csr_dataset_size(const csr_dataset* data) { return data ? data->data.size() : 0; }
int csr_dataset_K(const csr_dataset* data) { return data ? data->data.K() : 0; }
size_t csr_dataset_count(const csr_dataset* data, int cause) {
  return data ? data->data.count(cause) : 0;
}
void csr_dataset_free(csr_dataset* data) { delete data; }

csr_em_options csr_em_defaults(void) {
  const EmOptions d;
  return {d.tol, d.max_iter, d.polish ? 1 : 0};
}

csr_status csr_fit_dataset(const csr_dataset* data, csr_algorithm algo, const csr_em_options* options,
                           csr_fit** out) {
  return guarded([&] {
    need(data, "dataset");
    need(out, "out");
    auto fit = std::make_unique<csr_fit>();
    switch (algo) {
      case CSR_ALGO_EM: {
        EmOptions o;
        if (options) {
          o.tol = options->tol;
          o.max_iter = options->max_iter;
          o.polish = options->polish != 0;
        }
        fit->result = fit_em(data->data, o);
        break;
      }
      case CSR_ALGO_PAVA:
        fit->result = fit_pava_k1(data->data);
        break;
      case CSR_ALGO_NAIVE:
        fit->naive = fit_naive(data->data);
        break;
      default:
        fail("unknown algorithm");
    }
    *out = fit.release();
  });
}

csr_status csr_fit_from_json(const char* json, csr_fit** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, std::string("fit JSON: ") + e.what());
    }
    require(j.value("algorithm", "") != "naive", "naive fits cannot be loaded as estimates");
    auto fit = std::make_unique<csr_fit>();
    fit->result = j.get<FitResult>();
    *out = fit.release();
  });
}

csr_status csr_fit_to_json(const csr_fit* fit, char** out) {
  return guarded([&] {
    need(fit, "fit");
    need(out, "out");
    const nlohmann::json j = fit->result ? nlohmann::json(*fit->result) : naive_json(*fit->naive);
    *out = dup(j.dump());
  });
}

int csr_fit_K(const csr_fit* fit) {
  if (!fit) return 0;
  return fit->result ? fit->result->estimate.K() : static_cast<int>(fit->naive->components.size());
}

int csr_fit_converged(const csr_fit* fit) {
  return fit && (!fit->result || fit->result->converged) ? 1 : 0;
}

csr_status csr_fit_check_kkt(const csr_dataset* data, const csr_fit* fit, double tol, int* pass,
                             char** report) {
  return guarded([&] {
    need(data, "dataset");
    need(fit, "fit");
    need(pass, "pass");
    require(fit->result.has_value(), "the certificate needs an em or pava fit");
    const KktReport r = check_characterization(data->data, *fit->result, tol);
    *pass = r.pass ? 1 : 0;
    if (report) *report = dup(nlohmann::json(r).dump());
  });
}

void csr_fit_free(csr_fit* fit) { delete fit; }

csr_status csr_reconstruct(const csr_fit* fit, double upto, int with_q, char** out) {
  return guarded([&] {
    need(fit, "fit");
    need(out, "out");
    require(fit->result.has_value(), "reconstruction needs an em or pava fit");
    const auto& F = fit->result->estimate;
    require(F.K() == 2, "reconstruction needs K = 2, got K = " + std::to_string(F.K()));
    require(!std::isnan(upto), "upto is NaN");
    const auto r = reconstruct_s_truncated(F[0], F[1], upto);
    nlohmann::json j;
    j["survival"] = r.survival;
    j["boundary"] = r.boundary ? nlohmann::json(*r.boundary) : nlohmann::json(nullptr);
    if (with_q) {
      // Q is only identified strictly before the boundary.
      const double q_upto =
          r.boundary ? std::nextafter(*r.boundary, -INFINITY) : upto;
      j["q_hazard"] = reconstruct_q_hazard(F[0], F[1], r.survival, q_upto);
      j["q_integral"] = reconstruct_q_integral(F[1], r.survival, q_upto);
    }
    *out = dup(j.dump());
  });
}

csr_status csr_rates_run(const char* config, csr_rate_table** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(config);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, std::string("rate config JSON: ") + e.what());
    }
    auto t = std::make_unique<csr_rate_table>();
    t->table = run_rate_experiment(j.get<RateExperimentConfig>());
    for (const auto& s : t->table.slopes) t->metric_names.push_back(to_string(s.metric));
    *out = t.release();
  });
}

csr_status csr_rate_table_to_json(const csr_rate_table* table, char** out) {
  return guarded([&] {
    need(table, "table");
    need(out, "out");
    *out = dup(nlohmann::json(table->table).dump());
  });
}

csr_status csr_rate_table_emit(const csr_rate_table* table, const char* csv_path) {
  return guarded([&] {
    need(table, "table");
    need(csv_path, "path");
    emit_plot_data(table->table, csv_path);
  });
}

size_t csr_rate_table_slope_count(const csr_rate_table* table) {
  return table ? table->table.slopes.size() : 0;
}

csr_status csr_rate_table_slope(const csr_rate_table* table, size_t i, const char** metric, int* risk,
                                double* slope) {
  return guarded([&] {
    need(table, "table");
    require(i < table->table.slopes.size(), "slope index out of range");
    const auto& s = table->table.slopes[i];
    if (metric) *metric = table->metric_names[i].c_str();
    if (risk) *risk = s.risk;
    if (slope) *slope = s.fit.slope;
  });
}

void csr_rate_table_free(csr_rate_table* table) { delete table; }

}  // extern "C"
