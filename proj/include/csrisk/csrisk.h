/* C interface to the csrisk library. Every fallible call returns a
 * csr_status; on failure csr_last_error() holds a message for the calling
 * thread. Strings returned through char** are owned by the caller and
 * released with csr_string_free. */
#ifndef CSRISK_CSRISK_H
#define CSRISK_CSRISK_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CSR_API __declspec(dllexport)
#else
#define CSR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum csr_status {
  CSR_OK = 0,
  CSR_INVALID_ARGUMENT = 1,
  CSR_DIVISION_AT_JUMP = 2,
  CSR_DENOMINATOR_HIT_ZERO = 3,
  CSR_IO = 4,
  CSR_PARSE = 5,
  CSR_INSTANCE_TOO_LARGE = 6,
  CSR_NONCONVERGENCE = 7,
  CSR_ZERO_CONDITIONAL_MASS = 8,
  CSR_INTERNAL = 100
} csr_status;

typedef enum csr_algorithm {
  CSR_ALGO_EM = 0,
  CSR_ALGO_PAVA = 1, /* K = 1 only */
  CSR_ALGO_NAIVE = 2
} csr_algorithm;

typedef struct csr_em_options {
  double tol;
  int max_iter;
  int polish;
} csr_em_options;

typedef struct csr_dataset csr_dataset;
typedef struct csr_fit csr_fit;
typedef struct csr_rate_table csr_rate_table;

CSR_API const char* csr_last_error(void);
CSR_API const char* csr_status_name(csr_status status);
CSR_API void csr_string_free(char* s);

/* Comma-separated built-in scenario names. */
CSR_API const char* csr_scenario_names(void);

/* `scenario` is a built-in name or a scenario JSON document. The stream
 * seed is derived from (seed, replication). */
CSR_API csr_status csr_simulate(const char* scenario, size_t n, uint64_t seed,
                                uint64_t replication, csr_dataset** out);
CSR_API csr_status csr_dataset_read_csv(const char* path, int K, csr_dataset** out);
CSR_API csr_status csr_dataset_write_csv(const csr_dataset* data, const char* path);
CSR_API size_t csr_dataset_size(const csr_dataset* data);
CSR_API int csr_dataset_K(const csr_dataset* data);
/* Number of observations with the given cause (1..K+1). */
CSR_API size_t csr_dataset_count(const csr_dataset* data, int cause);
CSR_API void csr_dataset_free(csr_dataset* data);

CSR_API csr_em_options csr_em_defaults(void);
/* `options` may be NULL; it is used by CSR_ALGO_EM only. */
CSR_API csr_status csr_fit_dataset(const csr_dataset* data, csr_algorithm algo,
                                   const csr_em_options* options, csr_fit** out);
CSR_API csr_status csr_fit_from_json(const char* json, csr_fit** out);
CSR_API csr_status csr_fit_to_json(const csr_fit* fit, char** out);
CSR_API int csr_fit_K(const csr_fit* fit);
/* 1 if the solver met its stopping rule; naive fits always report 1. */
CSR_API int csr_fit_converged(const csr_fit* fit);
/* Writes 1 to *pass when the optimality certificate holds at `tol`. The
 * report JSON is stored in *report unless it is NULL. */
CSR_API csr_status csr_fit_check_kkt(const csr_dataset* data, const csr_fit* fit, double tol,
                                     int* pass, char** report);
CSR_API void csr_fit_free(csr_fit* fit);

/* Survival reconstruction from a K = 2 fit, up to `upto`. The JSON holds
 * "survival" (StepFn) and "boundary" (time or null); with with_q also
 * "q_hazard" and "q_integral". */
CSR_API csr_status csr_reconstruct(const csr_fit* fit, double upto, int with_q, char** out);

/* `config` is a rate experiment JSON document. */
CSR_API csr_status csr_rates_run(const char* config, csr_rate_table** out);
CSR_API csr_status csr_rate_table_to_json(const csr_rate_table* table, char** out);
/* CSV at csv_path plus the slopes JSON next to it. */
CSR_API csr_status csr_rate_table_emit(const csr_rate_table* table, const char* csv_path);
CSR_API size_t csr_rate_table_slope_count(const csr_rate_table* table);
CSR_API csr_status csr_rate_table_slope(const csr_rate_table* table, size_t i, const char** metric,
                                        int* risk, double* slope);
CSR_API void csr_rate_table_free(csr_rate_table* table);

#ifdef __cplusplus
}
#endif

#endif
