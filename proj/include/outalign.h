/*
 * outalign: outcome-aligned representation learning for longitudinal binary
 * prediction. C API of the shared library; all functionality sits behind
 * opaque handles and status codes. Handles must be released with the
 * matching *_free function. Unless stated otherwise, functions are safe to
 * call concurrently on distinct handles.
 */
#ifndef OUTALIGN_H
#define OUTALIGN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum oal_status {
    OAL_OK = 0,
    OAL_ERR_INVALID_ARGUMENT = 1,
    OAL_ERR_IO = 2,
    OAL_ERR_PARSE = 3,
    OAL_ERR_NUMERIC = 4,
    OAL_ERR_METRIC_UNDEFINED = 5,
    OAL_ERR_INTERNAL = 6
} oal_status;

/* Library version string, e.g. "outalign 0.1.0". */
const char* oal_version(void);

/* Message for the most recent failing call on this thread. */
const char* oal_last_error(void);

/* -------------------------------------------------------------------- */
/* Synthetic cohorts                                                     */
/* -------------------------------------------------------------------- */

typedef struct oal_cohort oal_cohort;

typedef struct oal_cohort_spec {
    int64_t n_patients;
    int64_t feature_count; /* F */
    int64_t static_dim;    /* S */
    double prevalence;     /* in (0, 1) */
    int64_t signal_dim;
    int64_t nuisance_dim;
    double effect_size;    /* target latent Mahalanobis distance */
    int64_t events_min;
    int64_t events_max;
    double horizon_days;
    uint64_t seed;
} oal_cohort_spec;

void oal_cohort_spec_defaults(oal_cohort_spec* spec);

oal_status oal_cohort_generate(const oal_cohort_spec* spec, oal_cohort** out);
oal_status oal_cohort_read(const char* path, oal_cohort** out);
oal_status oal_cohort_write(const oal_cohort* cohort, const char* path);
oal_status oal_cohort_split(const oal_cohort* cohort, double train_ratio, double val_ratio,
                            double test_ratio, uint64_t seed, oal_cohort** out_train,
                            oal_cohort** out_val, oal_cohort** out_test);
oal_status oal_cohort_subsample(const oal_cohort* cohort, double fraction, uint64_t seed,
                                oal_cohort** out);
int64_t oal_cohort_size(const oal_cohort* cohort);
double oal_cohort_prevalence(const oal_cohort* cohort);
int64_t oal_cohort_feature_count(const oal_cohort* cohort);
int64_t oal_cohort_static_dim(const oal_cohort* cohort);
void oal_cohort_free(oal_cohort* cohort);

/* -------------------------------------------------------------------- */
/* Model parameters                                                      */
/* -------------------------------------------------------------------- */

typedef struct oal_params oal_params;

#define OAL_MAX_HIDDEN_LAYERS 8

typedef struct oal_model_dims {
    int64_t embed_k; /* per-event representation width */
    int64_t time_m;  /* sinusoidal time frequency count */
    int64_t out_d;   /* embedding width */
    int64_t hidden[OAL_MAX_HIDDEN_LAYERS];
    int64_t hidden_count;
} oal_model_dims;

void oal_model_dims_defaults(oal_model_dims* dims);

oal_status oal_params_init(int64_t feature_count, int64_t static_dim,
                           const oal_model_dims* dims, uint64_t seed, oal_params** out);
oal_status oal_params_save(const oal_params* params, const char* path);
oal_status oal_params_load(const char* path, oal_params** out);
oal_status oal_params_schema(const oal_params* params, int64_t* feature_count,
                             int64_t* static_dim, int64_t* embed_dim);
void oal_params_free(oal_params* params);

/* -------------------------------------------------------------------- */
/* Training                                                              */
/* -------------------------------------------------------------------- */

typedef struct oal_history oal_history;

typedef struct oal_train_config {
    double lambda;          /* regularizer strength, >= 0 */
    double epsilon;          /* Rayleigh denominator stabilizer, > 0 */
    double ema_decay;        /* in [0,1) to enable class-mean EMA; negative disables */
    int32_t single_class_use_ema; /* 1: substitute EMA mean in single-class batches */
    int64_t batch_size;
    int64_t epochs;
    double learning_rate;
    double momentum;         /* classical momentum in [0, 1) */
    uint64_t seed;
    int64_t eval_every;      /* 0 disables per-epoch validation reports */
    int32_t shuffle;
    int64_t ece_bins;
    int32_t excise_regularizer; /* test hook: skip all regularizer code paths */
} oal_train_config;

void oal_train_config_defaults(oal_train_config* config);

oal_status oal_train(const oal_train_config* config, const oal_model_dims* dims,
                     const oal_cohort* train_cohort, const oal_cohort* val_cohort,
                     oal_params** out_params, oal_history** out_history);
oal_status oal_history_write(const oal_history* history, const char* path);
int64_t oal_history_epoch_count(const oal_history* history);
void oal_history_free(oal_history* history);

/* -------------------------------------------------------------------- */
/* Evaluation                                                            */
/* -------------------------------------------------------------------- */

typedef struct oal_metrics_report {
    double auroc;
    double auprc;
    double brier;
    double ece;
    int64_t n;
    double prevalence;
} oal_metrics_report;

typedef struct oal_geometry_report {
    double mean_gap_sq;
    double scatter_trace;
    double rayleigh;
    double epsilon;
    double mahalanobis_sq;
    int32_t mahalanobis_defined;
} oal_geometry_report;

oal_status oal_evaluate(const oal_params* params, const oal_cohort* cohort, double epsilon,
                        int64_t ece_bins, oal_metrics_report* out_metrics,
                        oal_geometry_report* out_geometry);

/* Machine-readable report file. */
oal_status oal_report_write(const oal_metrics_report* metrics,
                            const oal_geometry_report* geometry, const char* path);
/* Human-readable key=value block; needs_capacity receives the required size
 * (including the terminator) when the buffer is too small. */
oal_status oal_report_format(const oal_metrics_report* metrics,
                             const oal_geometry_report* geometry, char* buffer, size_t capacity,
                             size_t* needs_capacity);

/* -------------------------------------------------------------------- */
/* Sample-efficiency sweep                                               */
/* -------------------------------------------------------------------- */

typedef struct oal_sweep_table oal_sweep_table;

typedef struct oal_sweep_row {
    double fraction;
    uint64_t seed;
    double lambda;
    double auroc;
    double auprc;
    double rdisc;
} oal_sweep_row;

oal_status oal_sweep_run(const oal_train_config* config, const oal_model_dims* dims,
                         const oal_cohort* train_cohort, const oal_cohort* val_cohort,
                         const double* fractions, int64_t fraction_count, const uint64_t* seeds,
                         int64_t seed_count, oal_sweep_table** out);
int64_t oal_sweep_row_count(const oal_sweep_table* table);
oal_status oal_sweep_get_row(const oal_sweep_table* table, int64_t index, oal_sweep_row* out);
oal_status oal_sweep_write_csv(const oal_sweep_table* table, const char* path);
void oal_sweep_table_free(oal_sweep_table* table);

/* -------------------------------------------------------------------- */
/* Gradient checking                                                     */
/* -------------------------------------------------------------------- */

typedef struct oal_gradcheck_dims {
    int64_t feature_count;
    int64_t static_dim;
    int64_t embed_k;
    int64_t time_m;
    int64_t out_d;
    int64_t hidden[OAL_MAX_HIDDEN_LAYERS];
    int64_t hidden_count;
    int64_t batch;
} oal_gradcheck_dims;

void oal_gradcheck_dims_defaults(oal_gradcheck_dims* dims);

/* Max discrepancy per checked component: |a-f| / max(|a|,|f|,0.01). */
typedef struct oal_gradcheck_report {
    double encoder;
    double bce;
    double rayleigh;
    double total;
    double threshold;
    int32_t pass;
} oal_gradcheck_report;

/* fault_injection perturbs one reverse-mode gradient coordinate before the
 * comparison; pass 0 for a normal run. */
oal_status oal_gradcheck_run(uint64_t seed, const oal_gradcheck_dims* dims,
                             double fault_injection, oal_gradcheck_report* out);

#ifdef __cplusplus
}
#endif

#endif /* OUTALIGN_H */
