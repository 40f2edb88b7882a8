#include "outalign.h"

#include <cstring>
#include <new>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core/error.hpp"
#include "core/gradcheck.hpp"
#include "core/metrics.hpp"
#include "core/synthcohort.hpp"
#include "core/trainkit.hpp"

// Opaque handle definitions: thin owners around the core types.
struct oal_cohort {
    oal::Cohort value;
};
struct oal_params {
    oal::ModelParams value;
};
struct oal_history {
    oal::TrainHistory value;
};
struct oal_sweep_table {
    std::vector<oal::SweepRow> rows;
};

namespace {

constexpr const char* kVersion = "outalign 0.1.0";

thread_local std::string g_last_error;

oal_status status_of(oal::ErrorKind kind) {
    switch (kind) {
        case oal::ErrorKind::invalid_argument: return OAL_ERR_INVALID_ARGUMENT;
        case oal::ErrorKind::io: return OAL_ERR_IO;
        case oal::ErrorKind::parse: return OAL_ERR_PARSE;
        case oal::ErrorKind::numeric: return OAL_ERR_NUMERIC;
        case oal::ErrorKind::metric_undefined: return OAL_ERR_METRIC_UNDEFINED;
    }
    return OAL_ERR_INTERNAL;
}

// Runs fn, translating C++ failures into status codes + the thread-local
// error message. Exceptions never cross the C boundary.
template <typename Fn>
oal_status guard(Fn&& fn) {
    try {
        fn();
        return OAL_OK;
    } catch (const oal::Error& e) {
        g_last_error = e.what();
        return status_of(e.kind());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return OAL_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return OAL_ERR_INTERNAL;
    }
}

oal_status invalid(const char* message) {
    g_last_error = message;
    return OAL_ERR_INVALID_ARGUMENT;
}

oal::CohortSpec to_core(const oal_cohort_spec& s) {
    oal::CohortSpec out;
    out.n_patients = s.n_patients;
    out.feature_count = s.feature_count;
    out.static_dim = s.static_dim;
    out.prevalence = s.prevalence;
    out.signal_dim = s.signal_dim;
    out.nuisance_dim = s.nuisance_dim;
    out.effect_size = s.effect_size;
    out.events_min = s.events_min;
    out.events_max = s.events_max;
    out.horizon_days = s.horizon_days;
    out.seed = s.seed;
    return out;
}

oal::ModelDims to_core(const oal_model_dims& d) {
    if (d.hidden_count < 0 || d.hidden_count > OAL_MAX_HIDDEN_LAYERS) {
        oal::fail(oal::ErrorKind::invalid_argument,
                  "model dims: hidden_count must lie in [0, " +
                      std::to_string(OAL_MAX_HIDDEN_LAYERS) + "]");
    }
    oal::ModelDims out;
    out.embed_k = d.embed_k;
    out.time_m = d.time_m;
    out.out_d = d.out_d;
    out.hidden.assign(d.hidden, d.hidden + d.hidden_count);
    return out;
}

oal::TrainConfig to_core(const oal_train_config& c) {
    oal::TrainConfig out;
    out.objective.lambda = c.lambda;
    out.objective.epsilon = c.epsilon;
    out.objective.ema_decay = c.ema_decay;
    out.objective.single_class_policy = c.single_class_use_ema
                                            ? oal::SingleClassPolicy::use_ema
                                            : oal::SingleClassPolicy::skip;
    out.batch_size = c.batch_size;
    out.epochs = c.epochs;
    out.learning_rate = c.learning_rate;
    out.momentum = c.momentum;
    out.seed = c.seed;
    out.eval_every = c.eval_every;
    out.shuffle = c.shuffle != 0;
    out.ece_bins = c.ece_bins;
    out.excise_regularizer = c.excise_regularizer != 0;
    return out;
}

oal_metrics_report to_c(const oal::MetricsReport& m) {
    return {m.auroc, m.auprc, m.brier, m.ece, static_cast<int64_t>(m.n), m.prevalence};
}

oal_geometry_report to_c(const oal::GeometryReport& g) {
    return {g.mean_gap_sq, g.scatter_trace, g.rayleigh,
            g.epsilon,     g.mahalanobis_sq, g.mahalanobis_defined ? 1 : 0};
}

oal::MetricsReport to_core(const oal_metrics_report& m) {
    oal::MetricsReport out;
    out.auroc = m.auroc;
    out.auprc = m.auprc;
    out.brier = m.brier;
    out.ece = m.ece;
    out.n = static_cast<std::size_t>(m.n);
    out.prevalence = m.prevalence;
    return out;
}

oal::GeometryReport to_core(const oal_geometry_report& g) {
    oal::GeometryReport out;
    out.mean_gap_sq = g.mean_gap_sq;
    out.scatter_trace = g.scatter_trace;
    out.rayleigh = g.rayleigh;
    out.epsilon = g.epsilon;
    out.mahalanobis_sq = g.mahalanobis_sq;
    out.mahalanobis_defined = g.mahalanobis_defined != 0;
    return out;
}

}  // namespace

extern "C" {

const char* oal_version(void) { return kVersion; }

const char* oal_last_error(void) { return g_last_error.c_str(); }

void oal_cohort_spec_defaults(oal_cohort_spec* spec) {
    if (!spec) return;
    oal::CohortSpec d;
    *spec = {d.n_patients, d.feature_count, d.static_dim, d.prevalence, d.signal_dim,
             d.nuisance_dim, d.effect_size, d.events_min, d.events_max, d.horizon_days, d.seed};
}

oal_status oal_cohort_generate(const oal_cohort_spec* spec, oal_cohort** out) {
    if (!spec || !out) return invalid("oal_cohort_generate: null argument");
    return guard([&] { *out = new oal_cohort{oal::generate_cohort(to_core(*spec))}; });
}

oal_status oal_cohort_read(const char* path, oal_cohort** out) {
    if (!path || !out) return invalid("oal_cohort_read: null argument");
    return guard([&] { *out = new oal_cohort{oal::read_cohort(path)}; });
}

oal_status oal_cohort_write(const oal_cohort* cohort, const char* path) {
    if (!cohort || !path) return invalid("oal_cohort_write: null argument");
    return guard([&] { oal::write_cohort(cohort->value, path); });
}

oal_status oal_cohort_split(const oal_cohort* cohort, double train_ratio, double val_ratio,
                            double test_ratio, uint64_t seed, oal_cohort** out_train,
                            oal_cohort** out_val, oal_cohort** out_test) {
    if (!cohort || !out_train || !out_val || !out_test) {
        return invalid("oal_cohort_split: null argument");
    }
    return guard([&] {
        auto parts = oal::split_cohort(cohort->value, train_ratio, val_ratio, test_ratio, seed);
        *out_train = new oal_cohort{std::move(parts[0])};
        *out_val = new oal_cohort{std::move(parts[1])};
        *out_test = new oal_cohort{std::move(parts[2])};
    });
}

oal_status oal_cohort_subsample(const oal_cohort* cohort, double fraction, uint64_t seed,
                                oal_cohort** out) {
    if (!cohort || !out) return invalid("oal_cohort_subsample: null argument");
    return guard(
        [&] { *out = new oal_cohort{oal::subsample_fraction(cohort->value, fraction, seed)}; });
}

int64_t oal_cohort_size(const oal_cohort* cohort) {
    return cohort ? static_cast<int64_t>(cohort->value.trajectories.size()) : 0;
}

double oal_cohort_prevalence(const oal_cohort* cohort) {
    return cohort ? cohort->value.prevalence() : 0.0;
}

int64_t oal_cohort_feature_count(const oal_cohort* cohort) {
    return cohort ? cohort->value.schema.feature_count : 0;
}

int64_t oal_cohort_static_dim(const oal_cohort* cohort) {
    return cohort ? cohort->value.schema.static_dim : 0;
}

void oal_cohort_free(oal_cohort* cohort) { delete cohort; }

void oal_model_dims_defaults(oal_model_dims* dims) {
    if (!dims) return;
    std::memset(dims, 0, sizeof(*dims));
    oal::ModelDims d;
    dims->embed_k = d.embed_k;
    dims->time_m = d.time_m;
    dims->out_d = d.out_d;
    dims->hidden_count = static_cast<int64_t>(d.hidden.size());
    for (std::size_t i = 0; i < d.hidden.size(); ++i) dims->hidden[i] = d.hidden[i];
}

oal_status oal_params_init(int64_t feature_count, int64_t static_dim, const oal_model_dims* dims,
                           uint64_t seed, oal_params** out) {
    if (!dims || !out) return invalid("oal_params_init: null argument");
    return guard([&] {
        *out = new oal_params{
            oal::init_params({feature_count, static_dim}, to_core(*dims), seed)};
    });
}

oal_status oal_params_save(const oal_params* params, const char* path) {
    if (!params || !path) return invalid("oal_params_save: null argument");
    return guard([&] { oal::save_checkpoint(params->value, path); });
}

oal_status oal_params_load(const char* path, oal_params** out) {
    if (!path || !out) return invalid("oal_params_load: null argument");
    return guard([&] { *out = new oal_params{oal::load_checkpoint(path)}; });
}

oal_status oal_params_schema(const oal_params* params, int64_t* feature_count,
                             int64_t* static_dim, int64_t* embed_dim) {
    if (!params) return invalid("oal_params_schema: null argument");
    if (feature_count) *feature_count = params->value.schema.feature_count;
    if (static_dim) *static_dim = params->value.schema.static_dim;
    if (embed_dim) *embed_dim = params->value.dims.out_d;
    return OAL_OK;
}

void oal_params_free(oal_params* params) { delete params; }

void oal_train_config_defaults(oal_train_config* config) {
    if (!config) return;
    oal::TrainConfig d;
    config->lambda = d.objective.lambda;
    config->epsilon = d.objective.epsilon;
    config->ema_decay = d.objective.ema_decay;
    config->single_class_use_ema = 0;
    config->batch_size = d.batch_size;
    config->epochs = d.epochs;
    config->learning_rate = d.learning_rate;
    config->momentum = d.momentum;
    config->seed = d.seed;
    config->eval_every = d.eval_every;
    config->shuffle = d.shuffle ? 1 : 0;
    config->ece_bins = d.ece_bins;
    config->excise_regularizer = 0;
}

oal_status oal_train(const oal_train_config* config, const oal_model_dims* dims,
                     const oal_cohort* train_cohort, const oal_cohort* val_cohort,
                     oal_params** out_params, oal_history** out_history) {
    if (!config || !dims || !train_cohort || !val_cohort || !out_params) {
        return invalid("oal_train: null argument");
    }
    return guard([&] {
        oal::TrainResult r =
            oal::train(to_core(*config), train_cohort->value, val_cohort->value, to_core(*dims));
        *out_params = new oal_params{std::move(r.params)};
        if (out_history) *out_history = new oal_history{std::move(r.history)};
    });
}

oal_status oal_history_write(const oal_history* history, const char* path) {
    if (!history || !path) return invalid("oal_history_write: null argument");
    return guard([&] { oal::write_history(history->value, path); });
}

int64_t oal_history_epoch_count(const oal_history* history) {
    return history ? static_cast<int64_t>(history->value.epochs.size()) : 0;
}

void oal_history_free(oal_history* history) { delete history; }

oal_status oal_evaluate(const oal_params* params, const oal_cohort* cohort, double epsilon,
                        int64_t ece_bins, oal_metrics_report* out_metrics,
                        oal_geometry_report* out_geometry) {
    if (!params || !cohort) return invalid("oal_evaluate: null argument");
    return guard([&] {
        auto [m, g] = oal::evaluate(params->value, cohort->value, epsilon, ece_bins);
        if (out_metrics) *out_metrics = to_c(m);
        if (out_geometry) *out_geometry = to_c(g);
    });
}

oal_status oal_report_write(const oal_metrics_report* metrics,
                            const oal_geometry_report* geometry, const char* path) {
    if (!metrics || !geometry || !path) return invalid("oal_report_write: null argument");
    return guard([&] { oal::write_report_json(to_core(*metrics), to_core(*geometry), path); });
}

oal_status oal_report_format(const oal_metrics_report* metrics,
                             const oal_geometry_report* geometry, char* buffer, size_t capacity,
                             size_t* needs_capacity) {
    if (!buffer && capacity > 0) return invalid("oal_report_format: null buffer");
    return guard([&] {
        oal::MetricsReport m;
        oal::GeometryReport g;
        if (metrics) m = to_core(*metrics);
        if (geometry) g = to_core(*geometry);
        std::string text = oal::format_reports_text(metrics ? &m : nullptr,
                                                    geometry ? &g : nullptr);
        if (needs_capacity) *needs_capacity = text.size() + 1;
        if (text.size() + 1 > capacity) {
            oal::fail(oal::ErrorKind::invalid_argument,
                      "oal_report_format: buffer too small (" + std::to_string(capacity) +
                          " < " + std::to_string(text.size() + 1) + ")");
        }
        std::memcpy(buffer, text.c_str(), text.size() + 1);
    });
}

oal_status oal_sweep_run(const oal_train_config* config, const oal_model_dims* dims,
                         const oal_cohort* train_cohort, const oal_cohort* val_cohort,
                         const double* fractions, int64_t fraction_count, const uint64_t* seeds,
                         int64_t seed_count, oal_sweep_table** out) {
    if (!config || !dims || !train_cohort || !val_cohort || !fractions || !seeds || !out) {
        return invalid("oal_sweep_run: null argument");
    }
    if (fraction_count <= 0 || seed_count <= 0) {
        return invalid("oal_sweep_run: fraction_count and seed_count must be positive");
    }
    return guard([&] {
        std::span<const double> f(fractions, static_cast<std::size_t>(fraction_count));
        std::span<const uint64_t> s(seeds, static_cast<std::size_t>(seed_count));
        *out = new oal_sweep_table{oal::sweep_sample_efficiency(
            to_core(*config), train_cohort->value, val_cohort->value, f, s, to_core(*dims))};
    });
}

int64_t oal_sweep_row_count(const oal_sweep_table* table) {
    return table ? static_cast<int64_t>(table->rows.size()) : 0;
}

oal_status oal_sweep_get_row(const oal_sweep_table* table, int64_t index, oal_sweep_row* out) {
    if (!table || !out) return invalid("oal_sweep_get_row: null argument");
    if (index < 0 || index >= static_cast<int64_t>(table->rows.size())) {
        return invalid("oal_sweep_get_row: index out of range");
    }
    const oal::SweepRow& r = table->rows[static_cast<std::size_t>(index)];
    *out = {r.fraction, r.seed, r.lambda, r.auroc, r.auprc, r.rdisc};
    return OAL_OK;
}

oal_status oal_sweep_write_csv(const oal_sweep_table* table, const char* path) {
    if (!table || !path) return invalid("oal_sweep_write_csv: null argument");
    return guard([&] { oal::write_sweep_csv(table->rows, path); });
}

void oal_sweep_table_free(oal_sweep_table* table) { delete table; }

void oal_gradcheck_dims_defaults(oal_gradcheck_dims* dims) {
    if (!dims) return;
    std::memset(dims, 0, sizeof(*dims));
    oal::GradcheckDims d;
    dims->feature_count = d.feature_count;
    dims->static_dim = d.static_dim;
    dims->embed_k = d.embed_k;
    dims->time_m = d.time_m;
    dims->out_d = d.out_d;
    dims->hidden_count = static_cast<int64_t>(d.hidden.size());
    for (std::size_t i = 0; i < d.hidden.size(); ++i) dims->hidden[i] = d.hidden[i];
    dims->batch = d.batch;
}

oal_status oal_gradcheck_run(uint64_t seed, const oal_gradcheck_dims* dims,
                             double fault_injection, oal_gradcheck_report* out) {
    if (!dims || !out) return invalid("oal_gradcheck_run: null argument");
    if (dims->hidden_count < 0 || dims->hidden_count > OAL_MAX_HIDDEN_LAYERS) {
        return invalid("oal_gradcheck_run: hidden_count out of range");
    }
    return guard([&] {
        oal::GradcheckDims d;
        d.feature_count = dims->feature_count;
        d.static_dim = dims->static_dim;
        d.embed_k = dims->embed_k;
        d.time_m = dims->time_m;
        d.out_d = dims->out_d;
        d.hidden.assign(dims->hidden, dims->hidden + dims->hidden_count);
        d.batch = dims->batch;
        oal::GradcheckReport r = oal::run_gradcheck(seed, d, fault_injection);
        *out = {r.encoder, r.bce, r.rayleigh, r.total, r.threshold, r.pass ? 1 : 0};
    });
}

}  // extern "C"
