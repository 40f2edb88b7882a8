// Command-line front end for the outalign shared library. Talks to the core
// exclusively through the C API in outalign.h; every command writes a
// RunManifest next to each output artifact.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "outalign.h"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

// Exit codes: 0 success, 2 usage/validation, 3 numerical abort, 4 undefined
// metric, 5 gradient-check failure.
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitMetricUndefined = 4;
constexpr int kExitGradcheck = 5;

int exit_code_for(oal_status status) {
    switch (status) {
        case OAL_OK: return 0;
        case OAL_ERR_NUMERIC: return kExitNumeric;
        case OAL_ERR_METRIC_UNDEFINED: return kExitMetricUndefined;
        default: return kExitUsage;
    }
}

struct CliError {
    int code;
    std::string message;
};

void check(oal_status status) {
    if (status != OAL_OK) throw CliError{exit_code_for(status), oal_last_error()};
}

// RAII for C handles.
template <typename T, void (*Free)(T*)>
struct Handle {
    T* ptr = nullptr;
    Handle() = default;
    explicit Handle(T* p) : ptr(p) {}
    ~Handle() { reset(); }
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    void reset(T* p = nullptr) {
        if (ptr) Free(ptr);
        ptr = p;
    }
    T** out() {
        reset();
        return &ptr;
    }
    T* get() const { return ptr; }
};

using CohortHandle = Handle<oal_cohort, oal_cohort_free>;
using ParamsHandle = Handle<oal_params, oal_params_free>;
using HistoryHandle = Handle<oal_history, oal_history_free>;
using SweepHandle = Handle<oal_sweep_table, oal_sweep_table_free>;

// FNV-1a 64 over the file bytes; the manifest records inputs by digest.
std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliError{kExitUsage, "cannot read " + path.string() + " for digest"};
    std::uint64_t h = 1469598103934665603ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
        if (!in) break;
    }
    char hex[32];
    std::snprintf(hex, sizeof(hex), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return hex;
}

class ManifestWriter {
public:
    ManifestWriter(std::string command, ordered_json config)
        : command_(std::move(command)),
          config_(std::move(config)),
          start_(std::chrono::steady_clock::now()) {}

    void add_input(const fs::path& path) { inputs_[path.string()] = file_digest(path); }

    // Written atomically (temp file + rename) beside the artifact.
    void write_for(const fs::path& artifact) const {
        ordered_json j;
        j["command"] = command_;
        j["config"] = config_;
        ordered_json inputs = ordered_json::object();
        for (const auto& [path, digest] : inputs_) inputs[path] = digest;
        j["inputs"] = std::move(inputs);
        j["tool_version"] = oal_version();
        double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
                             .count();
        j["duration_seconds"] = seconds;

        fs::path manifest = artifact;
        manifest += ".manifest.json";
        fs::path tmp = manifest;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary);
            if (!out) throw CliError{kExitUsage, "cannot write manifest " + manifest.string()};
            out << j.dump(2) << "\n";
        }
        fs::rename(tmp, manifest);
    }

private:
    std::string command_;
    ordered_json config_;
    std::map<std::string, std::string> inputs_;
    std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------- generate

struct GenerateArgs {
    oal_cohort_spec spec;
    std::string out;
};

int run_generate(const GenerateArgs& args) {
    ordered_json cfg;
    cfg["n"] = args.spec.n_patients;
    cfg["features"] = args.spec.feature_count;
    cfg["static_dim"] = args.spec.static_dim;
    cfg["prevalence"] = args.spec.prevalence;
    cfg["signal_dim"] = args.spec.signal_dim;
    cfg["nuisance_dim"] = args.spec.nuisance_dim;
    cfg["effect_size"] = args.spec.effect_size;
    cfg["events_min"] = args.spec.events_min;
    cfg["events_max"] = args.spec.events_max;
    cfg["horizon"] = args.spec.horizon_days;
    cfg["seed"] = args.spec.seed;
    ManifestWriter manifest("generate", cfg);

    CohortHandle cohort;
    check(oal_cohort_generate(&args.spec, cohort.out()));
    check(oal_cohort_write(cohort.get(), args.out.c_str()));
    manifest.write_for(args.out);

    std::printf("n=%lld prevalence=%g F=%lld S=%lld\n",
                static_cast<long long>(oal_cohort_size(cohort.get())),
                oal_cohort_prevalence(cohort.get()),
                static_cast<long long>(oal_cohort_feature_count(cohort.get())),
                static_cast<long long>(oal_cohort_static_dim(cohort.get())));
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::string cohort, val, checkpoint, history;
    oal_train_config config;
    oal_model_dims dims;
    std::vector<std::int64_t> hidden;
};

ordered_json train_config_json(const TrainArgs& args) {
    ordered_json cfg;
    cfg["lambda"] = args.config.lambda;
    cfg["epsilon"] = args.config.epsilon;
    cfg["ema_decay"] = args.config.ema_decay;
    cfg["single_class_policy"] = args.config.single_class_use_ema ? "use_ema" : "skip";
    cfg["batch_size"] = args.config.batch_size;
    cfg["epochs"] = args.config.epochs;
    cfg["learning_rate"] = args.config.learning_rate;
    cfg["momentum"] = args.config.momentum;
    cfg["seed"] = args.config.seed;
    cfg["eval_every"] = args.config.eval_every;
    cfg["shuffle"] = args.config.shuffle != 0;
    cfg["excise_regularizer"] = args.config.excise_regularizer != 0;
    cfg["embed_k"] = args.dims.embed_k;
    cfg["time_m"] = args.dims.time_m;
    cfg["dim_d"] = args.dims.out_d;
    ordered_json hidden = ordered_json::array();
    for (std::int64_t i = 0; i < args.dims.hidden_count; ++i) hidden.push_back(args.dims.hidden[i]);
    cfg["hidden"] = std::move(hidden);
    return cfg;
}

int run_train(TrainArgs& args) {
    ManifestWriter manifest("train", train_config_json(args));
    manifest.add_input(args.cohort);
    manifest.add_input(args.val);

    CohortHandle train_cohort, val_cohort;
    check(oal_cohort_read(args.cohort.c_str(), train_cohort.out()));
    check(oal_cohort_read(args.val.c_str(), val_cohort.out()));

    ParamsHandle params;
    HistoryHandle history;
    check(oal_train(&args.config, &args.dims, train_cohort.get(), val_cohort.get(), params.out(),
                    history.out()));

    check(oal_params_save(params.get(), args.checkpoint.c_str()));
    manifest.write_for(args.checkpoint);
    check(oal_history_write(history.get(), args.history.c_str()));
    manifest.write_for(args.history);

    std::printf("trained epochs=%lld checkpoint=%s history=%s\n",
                static_cast<long long>(oal_history_epoch_count(history.get())),
                args.checkpoint.c_str(), args.history.c_str());
    return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
    std::string cohort, checkpoint, report;
    double epsilon = 1e-5;
    std::int64_t bins = 10;
};

int run_eval(const EvalArgs& args) {
    ordered_json cfg;
    cfg["epsilon"] = args.epsilon;
    cfg["bins"] = args.bins;
    ManifestWriter manifest("eval", cfg);
    manifest.add_input(args.cohort);
    manifest.add_input(args.checkpoint);

    CohortHandle cohort;
    check(oal_cohort_read(args.cohort.c_str(), cohort.out()));
    ParamsHandle params;
    check(oal_params_load(args.checkpoint.c_str(), params.out()));

    int64_t pf = 0, ps = 0;
    check(oal_params_schema(params.get(), &pf, &ps, nullptr));
    if (pf != oal_cohort_feature_count(cohort.get()) ||
        ps != oal_cohort_static_dim(cohort.get())) {
        throw CliError{kExitUsage, "checkpoint schema does not match cohort schema"};
    }

    oal_metrics_report metrics;
    oal_geometry_report geometry;
    check(oal_evaluate(params.get(), cohort.get(), args.epsilon, args.bins, &metrics, &geometry));

    char block[1024];
    check(oal_report_format(&metrics, &geometry, block, sizeof(block), nullptr));
    std::fputs(block, stdout);

    if (!args.report.empty()) {
        check(oal_report_write(&metrics, &geometry, args.report.c_str()));
        manifest.write_for(args.report);
    }
    return 0;
}

// ------------------------------------------------------------------- sweep

struct SweepArgs {
    TrainArgs train;
    std::vector<double> fractions;
    std::vector<std::uint64_t> seeds;
    std::string out;
};

int run_sweep(SweepArgs& args) {
    ordered_json cfg = train_config_json(args.train);
    cfg["fractions"] = args.fractions;
    cfg["seeds"] = args.seeds;
    ManifestWriter manifest("sweep", cfg);
    manifest.add_input(args.train.cohort);
    manifest.add_input(args.train.val);

    CohortHandle train_cohort, val_cohort;
    check(oal_cohort_read(args.train.cohort.c_str(), train_cohort.out()));
    check(oal_cohort_read(args.train.val.c_str(), val_cohort.out()));

    SweepHandle table;
    check(oal_sweep_run(&args.train.config, &args.train.dims, train_cohort.get(),
                        val_cohort.get(), args.fractions.data(),
                        static_cast<int64_t>(args.fractions.size()), args.seeds.data(),
                        static_cast<int64_t>(args.seeds.size()), table.out()));

    check(oal_sweep_write_csv(table.get(), args.out.c_str()));
    manifest.write_for(args.out);

    // Echo the table to stdout in the same fixed column order.
    std::ifstream in(args.out);
    std::cout << in.rdbuf();
    return 0;
}

// --------------------------------------------------------------- gradcheck

struct GradcheckArgs {
    oal_gradcheck_dims dims;
    std::uint64_t seed = 1;
    double fault = 0.0;
};

int run_gradcheck(const GradcheckArgs& args) {
    oal_gradcheck_report report;
    check(oal_gradcheck_run(args.seed, &args.dims, args.fault, &report));

    std::printf("component=encoder max_rel_discrepancy=%.6g\n", report.encoder);
    std::printf("component=bce max_rel_discrepancy=%.6g\n", report.bce);
    std::printf("component=rayleigh max_rel_discrepancy=%.6g\n", report.rayleigh);
    std::printf("component=total max_rel_discrepancy=%.6g\n", report.total);
    std::printf("threshold=%g\n", report.threshold);
    std::printf("gradcheck=%s\n", report.pass ? "pass" : "fail");

    if (!report.pass) {
        const struct { const char* name; double value; } comps[] = {
            {"encoder", report.encoder},
            {"bce", report.bce},
            {"rayleigh", report.rayleigh},
            {"total", report.total},
        };
        std::string failing;
        for (const auto& c : comps) {
            if (c.value > report.threshold) {
                if (!failing.empty()) failing += ", ";
                failing += c.name;
            }
        }
        std::fprintf(stderr, "gradient check failed for: %s\n", failing.c_str());
        return kExitGradcheck;
    }
    return 0;
}

void add_dims_flags(CLI::App* cmd, oal_model_dims& dims, std::vector<std::int64_t>& hidden) {
    cmd->add_option("--embed-k", dims.embed_k, "Per-event representation width");
    cmd->add_option("--time-m", dims.time_m, "Sinusoidal time frequency count");
    cmd->add_option("--dim-d", dims.out_d, "Embedding width d");
    cmd->add_option("--hidden", hidden, "MLP hidden widths")
        ->expected(0, OAL_MAX_HIDDEN_LAYERS);
}

void finalize_hidden(oal_model_dims& dims, const std::vector<std::int64_t>& hidden,
                     bool hidden_set) {
    if (!hidden_set) return;
    dims.hidden_count = static_cast<int64_t>(hidden.size());
    for (std::size_t i = 0; i < hidden.size(); ++i) dims.hidden[i] = hidden[i];
}

void add_train_flags(CLI::App* cmd, TrainArgs& args) {
    cmd->add_option("--cohort", args.cohort, "Training cohort file")
        ->required();
    cmd->add_option("--val", args.val, "Validation cohort file")->required();
    cmd->add_option("--lambda", args.config.lambda, "Regularizer strength")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--epsilon", args.config.epsilon, "Rayleigh denominator stabilizer")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--ema-decay", args.config.ema_decay,
                    "EMA decay for class means in [0,1); negative disables");
    cmd->add_flag("--single-class-use-ema", args.config.single_class_use_ema,
                  "Substitute the EMA mean when a batch lacks a class");
    cmd->add_option("--batch-size", args.config.batch_size, "Mini-batch size")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--epochs", args.config.epochs, "Training epochs")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--learning-rate,--lr", args.config.learning_rate, "Learning rate")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--momentum", args.config.momentum, "Classical momentum")
        ->check(CLI::Range(0.0, 0.999999));
    cmd->add_option("--seed", args.config.seed, "Training seed");
    cmd->add_option("--eval-every", args.config.eval_every,
                    "Validate every N epochs (0 disables)");
    cmd->add_flag("--no-shuffle",
                  [&args](std::int64_t) { args.config.shuffle = 0; },
                  "Disable the per-epoch shuffle");
    cmd->add_option("--ece-bins", args.config.ece_bins, "ECE bin count")
        ->check(CLI::PositiveNumber);
    // Test hook, deliberately undocumented in --help.
    cmd->add_flag("--excise-regularizer", args.config.excise_regularizer)->group("");
    add_dims_flags(cmd, args.dims, args.hidden);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"outalign: outcome-aligned representation learning toolkit"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    // generate
    GenerateArgs gen;
    oal_cohort_spec_defaults(&gen.spec);
    CLI::App* cmd_generate = app.add_subcommand("generate", "Generate a synthetic cohort");
    cmd_generate->add_option("--n", gen.spec.n_patients, "Number of patients")
        ->check(CLI::PositiveNumber);
    cmd_generate->add_option("--features", gen.spec.feature_count, "Feature vocabulary size F")
        ->check(CLI::PositiveNumber);
    cmd_generate->add_option("--static-dim", gen.spec.static_dim, "Static feature count S")
        ->check(CLI::NonNegativeNumber);
    cmd_generate->add_option("--prevalence", gen.spec.prevalence, "Outcome prevalence")
        ->check(CLI::Range(1e-9, 1.0 - 1e-9));
    cmd_generate->add_option("--signal-dim", gen.spec.signal_dim, "Outcome-relevant latent dims")
        ->check(CLI::PositiveNumber);
    cmd_generate->add_option("--nuisance-dim", gen.spec.nuisance_dim, "Nuisance latent dims")
        ->check(CLI::NonNegativeNumber);
    cmd_generate->add_option("--effect-size", gen.spec.effect_size,
                             "Target latent Mahalanobis distance")
        ->check(CLI::PositiveNumber);
    cmd_generate->add_option("--events-min", gen.spec.events_min, "Minimum events per patient")
        ->check(CLI::NonNegativeNumber);
    cmd_generate->add_option("--events-max", gen.spec.events_max, "Maximum events per patient")
        ->check(CLI::NonNegativeNumber);
    cmd_generate->add_option("--horizon", gen.spec.horizon_days, "Observation horizon in days")
        ->check(CLI::PositiveNumber);
    cmd_generate->add_option("--seed", gen.spec.seed, "Generator seed");
    cmd_generate->add_option("--out", gen.out, "Output cohort file")->required();

    // train
    TrainArgs train_args;
    oal_train_config_defaults(&train_args.config);
    oal_model_dims_defaults(&train_args.dims);
    CLI::App* cmd_train = app.add_subcommand("train", "Train a model on a cohort");
    add_train_flags(cmd_train, train_args);
    cmd_train->add_option("--checkpoint", train_args.checkpoint, "Output checkpoint file")
        ->required();
    cmd_train->add_option("--history", train_args.history, "Output history file (JSON lines)")
        ->required();

    // eval
    EvalArgs eval_args;
    CLI::App* cmd_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a cohort");
    cmd_eval->add_option("--cohort", eval_args.cohort, "Cohort file")->required();
    cmd_eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
    cmd_eval->add_option("--report", eval_args.report, "Machine-readable report file");
    cmd_eval->add_option("--bins", eval_args.bins, "ECE bin count")->check(CLI::PositiveNumber);
    cmd_eval->add_option("--epsilon", eval_args.epsilon, "Rayleigh epsilon")
        ->check(CLI::PositiveNumber);

    // sweep
    SweepArgs sweep_args;
    oal_train_config_defaults(&sweep_args.train.config);
    oal_model_dims_defaults(&sweep_args.train.dims);
    CLI::App* cmd_sweep = app.add_subcommand("sweep", "Sample-efficiency sweep");
    add_train_flags(cmd_sweep, sweep_args.train);
    cmd_sweep->add_option("--fractions", sweep_args.fractions, "Training-set fractions in (0,1]")
        ->required()
        ->check(CLI::Range(1e-12, 1.0));
    cmd_sweep->add_option("--seeds", sweep_args.seeds, "Sweep seeds")->required();
    cmd_sweep->add_option("--out", sweep_args.out, "Output CSV file")->required();

    // gradcheck
    GradcheckArgs gc_args;
    oal_gradcheck_dims_defaults(&gc_args.dims);
    std::vector<std::int64_t> gc_hidden;
    CLI::App* cmd_gradcheck =
        app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    cmd_gradcheck->add_option("--seed", gc_args.seed, "Random seed");
    cmd_gradcheck->add_option("--features", gc_args.dims.feature_count, "Feature count (<= 8)");
    cmd_gradcheck->add_option("--static-dim", gc_args.dims.static_dim, "Static dims (<= 8)");
    cmd_gradcheck->add_option("--embed-k", gc_args.dims.embed_k, "Event width (<= 8)");
    cmd_gradcheck->add_option("--time-m", gc_args.dims.time_m, "Time frequencies (<= 8)");
    cmd_gradcheck->add_option("--dim-d", gc_args.dims.out_d, "Embedding width (<= 8)");
    cmd_gradcheck->add_option("--hidden", gc_hidden, "Hidden widths (each <= 8)")
        ->expected(0, OAL_MAX_HIDDEN_LAYERS);
    cmd_gradcheck->add_option("--batch", gc_args.dims.batch, "Batch size (2..8)");
    // Fault-injection hook for exercising the failure exit path.
    cmd_gradcheck->add_option("--inject-fault", gc_args.fault)->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (cmd_generate->parsed()) {
            if (gen.spec.events_max < gen.spec.events_min) {
                throw CliError{kExitUsage, "--events-max must be >= --events-min"};
            }
            return run_generate(gen);
        }
        if (cmd_train->parsed()) {
            finalize_hidden(train_args.dims, train_args.hidden,
                            cmd_train->count("--hidden") > 0);
            return run_train(train_args);
        }
        if (cmd_eval->parsed()) return run_eval(eval_args);
        if (cmd_sweep->parsed()) {
            finalize_hidden(sweep_args.train.dims, sweep_args.train.hidden,
                            cmd_sweep->count("--hidden") > 0);
            return run_sweep(sweep_args);
        }
        if (cmd_gradcheck->parsed()) {
            if (cmd_gradcheck->count("--hidden") > 0) {
                gc_args.dims.hidden_count = static_cast<int64_t>(gc_hidden.size());
                for (std::size_t i = 0; i < gc_hidden.size(); ++i) {
                    gc_args.dims.hidden[i] = gc_hidden[i];
                }
            }
            return run_gradcheck(gc_args);
        }
    } catch (const CliError& e) {
        std::fprintf(stderr, "error: %s\n", e.message.c_str());
        return e.code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
