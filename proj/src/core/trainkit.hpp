#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core/metrics.hpp"
#include "core/model.hpp"
#include "core/objective.hpp"
#include "core/synthcohort.hpp"

namespace oal {

struct TrainConfig {
    ObjectiveConfig objective;
    std::int64_t batch_size = 64;
    std::int64_t epochs = 30;
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    std::int64_t eval_every = 1;  // 0 disables per-epoch validation reports
    std::string checkpoint_path;  // saved after training when non-empty
    bool shuffle = true;
    std::int64_t ece_bins = 10;

    // Hard-skips every regularizer code path, independent of lambda. Exists
    // so the lambda=0 run can be compared bit-for-bit against a build that
    // never touches the regularizer.
    bool excise_regularizer = false;
};
void validate(const TrainConfig& config, const Cohort& train_cohort);

struct EpochRecord {
    std::int64_t epoch = 0;  // 1-based
    double mean_lsup = 0.0;
    double mean_rdisc = 0.0;  // over batches where the regularizer applied; 0 otherwise
    double mean_ltotal = 0.0;
    std::int64_t skipped_batches = 0;
    std::optional<MetricsReport> val_metrics;
    std::optional<GeometryReport> val_geometry;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

struct TrainResult {
    ModelParams params;
    TrainHistory history;
};

// Mini-batch SGD with classical momentum on L_total = L_sup - lambda*R_disc.
// Per-epoch seeded shuffle, last incomplete batch kept, class statistics
// estimated on the fly per batch, optional EMA of the class means. Fully
// deterministic in (config, cohorts, dims). initial, when given, replaces
// the seeded initialization (its schema must match the cohort).
TrainResult train(const TrainConfig& config, const Cohort& train_cohort, const Cohort& val_cohort,
                  const ModelDims& dims, const ModelParams* initial = nullptr);

// Full-cohort forward pass without gradient recording; discrimination and
// calibration metrics plus dataset-level embedding geometry.
std::pair<MetricsReport, GeometryReport> evaluate(const ModelParams& params, const Cohort& cohort,
                                                  double epsilon, std::int64_t ece_bins = 10);

struct SweepRow {
    double fraction = 0.0;
    std::uint64_t seed = 0;
    double lambda = 0.0;
    double auroc = 0.0;
    double auprc = 0.0;
    double rdisc = 0.0;
};

// For each (fraction, seed): nested subsample of the training cohort, one
// run with lambda = 0 and one with the configured lambda, both evaluated on
// the fixed validation cohort. Rows ordered fraction-major, then seed, then
// lambda (0 first).
std::vector<SweepRow> sweep_sample_efficiency(const TrainConfig& config, const Cohort& train_cohort,
                                              const Cohort& val_cohort,
                                              std::span<const double> fractions,
                                              std::span<const std::uint64_t> seeds,
                                              const ModelDims& dims);

// Versioned binary container: dims header plus row-major parameter blocks.
// Round trips are bit-exact.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);
// Errors when the stored schema/dims disagree with the expected ones.
ModelParams load_checkpoint(const std::filesystem::path& path, const Schema& expect_schema,
                            const ModelDims& expect_dims);

// Line-delimited records, one per epoch.
void write_history(const TrainHistory& history, const std::filesystem::path& path);

// Fixed column order: fraction,seed,lambda,auroc,auprc,rdisc.
void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path);
std::string sweep_csv_string(std::span<const SweepRow> rows);

// Machine-readable evaluation report.
void write_report_json(const MetricsReport& metrics, const GeometryReport& geometry,
                       const std::filesystem::path& path);

}  // namespace oal
