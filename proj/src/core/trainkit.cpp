#include "core/trainkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "core/text_format.hpp"

namespace oal {

namespace {

constexpr std::uint64_t kShuffleTag = 0x7a31ULL;

double l2_norm(const ModelParams& p) {
    DenseArray flat = flatten_params(p);
    double acc = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) acc += flat[i] * flat[i];
    return std::sqrt(acc);
}

struct ParamRefs {
    std::vector<DenseArray*> arrays;  // trainable arrays in staging order
};

ParamRefs trainable_arrays(ModelParams& p) {
    ParamRefs refs;
    refs.arrays = {&p.feature_embedding, &p.value_projection, &p.time_projection};
    for (auto& layer : p.mlp) {
        refs.arrays.push_back(&layer.weight);
        refs.arrays.push_back(&layer.bias);
    }
    refs.arrays.push_back(&p.head_weight);
    refs.arrays.push_back(&p.head_bias);
    return refs;
}

}  // namespace

void validate(const TrainConfig& config, const Cohort& train_cohort) {
    validate(config.objective);
    if (config.batch_size < 1) {
        fail(ErrorKind::invalid_argument, "train: batch_size must be >= 1");
    }
    if (config.objective.lambda > 0.0 && config.batch_size < 2) {
        fail(ErrorKind::invalid_argument,
             "train: batch_size must be >= 2 when lambda > 0 (the regularizer needs class "
             "diversity)");
    }
    if (config.epochs < 0) fail(ErrorKind::invalid_argument, "train: epochs must be >= 0");
    if (!(config.learning_rate > 0.0)) {
        fail(ErrorKind::invalid_argument, "train: learning_rate must be > 0");
    }
    if (config.momentum < 0.0 || config.momentum >= 1.0) {
        fail(ErrorKind::invalid_argument, "train: momentum must lie in [0, 1)");
    }
    if (config.eval_every < 0) fail(ErrorKind::invalid_argument, "train: eval_every must be >= 0");
    if (config.ece_bins < 1) fail(ErrorKind::invalid_argument, "train: ece_bins must be >= 1");
    if (train_cohort.trajectories.empty()) {
        fail(ErrorKind::invalid_argument, "train: training cohort is empty");
    }
    bool has0 = false, has1 = false;
    for (const Trajectory& t : train_cohort.trajectories) {
        (t.label == 0 ? has0 : has1) = true;
    }
    if (!(has0 && has1)) {
        fail(ErrorKind::invalid_argument, "train: training cohort must contain both classes");
    }
}

TrainResult train(const TrainConfig& config, const Cohort& train_cohort, const Cohort& val_cohort,
                  const ModelDims& dims, const ModelParams* initial) {
    validate(config, train_cohort);

    TrainResult result;
    if (initial) {
        if (initial->schema.feature_count != train_cohort.schema.feature_count ||
            initial->schema.static_dim != train_cohort.schema.static_dim) {
            fail(ErrorKind::invalid_argument, "train: initial params do not match cohort schema");
        }
        result.params = *initial;
    } else {
        result.params = init_params(train_cohort.schema, dims, config.seed);
    }
    ModelParams& params = result.params;

    ParamRefs refs = trainable_arrays(params);
    std::vector<DenseArray> velocity;
    velocity.reserve(refs.arrays.size());
    for (DenseArray* a : refs.arrays) velocity.push_back(DenseArray::zeros(a->shape()));

    const std::size_t n = train_cohort.trajectories.size();
    const std::size_t batch_size = static_cast<std::size_t>(config.batch_size);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(substream_seed(config.seed, kShuffleTag));

    const bool regularize = !config.excise_regularizer && config.objective.lambda > 0.0;
    const bool use_ema = regularize && config.objective.ema_decay >= 0.0;
    DenseArray ema_mu0, ema_mu1;
    bool ema0_init = false, ema1_init = false;

    for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
        if (config.shuffle) {
            for (std::size_t i = n; i > 1; --i) {
                std::size_t j = static_cast<std::size_t>(shuffle_rng.below(i));
                std::swap(order[i - 1], order[j]);
            }
        }

        double sum_lsup = 0.0, sum_rdisc = 0.0, sum_ltotal = 0.0;
        std::int64_t n_batches = 0, n_rdisc_batches = 0, skipped = 0;

        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t stop = std::min(n, start + batch_size);
            std::vector<const Trajectory*> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                batch.push_back(&train_cohort.trajectories[order[i]]);
            }

            Tape tape;
            ParamNodes nodes = stage_params(tape, params);
            EmbeddingBatch emb = encode(tape, batch, params, nodes);
            int probs = predict_risk(tape, emb, nodes);
            int sup = bce_loss(tape, probs, emb.labels);

            int root = sup;
            double lsup_value = tape.scalar_value(sup);
            double ltotal_value = lsup_value;
            if (regularize) {
                BatchStats stats = class_statistics(tape, emb.z_node, emb.labels);
                if (use_ema) {
                    stats.ema_mu0 = ema_mu0;
                    stats.ema_mu1 = ema_mu1;
                    stats.ema0_initialized = ema0_init;
                    stats.ema1_initialized = ema1_init;
                    update_ema(stats, config.objective.ema_decay);
                    ema_mu0 = stats.ema_mu0;
                    ema_mu1 = stats.ema_mu1;
                    ema0_init = stats.ema0_initialized;
                    ema1_init = stats.ema1_initialized;
                }
                RayleighResult rdisc =
                    rayleigh_quotient(tape, stats, config.objective.epsilon, use_ema,
                                      config.objective.single_class_policy);
                TotalLossResult total =
                    total_loss(tape, sup, rdisc, config.objective.lambda);
                root = total.node;
                ltotal_value = tape.scalar_value(root);
                if (total.regularizer_skipped) {
                    ++skipped;
                } else {
                    sum_rdisc += rdisc.value;
                    ++n_rdisc_batches;
                }
            }

            if (!std::isfinite(ltotal_value)) {
                fail(ErrorKind::numeric,
                     "train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(n_batches) + " (parameter L2 norm " +
                         format_double(l2_norm(params)) + ")");
            }

            auto grads = tape.backward(root);
            for (std::size_t p = 0; p < refs.arrays.size(); ++p) {
                const DenseArray& g = grads.at(nodes.ordered[p]);
                DenseArray& v = velocity[p];
                DenseArray& w = *refs.arrays[p];
                for (std::size_t i = 0; i < w.size(); ++i) {
                    v[i] = config.momentum * v[i] + g[i];
                    w[i] -= config.learning_rate * v[i];
                }
            }

            sum_lsup += lsup_value;
            sum_ltotal += ltotal_value;
            ++n_batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_lsup = sum_lsup / static_cast<double>(n_batches);
        rec.mean_rdisc =
            n_rdisc_batches > 0 ? sum_rdisc / static_cast<double>(n_rdisc_batches) : 0.0;
        rec.mean_ltotal = sum_ltotal / static_cast<double>(n_batches);
        rec.skipped_batches = skipped;
        if (config.eval_every > 0 &&
            (epoch % config.eval_every == 0 || epoch == config.epochs)) {
            auto [m, g] = evaluate(params, val_cohort, config.objective.epsilon, config.ece_bins);
            rec.val_metrics = m;
            rec.val_geometry = g;
        }
        result.history.epochs.push_back(std::move(rec));
    }

    if (!config.checkpoint_path.empty()) {
        save_checkpoint(params, config.checkpoint_path);
    }
    return result;
}

std::pair<MetricsReport, GeometryReport> evaluate(const ModelParams& params, const Cohort& cohort,
                                                  double epsilon, std::int64_t ece_bins) {
    if (cohort.trajectories.empty()) {
        fail(ErrorKind::invalid_argument, "evaluate: cohort is empty");
    }
    if (cohort.schema.feature_count != params.schema.feature_count ||
        cohort.schema.static_dim != params.schema.static_dim) {
        fail(ErrorKind::invalid_argument,
             "evaluate: cohort schema (F=" + std::to_string(cohort.schema.feature_count) +
                 ", S=" + std::to_string(cohort.schema.static_dim) +
                 ") does not match checkpoint schema (F=" +
                 std::to_string(params.schema.feature_count) +
                 ", S=" + std::to_string(params.schema.static_dim) + ")");
    }
    const std::size_t n = cohort.trajectories.size();
    std::vector<const Trajectory*> all;
    all.reserve(n);
    std::vector<int> labels;
    labels.reserve(n);
    for (const Trajectory& t : cohort.trajectories) {
        all.push_back(&t);
        labels.push_back(t.label);
    }

    DenseArray z = encode_values(all, params);
    DenseArray statics = DenseArray::zeros({n, static_cast<std::size_t>(params.schema.static_dim)});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < statics.cols(); ++j) {
            statics.at(i, j) = cohort.trajectories[i].static_features[j];
        }
    }
    std::vector<double> probs = predict_risk_values(z, statics, params);

    MetricsReport metrics =
        compute_metrics(probs, labels, static_cast<std::size_t>(ece_bins));
    GeometryReport geometry = geometry_report(z, labels, epsilon);
    return {metrics, geometry};
}

std::vector<SweepRow> sweep_sample_efficiency(const TrainConfig& config, const Cohort& train_cohort,
                                              const Cohort& val_cohort,
                                              std::span<const double> fractions,
                                              std::span<const std::uint64_t> seeds,
                                              const ModelDims& dims) {
    if (fractions.empty() || seeds.empty()) {
        fail(ErrorKind::invalid_argument, "sweep: fractions and seeds must be non-empty");
    }
    for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) {
            fail(ErrorKind::invalid_argument, "sweep: fractions must lie in (0, 1]");
        }
    }

    std::vector<SweepRow> rows;
    rows.reserve(fractions.size() * seeds.size() * 2);
    for (double fraction : fractions) {
        for (std::uint64_t seed : seeds) {
            Cohort subset = subsample_fraction(train_cohort, fraction, seed);
            for (double lambda : {0.0, config.objective.lambda}) {
                TrainConfig cell = config;
                cell.objective.lambda = lambda;
                cell.seed = seed;
                cell.checkpoint_path.clear();
                cell.eval_every = 0;  // only the final evaluation is needed
                TrainResult r = train(cell, subset, val_cohort, dims);
                auto [m, g] = evaluate(r.params, val_cohort, config.objective.epsilon,
                                       config.ece_bins);
                rows.push_back({fraction, seed, lambda, m.auroc, m.auprc, g.rayleigh});
            }
        }
    }
    return rows;
}

namespace {

constexpr char kCheckpointMagic[8] = {'O', 'A', 'L', 'C', 'K', 'P', 'T', '1'};

void put_i64(std::ofstream& out, std::int64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::int64_t get_i64(std::ifstream& in, const std::filesystem::path& path) {
    std::int64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        fail(ErrorKind::parse, "load_checkpoint: truncated header in " + path.string());
    }
    return v;
}

void put_block(std::ofstream& out, const DenseArray& a) {
    out.write(reinterpret_cast<const char*>(a.data().data()),
              static_cast<std::streamsize>(a.size() * sizeof(double)));
}

void get_block(std::ifstream& in, DenseArray& a, const std::filesystem::path& path) {
    if (!in.read(reinterpret_cast<char*>(a.data().data()),
                 static_cast<std::streamsize>(a.size() * sizeof(double)))) {
        fail(ErrorKind::parse, "load_checkpoint: truncated parameter block in " + path.string());
    }
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "save_checkpoint: cannot open " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_i64(out, params.schema.feature_count);
    put_i64(out, params.schema.static_dim);
    put_i64(out, params.dims.embed_k);
    put_i64(out, params.dims.time_m);
    put_i64(out, params.dims.out_d);
    put_i64(out, static_cast<std::int64_t>(params.dims.hidden.size()));
    for (std::int64_t w : params.dims.hidden) put_i64(out, w);
    put_block(out, params.time_frequencies);
    put_block(out, params.feature_embedding);
    put_block(out, params.value_projection);
    put_block(out, params.time_projection);
    for (const auto& layer : params.mlp) {
        put_block(out, layer.weight);
        put_block(out, layer.bias);
    }
    put_block(out, params.head_weight);
    put_block(out, params.head_bias);
    out.flush();
    if (!out) fail(ErrorKind::io, "save_checkpoint: write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "load_checkpoint: cannot open " + path.string());
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        fail(ErrorKind::parse, "load_checkpoint: " + path.string() + " is not a checkpoint file");
    }
    Schema schema;
    ModelDims dims;
    schema.feature_count = get_i64(in, path);
    schema.static_dim = get_i64(in, path);
    dims.embed_k = get_i64(in, path);
    dims.time_m = get_i64(in, path);
    dims.out_d = get_i64(in, path);
    std::int64_t n_hidden = get_i64(in, path);
    if (n_hidden < 0 || n_hidden > 64) {
        fail(ErrorKind::parse, "load_checkpoint: corrupt hidden layer count");
    }
    dims.hidden.clear();
    for (std::int64_t i = 0; i < n_hidden; ++i) dims.hidden.push_back(get_i64(in, path));

    ModelParams p = init_params(schema, dims, 0);
    get_block(in, p.time_frequencies, path);
    get_block(in, p.feature_embedding, path);
    get_block(in, p.value_projection, path);
    get_block(in, p.time_projection, path);
    for (auto& layer : p.mlp) {
        get_block(in, layer.weight, path);
        get_block(in, layer.bias, path);
    }
    get_block(in, p.head_weight, path);
    get_block(in, p.head_bias, path);
    char extra;
    if (in.read(&extra, 1)) {
        fail(ErrorKind::parse, "load_checkpoint: trailing bytes in " + path.string());
    }
    return p;
}

ModelParams load_checkpoint(const std::filesystem::path& path, const Schema& expect_schema,
                            const ModelDims& expect_dims) {
    ModelParams p = load_checkpoint(path);
    bool ok = p.schema.feature_count == expect_schema.feature_count &&
              p.schema.static_dim == expect_schema.static_dim &&
              p.dims.embed_k == expect_dims.embed_k && p.dims.time_m == expect_dims.time_m &&
              p.dims.out_d == expect_dims.out_d && p.dims.hidden == expect_dims.hidden;
    if (!ok) {
        fail(ErrorKind::invalid_argument,
             "load_checkpoint: stored dims do not match the expected configuration");
    }
    return p;
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json metrics_to_json(const MetricsReport& m) {
    ordered_json j;
    j["auroc"] = m.auroc;
    j["auprc"] = m.auprc;
    j["brier"] = m.brier;
    j["ece"] = m.ece;
    j["n"] = m.n;
    j["prevalence"] = m.prevalence;
    return j;
}

ordered_json geometry_to_json(const GeometryReport& g) {
    ordered_json j;
    j["mean_gap_sq"] = g.mean_gap_sq;
    j["scatter_trace"] = g.scatter_trace;
    j["rayleigh"] = g.rayleigh;
    j["epsilon"] = g.epsilon;
    if (g.mahalanobis_defined) {
        j["mahalanobis_sq"] = g.mahalanobis_sq;
    } else {
        j["mahalanobis_sq"] = nullptr;
    }
    return j;
}

}  // namespace

void write_history(const TrainHistory& history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "write_history: cannot open " + path.string());
    for (const EpochRecord& rec : history.epochs) {
        ordered_json j;
        j["epoch"] = rec.epoch;
        j["mean_lsup"] = rec.mean_lsup;
        j["mean_rdisc"] = rec.mean_rdisc;
        j["mean_ltotal"] = rec.mean_ltotal;
        j["skipped_batches"] = rec.skipped_batches;
        if (rec.val_metrics) j["val_metrics"] = metrics_to_json(*rec.val_metrics);
        if (rec.val_geometry) j["val_geometry"] = geometry_to_json(*rec.val_geometry);
        out << j.dump() << "\n";
    }
    out.flush();
    if (!out) fail(ErrorKind::io, "write_history: write failed for " + path.string());
}

std::string sweep_csv_string(std::span<const SweepRow> rows) {
    std::string out = "fraction,seed,lambda,auroc,auprc,rdisc\n";
    for (const SweepRow& r : rows) {
        out += format_double(r.fraction) + "," + std::to_string(r.seed) + "," +
               format_double(r.lambda) + "," + format_double(r.auroc) + "," +
               format_double(r.auprc) + "," + format_double(r.rdisc) + "\n";
    }
    return out;
}

void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "write_sweep_csv: cannot open " + path.string());
    out << sweep_csv_string(rows);
    out.flush();
    if (!out) fail(ErrorKind::io, "write_sweep_csv: write failed for " + path.string());
}

void write_report_json(const MetricsReport& metrics, const GeometryReport& geometry,
                       const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "write_report: cannot open " + path.string());
    ordered_json j;
    j["metrics"] = metrics_to_json(metrics);
    j["geometry"] = geometry_to_json(geometry);
    out << j.dump(2) << "\n";
    out.flush();
    if (!out) fail(ErrorKind::io, "write_report: write failed for " + path.string());
}

}  // namespace oal
