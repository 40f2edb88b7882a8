#include "core/model.hpp"

#include <cmath>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace oal {

namespace {

constexpr double kTauMinDays = 1.0;
constexpr double kTauMaxDays = 365.0;

DenseArray glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out,
                  std::vector<std::size_t> shape) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseArray a = DenseArray::zeros(std::move(shape));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-limit, limit);
    return a;
}

void check_dims(const Schema& schema, const ModelDims& dims) {
    if (schema.feature_count <= 0 || schema.static_dim < 0) {
        fail(ErrorKind::invalid_argument, "init_params: schema dims must be positive");
    }
    if (dims.embed_k <= 0 || dims.time_m <= 0 || dims.out_d <= 0) {
        fail(ErrorKind::invalid_argument, "init_params: model dims must be positive");
    }
    for (std::int64_t w : dims.hidden) {
        if (w <= 0) fail(ErrorKind::invalid_argument, "init_params: hidden widths must be positive");
    }
}

std::vector<std::pair<std::size_t, std::size_t>> layer_plan(const ModelDims& dims) {
    std::vector<std::pair<std::size_t, std::size_t>> plan;
    std::size_t in = static_cast<std::size_t>(dims.embed_k);
    for (std::int64_t w : dims.hidden) {
        plan.emplace_back(in, static_cast<std::size_t>(w));
        in = static_cast<std::size_t>(w);
    }
    plan.emplace_back(in, static_cast<std::size_t>(dims.out_d));
    return plan;
}

}  // namespace

ModelParams init_params(const Schema& schema, const ModelDims& dims, std::uint64_t seed) {
    check_dims(schema, dims);
    const std::size_t F = static_cast<std::size_t>(schema.feature_count);
    const std::size_t S = static_cast<std::size_t>(schema.static_dim);
    const std::size_t k = static_cast<std::size_t>(dims.embed_k);
    const std::size_t m = static_cast<std::size_t>(dims.time_m);
    const std::size_t d = static_cast<std::size_t>(dims.out_d);

    Rng rng(seed);
    ModelParams p;
    p.schema = schema;
    p.dims = dims;
    p.feature_embedding = glorot(rng, F, k, {F, k});
    p.value_projection = glorot(rng, 1, k, {1, k});
    p.time_projection = glorot(rng, 2 * m, k, {2 * m, k});
    for (auto [in, out] : layer_plan(dims)) {
        ModelParams::Layer layer;
        layer.weight = glorot(rng, in, out, {in, out});
        layer.bias = DenseArray::zeros({1, out});
        p.mlp.push_back(std::move(layer));
    }
    p.head_weight = glorot(rng, d + S, 1, {d + S, 1});
    p.head_bias = DenseArray::zeros({1, 1});

    // tau_j geometric over [1, 365] days; omega_j = 1/tau_j.
    p.time_frequencies = DenseArray::zeros({m});
    for (std::size_t j = 0; j < m; ++j) {
        double tau = m == 1 ? kTauMinDays
                            : kTauMinDays * std::pow(kTauMaxDays / kTauMinDays,
                                                     static_cast<double>(j) /
                                                         static_cast<double>(m - 1));
        p.time_frequencies[j] = 1.0 / tau;
    }
    return p;
}

ParamNodes stage_params(Tape& tape, const ModelParams& params) {
    ParamNodes n;
    n.feature_embedding = tape.leaf(params.feature_embedding);
    n.value_projection = tape.leaf(params.value_projection);
    n.time_projection = tape.leaf(params.time_projection);
    n.ordered = {n.feature_embedding, n.value_projection, n.time_projection};
    for (const auto& layer : params.mlp) {
        int w = tape.leaf(layer.weight);
        int b = tape.leaf(layer.bias);
        n.mlp.emplace_back(w, b);
        n.ordered.push_back(w);
        n.ordered.push_back(b);
    }
    n.head_weight = tape.leaf(params.head_weight);
    n.head_bias = tape.leaf(params.head_bias);
    n.ordered.push_back(n.head_weight);
    n.ordered.push_back(n.head_bias);
    return n;
}

namespace {

struct BatchConstants {
    std::size_t total_events = 0;
    DenseArray onehot;      // E x F
    DenseArray values;      // E x 1
    DenseArray time_feats;  // E x 2m
    DenseArray pooling;     // N x E, row i holds 1/E_i over patient i's events
    DenseArray statics;     // N x S
    std::vector<int> labels;
};

BatchConstants build_batch_constants(std::span<const Trajectory* const> batch,
                                     const ModelParams& params) {
    if (batch.empty()) fail(ErrorKind::invalid_argument, "encode: batch must be non-empty");
    const std::size_t F = static_cast<std::size_t>(params.schema.feature_count);
    const std::size_t S = static_cast<std::size_t>(params.schema.static_dim);
    const std::size_t m = static_cast<std::size_t>(params.dims.time_m);
    const std::size_t N = batch.size();

    BatchConstants c;
    c.labels.reserve(N);
    std::size_t E = 0;
    for (const Trajectory* t : batch) {
        if (t->static_features.size() != S) {
            fail(ErrorKind::invalid_argument,
                 "encode: patient " + t->patient_id + " has " +
                     std::to_string(t->static_features.size()) + " static features, schema says " +
                     std::to_string(S));
        }
        for (const Event& e : t->events) {
            if (e.feature_id < 0 || e.feature_id >= params.schema.feature_count) {
                fail(ErrorKind::invalid_argument,
                     "encode: patient " + t->patient_id + " has feature_id " +
                         std::to_string(e.feature_id) + " outside [0, " + std::to_string(F) + ")");
            }
        }
        E += t->events.size();
    }

    c.total_events = E;
    c.statics = DenseArray::zeros({N, S});
    c.pooling = DenseArray::zeros({N, E == 0 ? 1 : E});
    if (E > 0) {
        c.onehot = DenseArray::zeros({E, F});
        c.values = DenseArray::zeros({E, 1});
        c.time_feats = DenseArray::zeros({E, 2 * m});
    }

    std::size_t row = 0;
    for (std::size_t i = 0; i < N; ++i) {
        const Trajectory& t = *batch[i];
        c.labels.push_back(t.label);
        for (std::size_t j = 0; j < S; ++j) c.statics.at(i, j) = t.static_features[j];
        if (t.events.empty()) continue;
        double inv = 1.0 / static_cast<double>(t.events.size());
        for (const Event& e : t.events) {
            c.onehot.at(row, static_cast<std::size_t>(e.feature_id)) = 1.0;
            c.values[row] = e.value;
            double dt = t.prediction_time - e.time;
            for (std::size_t j = 0; j < m; ++j) {
                double w = params.time_frequencies[j] * dt;
                c.time_feats.at(row, j) = std::sin(w);
                c.time_feats.at(row, m + j) = std::cos(w);
            }
            c.pooling.at(i, row) = inv;
            ++row;
        }
    }
    return c;
}

}  // namespace

EmbeddingBatch encode(Tape& tape, std::span<const Trajectory* const> batch,
                      const ModelParams& params, const ParamNodes& nodes) {
    BatchConstants c = build_batch_constants(batch, params);
    const std::size_t N = batch.size();
    const std::size_t k = static_cast<std::size_t>(params.dims.embed_k);

    int pooled;
    if (c.total_events == 0) {
        pooled = tape.constant(DenseArray::zeros({N, k}));
    } else {
        int reps = tape.add(tape.add(tape.matmul(tape.constant(std::move(c.onehot)),
                                                 nodes.feature_embedding),
                                     tape.matmul(tape.constant(std::move(c.values)),
                                                 nodes.value_projection)),
                            tape.matmul(tape.constant(std::move(c.time_feats)),
                                        nodes.time_projection));
        pooled = tape.matmul(tape.constant(std::move(c.pooling)), reps);
    }

    int x = pooled;
    for (std::size_t l = 0; l < nodes.mlp.size(); ++l) {
        x = tape.broadcast_add_row(tape.matmul(x, nodes.mlp[l].first), nodes.mlp[l].second);
        if (l + 1 < nodes.mlp.size()) x = tape.tanh(x);
    }

    EmbeddingBatch out;
    out.z_node = x;
    out.statics = std::move(c.statics);
    out.labels = std::move(c.labels);
    return out;
}

EmbeddingBatch encode(Tape& tape, const std::vector<Trajectory>& batch, const ModelParams& params,
                      const ParamNodes& nodes) {
    std::vector<const Trajectory*> ptrs;
    ptrs.reserve(batch.size());
    for (const Trajectory& t : batch) ptrs.push_back(&t);
    return encode(tape, ptrs, params, nodes);
}

int predict_risk(Tape& tape, const EmbeddingBatch& emb, const ParamNodes& nodes) {
    const std::size_t z_cols = tape.value(emb.z_node).cols();
    const std::size_t head_in = tape.value(nodes.head_weight).rows();
    if (z_cols + emb.statics.cols() != head_in) {
        fail(ErrorKind::invalid_argument,
             "predict_risk: embedding width " + std::to_string(z_cols) + " + static width " +
                 std::to_string(emb.statics.cols()) + " does not match head input width " +
                 std::to_string(head_in));
    }
    int x = emb.statics.cols() > 0 ? tape.concat_cols(emb.z_node, tape.constant(emb.statics))
                                   : emb.z_node;
    int logits = tape.broadcast_add_row(tape.matmul(x, nodes.head_weight), nodes.head_bias);
    return tape.sigmoid(logits);
}

DenseArray encode_values(std::span<const Trajectory* const> batch, const ModelParams& params) {
    if (batch.empty()) fail(ErrorKind::invalid_argument, "encode: batch must be non-empty");
    const std::size_t k = static_cast<std::size_t>(params.dims.embed_k);
    const std::size_t d = static_cast<std::size_t>(params.dims.out_d);
    const std::size_t m = static_cast<std::size_t>(params.dims.time_m);
    const std::size_t N = batch.size();

    DenseArray z = DenseArray::zeros({N, d});
    std::vector<double> pooled(k), buf;
    for (std::size_t i = 0; i < N; ++i) {
        const Trajectory& t = *batch[i];
        std::fill(pooled.begin(), pooled.end(), 0.0);
        for (const Event& e : t.events) {
            if (e.feature_id < 0 || e.feature_id >= params.schema.feature_count) {
                fail(ErrorKind::invalid_argument,
                     "encode: patient " + t.patient_id + " has feature_id " +
                         std::to_string(e.feature_id) + " outside [0, " +
                         std::to_string(params.schema.feature_count) + ")");
            }
            const std::size_t f = static_cast<std::size_t>(e.feature_id);
            double dt = t.prediction_time - e.time;
            for (std::size_t c = 0; c < k; ++c) {
                double v = params.feature_embedding.at(f, c) + e.value * params.value_projection[c];
                for (std::size_t j = 0; j < m; ++j) {
                    double w = params.time_frequencies[j] * dt;
                    v += std::sin(w) * params.time_projection.at(j, c);
                    v += std::cos(w) * params.time_projection.at(m + j, c);
                }
                pooled[c] += v;
            }
        }
        if (!t.events.empty()) {
            double inv = 1.0 / static_cast<double>(t.events.size());
            for (double& v : pooled) v *= inv;
        }

        std::vector<double> x = pooled;
        for (std::size_t l = 0; l < params.mlp.size(); ++l) {
            const auto& layer = params.mlp[l];
            const std::size_t in = layer.weight.rows(), out = layer.weight.cols();
            buf.assign(out, 0.0);
            for (std::size_t p = 0; p < in; ++p) {
                double xv = x[p];
                if (xv == 0.0) continue;
                for (std::size_t j = 0; j < out; ++j) buf[j] += xv * layer.weight.at(p, j);
            }
            for (std::size_t j = 0; j < out; ++j) buf[j] += layer.bias[j];
            if (l + 1 < params.mlp.size())
                for (double& v : buf) v = std::tanh(v);
            x = buf;
        }
        for (std::size_t c = 0; c < d; ++c) z.at(i, c) = x[c];
    }
    return z;
}

std::vector<double> predict_risk_values(const DenseArray& embeddings, const DenseArray& statics,
                                        const ModelParams& params) {
    const std::size_t N = embeddings.rows();
    const std::size_t d = embeddings.cols();
    const std::size_t S = statics.cols();
    if (d + S != params.head_weight.rows()) {
        fail(ErrorKind::invalid_argument,
             "predict_risk: embedding width " + std::to_string(d) + " + static width " +
                 std::to_string(S) + " does not match head input width " +
                 std::to_string(params.head_weight.rows()));
    }
    std::vector<double> probs(N);
    for (std::size_t i = 0; i < N; ++i) {
        double logit = params.head_bias[0];
        for (std::size_t c = 0; c < d; ++c) logit += embeddings.at(i, c) * params.head_weight[c];
        for (std::size_t j = 0; j < S; ++j) logit += statics.at(i, j) * params.head_weight[d + j];
        probs[i] = 1.0 / (1.0 + std::exp(-logit));
    }
    return probs;
}

DenseArray flatten_params(const ModelParams& params) {
    std::vector<double> flat;
    auto push = [&](const DenseArray& a) {
        flat.insert(flat.end(), a.data().begin(), a.data().end());
    };
    push(params.feature_embedding);
    push(params.value_projection);
    push(params.time_projection);
    for (const auto& layer : params.mlp) {
        push(layer.weight);
        push(layer.bias);
    }
    push(params.head_weight);
    push(params.head_bias);
    std::size_t n = flat.size();
    return DenseArray::from({n}, std::move(flat));
}

ModelParams unflatten_params(const DenseArray& flat, const Schema& schema, const ModelDims& dims,
                             const DenseArray& time_frequencies) {
    ModelParams p = init_params(schema, dims, 0);
    p.time_frequencies = time_frequencies;
    std::size_t pos = 0;
    auto pull = [&](DenseArray& a) {
        if (pos + a.size() > flat.size()) {
            fail(ErrorKind::invalid_argument, "unflatten_params: flat vector too short");
        }
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = flat[pos + i];
        pos += a.size();
    };
    pull(p.feature_embedding);
    pull(p.value_projection);
    pull(p.time_projection);
    for (auto& layer : p.mlp) {
        pull(layer.weight);
        pull(layer.bias);
    }
    pull(p.head_weight);
    pull(p.head_bias);
    if (pos != flat.size()) {
        fail(ErrorKind::invalid_argument, "unflatten_params: flat vector has extra values");
    }
    return p;
}

}  // namespace oal
