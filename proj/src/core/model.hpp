#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core/dense_array.hpp"
#include "core/tape.hpp"

namespace oal {

struct Event {
    double time;              // days since index, >= 0
    std::int64_t feature_id;  // in [0, F)
    double value;
};

// One patient: timestamped event sequence, static features, binary label.
// Events are sorted by time ascending; all event times <= prediction_time.
struct Trajectory {
    std::string patient_id;
    std::vector<Event> events;
    std::vector<double> static_features;
    int label = 0;  // 0 or 1
    double prediction_time = 0.0;
};

struct Schema {
    std::int64_t feature_count = 0;  // F
    std::int64_t static_dim = 0;     // S
};

struct ModelDims {
    std::int64_t embed_k = 16;  // per-event representation width
    std::int64_t time_m = 4;    // sinusoidal time frequency count
    std::int64_t out_d = 16;    // embedding width d
    std::vector<std::int64_t> hidden = {32};
};

// Encoder + head parameters. time_frequencies are fixed at init (1/tau with
// tau geometrically spaced over [1, 365] days) and are not trained.
struct ModelParams {
    Schema schema;
    ModelDims dims;
    DenseArray feature_embedding;  // F x k
    DenseArray value_projection;   // 1 x k
    DenseArray time_frequencies;   // m
    DenseArray time_projection;    // 2m x k
    struct Layer {
        DenseArray weight;  // in x out
        DenseArray bias;    // 1 x out
    };
    std::vector<Layer> mlp;   // tanh activations, final layer linear, ends at width d
    DenseArray head_weight;   // (d+S) x 1
    DenseArray head_bias;     // 1 x 1
};

// Glorot-uniform weights, zero biases, deterministic in seed.
ModelParams init_params(const Schema& schema, const ModelDims& dims, std::uint64_t seed);

// Parameter leaves staged on a tape, in the fixed traversal order used by the
// optimizer and the checkpoint format.
struct ParamNodes {
    int feature_embedding = -1;
    int value_projection = -1;
    int time_projection = -1;
    std::vector<std::pair<int, int>> mlp;  // (weight, bias)
    int head_weight = -1;
    int head_bias = -1;
    std::vector<int> ordered;  // all trainable leaves, update order
};
ParamNodes stage_params(Tape& tape, const ModelParams& params);

// Encoder output for one mini-batch: embeddings live on the tape, statics and
// labels are plain values (constants w.r.t. differentiation).
struct EmbeddingBatch {
    int z_node = -1;       // N x d on tape
    DenseArray statics;    // N x S
    std::vector<int> labels;
};

// Per event: feature_embedding[feature_id] + value * value_projection +
// time_projection applied to [sin(w_j dt), cos(w_j dt)], dt measured backward
// from prediction_time; mean pooled per patient, then the MLP. A patient with
// no events contributes the MLP applied to the zero vector.
EmbeddingBatch encode(Tape& tape, std::span<const Trajectory* const> batch,
                      const ModelParams& params, const ParamNodes& nodes);
EmbeddingBatch encode(Tape& tape, const std::vector<Trajectory>& batch,
                      const ModelParams& params, const ParamNodes& nodes);

// p_i = sigmoid(w^T [z_i ; static_i] + b), per row. Returns the N x 1
// probability node.
int predict_risk(Tape& tape, const EmbeddingBatch& emb, const ParamNodes& nodes);

// Tape-free forward path for evaluation. Same arithmetic, no gradient record.
DenseArray encode_values(std::span<const Trajectory* const> batch, const ModelParams& params);
std::vector<double> predict_risk_values(const DenseArray& embeddings, const DenseArray& statics,
                                        const ModelParams& params);

// Flat parameter vector in the canonical order (gradient checks, tests).
DenseArray flatten_params(const ModelParams& params);
ModelParams unflatten_params(const DenseArray& flat, const Schema& schema, const ModelDims& dims,
                             const DenseArray& time_frequencies);

}  // namespace oal
