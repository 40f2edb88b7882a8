#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "core/objective.hpp"
#include "core/rng.hpp"

namespace oal {

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kRayleighEpsilon = 1e-3;
constexpr double kLambda = 0.1;
constexpr double kHorizon = 30.0;

enum class Component { encoder, bce, rayleigh, total };

std::vector<Trajectory> random_batch(Rng& rng, const GradcheckDims& dims) {
    std::vector<Trajectory> batch(static_cast<std::size_t>(dims.batch));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Trajectory& t = batch[i];
        t.patient_id = "g" + std::to_string(i);
        t.label = static_cast<int>(i % 2);  // both classes always present
        t.prediction_time = kHorizon;
        std::size_t n_events = 1 + static_cast<std::size_t>(rng.below(4));
        for (std::size_t e = 0; e < n_events; ++e) {
            Event ev;
            ev.time = rng.uniform(0.0, kHorizon);
            ev.feature_id = static_cast<std::int64_t>(
                rng.below(static_cast<std::uint64_t>(dims.feature_count)));
            ev.value = rng.normal();
            t.events.push_back(ev);
        }
        std::stable_sort(t.events.begin(), t.events.end(),
                         [](const Event& a, const Event& b) { return a.time < b.time; });
        t.static_features.resize(static_cast<std::size_t>(dims.static_dim));
        for (double& s : t.static_features) s = rng.normal();
    }
    return batch;
}

double component_scalar(Tape& tape, Component comp, const std::vector<Trajectory>& batch,
                        const ModelParams& params, const ParamNodes& nodes, int* root_out) {
    EmbeddingBatch emb = encode(tape, batch, params, nodes);
    int root = -1;
    switch (comp) {
        case Component::encoder:
            root = tape.sum(tape.square(emb.z_node));
            break;
        case Component::bce:
            root = bce_loss(tape, predict_risk(tape, emb, nodes), emb.labels);
            break;
        case Component::rayleigh: {
            BatchStats stats = class_statistics(tape, emb.z_node, emb.labels);
            RayleighResult r = rayleigh_quotient(tape, stats, kRayleighEpsilon, false,
                                                 SingleClassPolicy::skip);
            root = r.node;
            break;
        }
        case Component::total: {
            int sup = bce_loss(tape, predict_risk(tape, emb, nodes), emb.labels);
            BatchStats stats = class_statistics(tape, emb.z_node, emb.labels);
            RayleighResult r = rayleigh_quotient(tape, stats, kRayleighEpsilon, false,
                                                 SingleClassPolicy::skip);
            root = total_loss(tape, sup, r, kLambda).node;
            break;
        }
    }
    if (root_out) *root_out = root;
    return tape.scalar_value(root);
}

double max_discrepancy(const DenseArray& analytic, const DenseArray& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 0.01});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

}  // namespace

std::vector<std::string> GradcheckReport::failing_components() const {
    std::vector<std::string> out;
    if (encoder > threshold) out.push_back("encoder");
    if (bce > threshold) out.push_back("bce");
    if (rayleigh > threshold) out.push_back("rayleigh");
    if (total > threshold) out.push_back("total");
    return out;
}

GradcheckReport run_gradcheck(std::uint64_t seed, const GradcheckDims& dims,
                              double fault_injection) {
    for (std::int64_t extent :
         {dims.feature_count, dims.static_dim, dims.embed_k, dims.time_m, dims.out_d}) {
        if (extent < 1 || extent > 8) {
            fail(ErrorKind::invalid_argument,
                 "gradcheck: dims must lie in [1, 8] to keep finite differencing tractable");
        }
    }
    for (std::int64_t w : dims.hidden) {
        if (w < 1 || w > 8) {
            fail(ErrorKind::invalid_argument, "gradcheck: hidden widths must lie in [1, 8]");
        }
    }
    if (dims.batch < 2 || dims.batch > 8) {
        fail(ErrorKind::invalid_argument, "gradcheck: batch must lie in [2, 8]");
    }

    Schema schema{dims.feature_count, dims.static_dim};
    ModelDims mdims{dims.embed_k, dims.time_m, dims.out_d, dims.hidden};
    ModelParams params = init_params(schema, mdims, seed);
    Rng rng(substream_seed(seed, 0x6cULL));
    std::vector<Trajectory> batch = random_batch(rng, dims);

    DenseArray flat0 = flatten_params(params);
    GradcheckReport report;

    const Component comps[] = {Component::encoder, Component::bce, Component::rayleigh,
                               Component::total};
    double* slots[] = {&report.encoder, &report.bce, &report.rayleigh, &report.total};

    for (int c = 0; c < 4; ++c) {
        Component comp = comps[c];

        // Reverse-mode gradient, flattened in canonical parameter order.
        Tape tape;
        ParamNodes nodes = stage_params(tape, params);
        int root = -1;
        component_scalar(tape, comp, batch, params, nodes, &root);
        auto grads = tape.backward(root);
        std::vector<double> analytic_flat;
        for (int leaf : nodes.ordered) {
            const DenseArray& g = grads.at(leaf);
            analytic_flat.insert(analytic_flat.end(), g.data().begin(), g.data().end());
        }
        const std::size_t n_params = analytic_flat.size();
        DenseArray analytic = DenseArray::from({n_params}, std::move(analytic_flat));
        if (c == 0 && fault_injection != 0.0 && analytic.size() > 0) {
            analytic[0] += fault_injection;
        }

        auto f = [&](const DenseArray& flat) {
            ModelParams probe =
                unflatten_params(flat, schema, mdims, params.time_frequencies);
            Tape probe_tape;
            ParamNodes probe_nodes = stage_params(probe_tape, probe);
            return component_scalar(probe_tape, comp, batch, probe, probe_nodes, nullptr);
        };
        DenseArray numeric = finite_difference_gradient(f, flat0, kFdStep);
        *slots[c] = max_discrepancy(analytic, numeric);
    }

    report.pass = report.encoder <= report.threshold && report.bce <= report.threshold &&
                  report.rayleigh <= report.threshold && report.total <= report.threshold;
    return report;
}

}  // namespace oal
