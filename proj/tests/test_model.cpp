#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "core/error.hpp"
#include "core/model.hpp"
#include "core/rng.hpp"

using namespace oal;

namespace {

Trajectory make_trajectory(Rng& rng, const Schema& schema, double horizon, std::size_t n_events,
                           int label, const std::string& id) {
    Trajectory t;
    t.patient_id = id;
    t.label = label;
    t.prediction_time = horizon;
    for (std::size_t e = 0; e < n_events; ++e) {
        Event ev;
        ev.time = rng.uniform(0.0, horizon);
        ev.feature_id =
            static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(schema.feature_count)));
        ev.value = rng.normal();
        t.events.push_back(ev);
    }
    std::stable_sort(t.events.begin(), t.events.end(),
                     [](const Event& a, const Event& b) { return a.time < b.time; });
    t.static_features.resize(static_cast<std::size_t>(schema.static_dim));
    for (double& s : t.static_features) s = rng.normal();
    return t;
}

DenseArray encode_on_tape(const std::vector<Trajectory>& batch, const ModelParams& params) {
    Tape tape;
    ParamNodes nodes = stage_params(tape, params);
    EmbeddingBatch emb = encode(tape, batch, params, nodes);
    return tape.value(emb.z_node);
}

}  // namespace

TEST_CASE("init_params is deterministic and matches the stated rules") {
    Schema schema{10, 3};
    ModelDims dims{4, 3, 5, {6}};

    ModelParams a = init_params(schema, dims, 99);
    ModelParams b = init_params(schema, dims, 99);
    DenseArray fa = flatten_params(a), fb = flatten_params(b);
    REQUIRE(fa.size() == fb.size());
    CHECK(std::memcmp(fa.data().data(), fb.data().data(), fa.size() * sizeof(double)) == 0);

    ModelParams c = init_params(schema, dims, 100);
    bool any_diff = false;
    DenseArray fc = flatten_params(c);
    for (std::size_t i = 0; i < fa.size(); ++i) any_diff |= fa[i] != fc[i];
    CHECK(any_diff);

    SUBCASE("biases are zero at init") {
        for (const auto& layer : a.mlp) {
            for (std::size_t i = 0; i < layer.bias.size(); ++i) CHECK(layer.bias[i] == 0.0);
        }
        CHECK(a.head_bias[0] == 0.0);
    }

    SUBCASE("glorot bounds hold") {
        double limit = std::sqrt(6.0 / (10.0 + 4.0));
        for (std::size_t i = 0; i < a.feature_embedding.size(); ++i) {
            CHECK(std::abs(a.feature_embedding[i]) <= limit);
        }
    }

    SUBCASE("time frequencies geometric over [1, 365] days") {
        // m=3 -> tau = {1, 365^(1/2), 365}
        CHECK(a.time_frequencies[0] == doctest::Approx(1.0));
        CHECK(1.0 / a.time_frequencies[1] == doctest::Approx(std::sqrt(365.0)).epsilon(1e-12));
        CHECK(1.0 / a.time_frequencies[2] == doctest::Approx(365.0).epsilon(1e-12));
    }

    SUBCASE("m=1 uses the 1-day period") {
        ModelParams p = init_params(schema, {4, 1, 5, {}}, 3);
        CHECK(p.time_frequencies[0] == doctest::Approx(1.0));
    }
}

TEST_CASE("encode shape, determinism and degenerate inputs") {
    Rng rng(5);
    Schema schema{8, 2};
    ModelDims dims{4, 2, 4, {5}};
    ModelParams params = init_params(schema, dims, 1);

    SUBCASE("batch of 5 with d=4 gives 5x4 embeddings") {
        std::vector<Trajectory> batch;
        for (int i = 0; i < 5; ++i) {
            batch.push_back(make_trajectory(rng, schema, 50.0, 3, i % 2, "p" + std::to_string(i)));
        }
        DenseArray z = encode_on_tape(batch, params);
        CHECK(z.shape() == std::vector<std::size_t>{5, 4});
    }

    SUBCASE("zero events yields MLP of the zero vector, deterministically") {
        Trajectory empty;
        empty.patient_id = "empty";
        empty.prediction_time = 10.0;
        empty.static_features = {0.3, -0.2};
        std::vector<Trajectory> batch{empty};
        DenseArray z1 = encode_on_tape(batch, params);
        DenseArray z2 = encode_on_tape(batch, params);
        for (std::size_t i = 0; i < z1.size(); ++i) CHECK(z1[i] == z2[i]);

        // Equivalent direct computation: tanh(0*W1 + b1) * W2 + b2 with zero biases
        // at init means the embedding must be exactly the final bias row (zeros).
        for (std::size_t i = 0; i < z1.size(); ++i) CHECK(z1[i] == 0.0);
    }

    SUBCASE("identical trajectories produce identical rows") {
        Trajectory t = make_trajectory(rng, schema, 50.0, 4, 1, "twin");
        std::vector<Trajectory> batch{t, t};
        DenseArray z = encode_on_tape(batch, params);
        for (std::size_t c = 0; c < z.cols(); ++c) CHECK(z.at(0, c) == z.at(1, c));
    }

    SUBCASE("feature_id out of range names the patient") {
        Trajectory t = make_trajectory(rng, schema, 50.0, 2, 0, "bad-patient");
        t.events[0].feature_id = 8;
        std::vector<Trajectory> batch{t};
        Tape tape;
        ParamNodes nodes = stage_params(tape, params);
        CHECK_THROWS_WITH_AS(encode(tape, batch, params, nodes),
                             doctest::Contains("bad-patient"), oal::Error);
    }

    SUBCASE("batch permutation permutes rows identically") {
        std::vector<Trajectory> batch;
        for (int i = 0; i < 6; ++i) {
            batch.push_back(make_trajectory(rng, schema, 50.0, 2 + i % 3, i % 2,
                                            "p" + std::to_string(i)));
        }
        DenseArray z = encode_on_tape(batch, params);
        std::vector<Trajectory> reversed(batch.rbegin(), batch.rend());
        DenseArray zr = encode_on_tape(reversed, params);
        const std::size_t n = batch.size();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < z.cols(); ++c) {
                CHECK(z.at(i, c) == doctest::Approx(zr.at(n - 1 - i, c)).epsilon(1e-12));
            }
        }
    }

    SUBCASE("same-time event order does not matter") {
        Trajectory t;
        t.patient_id = "ties";
        t.prediction_time = 20.0;
        t.static_features = {0.0, 0.0};
        t.events = {{5.0, 1, 0.7}, {5.0, 3, -0.4}, {5.0, 6, 1.1}};
        Trajectory swapped = t;
        std::swap(swapped.events[0], swapped.events[2]);
        DenseArray za = encode_on_tape({t}, params);
        DenseArray zb = encode_on_tape({swapped}, params);
        for (std::size_t i = 0; i < za.size(); ++i) {
            CHECK(za[i] == doctest::Approx(zb[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("tape and value paths agree") {
    Rng rng(17);
    Schema schema{8, 2};
    ModelDims dims{4, 2, 4, {5}};
    ModelParams params = init_params(schema, dims, 2);
    std::vector<Trajectory> batch;
    for (int i = 0; i < 7; ++i) {
        batch.push_back(
            make_trajectory(rng, schema, 100.0, static_cast<std::size_t>(i), i % 2,
                            "p" + std::to_string(i)));
    }
    DenseArray z_tape = encode_on_tape(batch, params);

    std::vector<const Trajectory*> ptrs;
    for (const auto& t : batch) ptrs.push_back(&t);
    DenseArray z_plain = encode_values(ptrs, params);
    REQUIRE(z_tape.size() == z_plain.size());
    for (std::size_t i = 0; i < z_tape.size(); ++i) {
        CHECK(z_tape[i] == doctest::Approx(z_plain[i]).epsilon(1e-12));
    }

    Tape tape;
    ParamNodes nodes = stage_params(tape, params);
    EmbeddingBatch emb = encode(tape, batch, params, nodes);
    const DenseArray& probs_tape = tape.value(predict_risk(tape, emb, nodes));
    std::vector<double> probs_plain = predict_risk_values(z_plain, emb.statics, params);
    for (std::size_t i = 0; i < probs_plain.size(); ++i) {
        CHECK(probs_tape[i] == doctest::Approx(probs_plain[i]).epsilon(1e-12));
    }
}

TEST_CASE("predict_risk head behavior") {
    Rng rng(23);
    Schema schema{6, 2};
    ModelDims dims{3, 1, 3, {}};
    ModelParams params = init_params(schema, dims, 4);
    std::vector<Trajectory> batch;
    for (int i = 0; i < 4; ++i) {
        batch.push_back(make_trajectory(rng, schema, 30.0, 3, i % 2, "p" + std::to_string(i)));
    }

    auto probs_with_head = [&](double weight_fill, double bias) {
        ModelParams p = params;
        for (std::size_t i = 0; i < p.head_weight.size(); ++i) p.head_weight[i] = weight_fill;
        p.head_bias[0] = bias;
        Tape tape;
        ParamNodes nodes = stage_params(tape, p);
        EmbeddingBatch emb = encode(tape, batch, p, nodes);
        int probs = predict_risk(tape, emb, nodes);
        return tape.value(probs);
    };

    SUBCASE("w=0, b=0 gives probability one half") {
        DenseArray p = probs_with_head(0.0, 0.0);
        for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(0.5));
    }

    SUBCASE("w=0, b=20 saturates above 0.999999") {
        DenseArray p = probs_with_head(0.0, 20.0);
        for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] > 0.999999);
    }

    SUBCASE("probabilities lie strictly inside (0,1)") {
        DenseArray p = probs_with_head(3.0, -1.0);
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(p[i] > 0.0);
            CHECK(p[i] < 1.0);
        }
    }

    SUBCASE("zero static dims are handled end to end") {
        Schema s0{6, 0};
        ModelParams p0 = init_params(s0, dims, 4);
        Rng rng2(29);
        std::vector<Trajectory> b0;
        for (int i = 0; i < 3; ++i) {
            b0.push_back(make_trajectory(rng2, s0, 30.0, 2, i % 2, "s" + std::to_string(i)));
        }
        Tape tape;
        ParamNodes nodes = stage_params(tape, p0);
        EmbeddingBatch emb = encode(tape, b0, p0, nodes);
        const DenseArray& probs = tape.value(predict_risk(tape, emb, nodes));
        CHECK(probs.rows() == 3);
        for (std::size_t i = 0; i < probs.size(); ++i) {
            CHECK(probs[i] > 0.0);
            CHECK(probs[i] < 1.0);
        }
    }

    SUBCASE("negating the head mirrors probabilities") {
        DenseArray p = probs_with_head(0.7, 0.3);
        ModelParams neg = params;
        for (std::size_t i = 0; i < neg.head_weight.size(); ++i) neg.head_weight[i] = -0.7;
        neg.head_bias[0] = -0.3;
        Tape tape;
        ParamNodes nodes = stage_params(tape, neg);
        EmbeddingBatch emb = encode(tape, batch, neg, nodes);
        const DenseArray& q = tape.value(predict_risk(tape, emb, nodes));
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(q[i] == doctest::Approx(1.0 - p[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("full pipeline gradients match finite differences") {
    Rng rng(31);
    Schema schema{5, 2};
    ModelDims dims{3, 2, 3, {4}};
    std::vector<Trajectory> batch;
    for (int i = 0; i < 5; ++i) {
        batch.push_back(
            make_trajectory(rng, schema, 20.0, 1 + static_cast<std::size_t>(i % 3), i % 2,
                            "p" + std::to_string(i)));
    }

    ModelParams params = init_params(schema, dims, 7);
    DenseArray flat0 = flatten_params(params);

    auto loss_at = [&](const DenseArray& flat) {
        ModelParams p = unflatten_params(flat, schema, dims, params.time_frequencies);
        Tape tape;
        ParamNodes nodes = stage_params(tape, p);
        EmbeddingBatch emb = encode(tape, batch, p, nodes);
        int probs = predict_risk(tape, emb, nodes);
        return tape.value(tape.mean(tape.square(probs)))[0];
    };

    Tape tape;
    ParamNodes nodes = stage_params(tape, params);
    EmbeddingBatch emb = encode(tape, batch, params, nodes);
    int probs = predict_risk(tape, emb, nodes);
    auto grads = tape.backward(tape.mean(tape.square(probs)));

    std::vector<double> analytic;
    for (int leaf : nodes.ordered) {
        const DenseArray& g = grads.at(leaf);
        analytic.insert(analytic.end(), g.data().begin(), g.data().end());
    }
    DenseArray fd = oal::finite_difference_gradient(loss_at, flat0, 1e-5);
    REQUIRE(fd.size() == analytic.size());
    for (std::size_t i = 0; i < fd.size(); ++i) {
        double denom = std::max({std::abs(fd[i]), std::abs(analytic[i]), 0.01});
        CHECK(std::abs(fd[i] - analytic[i]) / denom < 1e-4);
    }
}
