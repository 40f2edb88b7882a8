#include "core/objective.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace oal {

namespace {
constexpr double kProbClipLo = 1e-7;
constexpr double kProbClipHi = 1.0 - 1e-7;
}  // namespace

void validate(const ObjectiveConfig& config) {
    if (config.lambda < 0.0) {
        fail(ErrorKind::invalid_argument, "objective: lambda must be >= 0");
    }
    if (!(config.epsilon > 0.0)) {
        fail(ErrorKind::invalid_argument, "objective: epsilon must be > 0");
    }
    if (config.ema_decay >= 1.0) {
        fail(ErrorKind::invalid_argument, "objective: ema_decay must be < 1");
    }
}

int bce_loss(Tape& tape, int probs_node, std::span<const int> labels) {
    const DenseArray& probs = tape.value(probs_node);
    if (labels.empty()) fail(ErrorKind::invalid_argument, "bce_loss: empty batch");
    if (probs.size() != labels.size()) {
        fail(ErrorKind::invalid_argument,
             "bce_loss: " + std::to_string(probs.size()) + " probabilities vs " +
                 std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = labels.size();
    DenseArray y = DenseArray::zeros(probs.shape());
    DenseArray y_inv = DenseArray::zeros(probs.shape());
    DenseArray ones = DenseArray::zeros(probs.shape());
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            fail(ErrorKind::invalid_argument, "bce_loss: labels must be 0 or 1");
        }
        y[i] = static_cast<double>(labels[i]);
        y_inv[i] = 1.0 - y[i];
        ones[i] = 1.0;
    }
    int pc = tape.clip(probs_node, kProbClipLo, kProbClipHi);
    int pos_term = tape.multiply(tape.constant(std::move(y)), tape.log(pc));
    int neg_term = tape.multiply(tape.constant(std::move(y_inv)),
                                 tape.log(tape.subtract(tape.constant(std::move(ones)), pc)));
    return tape.scale(tape.mean(tape.add(pos_term, neg_term)), -1.0);
}

double bce_loss_value(std::span<const double> probs, std::span<const int> labels) {
    if (labels.empty()) fail(ErrorKind::invalid_argument, "bce_loss: empty batch");
    if (probs.size() != labels.size()) {
        fail(ErrorKind::invalid_argument, "bce_loss: size mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        double p = probs[i];
        p = p < kProbClipLo ? kProbClipLo : (p > kProbClipHi ? kProbClipHi : p);
        acc += labels[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    return acc / static_cast<double>(probs.size());
}

namespace {

// Rows of class c gathered by a constant selector matrix, so gradients flow
// back into the selected rows only.
struct ClassSelectors {
    std::vector<std::size_t> idx0, idx1;
};

ClassSelectors split_classes(std::span<const int> labels) {
    ClassSelectors s;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            fail(ErrorKind::invalid_argument, "class_statistics: labels must be 0 or 1");
        }
        (labels[i] == 0 ? s.idx0 : s.idx1).push_back(i);
    }
    return s;
}

// mu_c node (1 x d) and per-class scatter contribution node (scalar).
std::pair<int, int> class_nodes(Tape& tape, int z_node, const std::vector<std::size_t>& idx,
                                std::size_t n_total) {
    const std::size_t nc = idx.size();
    DenseArray mean_sel = DenseArray::zeros({1, n_total});
    DenseArray row_sel = DenseArray::zeros({nc, n_total});
    const double inv = 1.0 / static_cast<double>(nc);
    for (std::size_t r = 0; r < nc; ++r) {
        mean_sel.at(0, idx[r]) = inv;
        row_sel.at(r, idx[r]) = 1.0;
    }
    int mu = tape.matmul(tape.constant(std::move(mean_sel)), z_node);
    int rows = tape.matmul(tape.constant(std::move(row_sel)), z_node);
    int centered = tape.broadcast_add_row(rows, tape.scale(mu, -1.0));
    int scatter_c = tape.scale(tape.sum(tape.square(centered)), inv);
    return {mu, scatter_c};
}

}  // namespace

BatchStats class_statistics(Tape& tape, int z_node, std::span<const int> labels) {
    // Copy the extent up front: tape.value references are invalidated by
    // the node appends below.
    const std::size_t n_rows = tape.value(z_node).rows();
    if (labels.empty()) fail(ErrorKind::invalid_argument, "class_statistics: empty batch");
    if (n_rows != labels.size()) {
        fail(ErrorKind::invalid_argument,
             "class_statistics: " + std::to_string(n_rows) + " embedding rows vs " +
                 std::to_string(labels.size()) + " labels");
    }
    ClassSelectors sel = split_classes(labels);

    BatchStats stats;
    stats.n0 = sel.idx0.size();
    stats.n1 = sel.idx1.size();

    int scatter0 = -1, scatter1 = -1;
    if (stats.n0 > 0) {
        auto [mu, sc] = class_nodes(tape, z_node, sel.idx0, n_rows);
        stats.mu0_node = mu;
        stats.mu0 = tape.value(mu);
        scatter0 = sc;
    }
    if (stats.n1 > 0) {
        auto [mu, sc] = class_nodes(tape, z_node, sel.idx1, n_rows);
        stats.mu1_node = mu;
        stats.mu1 = tape.value(mu);
        scatter1 = sc;
    }
    if (scatter0 >= 0 && scatter1 >= 0) {
        stats.scatter_node = tape.add(scatter0, scatter1);
    } else {
        stats.scatter_node = scatter0 >= 0 ? scatter0 : scatter1;
    }
    stats.scatter_trace = tape.scalar_value(stats.scatter_node);
    return stats;
}

BatchStats class_statistics(const DenseArray& z, std::span<const int> labels) {
    if (labels.empty()) fail(ErrorKind::invalid_argument, "class_statistics: empty batch");
    if (z.rows() != labels.size()) {
        fail(ErrorKind::invalid_argument, "class_statistics: row/label count mismatch");
    }
    ClassSelectors sel = split_classes(labels);
    const std::size_t d = z.cols();

    BatchStats stats;
    stats.n0 = sel.idx0.size();
    stats.n1 = sel.idx1.size();

    auto fill = [&](const std::vector<std::size_t>& idx, DenseArray& mu) -> double {
        mu = DenseArray::zeros({1, d});
        const double inv = 1.0 / static_cast<double>(idx.size());
        for (std::size_t i : idx)
            for (std::size_t c = 0; c < d; ++c) mu[c] += inv * z.at(i, c);
        double acc = 0.0;
        for (std::size_t i : idx)
            for (std::size_t c = 0; c < d; ++c) {
                double r = z.at(i, c) - mu[c];
                acc += r * r;
            }
        return acc * inv;
    };

    double scatter = 0.0;
    if (stats.n0 > 0) scatter += fill(sel.idx0, stats.mu0);
    if (stats.n1 > 0) scatter += fill(sel.idx1, stats.mu1);
    stats.scatter_trace = scatter;
    return stats;
}

RayleighResult rayleigh_quotient(Tape& tape, const BatchStats& stats, double epsilon,
                                 bool use_ema_means, SingleClassPolicy policy) {
    if (!(epsilon > 0.0)) {
        fail(ErrorKind::invalid_argument, "rayleigh_quotient: epsilon must be > 0");
    }

    RayleighResult result;
    const bool both_present = stats.n0 > 0 && stats.n1 > 0;
    // A single-class batch only proceeds under the use_ema policy.
    const bool policy_allows = both_present || policy == SingleClassPolicy::use_ema;

    int num = -1;
    if (use_ema_means && policy_allows && stats.ema0_initialized && stats.ema1_initialized) {
        // EMA means enter as constants: no gradient into the history.
        DenseArray gap = DenseArray::zeros(stats.ema_mu0.shape());
        for (std::size_t i = 0; i < gap.size(); ++i) gap[i] = stats.ema_mu1[i] - stats.ema_mu0[i];
        num = tape.sum(tape.square(tape.constant(std::move(gap))));
    } else if (both_present) {
        num = tape.sum(tape.square(tape.subtract(stats.mu1_node, stats.mu0_node)));
    } else if (policy == SingleClassPolicy::use_ema) {
        // Substitute the absent class mean with its EMA, when initialized.
        const bool missing0 = stats.n0 == 0;
        const DenseArray& ema = missing0 ? stats.ema_mu0 : stats.ema_mu1;
        const bool ready = missing0 ? stats.ema0_initialized : stats.ema1_initialized;
        if (ready) {
            int present = missing0 ? stats.mu1_node : stats.mu0_node;
            int gap = tape.subtract(present, tape.constant(ema));
            num = tape.sum(tape.square(gap));
        }
    }
    if (num < 0) return result;  // not applicable; caller treats contribution as 0

    int den = tape.add(stats.scatter_node, tape.constant(DenseArray::scalar(epsilon)));
    result.node = tape.divide(num, den);
    result.applicable = true;
    result.value = tape.scalar_value(result.node);
    return result;
}

double rayleigh_quotient_value(const BatchStats& stats, double epsilon) {
    if (!(epsilon > 0.0)) {
        fail(ErrorKind::invalid_argument, "rayleigh_quotient: epsilon must be > 0");
    }
    if (stats.n0 == 0 || stats.n1 == 0) {
        fail(ErrorKind::metric_undefined, "rayleigh_quotient: both class means required");
    }
    double gap_sq = 0.0;
    for (std::size_t i = 0; i < stats.mu0.size(); ++i) {
        double g = stats.mu1[i] - stats.mu0[i];
        gap_sq += g * g;
    }
    return gap_sq / (stats.scatter_trace + epsilon);
}

TotalLossResult total_loss(Tape& tape, int sup_node, const RayleighResult& rdisc, double lambda) {
    if (lambda < 0.0) fail(ErrorKind::invalid_argument, "total_loss: lambda must be >= 0");
    TotalLossResult out;
    if (!rdisc.applicable) {
        out.node = sup_node;
        out.regularizer_skipped = true;
        return out;
    }
    if (lambda == 0.0) {
        // Bit-exact reduction to the supervised loss.
        out.node = sup_node;
        return out;
    }
    out.node = tape.add(sup_node, tape.scale(rdisc.node, -lambda));
    return out;
}

void update_ema(BatchStats& stats, double decay) {
    if (decay < 0.0 || decay >= 1.0) {
        fail(ErrorKind::invalid_argument, "update_ema: decay must be in [0, 1)");
    }
    auto blend = [&](const DenseArray& mu, DenseArray& ema, bool& initialized) {
        if (!initialized) {
            ema = mu;
            initialized = true;
            return;
        }
        for (std::size_t i = 0; i < ema.size(); ++i) {
            ema[i] = decay * ema[i] + (1.0 - decay) * mu[i];
        }
    };
    if (stats.n0 > 0) blend(stats.mu0, stats.ema_mu0, stats.ema0_initialized);
    if (stats.n1 > 0) blend(stats.mu1, stats.ema_mu1, stats.ema1_initialized);
}

}  // namespace oal
