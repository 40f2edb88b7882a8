#pragma once

#include <cstddef>
#include <span>

#include "core/dense_array.hpp"
#include "core/tape.hpp"

namespace oal {

enum class SingleClassPolicy { skip, use_ema };

struct ObjectiveConfig {
    double lambda = 0.05;    // regularizer strength, >= 0
    double epsilon = 1e-5;   // denominator stabilizer, > 0
    double ema_decay = -1.0;  // in [0,1) when enabled; negative disables EMA
    SingleClassPolicy single_class_policy = SingleClassPolicy::skip;
};
void validate(const ObjectiveConfig& config);

// Class-conditional batch statistics. Means use 1/N_c weighting; the scatter
// trace is tr(Sigma_w) = sum_c (1/N_c) sum_{i: y_i=c} ||z_i - mu_c||^2,
// computed without materializing the d x d matrix. Note the 1/N_c weighting
// follows the displayed within-class covariance, not the unnormalized
// textbook scatter and not the 1/(N_c - 1) sample covariance.
struct BatchStats {
    DenseArray mu0, mu1;  // 1 x d; empty when the class is absent
    std::size_t n0 = 0, n1 = 0;
    double scatter_trace = 0.0;

    // EMA state: callers seed these with the running values before
    // update_ema and read the refreshed values back afterwards.
    DenseArray ema_mu0, ema_mu1;
    bool ema0_initialized = false;
    bool ema1_initialized = false;

    // Tape nodes backing the differentiable quantities (-1 when absent).
    int mu0_node = -1, mu1_node = -1, scatter_node = -1;
};

// Mean binary cross-entropy over the batch; probabilities are clipped into
// [1e-7, 1-1e-7] before the logs. Differentiable through the tape.
int bce_loss(Tape& tape, int probs_node, std::span<const int> labels);
double bce_loss_value(std::span<const double> probs, std::span<const int> labels);

// Differentiable batch statistics over an N x d embedding node. A
// single-class batch yields stats with one undefined mean (and a scatter
// over the present class only); the consumer applies its policy.
BatchStats class_statistics(Tape& tape, int z_node, std::span<const int> labels);
// Plain-value variant (evaluation, diagnostics).
BatchStats class_statistics(const DenseArray& z, std::span<const int> labels);

// R_disc = ||mu1 - mu0||^2 / (tr(Sigma_w) + eps), differentiable through both
// numerator and denominator. When EMA means are supplied (use_ema_means),
// the numerator uses them as gradient constants and only the denominator
// remains differentiable. Not applicable when a class mean is missing and
// the policy (or uninitialized EMA) cannot supply it.
struct RayleighResult {
    int node = -1;
    bool applicable = false;
    double value = 0.0;
};
RayleighResult rayleigh_quotient(Tape& tape, const BatchStats& stats, double epsilon,
                                 bool use_ema_means, SingleClassPolicy policy);
double rayleigh_quotient_value(const BatchStats& stats, double epsilon);

// total = sup - lambda * rdisc; reduces to sup exactly when the regularizer
// is inapplicable or lambda is 0.
struct TotalLossResult {
    int node = -1;
    bool regularizer_skipped = false;
};
TotalLossResult total_loss(Tape& tape, int sup_node, const RayleighResult& rdisc, double lambda);

// ema_mu_c <- decay*ema_mu_c + (1-decay)*mu_c for classes present in the
// batch; the first observation initializes the EMA to the batch mean and
// absent classes keep their prior value. EMA values never carry gradients.
void update_ema(BatchStats& stats, double decay);

}  // namespace oal
