#pragma once

// Independent brute-force oracles used to check the implementation. Nothing
// here shares code with the library paths it verifies: AUROC counts pairs
// exhaustively, statistics use plain double loops, the matrix inverse is
// Gauss-Jordan, and logistic regression is IRLS on raw vectors.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "core/dense_array.hpp"

namespace oracles {

// Half-credit Mann-Whitney over all (positive, negative) pairs, O(N^2).
inline double auroc_pairs(std::span<const double> scores, std::span<const int> labels) {
    double wins = 0.0;
    std::size_t n_pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++n_pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    if (n_pairs == 0) throw std::runtime_error("auroc_pairs: need both classes");
    return wins / static_cast<double>(n_pairs);
}

struct ClassStatsOracle {
    std::vector<double> mu0, mu1;
    std::size_t n0 = 0, n1 = 0;
    double scatter_trace = 0.0;
    std::vector<double> pooled_cov;  // d x d, averaged over classes, 1/N_c weighting
};

// Naive double-loop class statistics over an N x d embedding matrix.
inline ClassStatsOracle class_stats_loops(const oal::DenseArray& z, std::span<const int> labels) {
    const std::size_t n = z.rows(), d = z.cols();
    ClassStatsOracle out;
    out.mu0.assign(d, 0.0);
    out.mu1.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == 0) {
            ++out.n0;
            for (std::size_t c = 0; c < d; ++c) out.mu0[c] += z.at(i, c);
        } else {
            ++out.n1;
            for (std::size_t c = 0; c < d; ++c) out.mu1[c] += z.at(i, c);
        }
    }
    if (out.n0) for (double& v : out.mu0) v /= static_cast<double>(out.n0);
    if (out.n1) for (double& v : out.mu1) v /= static_cast<double>(out.n1);

    std::vector<double> cov0(d * d, 0.0), cov1(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double>& mu = labels[i] == 0 ? out.mu0 : out.mu1;
        std::vector<double>& cov = labels[i] == 0 ? cov0 : cov1;
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                cov[a * d + b] += (z.at(i, a) - mu[a]) * (z.at(i, b) - mu[b]);
    }
    if (out.n0) for (double& v : cov0) v /= static_cast<double>(out.n0);
    if (out.n1) for (double& v : cov1) v /= static_cast<double>(out.n1);

    for (std::size_t a = 0; a < d; ++a) {
        if (out.n0) out.scatter_trace += cov0[a * d + a];
        if (out.n1) out.scatter_trace += cov1[a * d + a];
    }
    out.pooled_cov.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d * d; ++i) out.pooled_cov[i] = 0.5 * (cov0[i] + cov1[i]);
    return out;
}

// Gauss-Jordan inverse; throws on numerical singularity.
inline std::vector<double> invert(std::vector<double> a, std::size_t d) {
    std::vector<double> inv(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) inv[i * d + i] = 1.0;
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < d; ++r) {
            if (std::abs(a[r * d + col]) > std::abs(a[pivot * d + col])) pivot = r;
        }
        if (std::abs(a[pivot * d + col]) < 1e-300) throw std::runtime_error("invert: singular");
        if (pivot != col) {
            for (std::size_t c = 0; c < d; ++c) {
                std::swap(a[pivot * d + c], a[col * d + c]);
                std::swap(inv[pivot * d + c], inv[col * d + c]);
            }
        }
        double p = a[col * d + col];
        for (std::size_t c = 0; c < d; ++c) {
            a[col * d + c] /= p;
            inv[col * d + c] /= p;
        }
        for (std::size_t r = 0; r < d; ++r) {
            if (r == col) continue;
            double f = a[r * d + col];
            if (f == 0.0) continue;
            for (std::size_t c = 0; c < d; ++c) {
                a[r * d + c] -= f * a[col * d + c];
                inv[r * d + c] -= f * inv[col * d + c];
            }
        }
    }
    return inv;
}

// gap^T (pooled + ridge I)^-1 gap with the same ridge rule the library uses.
inline double mahalanobis_sq_oracle(const oal::DenseArray& z, std::span<const int> labels) {
    ClassStatsOracle s = class_stats_loops(z, labels);
    const std::size_t d = z.cols();
    double trace = 0.0;
    for (std::size_t a = 0; a < d; ++a) trace += s.pooled_cov[a * d + a];
    double ridge = 1e-6 * trace / static_cast<double>(d);
    std::vector<double> m = s.pooled_cov;
    for (std::size_t a = 0; a < d; ++a) m[a * d + a] += ridge;
    std::vector<double> inv = invert(std::move(m), d);
    double out = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
        double ga = s.mu1[a] - s.mu0[a];
        for (std::size_t b = 0; b < d; ++b) out += ga * inv[a * d + b] * (s.mu1[b] - s.mu0[b]);
    }
    return out;
}

// Plain logistic regression via IRLS; returns coefficients (bias last).
inline std::vector<double> logistic_regression(const std::vector<std::vector<double>>& x,
                                               std::span<const int> y, int iterations = 25) {
    const std::size_t n = x.size();
    const std::size_t d = x[0].size() + 1;  // + bias
    std::vector<double> beta(d, 0.0);
    auto feat = [&](std::size_t i, std::size_t c) {
        return c + 1 == d ? 1.0 : x[i][c];
    };
    for (int it = 0; it < iterations; ++it) {
        std::vector<double> hessian(d * d, 0.0), grad(d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double logit = 0.0;
            for (std::size_t c = 0; c < d; ++c) logit += beta[c] * feat(i, c);
            double p = 1.0 / (1.0 + std::exp(-logit));
            double w = std::max(p * (1.0 - p), 1e-9);
            double r = static_cast<double>(y[i]) - p;
            for (std::size_t a = 0; a < d; ++a) {
                grad[a] += r * feat(i, a);
                for (std::size_t b = 0; b < d; ++b) hessian[a * d + b] += w * feat(i, a) * feat(i, b);
            }
        }
        for (std::size_t a = 0; a < d; ++a) hessian[a * d + a] += 1e-8;
        std::vector<double> hinv = invert(std::move(hessian), d);
        double step_sq = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
            double s = 0.0;
            for (std::size_t b = 0; b < d; ++b) s += hinv[a * d + b] * grad[b];
            beta[a] += s;
            step_sq += s * s;
        }
        if (step_sq < 1e-16) break;
    }
    return beta;
}

}  // namespace oracles
