#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "core/error.hpp"
#include "core/text_format.hpp"

namespace oal {

namespace {

void check_sizes(std::span<const double> scores, std::span<const int> labels, const char* op) {
    if (scores.size() != labels.size()) {
        fail(ErrorKind::invalid_argument,
             std::string(op) + ": " + std::to_string(scores.size()) + " scores vs " +
                 std::to_string(labels.size()) + " labels");
    }
    if (scores.empty()) fail(ErrorKind::invalid_argument, std::string(op) + ": empty input");
    for (int y : labels) {
        if (y != 0 && y != 1) {
            fail(ErrorKind::invalid_argument, std::string(op) + ": labels must be 0 or 1");
        }
    }
}

std::size_t count_positives(std::span<const int> labels) {
    std::size_t n1 = 0;
    for (int y : labels) n1 += static_cast<std::size_t>(y);
    return n1;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
    check_sizes(scores, labels, "auroc");
    const std::size_t n = scores.size();
    const std::size_t n1 = count_positives(labels);
    const std::size_t n0 = n - n1;
    if (n0 == 0 || n1 == 0) {
        fail(ErrorKind::metric_undefined, "AUROC undefined: only one class present");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks over tie groups; the rank-sum of positives gives the
    // half-credit Mann-Whitney statistic.
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t t = i; t < j; ++t) {
            if (labels[order[t]] == 1) pos_rank_sum += midrank;
        }
        i = j;
    }
    double u = pos_rank_sum - 0.5 * static_cast<double>(n1) * static_cast<double>(n1 + 1);
    return u / (static_cast<double>(n1) * static_cast<double>(n0));
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
    check_sizes(scores, labels, "auprc");
    const std::size_t n = scores.size();
    const std::size_t n1 = count_positives(labels);
    if (n1 == 0) fail(ErrorKind::metric_undefined, "AUPRC undefined: no positives");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        std::size_t group_tp = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            group_tp += static_cast<std::size_t>(labels[order[j]]);
            ++j;
        }
        std::size_t group_size = j - i;
        tp += group_tp;
        fp += group_size - group_tp;
        if (group_tp > 0) {
            double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            double recall_inc = static_cast<double>(group_tp) / static_cast<double>(n1);
            ap += precision * recall_inc;
        }
        i = j;
    }
    return ap;
}

double brier(std::span<const double> scores, std::span<const int> labels) {
    check_sizes(scores, labels, "brier");
    double acc = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] < 0.0 || scores[i] > 1.0) {
            fail(ErrorKind::invalid_argument, "brier: scores must lie in [0, 1]");
        }
        double r = scores[i] - static_cast<double>(labels[i]);
        acc += r * r;
    }
    return acc / static_cast<double>(scores.size());
}

double ece(std::span<const double> scores, std::span<const int> labels, std::size_t num_bins) {
    check_sizes(scores, labels, "ece");
    if (num_bins < 1) fail(ErrorKind::invalid_argument, "ece: num_bins must be >= 1");
    std::vector<double> score_sum(num_bins, 0.0);
    std::vector<double> pos_sum(num_bins, 0.0);
    std::vector<std::size_t> count(num_bins, 0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] < 0.0 || scores[i] > 1.0) {
            fail(ErrorKind::invalid_argument, "ece: scores must lie in [0, 1]");
        }
        std::size_t b = static_cast<std::size_t>(scores[i] * static_cast<double>(num_bins));
        if (b >= num_bins) b = num_bins - 1;  // score of exactly 1.0 falls in the last bin
        score_sum[b] += scores[i];
        pos_sum[b] += static_cast<double>(labels[i]);
        count[b] += 1;
    }
    double acc = 0.0;
    const double n = static_cast<double>(scores.size());
    for (std::size_t b = 0; b < num_bins; ++b) {
        if (count[b] == 0) continue;
        double cnt = static_cast<double>(count[b]);
        acc += (cnt / n) * std::abs(score_sum[b] / cnt - pos_sum[b] / cnt);
    }
    return acc;
}

MetricsReport compute_metrics(std::span<const double> scores, std::span<const int> labels,
                              std::size_t ece_bins) {
    MetricsReport r;
    r.auroc = auroc(scores, labels);
    r.auprc = auprc(scores, labels);
    r.brier = brier(scores, labels);
    r.ece = ece(scores, labels, ece_bins);
    r.n = scores.size();
    r.prevalence =
        static_cast<double>(count_positives(labels)) / static_cast<double>(labels.size());
    return r;
}

namespace {

// Cholesky solve of (A + 0) x = b for SPD A; returns false when a pivot is
// not strictly positive.
bool cholesky_solve(std::vector<double> a, std::size_t d, const std::vector<double>& b,
                    std::vector<double>& x) {
    std::vector<double> chol(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a[i * d + j];
            for (std::size_t t = 0; t < j; ++t) s -= chol[i * d + t] * chol[j * d + t];
            if (i == j) {
                if (!(s > 0.0)) return false;
                chol[i * d + j] = std::sqrt(s);
            } else {
                chol[i * d + j] = s / chol[j * d + j];
            }
        }
    }
    x.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        double s = b[i];
        for (std::size_t t = 0; t < i; ++t) s -= chol[i * d + t] * x[t];
        x[i] = s / chol[i * d + i];
    }
    for (std::size_t ii = d; ii-- > 0;) {
        double s = x[ii];
        for (std::size_t t = ii + 1; t < d; ++t) s -= chol[t * d + ii] * x[t];
        x[ii] = s / chol[ii * d + ii];
    }
    return true;
}

}  // namespace

GeometryReport geometry_report(const DenseArray& embeddings, std::span<const int> labels,
                               double epsilon) {
    if (embeddings.rows() != labels.size()) {
        fail(ErrorKind::invalid_argument, "geometry_report: row/label count mismatch");
    }
    if (labels.empty()) fail(ErrorKind::invalid_argument, "geometry_report: empty input");
    if (!(epsilon > 0.0)) fail(ErrorKind::invalid_argument, "geometry_report: epsilon must be > 0");

    const std::size_t d = embeddings.cols();
    std::vector<std::size_t> idx0, idx1;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            fail(ErrorKind::invalid_argument, "geometry_report: labels must be 0 or 1");
        }
        (labels[i] == 0 ? idx0 : idx1).push_back(i);
    }
    if (idx0.empty() || idx1.empty()) {
        fail(ErrorKind::metric_undefined, "geometry_report: both classes required");
    }

    auto class_mean = [&](const std::vector<std::size_t>& idx) {
        std::vector<double> mu(d, 0.0);
        for (std::size_t i : idx)
            for (std::size_t c = 0; c < d; ++c) mu[c] += embeddings.at(i, c);
        for (double& v : mu) v /= static_cast<double>(idx.size());
        return mu;
    };
    std::vector<double> mu0 = class_mean(idx0);
    std::vector<double> mu1 = class_mean(idx1);

    std::vector<double> gap(d);
    double gap_sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
        gap[c] = mu1[c] - mu0[c];
        gap_sq += gap[c] * gap[c];
    }

    // Class covariance with 1/N_c weighting; the scatter trace sums the two,
    // the Mahalanobis pool averages them.
    std::vector<double> cov0(d * d, 0.0), cov1(d * d, 0.0);
    auto accumulate_cov = [&](const std::vector<std::size_t>& idx, const std::vector<double>& mu,
                              std::vector<double>& cov) {
        for (std::size_t i : idx)
            for (std::size_t a = 0; a < d; ++a) {
                double ra = embeddings.at(i, a) - mu[a];
                for (std::size_t b = 0; b < d; ++b) {
                    cov[a * d + b] += ra * (embeddings.at(i, b) - mu[b]);
                }
            }
        const double inv = 1.0 / static_cast<double>(idx.size());
        for (double& v : cov) v *= inv;
    };
    accumulate_cov(idx0, mu0, cov0);
    accumulate_cov(idx1, mu1, cov1);

    double scatter_trace = 0.0;
    for (std::size_t a = 0; a < d; ++a) scatter_trace += cov0[a * d + a] + cov1[a * d + a];

    GeometryReport r;
    r.mean_gap_sq = gap_sq;
    r.scatter_trace = scatter_trace;
    r.epsilon = epsilon;
    r.rayleigh = gap_sq / (scatter_trace + epsilon);

    std::vector<double> pooled(d * d);
    double pooled_trace = 0.0;
    for (std::size_t i = 0; i < d * d; ++i) pooled[i] = 0.5 * (cov0[i] + cov1[i]);
    for (std::size_t a = 0; a < d; ++a) pooled_trace += pooled[a * d + a];
    double ridge = 1e-6 * pooled_trace / static_cast<double>(d);
    for (std::size_t a = 0; a < d; ++a) pooled[a * d + a] += ridge;

    std::vector<double> solved;
    if (cholesky_solve(pooled, d, gap, solved)) {
        double m2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) m2 += gap[c] * solved[c];
        if (std::isfinite(m2) && m2 >= 0.0) {
            r.mahalanobis_sq = m2;
            r.mahalanobis_defined = true;
        }
    }
    return r;
}

double gaussian_bayes_auroc(double mahalanobis_distance) {
    if (mahalanobis_distance < 0.0) {
        fail(ErrorKind::invalid_argument, "gaussian_bayes_auroc: distance must be >= 0");
    }
    // Phi(delta/sqrt(2)) written via the complementary error function.
    return 0.5 * std::erfc(-mahalanobis_distance / 2.0);
}

std::string format_reports_text(const MetricsReport* metrics, const GeometryReport* geometry) {
    std::string out;
    if (metrics) {
        out += "auroc=" + format_double(metrics->auroc) + "\n";
        out += "auprc=" + format_double(metrics->auprc) + "\n";
        out += "brier=" + format_double(metrics->brier) + "\n";
        out += "ece=" + format_double(metrics->ece) + "\n";
        out += "n=" + std::to_string(metrics->n) + "\n";
        out += "prevalence=" + format_double(metrics->prevalence) + "\n";
    }
    if (geometry) {
        out += "mean_gap_sq=" + format_double(geometry->mean_gap_sq) + "\n";
        out += "scatter_trace=" + format_double(geometry->scatter_trace) + "\n";
        out += "rayleigh=" + format_double(geometry->rayleigh) + "\n";
        out += "epsilon=" + format_double(geometry->epsilon) + "\n";
        out += "mahalanobis_sq=";
        out += geometry->mahalanobis_defined ? format_double(geometry->mahalanobis_sq) : "na";
        out += "\n";
    }
    return out;
}

}  // namespace oal
