#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "core/dense_array.hpp"

namespace oal {

struct MetricsReport {
    double auroc = 0.0;
    double auprc = 0.0;
    double brier = 0.0;
    double ece = 0.0;
    std::size_t n = 0;
    double prevalence = 0.0;
};

struct GeometryReport {
    double mean_gap_sq = 0.0;   // ||mu1 - mu0||^2
    double scatter_trace = 0.0;  // tr(Sigma_w), 1/N_c weighting
    double rayleigh = 0.0;       // mean_gap_sq / (scatter_trace + epsilon)
    double epsilon = 0.0;        // the epsilon the rayleigh above was computed with
    double mahalanobis_sq = 0.0;
    bool mahalanobis_defined = false;
};

// Mann-Whitney statistic (ties get half credit), computed via sort in
// O(N log N). Errors when only one class is present.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Average precision: precision at each positive's threshold times the recall
// increment, with tied scores entering together. No interpolation.
double auprc(std::span<const double> scores, std::span<const int> labels);

// Mean squared error between probability and outcome.
double brier(std::span<const double> scores, std::span<const int> labels);

// Equal-width binning on [0,1], right-closed at 1.0; empty bins contribute 0.
double ece(std::span<const double> scores, std::span<const int> labels, std::size_t num_bins);

MetricsReport compute_metrics(std::span<const double> scores, std::span<const int> labels,
                              std::size_t ece_bins);

// Dataset-level embedding geometry. mahalanobis_sq uses the pooled
// within-class covariance (1/N_c weighting, averaged over the two classes)
// with a scale-aware ridge delta = 1e-6 * tr / d; reported as undefined when
// the ridged matrix is still numerically singular.
GeometryReport geometry_report(const DenseArray& embeddings, std::span<const int> labels,
                               double epsilon);

// Phi(delta / sqrt(2)): AUROC of the Bayes-optimal linear score for two
// Gaussians with shared covariance at Mahalanobis distance delta.
double gaussian_bayes_auroc(double mahalanobis_distance);

// Line-oriented key=value block; either report may be omitted.
std::string format_reports_text(const MetricsReport* metrics, const GeometryReport* geometry);

}  // namespace oal
