#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "core/model.hpp"

namespace oal {

// Generator parameters. The cohort plants a low-dimensional outcome signal
// (a shifted Gaussian along one fixed direction of the signal latent) inside
// high-dimensional label-independent nuisance variability.
struct CohortSpec {
    std::int64_t n_patients = 5000;
    std::int64_t feature_count = 64;  // F
    std::int64_t static_dim = 4;      // S
    double prevalence = 0.3;
    std::int64_t signal_dim = 4;
    std::int64_t nuisance_dim = 32;
    double effect_size = 2.0;  // target latent Mahalanobis distance
    std::int64_t events_min = 8;
    std::int64_t events_max = 32;
    double horizon_days = 365.0;
    std::uint64_t seed = 1;
};
void validate(const CohortSpec& spec);

struct Cohort {
    Schema schema;
    std::vector<Trajectory> trajectories;
    CohortSpec provenance;
    std::string generator_version;

    double prevalence() const;
};

// Observation model, fixed by the spec seed:
//  - even feature ids read the planted scalar e^T u (signal readers),
//  - odd feature ids read a fixed random unit mixture of the nuisance latent,
// both plus N(0, kEventValueNoise^2) observation noise. Statics expose the
// first min(S, signal_dim) coordinates of u plus N(0, kStaticNoise^2) noise;
// any remaining static slots are pure standard normal noise.
constexpr double kEventValueNoise = 0.25;
constexpr double kStaticNoise = 0.25;

Cohort generate_cohort(const CohortSpec& spec);

// The latent draw behind patient `index`, byte-identical to what
// generate_cohort used. Exposed so tests can measure the planted geometry.
struct LatentSample {
    std::vector<double> signal;    // u, after the class shift
    std::vector<double> nuisance;  // v
    int label = 0;
};
LatentSample sample_latent(const CohortSpec& spec, std::int64_t index);

// Unit vector e along which class 1 is shifted; fixed by spec.seed.
std::vector<double> signal_direction(const CohortSpec& spec);

// Patient-level disjoint partition, deterministic in seed. Ratios must be
// positive and sum to 1 (1e-9 slack); errors if any part would be empty.
std::array<Cohort, 3> split_cohort(const Cohort& cohort, double train_ratio, double val_ratio,
                                   double test_ratio, std::uint64_t seed);

// Uniform patient-level subsample without replacement; subsamples of the
// same seed nest across fractions. Retries (fresh priorities) up to 100
// times when a draw loses a class, then errors.
Cohort subsample_fraction(const Cohort& cohort, double fraction, std::uint64_t seed);

// Line-delimited text: one header record then one record per patient, reals
// serialized with round-trip-exact decimal formatting.
void write_cohort(const Cohort& cohort, const std::filesystem::path& path);
Cohort read_cohort(const std::filesystem::path& path);

bool cohort_equal(const Cohort& a, const Cohort& b);

}  // namespace oal
