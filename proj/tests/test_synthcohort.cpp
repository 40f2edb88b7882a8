#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "core/error.hpp"
#include "core/metrics.hpp"
#include "core/synthcohort.hpp"
#include "test_oracles.hpp"

using namespace oal;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("oal_synthtest_" + name);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

CohortSpec small_spec() {
    CohortSpec spec;
    spec.n_patients = 200;
    spec.seed = 11;
    return spec;
}

}  // namespace

TEST_CASE("generation is deterministic") {
    CohortSpec spec = small_spec();
    Cohort a = generate_cohort(spec);
    Cohort b = generate_cohort(spec);
    CHECK(cohort_equal(a, b));

    fs::path pa = temp_file("det_a.jsonl"), pb = temp_file("det_b.jsonl");
    write_cohort(a, pa);
    write_cohort(b, pb);
    CHECK(slurp(pa) == slurp(pb));
    fs::remove(pa);
    fs::remove(pb);

    SUBCASE("different seed changes the cohort") {
        CohortSpec other = spec;
        other.seed = 12;
        CHECK_FALSE(cohort_equal(a, generate_cohort(other)));
    }
}

TEST_CASE("trajectories satisfy their invariants") {
    Cohort c = generate_cohort(small_spec());
    const CohortSpec& spec = c.provenance;
    for (const Trajectory& t : c.trajectories) {
        CHECK(t.static_features.size() == static_cast<std::size_t>(spec.static_dim));
        CHECK((t.label == 0 || t.label == 1));
        std::int64_t n_events = static_cast<std::int64_t>(t.events.size());
        CHECK(n_events >= spec.events_min);
        CHECK(n_events <= spec.events_max);
        double prev = 0.0;
        for (const Event& e : t.events) {
            CHECK(e.feature_id >= 0);
            CHECK(e.feature_id < spec.feature_count);
            CHECK(e.time >= prev);
            CHECK(e.time <= t.prediction_time);
            prev = e.time;
        }
    }
}

TEST_CASE("prevalence concentrates around the target") {
    CohortSpec spec;
    spec.n_patients = 10000;
    spec.prevalence = 0.3;
    spec.seed = 7;
    Cohort c = generate_cohort(spec);
    CHECK(c.prevalence() > 0.25);
    CHECK(c.prevalence() < 0.35);
}

TEST_CASE("planted latent geometry") {
    CohortSpec spec;
    spec.n_patients = 100000;
    spec.seed = 5;

    const std::size_t n = static_cast<std::size_t>(spec.n_patients);
    std::vector<LatentSample> latents;
    latents.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        latents.push_back(sample_latent(spec, static_cast<std::int64_t>(i)));
    }

    SUBCASE("empirical latent Mahalanobis distance is close to the effect size") {
        const std::size_t d = static_cast<std::size_t>(spec.signal_dim);
        DenseArray u = DenseArray::zeros({n, d});
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = latents[i].label;
            for (std::size_t c = 0; c < d; ++c) u.at(i, c) = latents[i].signal[c];
        }
        double m2 = oracles::mahalanobis_sq_oracle(u, labels);
        CHECK(std::abs(std::sqrt(m2) - spec.effect_size) < 0.1);
    }

    SUBCASE("nuisance coordinates are label independent") {
        const std::size_t d = static_cast<std::size_t>(spec.nuisance_dim);
        double mean_y = 0.0;
        for (const LatentSample& s : latents) mean_y += s.label;
        mean_y /= static_cast<double>(n);
        double var_y = mean_y * (1.0 - mean_y);
        for (std::size_t c = 0; c < d; ++c) {
            double mean_v = 0.0, var_v = 0.0, cov = 0.0;
            for (const LatentSample& s : latents) mean_v += s.nuisance[c];
            mean_v /= static_cast<double>(n);
            for (const LatentSample& s : latents) {
                double dv = s.nuisance[c] - mean_v;
                var_v += dv * dv;
                cov += dv * (s.label - mean_y);
            }
            var_v /= static_cast<double>(n);
            cov /= static_cast<double>(n);
            double corr = cov / std::sqrt(var_v * var_y);
            CHECK(std::abs(corr) < 0.02);
        }
    }

    SUBCASE("logistic regression on latents reaches the Bayes ceiling") {
        std::vector<std::vector<double>> x(n);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = latents[i].label;
            x[i] = latents[i].signal;
            x[i].insert(x[i].end(), latents[i].nuisance.begin(), latents[i].nuisance.end());
        }
        std::vector<double> beta = oracles::logistic_regression(x, labels, 12);
        std::vector<double> scores(n);
        for (std::size_t i = 0; i < n; ++i) {
            double logit = beta.back();
            for (std::size_t c = 0; c < x[i].size(); ++c) logit += beta[c] * x[i][c];
            scores[i] = logit;
        }
        double ceiling = gaussian_bayes_auroc(spec.effect_size);
        CHECK(std::abs(auroc(scores, labels) - ceiling) < 0.01);
    }
}

TEST_CASE("split_cohort") {
    CohortSpec spec = small_spec();
    spec.n_patients = 100;
    Cohort c = generate_cohort(spec);

    auto parts = split_cohort(c, 0.8, 0.1, 0.1, 3);
    CHECK(parts[0].trajectories.size() == 80);
    CHECK(parts[1].trajectories.size() == 10);
    CHECK(parts[2].trajectories.size() == 10);

    SUBCASE("parts partition the patient ids") {
        std::set<std::string> seen;
        for (const Cohort& part : parts) {
            for (const Trajectory& t : part.trajectories) {
                CHECK(seen.insert(t.patient_id).second);  // pairwise disjoint
            }
        }
        CHECK(seen.size() == 100);
    }

    SUBCASE("deterministic in seed") {
        auto again = split_cohort(c, 0.8, 0.1, 0.1, 3);
        for (int i = 0; i < 3; ++i) CHECK(cohort_equal(parts[i], again[i]));
        auto other = split_cohort(c, 0.8, 0.1, 0.1, 4);
        CHECK_FALSE(cohort_equal(parts[0], other[0]));
    }

    SUBCASE("bad ratios rejected") {
        CHECK_THROWS_AS(split_cohort(c, 0.8, 0.1, 0.2, 3), Error);
        CHECK_THROWS_AS(split_cohort(c, 1.0, 0.0, 0.0, 3), Error);
    }

    SUBCASE("empty part rejected") {
        CohortSpec tiny = spec;
        tiny.n_patients = 4;
        CHECK_THROWS_AS(split_cohort(generate_cohort(tiny), 0.9, 0.05, 0.05, 3), Error);
    }
}

TEST_CASE("subsample_fraction") {
    CohortSpec spec = small_spec();
    spec.n_patients = 1000;
    Cohort c = generate_cohort(spec);

    SUBCASE("fraction 1.0 is the identity") {
        CHECK(cohort_equal(subsample_fraction(c, 1.0, 9), c));
    }

    SUBCASE("exact count") {
        CHECK(subsample_fraction(c, 0.25, 9).trajectories.size() == 250);
    }

    SUBCASE("nesting across fractions under one seed") {
        Cohort half = subsample_fraction(c, 0.5, 9);
        Cohort quarter = subsample_fraction(c, 0.25, 9);
        std::set<std::string> in_half;
        for (const Trajectory& t : half.trajectories) in_half.insert(t.patient_id);
        for (const Trajectory& t : quarter.trajectories) {
            CHECK(in_half.count(t.patient_id) == 1);
        }
    }

    SUBCASE("deterministic") {
        CHECK(cohort_equal(subsample_fraction(c, 0.3, 9), subsample_fraction(c, 0.3, 9)));
    }

    SUBCASE("fraction out of range rejected") {
        CHECK_THROWS_AS(subsample_fraction(c, 0.0, 9), Error);
        CHECK_THROWS_AS(subsample_fraction(c, 1.5, 9), Error);
    }

    SUBCASE("errors when a class cannot be retained") {
        Cohort single = c;
        single.trajectories.resize(4);
        for (Trajectory& t : single.trajectories) t.label = 0;
        CHECK_THROWS_AS(subsample_fraction(single, 0.5, 9), Error);
    }
}

TEST_CASE("cohort file round trip") {
    CohortSpec spec = small_spec();
    spec.n_patients = 3;
    Cohort c = generate_cohort(spec);
    fs::path p = temp_file("roundtrip.jsonl");
    write_cohort(c, p);
    Cohort back = read_cohort(p);
    CHECK(cohort_equal(c, back));

    SUBCASE("rewrite is byte identical") {
        fs::path p2 = temp_file("roundtrip2.jsonl");
        write_cohort(back, p2);
        CHECK(slurp(p) == slurp(p2));
        fs::remove(p2);
    }
    fs::remove(p);
}

TEST_CASE("cohort file validation") {
    fs::path p = temp_file("invalid.jsonl");

    SUBCASE("empty file reports missing header") {
        std::ofstream(p).close();
        CHECK_THROWS_WITH_AS(read_cohort(p), doctest::Contains("no header record"), Error);
    }

    SUBCASE("feature_id outside schema names the line") {
        CohortSpec spec = small_spec();
        spec.n_patients = 2;
        Cohort c = generate_cohort(spec);
        c.trajectories[1].events[0].feature_id = spec.feature_count;  // out of range
        write_cohort(c, p);
        CHECK_THROWS_WITH_AS(read_cohort(p), doctest::Contains("line 3"), Error);
    }

    SUBCASE("malformed json names the line") {
        CohortSpec spec = small_spec();
        spec.n_patients = 2;
        write_cohort(generate_cohort(spec), p);
        std::ofstream out(p, std::ios::app);
        out << "{not json\n";
        out.close();
        CHECK_THROWS_WITH_AS(read_cohort(p), doctest::Contains("line 4"), Error);
    }

    SUBCASE("unsorted events rejected") {
        CohortSpec spec = small_spec();
        spec.n_patients = 1;
        Cohort c = generate_cohort(spec);
        REQUIRE(c.trajectories[0].events.size() >= 2);
        std::swap(c.trajectories[0].events.front(), c.trajectories[0].events.back());
        write_cohort(c, p);
        CHECK_THROWS_WITH_AS(read_cohort(p), doctest::Contains("sorted"), Error);
    }

    SUBCASE("missing file is an io error") {
        CHECK_THROWS_AS(read_cohort(temp_file("does_not_exist.jsonl")), Error);
    }

    SUBCASE("header with invalid schema rejected") {
        CohortSpec spec = small_spec();
        spec.n_patients = 1;
        write_cohort(generate_cohort(spec), p);
        std::string text = slurp(p);
        auto pos = text.find("\"F\":64");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 6, "\"F\":0 ");
        std::ofstream out(p, std::ios::binary);
        out << text;
        out.close();
        CHECK_THROWS_WITH_AS(read_cohort(p), doctest::Contains("schema"), Error);
    }

    fs::remove(p);
}

TEST_CASE("spec validation") {
    CohortSpec spec;
    validate(spec);

    CohortSpec bad = spec;
    bad.prevalence = 1.5;
    CHECK_THROWS_AS(validate(bad), Error);
    bad = spec;
    bad.signal_dim = 40;
    bad.nuisance_dim = 40;
    bad.feature_count = 64;
    CHECK_THROWS_AS(validate(bad), Error);
    bad = spec;
    bad.events_max = bad.events_min - 1;
    CHECK_THROWS_AS(validate(bad), Error);
    bad = spec;
    bad.effect_size = 0.0;
    CHECK_THROWS_AS(validate(bad), Error);
}
