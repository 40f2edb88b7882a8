// Exercises the shared library strictly through the public C header, the way
// an external client would: opaque handles, status codes, POD reports.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "outalign.h"

namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("oal_capitest_" + name);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

oal_cohort* make_cohort(int64_t n, uint64_t seed) {
    oal_cohort_spec spec;
    oal_cohort_spec_defaults(&spec);
    spec.n_patients = n;
    spec.seed = seed;
    oal_cohort* c = nullptr;
    REQUIRE(oal_cohort_generate(&spec, &c) == OAL_OK);
    return c;
}

}  // namespace

TEST_CASE("version and defaults") {
    CHECK(std::string(oal_version()).rfind("outalign", 0) == 0);

    oal_cohort_spec spec;
    oal_cohort_spec_defaults(&spec);
    CHECK(spec.n_patients == 5000);
    CHECK(spec.prevalence == 0.3);
    CHECK(spec.nuisance_dim == 32);

    oal_model_dims dims;
    oal_model_dims_defaults(&dims);
    CHECK(dims.embed_k == 16);
    CHECK(dims.out_d == 16);
    CHECK(dims.hidden_count == 1);
    CHECK(dims.hidden[0] == 32);

    oal_train_config config;
    oal_train_config_defaults(&config);
    CHECK(config.lambda == 0.05);
    CHECK(config.epsilon == 1e-5);
    CHECK(config.batch_size == 64);
    CHECK(config.epochs == 30);
    CHECK(config.learning_rate == 0.05);
    CHECK(config.momentum == 0.9);
}

TEST_CASE("null arguments yield invalid-argument with a message") {
    CHECK(oal_cohort_generate(nullptr, nullptr) == OAL_ERR_INVALID_ARGUMENT);
    CHECK(std::strlen(oal_last_error()) > 0);
    CHECK(oal_cohort_read(nullptr, nullptr) == OAL_ERR_INVALID_ARGUMENT);
    CHECK(oal_params_load(nullptr, nullptr) == OAL_ERR_INVALID_ARGUMENT);
}

TEST_CASE("cohort lifecycle through the C API") {
    oal_cohort* c = make_cohort(120, 5);
    CHECK(oal_cohort_size(c) == 120);
    CHECK(oal_cohort_feature_count(c) == 64);
    CHECK(oal_cohort_static_dim(c) == 4);
    CHECK(oal_cohort_prevalence(c) > 0.1);
    CHECK(oal_cohort_prevalence(c) < 0.5);

    SUBCASE("write, read back, write again: byte identical") {
        fs::path p1 = temp_file("c1.jsonl"), p2 = temp_file("c2.jsonl");
        REQUIRE(oal_cohort_write(c, p1.string().c_str()) == OAL_OK);
        oal_cohort* back = nullptr;
        REQUIRE(oal_cohort_read(p1.string().c_str(), &back) == OAL_OK);
        CHECK(oal_cohort_size(back) == 120);
        REQUIRE(oal_cohort_write(back, p2.string().c_str()) == OAL_OK);
        CHECK(slurp(p1) == slurp(p2));
        oal_cohort_free(back);
        fs::remove(p1);
        fs::remove(p2);
    }

    SUBCASE("split partitions the cohort") {
        oal_cohort *tr = nullptr, *va = nullptr, *te = nullptr;
        REQUIRE(oal_cohort_split(c, 0.5, 0.25, 0.25, 3, &tr, &va, &te) == OAL_OK);
        CHECK(oal_cohort_size(tr) == 60);
        CHECK(oal_cohort_size(va) == 30);
        CHECK(oal_cohort_size(te) == 30);
        oal_cohort_free(tr);
        oal_cohort_free(va);
        oal_cohort_free(te);
    }

    SUBCASE("subsample") {
        oal_cohort* sub = nullptr;
        REQUIRE(oal_cohort_subsample(c, 0.5, 7, &sub) == OAL_OK);
        CHECK(oal_cohort_size(sub) == 60);
        oal_cohort_free(sub);
        CHECK(oal_cohort_subsample(c, 0.0, 7, &sub) == OAL_ERR_INVALID_ARGUMENT);
    }

    SUBCASE("invalid spec rejected") {
        oal_cohort_spec bad;
        oal_cohort_spec_defaults(&bad);
        bad.prevalence = 2.0;
        oal_cohort* out = nullptr;
        CHECK(oal_cohort_generate(&bad, &out) == OAL_ERR_INVALID_ARGUMENT);
    }

    SUBCASE("missing cohort file is an io error") {
        oal_cohort* out = nullptr;
        CHECK(oal_cohort_read(temp_file("nope.jsonl").string().c_str(), &out) == OAL_ERR_IO);
    }

    oal_cohort_free(c);
}

TEST_CASE("params, training, evaluation, sweep through the C API") {
    oal_cohort* full = make_cohort(150, 6);
    oal_cohort *tr = nullptr, *va = nullptr, *te = nullptr;
    REQUIRE(oal_cohort_split(full, 0.6, 0.2, 0.2, 1, &tr, &va, &te) == OAL_OK);

    oal_model_dims dims;
    oal_model_dims_defaults(&dims);
    dims.embed_k = 4;
    dims.time_m = 2;
    dims.out_d = 4;
    dims.hidden[0] = 5;

    oal_train_config config;
    oal_train_config_defaults(&config);
    config.epochs = 2;
    config.batch_size = 16;
    config.eval_every = 1;

    oal_params* params = nullptr;
    oal_history* history = nullptr;
    REQUIRE(oal_train(&config, &dims, tr, va, &params, &history) == OAL_OK);
    CHECK(oal_history_epoch_count(history) == 2);

    SUBCASE("schema accessor") {
        int64_t f = 0, s = 0, d = 0;
        REQUIRE(oal_params_schema(params, &f, &s, &d) == OAL_OK);
        CHECK(f == 64);
        CHECK(s == 4);
        CHECK(d == 4);
    }

    SUBCASE("history write") {
        fs::path h = temp_file("hist.jsonl");
        REQUIRE(oal_history_write(history, h.string().c_str()) == OAL_OK);
        std::string text = slurp(h);
        CHECK(text.find("\"epoch\":1") != std::string::npos);
        CHECK(text.find("val_metrics") != std::string::npos);
        fs::remove(h);
    }

    SUBCASE("checkpoint round trip") {
        fs::path p = temp_file("params.ckpt");
        REQUIRE(oal_params_save(params, p.string().c_str()) == OAL_OK);
        oal_params* back = nullptr;
        REQUIRE(oal_params_load(p.string().c_str(), &back) == OAL_OK);
        fs::path p2 = temp_file("params2.ckpt");
        REQUIRE(oal_params_save(back, p2.string().c_str()) == OAL_OK);
        CHECK(slurp(p) == slurp(p2));
        oal_params_free(back);
        fs::remove(p);
        fs::remove(p2);
    }

    SUBCASE("evaluate and format reports") {
        oal_metrics_report m;
        oal_geometry_report g;
        REQUIRE(oal_evaluate(params, te, 1e-5, 10, &m, &g) == OAL_OK);
        CHECK(m.auroc >= 0.0);
        CHECK(m.auroc <= 1.0);
        CHECK(m.n == oal_cohort_size(te));
        CHECK(g.rayleigh >= 0.0);

        char block[2048];
        size_t need = 0;
        REQUIRE(oal_report_format(&m, &g, block, sizeof(block), &need) == OAL_OK);
        CHECK(std::string(block).find("auroc=") != std::string::npos);
        CHECK(need == std::strlen(block) + 1);

        char tiny[4];
        CHECK(oal_report_format(&m, &g, tiny, sizeof(tiny), &need) ==
              OAL_ERR_INVALID_ARGUMENT);
        CHECK(need > sizeof(tiny));

        fs::path r = temp_file("report.json");
        REQUIRE(oal_report_write(&m, &g, r.string().c_str()) == OAL_OK);
        CHECK(slurp(r).find("\"metrics\"") != std::string::npos);
        fs::remove(r);
    }

    SUBCASE("single-class evaluation returns the metric-undefined status") {
        oal_cohort_spec spec;
        oal_cohort_spec_defaults(&spec);
        spec.n_patients = 40;
        spec.prevalence = 1e-7;  // all-negative cohort with near certainty
        spec.seed = 11;
        oal_cohort* negatives = nullptr;
        REQUIRE(oal_cohort_generate(&spec, &negatives) == OAL_OK);
        oal_metrics_report m;
        oal_geometry_report g;
        CHECK(oal_evaluate(params, negatives, 1e-5, 10, &m, &g) ==
              OAL_ERR_METRIC_UNDEFINED);
        oal_cohort_free(negatives);
    }

    SUBCASE("sweep rows in fixed order") {
        double fractions[] = {1.0};
        uint64_t seeds[] = {1};
        oal_sweep_table* table = nullptr;
        REQUIRE(oal_sweep_run(&config, &dims, tr, va, fractions, 1, seeds, 1, &table) == OAL_OK);
        REQUIRE(oal_sweep_row_count(table) == 2);
        oal_sweep_row row;
        REQUIRE(oal_sweep_get_row(table, 0, &row) == OAL_OK);
        CHECK(row.lambda == 0.0);
        CHECK(row.fraction == 1.0);
        REQUIRE(oal_sweep_get_row(table, 1, &row) == OAL_OK);
        CHECK(row.lambda == config.lambda);
        CHECK(oal_sweep_get_row(table, 2, &row) == OAL_ERR_INVALID_ARGUMENT);

        fs::path csv = temp_file("sweep.csv");
        REQUIRE(oal_sweep_write_csv(table, csv.string().c_str()) == OAL_OK);
        CHECK(slurp(csv).rfind("fraction,seed,lambda,auroc,auprc,rdisc\n", 0) == 0);
        fs::remove(csv);
        oal_sweep_table_free(table);
    }

    SUBCASE("numeric abort surfaces as OAL_ERR_NUMERIC") {
        oal_train_config blowup = config;
        blowup.learning_rate = 1e160;
        blowup.epochs = 5;
        oal_params* p2 = nullptr;
        oal_history* h2 = nullptr;
        CHECK(oal_train(&blowup, &dims, tr, va, &p2, &h2) == OAL_ERR_NUMERIC);
        CHECK(std::string(oal_last_error()).find("non-finite") != std::string::npos);
    }

    oal_params_free(params);
    oal_history_free(history);
    oal_cohort_free(tr);
    oal_cohort_free(va);
    oal_cohort_free(te);
    oal_cohort_free(full);
}

TEST_CASE("gradcheck through the C API") {
    oal_gradcheck_dims dims;
    oal_gradcheck_dims_defaults(&dims);

    oal_gradcheck_report report;
    REQUIRE(oal_gradcheck_run(3, &dims, 0.0, &report) == OAL_OK);
    CHECK(report.pass == 1);
    CHECK(report.encoder <= report.threshold);
    CHECK(report.bce <= report.threshold);
    CHECK(report.rayleigh <= report.threshold);
    CHECK(report.total <= report.threshold);

    SUBCASE("fault injection flips the verdict") {
        REQUIRE(oal_gradcheck_run(3, &dims, 1e-2, &report) == OAL_OK);
        CHECK(report.pass == 0);
        CHECK(report.encoder > report.threshold);
    }

    SUBCASE("oversized dims rejected") {
        oal_gradcheck_dims big = dims;
        big.out_d = 9;
        CHECK(oal_gradcheck_run(3, &big, 0.0, &report) == OAL_ERR_INVALID_ARGUMENT);
    }
}
