#include "core/synthcohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace oal {

namespace {

constexpr const char* kGeneratorVersion = "synthcohort-1";

// Substream indices: 0 reserved for the fixed observation structure, patient
// i uses substream i+1, split/subsample draw from tagged substreams.
constexpr std::uint64_t kStructureStream = 0;
constexpr std::uint64_t kSplitTag = 0x5b1dULL;
constexpr std::uint64_t kSubsampleTag = 0xabc0ULL;

struct Structure {
    std::vector<double> direction;             // e, unit vector in signal space
    std::vector<std::vector<double>> mixers;   // per odd feature, unit vector in nuisance space
};

std::vector<double> unit_normal_vector(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double norm_sq = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm_sq += x * x;
    }
    double inv = norm_sq > 0.0 ? 1.0 / std::sqrt(norm_sq) : 0.0;
    for (double& x : v) x *= inv;
    return v;
}

Structure build_structure(const CohortSpec& spec) {
    Rng rng(substream_seed(spec.seed, kStructureStream));
    Structure s;
    s.direction = unit_normal_vector(rng, static_cast<std::size_t>(spec.signal_dim));
    const std::size_t n_odd = static_cast<std::size_t>(spec.feature_count) / 2;
    s.mixers.reserve(n_odd);
    for (std::size_t i = 0; i < n_odd; ++i) {
        s.mixers.push_back(unit_normal_vector(rng, static_cast<std::size_t>(spec.nuisance_dim)));
    }
    return s;
}

struct PatientDraw {
    LatentSample latent;
    Trajectory trajectory;
};

// Fixed draw order per patient: label, signal latent, nuisance latent, event
// count, per-event (time, feature, value noise), static noise. Everything
// comes from the patient's own substream, so generation order cannot change
// the output.
PatientDraw draw_patient(const CohortSpec& spec, const Structure& structure, std::int64_t index) {
    Rng rng(substream_seed(spec.seed, static_cast<std::uint64_t>(index) + 1));
    PatientDraw out;

    const std::size_t sig = static_cast<std::size_t>(spec.signal_dim);
    const std::size_t nui = static_cast<std::size_t>(spec.nuisance_dim);
    const std::size_t S = static_cast<std::size_t>(spec.static_dim);

    out.latent.label = rng.uniform01() < spec.prevalence ? 1 : 0;
    out.latent.signal.resize(sig);
    for (double& x : out.latent.signal) x = rng.normal();
    if (out.latent.label == 1) {
        for (std::size_t j = 0; j < sig; ++j) {
            out.latent.signal[j] += spec.effect_size * structure.direction[j];
        }
    }
    out.latent.nuisance.resize(nui);
    for (double& x : out.latent.nuisance) x = rng.normal();

    double planted = 0.0;
    for (std::size_t j = 0; j < sig; ++j) {
        planted += structure.direction[j] * out.latent.signal[j];
    }

    Trajectory& t = out.trajectory;
    char id[24];
    std::snprintf(id, sizeof(id), "p%08lld", static_cast<long long>(index));
    t.patient_id = id;
    t.label = out.latent.label;
    t.prediction_time = spec.horizon_days;

    std::int64_t span = spec.events_max - spec.events_min + 1;
    std::int64_t n_events =
        spec.events_min + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(span)));
    t.events.reserve(static_cast<std::size_t>(n_events));
    for (std::int64_t e = 0; e < n_events; ++e) {
        Event ev;
        ev.time = rng.uniform(0.0, spec.horizon_days);
        ev.feature_id =
            static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(spec.feature_count)));
        double noise = kEventValueNoise * rng.normal();
        if (ev.feature_id % 2 == 0) {
            ev.value = planted + noise;
        } else {
            const std::vector<double>& mix =
                structure.mixers[static_cast<std::size_t>(ev.feature_id / 2)];
            double read = 0.0;
            for (std::size_t j = 0; j < nui; ++j) read += mix[j] * out.latent.nuisance[j];
            ev.value = read + noise;
        }
        t.events.push_back(ev);
    }
    std::stable_sort(t.events.begin(), t.events.end(),
                     [](const Event& a, const Event& b) { return a.time < b.time; });

    t.static_features.resize(S);
    const std::size_t carried = std::min(S, sig);
    for (std::size_t j = 0; j < S; ++j) {
        double noise = rng.normal();
        t.static_features[j] =
            j < carried ? out.latent.signal[j] + kStaticNoise * noise : noise;
    }
    return out;
}

}  // namespace

void validate(const CohortSpec& spec) {
    if (spec.n_patients <= 0) fail(ErrorKind::invalid_argument, "cohort: n_patients must be > 0");
    if (spec.feature_count <= 0) fail(ErrorKind::invalid_argument, "cohort: F must be > 0");
    if (spec.static_dim < 0) fail(ErrorKind::invalid_argument, "cohort: S must be >= 0");
    if (!(spec.prevalence > 0.0 && spec.prevalence < 1.0)) {
        fail(ErrorKind::invalid_argument, "cohort: prevalence must lie in (0, 1)");
    }
    if (spec.signal_dim <= 0 || spec.nuisance_dim < 0) {
        fail(ErrorKind::invalid_argument, "cohort: latent dims must be positive");
    }
    if (spec.signal_dim + spec.nuisance_dim > spec.feature_count) {
        fail(ErrorKind::invalid_argument, "cohort: signal_dim + nuisance_dim must be <= F");
    }
    if (!(spec.effect_size > 0.0)) {
        fail(ErrorKind::invalid_argument, "cohort: effect_size must be > 0");
    }
    if (spec.events_min < 0 || spec.events_max < spec.events_min) {
        fail(ErrorKind::invalid_argument, "cohort: event count range invalid");
    }
    if (!(spec.horizon_days > 0.0)) {
        fail(ErrorKind::invalid_argument, "cohort: horizon_days must be > 0");
    }
}

double Cohort::prevalence() const {
    if (trajectories.empty()) return 0.0;
    std::size_t pos = 0;
    for (const Trajectory& t : trajectories) pos += static_cast<std::size_t>(t.label);
    return static_cast<double>(pos) / static_cast<double>(trajectories.size());
}

Cohort generate_cohort(const CohortSpec& spec) {
    validate(spec);
    Structure structure = build_structure(spec);
    Cohort cohort;
    cohort.schema = {spec.feature_count, spec.static_dim};
    cohort.provenance = spec;
    cohort.generator_version = kGeneratorVersion;
    cohort.trajectories.reserve(static_cast<std::size_t>(spec.n_patients));
    for (std::int64_t i = 0; i < spec.n_patients; ++i) {
        cohort.trajectories.push_back(draw_patient(spec, structure, i).trajectory);
    }
    return cohort;
}

LatentSample sample_latent(const CohortSpec& spec, std::int64_t index) {
    validate(spec);
    Structure structure = build_structure(spec);
    return draw_patient(spec, structure, index).latent;
}

std::vector<double> signal_direction(const CohortSpec& spec) {
    validate(spec);
    return build_structure(spec).direction;
}

std::array<Cohort, 3> split_cohort(const Cohort& cohort, double train_ratio, double val_ratio,
                                   double test_ratio, std::uint64_t seed) {
    if (!(train_ratio > 0.0 && val_ratio > 0.0 && test_ratio > 0.0)) {
        fail(ErrorKind::invalid_argument, "split_cohort: ratios must be positive");
    }
    if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
        fail(ErrorKind::invalid_argument, "split_cohort: ratios must sum to 1");
    }
    const std::size_t n = cohort.trajectories.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(substream_seed(seed, kSplitTag));
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(order[i - 1], order[j]);
    }

    std::size_t n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(n)));
    std::size_t n_val = static_cast<std::size_t>(std::llround(val_ratio * static_cast<double>(n)));
    if (n_train + n_val > n) n_val = n - n_train;
    std::size_t n_test = n - n_train - n_val;
    if (n_train == 0 || n_val == 0 || n_test == 0) {
        fail(ErrorKind::invalid_argument, "split_cohort: a split part would be empty");
    }

    auto take = [&](std::size_t begin, std::size_t count) {
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                     order.begin() + static_cast<std::ptrdiff_t>(begin + count));
        std::sort(idx.begin(), idx.end());  // keep original cohort order within each part
        Cohort part;
        part.schema = cohort.schema;
        part.provenance = cohort.provenance;
        part.generator_version = cohort.generator_version;
        part.trajectories.reserve(count);
        for (std::size_t i : idx) part.trajectories.push_back(cohort.trajectories[i]);
        return part;
    };
    return {take(0, n_train), take(n_train, n_val), take(n_train + n_val, n_test)};
}

Cohort subsample_fraction(const Cohort& cohort, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        fail(ErrorKind::invalid_argument, "subsample_fraction: fraction must lie in (0, 1]");
    }
    const std::size_t n = cohort.trajectories.size();
    const std::size_t k =
        std::max<std::size_t>(1, static_cast<std::size_t>(
                                     std::llround(fraction * static_cast<double>(n))));
    if (k < 2) {
        fail(ErrorKind::invalid_argument,
             "subsample_fraction: resulting size " + std::to_string(k) + " is below 2");
    }

    for (int attempt = 0; attempt < 100; ++attempt) {
        // Priorities depend on (seed, attempt, patient index) only, so for a
        // fixed attempt the k smallest form nested sets across fractions.
        std::uint64_t attempt_seed =
            substream_seed(seed, kSubsampleTag + static_cast<std::uint64_t>(attempt));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::vector<std::uint64_t> priority(n);
        for (std::size_t i = 0; i < n; ++i) priority[i] = substream_seed(attempt_seed, i);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return priority[a] != priority[b] ? priority[a] < priority[b] : a < b;
        });

        std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
        std::sort(chosen.begin(), chosen.end());
        bool has0 = false, has1 = false;
        for (std::size_t i : chosen) {
            (cohort.trajectories[i].label == 0 ? has0 : has1) = true;
        }
        if (!(has0 && has1)) continue;

        Cohort out;
        out.schema = cohort.schema;
        out.provenance = cohort.provenance;
        out.generator_version = cohort.generator_version;
        out.trajectories.reserve(k);
        for (std::size_t i : chosen) out.trajectories.push_back(cohort.trajectories[i]);
        return out;
    }
    fail(ErrorKind::invalid_argument,
         "subsample_fraction: could not retain both classes in 100 attempts");
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json spec_to_json(const CohortSpec& s) {
    ordered_json j;
    j["n_patients"] = s.n_patients;
    j["feature_count"] = s.feature_count;
    j["static_dim"] = s.static_dim;
    j["prevalence"] = s.prevalence;
    j["signal_dim"] = s.signal_dim;
    j["nuisance_dim"] = s.nuisance_dim;
    j["effect_size"] = s.effect_size;
    j["events_min"] = s.events_min;
    j["events_max"] = s.events_max;
    j["horizon_days"] = s.horizon_days;
    j["seed"] = s.seed;
    return j;
}

CohortSpec spec_from_json(const ordered_json& j) {
    CohortSpec s;
    s.n_patients = j.at("n_patients").get<std::int64_t>();
    s.feature_count = j.at("feature_count").get<std::int64_t>();
    s.static_dim = j.at("static_dim").get<std::int64_t>();
    s.prevalence = j.at("prevalence").get<double>();
    s.signal_dim = j.at("signal_dim").get<std::int64_t>();
    s.nuisance_dim = j.at("nuisance_dim").get<std::int64_t>();
    s.effect_size = j.at("effect_size").get<double>();
    s.events_min = j.at("events_min").get<std::int64_t>();
    s.events_max = j.at("events_max").get<std::int64_t>();
    s.horizon_days = j.at("horizon_days").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

[[noreturn]] void line_error(std::size_t line_no, const std::string& what) {
    fail(ErrorKind::parse, "cohort file line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

void write_cohort(const Cohort& cohort, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "write_cohort: cannot open " + path.string());

    ordered_json header;
    header["version"] = cohort.generator_version;
    header["F"] = cohort.schema.feature_count;
    header["S"] = cohort.schema.static_dim;
    header["provenance"] = spec_to_json(cohort.provenance);
    out << header.dump() << "\n";

    for (const Trajectory& t : cohort.trajectories) {
        ordered_json rec;
        rec["patient_id"] = t.patient_id;
        rec["label"] = t.label;
        rec["prediction_time"] = t.prediction_time;
        rec["static"] = t.static_features;
        ordered_json events = ordered_json::array();
        for (const Event& e : t.events) {
            events.push_back(ordered_json::array({e.time, e.feature_id, e.value}));
        }
        rec["events"] = std::move(events);
        out << rec.dump() << "\n";
    }
    out.flush();
    if (!out) fail(ErrorKind::io, "write_cohort: write failed for " + path.string());
}

Cohort read_cohort(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "read_cohort: cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line) || line.empty()) {
        fail(ErrorKind::parse, "read_cohort: no header record in " + path.string());
    }

    Cohort cohort;
    try {
        ordered_json header = ordered_json::parse(line);
        cohort.generator_version = header.at("version").get<std::string>();
        cohort.schema.feature_count = header.at("F").get<std::int64_t>();
        cohort.schema.static_dim = header.at("S").get<std::int64_t>();
        cohort.provenance = spec_from_json(header.at("provenance"));
    } catch (const nlohmann::json::exception& e) {
        line_error(1, std::string("bad header: ") + e.what());
    }
    if (cohort.schema.feature_count <= 0 || cohort.schema.static_dim < 0) {
        line_error(1, "header schema invalid (F must be > 0, S >= 0)");
    }

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Trajectory t;
        try {
            ordered_json rec = ordered_json::parse(line);
            t.patient_id = rec.at("patient_id").get<std::string>();
            t.label = rec.at("label").get<int>();
            t.prediction_time = rec.at("prediction_time").get<double>();
            t.static_features = rec.at("static").get<std::vector<double>>();
            for (const auto& ev : rec.at("events")) {
                if (!ev.is_array() || ev.size() != 3) {
                    line_error(line_no, "event must be [time, feature_id, value]");
                }
                Event e;
                e.time = ev[0].get<double>();
                e.feature_id = ev[1].get<std::int64_t>();
                e.value = ev[2].get<double>();
                t.events.push_back(e);
            }
        } catch (const nlohmann::json::exception& e) {
            line_error(line_no, std::string("malformed record: ") + e.what());
        }

        if (t.label != 0 && t.label != 1) line_error(line_no, "label must be 0 or 1");
        if (static_cast<std::int64_t>(t.static_features.size()) != cohort.schema.static_dim) {
            line_error(line_no, "static feature count does not match schema S");
        }
        double prev_time = -1.0;
        for (const Event& e : t.events) {
            if (e.feature_id < 0 || e.feature_id >= cohort.schema.feature_count) {
                line_error(line_no, "feature_id " + std::to_string(e.feature_id) +
                                        " outside schema range [0, " +
                                        std::to_string(cohort.schema.feature_count) + ")");
            }
            if (e.time < prev_time) line_error(line_no, "events not sorted by time");
            if (e.time > t.prediction_time) {
                line_error(line_no, "event time after prediction_time");
            }
            prev_time = e.time;
        }
        cohort.trajectories.push_back(std::move(t));
    }
    return cohort;
}

bool cohort_equal(const Cohort& a, const Cohort& b) {
    if (a.schema.feature_count != b.schema.feature_count ||
        a.schema.static_dim != b.schema.static_dim ||
        a.generator_version != b.generator_version) {
        return false;
    }
    const CohortSpec &pa = a.provenance, &pb = b.provenance;
    if (pa.n_patients != pb.n_patients || pa.feature_count != pb.feature_count ||
        pa.static_dim != pb.static_dim || pa.prevalence != pb.prevalence ||
        pa.signal_dim != pb.signal_dim || pa.nuisance_dim != pb.nuisance_dim ||
        pa.effect_size != pb.effect_size || pa.events_min != pb.events_min ||
        pa.events_max != pb.events_max || pa.horizon_days != pb.horizon_days ||
        pa.seed != pb.seed) {
        return false;
    }
    if (a.trajectories.size() != b.trajectories.size()) return false;
    for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
        const Trajectory &ta = a.trajectories[i], &tb = b.trajectories[i];
        if (ta.patient_id != tb.patient_id || ta.label != tb.label ||
            ta.prediction_time != tb.prediction_time ||
            ta.static_features != tb.static_features || ta.events.size() != tb.events.size()) {
            return false;
        }
        for (std::size_t e = 0; e < ta.events.size(); ++e) {
            if (ta.events[e].time != tb.events[e].time ||
                ta.events[e].feature_id != tb.events[e].feature_id ||
                ta.events[e].value != tb.events[e].value) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace oal
