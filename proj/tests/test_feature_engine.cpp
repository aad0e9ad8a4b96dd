#include "catch_amalgamated.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "brute_force.hpp"
#include "cdrforge/feature_engine.hpp"

using namespace cdrforge;
using cdrforge::testing::brute_force_feature;
using cdrforge::testing::brute_force_subscribers;
using cdrforge::testing::oracle_equal;

namespace {

std::vector<CdrRecord> load_cdr(const std::string& name) {
    std::ifstream in(std::string(CDRFORGE_FIXTURES) + "/" + name);
    REQUIRE(in);
    return parse_cdr(in).records;
}

FeatureMatrix load_matrix(const std::string& name) {
    std::ifstream in(std::string(CDRFORGE_FIXTURES) + "/" + name);
    REQUIRE(in);
    return read_matrix_csv(in);
}

std::vector<CdrRecord> random_records(std::uint64_t seed, std::size_t n, int ids, bool blank_towers) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> who(0, ids - 1);
    std::uniform_int_distribution<std::int64_t> when(0, 14 * seconds_per_day - 1);
    std::uniform_int_distribution<int> tower(0, 4);
    std::uniform_int_distribution<std::int64_t> dur(1, 900);
    std::bernoulli_distribution is_call(0.6);
    const auto start = *parse_iso8601("2024-01-01T00:00:00Z");
    std::vector<CdrRecord> out;
    while (out.size() < n) {
        int a = who(rng), b = who(rng);
        if (a == b)
            continue;
        CdrRecord r;
        r.caller = SubscriberId("s" + std::to_string(a));
        r.callee = SubscriberId("s" + std::to_string(b));
        r.timestamp = start + std::chrono::seconds(when(rng));
        r.event_type = is_call(rng) ? EventType::call : EventType::sms;
        r.duration = r.event_type == EventType::call ? dur(rng) : 0;
        int t = tower(rng);
        r.caller_tower = (blank_towers && t == 0) ? "" : "T" + std::to_string(t);
        out.push_back(std::move(r));
    }
    return out;
}

double value(const FeatureMatrix& m, const std::string& id, const std::string& feature) {
    auto row = m.row_of(SubscriberId(id));
    REQUIRE(row);
    auto names = m.feature_names();
    auto col = std::find(names.begin(), names.end(), feature) - names.begin();
    REQUIRE(static_cast<std::size_t>(col) < names.size());
    return m.at(*row, col);
}

void check_against_oracle(std::span<const CdrRecord> records, const TaxonomyConfig& config) {
    auto m = featurize(records, config, Execution::parallel);
    auto subs = brute_force_subscribers(records);
    REQUIRE(m.subscribers() == subs);
    std::size_t mismatches = 0;
    for (std::size_t c = 0; c < m.cols(); ++c) {
        const auto& d = m.features()[c];
        for (std::size_t r = 0; r < m.rows(); ++r) {
            double expected =
                brute_force_feature(records, subs[r], d, config.utc_offset_hours, config.missing_policy);
            if (!oracle_equal(m.at(r, c), expected, is_count_like(d.op1) && !d.op2)) {
                if (++mismatches <= 5)
                    UNSCOPED_INFO(feature_name(d) << " for " << subs[r].str() << ": engine " << m.at(r, c)
                                                  << " oracle " << expected);
            }
        }
    }
    CHECK(mismatches == 0);
}

} // namespace

TEST_CASE("engine matches the golden fixtures", "[engine]") {
    for (int n : {5, 20, 50}) {
        auto records = load_cdr("cdr_" + std::to_string(n) + ".csv");
        auto golden = load_matrix("golden_features_" + std::to_string(n) + ".csv");
        auto m = featurize(records, TaxonomyConfig{});
        REQUIRE(m.subscribers() == golden.subscribers());
        auto names = m.feature_names();
        auto golden_names = golden.feature_names();
        std::map<std::string, std::size_t> golden_col;
        for (std::size_t c = 0; c < golden_names.size(); ++c)
            golden_col[golden_names[c]] = c;
        REQUIRE(golden_col.size() == names.size());
        std::size_t mismatches = 0;
        for (std::size_t c = 0; c < names.size(); ++c) {
            const auto gc = golden_col.at(names[c]);
            const bool count_like = is_count_like(m.features()[c].op1) && !m.features()[c].op2;
            for (std::size_t r = 0; r < m.rows(); ++r)
                if (!oracle_equal(m.at(r, c), golden.at(r, gc), count_like)) {
                    ++mismatches;
                    UNSCOPED_INFO(names[c] << " row " << r << ": " << m.at(r, c) << " vs " << golden.at(r, gc));
                }
        }
        INFO("fixture cdr_" << n);
        CHECK(mismatches == 0);
    }
}

TEST_CASE("hand-checked values on the five-row fixture", "[engine]") {
    auto m = featurize(load_cdr("cdr_5.csv"), TaxonomyConfig{});
    CHECK(m.rows() == 3);
    CHECK(m.cols() == 1305);
    const std::string towers = "ego__all__out__all__tower__distinct_count";
    CHECK(value(m, "A", towers) == 2);
    CHECK(value(m, "B", towers) == 1);
    CHECK(value(m, "C", towers) == 1);
    const std::string mean_out = "ego__call__out__all__duration__mean";
    CHECK(value(m, "A", mean_out) == 45);
    CHECK(value(m, "B", mean_out) == 120);
    CHECK(value(m, "C", mean_out) == 0);
    const std::string alter_max = "voice_alters__all__all__all__event__count__max";
    CHECK(value(m, "A", alter_max) == 3);
    CHECK(value(m, "B", alter_max) == 3);
    CHECK(value(m, "C", alter_max) == 2);
    // A calls B at 08:00 Monday and 23:00 Saturday.
    CHECK(value(m, "A", "ego__call__out__day__event__count") == 1);
    CHECK(value(m, "A", "ego__call__out__weekend__event__count") == 1);
    // A exchanges in both directions with B and C.
    CHECK(value(m, "A", "ego__all__all__all__alter__reciprocity") == 1);
}

TEST_CASE("engine matches the brute-force oracle on random record sets", "[engine][oracle]") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto records = random_records(seed, 120, 8, seed == 3);
        TaxonomyConfig config;
        SECTION("utc, zero fill " + std::to_string(seed)) { check_against_oracle(records, config); }
        SECTION("shifted clock, nan policy " + std::to_string(seed)) {
            config.utc_offset_hours = seed == 2 ? -5 : 3;
            config.missing_policy = MissingPolicy::nan;
            check_against_oracle(records, config);
        }
    }
}

TEST_CASE("missing values follow the policy", "[engine]") {
    auto records = load_cdr("cdr_5.csv");
    TaxonomyConfig config;
    config.missing_policy = MissingPolicy::nan;
    auto m = featurize(records, config);
    CHECK(std::isnan(value(m, "C", "ego__call__out__all__duration__mean")));
    CHECK(value(m, "C", "ego__call__out__all__event__count") == 0);
    CHECK(value(m, "C", "ego__call__out__all__alter__distinct_count") == 0);
}

TEST_CASE("direction and event-type partitions are conserved", "[engine][property]") {
    auto records = random_records(11, 300, 12, false);
    auto m = featurize(records, TaxonomyConfig{});
    auto names = m.feature_names();
    auto col = [&](const std::string& n) {
        auto it = std::find(names.begin(), names.end(), n);
        REQUIRE(it != names.end());
        return m.column(it - names.begin());
    };
    for (std::string part : {"all", "day", "night", "weekday", "weekend"}) {
        for (std::string type : {"call", "sms", "all"}) {
            auto in = col("ego__" + type + "__in__" + part + "__event__count");
            auto out = col("ego__" + type + "__out__" + part + "__event__count");
            auto all = col("ego__" + type + "__all__" + part + "__event__count");
            for (std::size_t r = 0; r < m.rows(); ++r)
                CHECK(in[r] + out[r] == all[r]);
        }
        auto calls = col("ego__call__all__" + part + "__event__count");
        auto sms = col("ego__sms__all__" + part + "__event__count");
        auto all = col("ego__all__all__" + part + "__event__count");
        for (std::size_t r = 0; r < m.rows(); ++r)
            CHECK(calls[r] + sms[r] == all[r]);
    }
    auto all = col("ego__all__all__all__event__count");
    auto day = col("ego__all__all__day__event__count");
    auto night = col("ego__all__all__night__event__count");
    auto wd = col("ego__all__all__weekday__event__count");
    auto we = col("ego__all__all__weekend__event__count");
    for (std::size_t r = 0; r < m.rows(); ++r) {
        CHECK(day[r] + night[r] == all[r]);
        CHECK(wd[r] + we[r] == all[r]);
    }
    auto dur_sum = col("ego__call__all__all__duration__sum");
    auto dur_in = col("ego__call__in__all__duration__sum");
    auto dur_out = col("ego__call__out__all__duration__sum");
    for (std::size_t r = 0; r < m.rows(); ++r)
        CHECK(dur_in[r] + dur_out[r] == dur_sum[r]);
}

TEST_CASE("record order does not matter", "[engine][property]") {
    auto records = random_records(21, 200, 10, true);
    auto baseline = featurize(records, TaxonomyConfig{});
    std::mt19937_64 rng(5);
    for (int i = 0; i < 3; ++i) {
        std::shuffle(records.begin(), records.end(), rng);
        CHECK(featurize(records, TaxonomyConfig{}) == baseline);
    }
}

TEST_CASE("serial and parallel kernels agree bit for bit", "[engine][property]") {
    auto records = random_records(31, 400, 25, true);
    TaxonomyConfig config;
    config.missing_policy = MissingPolicy::nan;
    auto serial = featurize(records, config, Execution::serial);
    auto parallel = featurize(records, config, Execution::parallel);
    REQUIRE(serial.rows() == parallel.rows());
    REQUIRE(serial.cols() == parallel.cols());
    std::size_t differ = 0;
    for (std::size_t c = 0; c < serial.cols(); ++c)
        for (std::size_t r = 0; r < serial.rows(); ++r) {
            double a = serial.at(r, c), b = parallel.at(r, c);
            if (!(std::isnan(a) && std::isnan(b)) && std::memcmp(&a, &b, sizeof a) != 0)
                ++differ;
        }
    CHECK(differ == 0);
}

TEST_CASE("empty record set yields an empty matrix", "[engine]") {
    std::vector<CdrRecord> none;
    auto m = featurize(none, TaxonomyConfig{});
    CHECK(m.rows() == 0);
    CHECK(m.cols() == 1305);
}

TEST_CASE("matrix csv and binary round trips", "[engine][io]") {
    auto records = random_records(41, 80, 6, true);
    TaxonomyConfig config;
    config.missing_policy = MissingPolicy::nan;
    auto m = featurize(records, config);
    std::stringstream csv;
    write_matrix_csv(csv, m);
    auto from_csv = read_matrix_csv(csv);
    std::stringstream bin;
    write_matrix_binary(bin, m);
    auto from_bin = read_matrix_binary(bin);
    for (const auto* other : {&from_csv, &from_bin}) {
        REQUIRE(other->subscribers() == m.subscribers());
        REQUIRE(other->features() == m.features());
        for (std::size_t c = 0; c < m.cols(); ++c)
            for (std::size_t r = 0; r < m.rows(); ++r) {
                double a = m.at(r, c), b = other->at(r, c);
                CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
            }
    }
}

TEST_CASE("distinct alters under ALL are bounded by IN and OUT", "[engine][property]") {
    auto records = random_records(51, 300, 15, false);
    auto m = featurize(records, TaxonomyConfig{});
    auto names = m.feature_names();
    std::map<std::string, std::size_t> idx;
    for (std::size_t c = 0; c < names.size(); ++c)
        idx[names[c]] = c;
    for (std::string type : {"call", "sms", "all"})
        for (std::string part : {"all", "day", "night", "weekday", "weekend"}) {
            const auto stem = "ego__" + type + "__";
            const auto tail = "__" + part + "__alter__distinct_count";
            const auto in = idx.at(stem + "in" + tail), out = idx.at(stem + "out" + tail),
                       all = idx.at(stem + "all" + tail);
            for (std::size_t r = 0; r < m.rows(); ++r) {
                CHECK(m.at(r, all) >= std::max(m.at(r, in), m.at(r, out)));
                CHECK(m.at(r, all) <= m.at(r, in) + m.at(r, out));
            }
        }
}

TEST_CASE("a new event only touches its two parties", "[engine][property]") {
    auto records = random_records(61, 200, 12, true);
    auto before = featurize(records, TaxonomyConfig{});
    auto extra = records.front();
    extra.timestamp += std::chrono::seconds(1234);
    extra.duration += 17;
    records.push_back(extra);
    auto after = featurize(records, TaxonomyConfig{});
    REQUIRE(after.subscribers() == before.subscribers());
    std::size_t changed_elsewhere = 0, changed_parties = 0;
    for (std::size_t r = 0; r < after.rows(); ++r) {
        const auto& id = after.subscribers()[r];
        const bool party = id == extra.caller || id == extra.callee;
        for (std::size_t c = 0; c < after.cols(); ++c) {
            const bool same = after.at(r, c) == before.at(r, c);
            (party ? changed_parties : changed_elsewhere) += !same;
        }
    }
    CHECK(changed_elsewhere == 0);
    CHECK(changed_parties > 0);
}

TEST_CASE("an ego with a single alter has equal second-level mean, min and max", "[engine][property]") {
    auto records = random_records(71, 150, 8, false);
    const auto start = *parse_iso8601("2024-01-02T00:00:00Z");
    for (int i = 0; i < 5; ++i) {
        CdrRecord r;
        r.caller = SubscriberId(i % 2 ? "solo_a" : "solo_b");
        r.callee = SubscriberId(i % 2 ? "solo_b" : "solo_a");
        r.timestamp = start + std::chrono::hours(7 * i);
        r.event_type = i % 3 ? EventType::call : EventType::sms;
        r.duration = r.event_type == EventType::call ? 30 * (i + 1) : 0;
        r.caller_tower = "T9";
        records.push_back(r);
    }
    auto m = featurize(records, TaxonomyConfig{});
    auto names = m.feature_names();
    std::map<std::string, std::size_t> idx;
    for (std::size_t c = 0; c < names.size(); ++c)
        idx[names[c]] = c;
    std::size_t checked = 0;
    for (std::size_t c = 0; c < m.cols(); ++c) {
        const auto& d = m.features()[c];
        if (d.actor != Actor::voice_alters || d.op2 != ReduceOp::mean)
            continue;
        const auto stem = names[c].substr(0, names[c].size() - std::string("mean").size());
        for (auto id : {"solo_a", "solo_b"}) {
            const auto r = *m.row_of(SubscriberId(id));
            CHECK(m.at(r, idx.at(stem + "min")) == m.at(r, c));
            CHECK(m.at(r, idx.at(stem + "max")) == m.at(r, c));
            ++checked;
        }
    }
    CHECK(checked > 0);
}
