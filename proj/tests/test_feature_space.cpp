#include "catch_amalgamated.hpp"

#include <fstream>
#include <set>

#include "cdrforge/errors.hpp"
#include "cdrforge/feature_matrix.hpp"
#include "cdrforge/feature_space.hpp"

using namespace cdrforge;

namespace {

FeatureDescriptor ego(EventFilter t, Direction d, Field f, ReduceOp op) {
    FeatureDescriptor x;
    x.event_type = t;
    x.direction = d;
    x.field = f;
    x.op1 = op;
    return x;
}

} // namespace

TEST_CASE("full space has 1305 features in canonical order", "[space]") {
    auto space = enumerate_feature_space(TaxonomyConfig{});
    CHECK(space.size() == 1305);
    CHECK(std::is_sorted(space.begin(), space.end()));
    CHECK(std::adjacent_find(space.begin(), space.end()) == space.end());
    for (const auto& d : space)
        CHECK(is_legal(d));
}

TEST_CASE("space matches the independently enumerated fixture header", "[space]") {
    std::ifstream in(std::string(CDRFORGE_FIXTURES) + "/golden_features_5.csv");
    REQUIRE(in);
    auto golden = read_matrix_csv(in);
    std::set<std::string> expected;
    for (const auto& n : golden.feature_names())
        expected.insert(n);
    std::set<std::string> actual;
    for (const auto& d : enumerate_feature_space(TaxonomyConfig{}))
        actual.insert(feature_name(d));
    CHECK(actual == expected);
}

TEST_CASE("feature names round trip and are injective", "[space]") {
    std::set<std::string> names;
    for (const auto& d : enumerate_feature_space(TaxonomyConfig{})) {
        auto name = feature_name(d);
        CHECK(names.insert(name).second);
        auto back = parse_feature_name(name);
        REQUIRE(back);
        CHECK(*back == d);
    }
    CHECK_FALSE(parse_feature_name("ego__call"));
    CHECK_FALSE(parse_feature_name("ego__fax__in__all__event__count"));
    CHECK_FALSE(parse_feature_name("ego__call__in__all__event__count__"));
}

TEST_CASE("pruning rules", "[space]") {
    CHECK(is_legal(ego(EventFilter::call, Direction::in, Field::duration, ReduceOp::mean)));
    CHECK_FALSE(is_legal(ego(EventFilter::sms, Direction::in, Field::duration, ReduceOp::mean)));
    CHECK(is_legal(ego(EventFilter::all, Direction::out, Field::tower, ReduceOp::entropy)));
    CHECK_FALSE(is_legal(ego(EventFilter::all, Direction::in, Field::tower, ReduceOp::entropy)));
    CHECK_FALSE(is_legal(ego(EventFilter::all, Direction::all, Field::tower, ReduceOp::distinct_count)));
    CHECK(is_legal(ego(EventFilter::call, Direction::all, Field::alter, ReduceOp::reciprocity)));
    CHECK_FALSE(is_legal(ego(EventFilter::call, Direction::out, Field::alter, ReduceOp::reciprocity)));
    CHECK_FALSE(is_legal(ego(EventFilter::call, Direction::all, Field::event, ReduceOp::sum)));
    CHECK_FALSE(is_legal(ego(EventFilter::call, Direction::all, Field::duration, ReduceOp::count)));

    auto ego_with_op2 = ego(EventFilter::call, Direction::in, Field::event, ReduceOp::count);
    ego_with_op2.op2 = ReduceOp::max;
    CHECK_FALSE(is_legal(ego_with_op2));

    auto va = ego(EventFilter::call, Direction::in, Field::event, ReduceOp::count);
    va.actor = Actor::voice_alters;
    CHECK_FALSE(is_legal(va));
    va.op2 = ReduceOp::mean;
    CHECK(is_legal(va));
    va.op2 = ReduceOp::entropy;
    CHECK_FALSE(is_legal(va));
    va.op2 = ReduceOp::mean;
    va.field = Field::alter;
    va.op1 = ReduceOp::distinct_count;
    CHECK_FALSE(is_legal(va));
}

TEST_CASE("each category is populated and tower features are movement", "[space]") {
    std::map<Category, int> counts;
    for (const auto& d : enumerate_feature_space(TaxonomyConfig{})) {
        ++counts[d.category()];
        if (d.field == Field::tower)
            CHECK(d.category() == Category::movement);
    }
    CHECK(counts.size() == 4);
}

TEST_CASE("restricting branches shrinks the space", "[space]") {
    TaxonomyConfig c;
    c.actors = {Actor::ego};
    CHECK(enumerate_feature_space(c).size() == 66 * 5);
    c.time_partitions = {TimePartition::all};
    CHECK(enumerate_feature_space(c).size() == 66);
    c.fields = {Field::tower};
    c.directions = {Direction::in};
    CHECK_THROWS_AS(enumerate_feature_space(c), EmptySpace);
}

TEST_CASE("taxonomy json round trip and rejection", "[space]") {
    TaxonomyConfig c;
    c.actors = {Actor::ego};
    c.utc_offset_hours = 3;
    c.missing_policy = MissingPolicy::nan;
    auto back = TaxonomyConfig::from_json_text(c.to_json_text());
    CHECK(back.actors == c.actors);
    CHECK(back.utc_offset_hours == 3);
    CHECK(back.missing_policy == MissingPolicy::nan);
    CHECK_THROWS_AS(TaxonomyConfig::from_json_text(R"({"actors": ["robot"]})"), ConfigError);
    CHECK_THROWS_AS(TaxonomyConfig::from_json_text(R"({"colour": 1})"), ConfigError);
}
