#pragma once

// The feature taxonomy: every feature is one path through
// actor -> event type -> direction -> time partition -> field -> reduce op
// (-> second-level op for alter aggregates).
//
// Op-map (first level):
//   EVENT    -> COUNT
//   DURATION -> SUM, MEAN, STD, MIN, MAX
//   ALTER    -> DISTINCT_COUNT, ENTROPY, RECIPROCITY
//   TOWER    -> DISTINCT_COUNT, ENTROPY
// Second level (VOICE_ALTERS only): SUM, MEAN, STD, MIN, MAX over the
// per-alter values.
//
// Pruned paths:
//   * SMS x DURATION (SMS durations are identically zero)
//   * TOWER with direction != OUT (only the caller side carries a tower)
//   * RECIPROCITY with direction != ALL or actor != EGO
//   * VOICE_ALTERS x {ALTER, TOWER}
//
// With everything enabled the space has 1305 features:
//   EGO, per time partition:
//     EVENT 9 + DURATION 2*3*5 + ALTER 9*2 + RECIPROCITY 3 + TOWER 3*2 = 66
//   VOICE_ALTERS, per time partition:
//     (EVENT 9*1 + DURATION 6*5) * 5 second-level ops = 195
//   (66 + 195) * 5 partitions = 1305

#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cdrforge {

enum class Actor : std::uint8_t { ego, voice_alters };
enum class EventFilter : std::uint8_t { call, sms, all };
enum class Direction : std::uint8_t { in, out, all };
enum class TimePartition : std::uint8_t { all, day, night, weekday, weekend };
enum class Field : std::uint8_t { event, duration, alter, tower };
enum class ReduceOp : std::uint8_t { count, sum, mean, std, min, max, distinct_count, entropy, reciprocity };
enum class Category : std::uint8_t { basic, temporal, movement, network };

std::string_view to_string(Actor v);
std::string_view to_string(EventFilter v);
std::string_view to_string(Direction v);
std::string_view to_string(TimePartition v);
std::string_view to_string(Field v);
std::string_view to_string(ReduceOp v);
std::string_view to_string(Category v);

std::optional<Actor> parse_actor(std::string_view s);
std::optional<EventFilter> parse_event_filter(std::string_view s);
std::optional<Direction> parse_direction(std::string_view s);
std::optional<TimePartition> parse_time_partition(std::string_view s);
std::optional<Field> parse_field(std::string_view s);
std::optional<ReduceOp> parse_reduce_op(std::string_view s);
std::optional<Category> parse_category(std::string_view s);

/// COUNT and DISTINCT_COUNT are zero, not missing, on an empty event set.
constexpr bool is_count_like(ReduceOp op) {
    return op == ReduceOp::count || op == ReduceOp::distinct_count;
}

struct FeatureDescriptor {
    Actor actor = Actor::ego;
    EventFilter event_type = EventFilter::all;
    Direction direction = Direction::all;
    TimePartition time_partition = TimePartition::all;
    Field field = Field::event;
    ReduceOp op1 = ReduceOp::count;
    std::optional<ReduceOp> op2;

    Category category() const;

    /// Canonical order is lexicographic over the fields in declaration order
    /// (absent op2 first).
    friend auto operator<=>(const FeatureDescriptor&, const FeatureDescriptor&) = default;
    friend bool operator==(const FeatureDescriptor&, const FeatureDescriptor&) = default;
};

/// `actor__type__direction__timepart__field__op1[__op2]`, lowercase.
std::string feature_name(const FeatureDescriptor& d);
std::optional<FeatureDescriptor> parse_feature_name(std::string_view name);

/// True when the path survives the op-map and the pruning rules above.
bool is_legal(const FeatureDescriptor& d);

enum class MissingPolicy : std::uint8_t { zero_fill, nan };

struct TaxonomyConfig {
    std::set<Actor> actors{Actor::ego, Actor::voice_alters};
    std::set<EventFilter> event_types{EventFilter::call, EventFilter::sms, EventFilter::all};
    std::set<Direction> directions{Direction::in, Direction::out, Direction::all};
    std::set<TimePartition> time_partitions{TimePartition::all, TimePartition::day, TimePartition::night,
                                            TimePartition::weekday, TimePartition::weekend};
    std::set<Field> fields{Field::event, Field::duration, Field::alter, Field::tower};
    std::set<ReduceOp> ops{ReduceOp::count,   ReduceOp::sum,           ReduceOp::mean,
                           ReduceOp::std,     ReduceOp::min,           ReduceOp::max,
                           ReduceOp::distinct_count, ReduceOp::entropy, ReduceOp::reciprocity};
    std::set<ReduceOp> second_level_ops{ReduceOp::sum, ReduceOp::mean, ReduceOp::std, ReduceOp::min, ReduceOp::max};
    /// Offset applied before DAY/NIGHT and WEEKDAY/WEEKEND classification.
    int utc_offset_hours = 0;
    MissingPolicy missing_policy = MissingPolicy::zero_fill;

    /// Throws ConfigError on unknown keys or values.
    static TaxonomyConfig from_json_text(std::string_view text);
    std::string to_json_text() const;
};

/// Cross product of the enabled branches, restricted to legal paths, in
/// canonical order. Throws EmptySpace when nothing survives.
std::vector<FeatureDescriptor> enumerate_feature_space(const TaxonomyConfig& config);

} // namespace cdrforge
