#include "cdrforge/feature_space.hpp"

#include <array>
#include <utility>

#include <nlohmann/json.hpp>

#include "cdrforge/errors.hpp"

namespace cdrforge {

namespace {

constexpr std::array actor_names{"ego", "voice_alters"};
constexpr std::array event_filter_names{"call", "sms", "all"};
constexpr std::array direction_names{"in", "out", "all"};
constexpr std::array time_partition_names{"all", "day", "night", "weekday", "weekend"};
constexpr std::array field_names{"event", "duration", "alter", "tower"};
constexpr std::array reduce_op_names{"count", "sum", "mean", "std", "min", "max", "distinct_count", "entropy",
                                     "reciprocity"};
constexpr std::array category_names{"basic", "temporal", "movement", "network"};

template <class Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<const char*, N>& names, std::string_view s) {
    for (std::size_t i = 0; i < N; ++i)
        if (s == names[i])
            return static_cast<Enum>(i);
    return std::nullopt;
}

template <class Enum>
constexpr std::size_t idx(Enum e) {
    return static_cast<std::size_t>(e);
}

template <class Enum, std::size_t N>
std::set<Enum> read_set(const nlohmann::json& doc, const char* key, const std::array<const char*, N>& names,
                        std::set<Enum> fallback) {
    if (!doc.contains(key))
        return fallback;
    const auto& arr = doc.at(key);
    if (!arr.is_array())
        throw ConfigError(std::string("taxonomy.") + key + " must be an array");
    std::set<Enum> out;
    for (const auto& item : arr) {
        if (!item.is_string())
            throw ConfigError(std::string("taxonomy.") + key + " entries must be strings");
        auto v = lookup<Enum>(names, item.get<std::string>());
        if (!v)
            throw ConfigError(std::string("taxonomy.") + key + ": unknown value '" + item.get<std::string>() + "'");
        out.insert(*v);
    }
    return out;
}

template <class Enum, std::size_t N>
nlohmann::json write_set(const std::set<Enum>& values, const std::array<const char*, N>& names) {
    auto arr = nlohmann::json::array();
    for (auto v : values)
        arr.push_back(names[idx(v)]);
    return arr;
}

} // namespace

std::string_view to_string(Actor v) { return actor_names[idx(v)]; }
std::string_view to_string(EventFilter v) { return event_filter_names[idx(v)]; }
std::string_view to_string(Direction v) { return direction_names[idx(v)]; }
std::string_view to_string(TimePartition v) { return time_partition_names[idx(v)]; }
std::string_view to_string(Field v) { return field_names[idx(v)]; }
std::string_view to_string(ReduceOp v) { return reduce_op_names[idx(v)]; }
std::string_view to_string(Category v) { return category_names[idx(v)]; }

std::optional<Actor> parse_actor(std::string_view s) { return lookup<Actor>(actor_names, s); }
std::optional<EventFilter> parse_event_filter(std::string_view s) { return lookup<EventFilter>(event_filter_names, s); }
std::optional<Direction> parse_direction(std::string_view s) { return lookup<Direction>(direction_names, s); }
std::optional<TimePartition> parse_time_partition(std::string_view s) {
    return lookup<TimePartition>(time_partition_names, s);
}
std::optional<Field> parse_field(std::string_view s) { return lookup<Field>(field_names, s); }
std::optional<ReduceOp> parse_reduce_op(std::string_view s) { return lookup<ReduceOp>(reduce_op_names, s); }
std::optional<Category> parse_category(std::string_view s) { return lookup<Category>(category_names, s); }

Category FeatureDescriptor::category() const {
    if (field == Field::tower)
        return Category::movement;
    if (actor == Actor::voice_alters || field == Field::alter)
        return Category::network;
    if (time_partition != TimePartition::all)
        return Category::temporal;
    return Category::basic;
}

std::string feature_name(const FeatureDescriptor& d) {
    std::string name;
    for (std::string_view part : {to_string(d.actor), to_string(d.event_type), to_string(d.direction),
                                  to_string(d.time_partition), to_string(d.field), to_string(d.op1)}) {
        if (!name.empty())
            name += "__";
        name += part;
    }
    if (d.op2) {
        name += "__";
        name += to_string(*d.op2);
    }
    return name;
}

std::optional<FeatureDescriptor> parse_feature_name(std::string_view name) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        auto pos = name.find("__", start);
        parts.push_back(name.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos)
            break;
        start = pos + 2;
    }
    if (parts.size() != 6 && parts.size() != 7)
        return std::nullopt;
    auto actor = parse_actor(parts[0]);
    auto type = parse_event_filter(parts[1]);
    auto dir = parse_direction(parts[2]);
    auto part = parse_time_partition(parts[3]);
    auto field = parse_field(parts[4]);
    auto op1 = parse_reduce_op(parts[5]);
    if (!actor || !type || !dir || !part || !field || !op1)
        return std::nullopt;
    FeatureDescriptor d{*actor, *type, *dir, *part, *field, *op1, std::nullopt};
    if (parts.size() == 7) {
        auto op2 = parse_reduce_op(parts[6]);
        if (!op2)
            return std::nullopt;
        d.op2 = op2;
    }
    return d;
}

bool is_legal(const FeatureDescriptor& d) {
    const auto op = d.op1;
    switch (d.field) {
    case Field::event:
        if (op != ReduceOp::count)
            return false;
        break;
    case Field::duration:
        if (op != ReduceOp::sum && op != ReduceOp::mean && op != ReduceOp::std && op != ReduceOp::min &&
            op != ReduceOp::max)
            return false;
        if (d.event_type == EventFilter::sms)
            return false;
        break;
    case Field::alter:
        if (op != ReduceOp::distinct_count && op != ReduceOp::entropy && op != ReduceOp::reciprocity)
            return false;
        break;
    case Field::tower:
        if (op != ReduceOp::distinct_count && op != ReduceOp::entropy)
            return false;
        if (d.direction != Direction::out)
            return false;
        break;
    }
    if (op == ReduceOp::reciprocity && (d.direction != Direction::all || d.actor != Actor::ego))
        return false;

    if (d.actor == Actor::ego)
        return !d.op2.has_value();

    if (d.field != Field::event && d.field != Field::duration)
        return false;
    if (!d.op2)
        return false;
    auto op2 = *d.op2;
    return op2 == ReduceOp::sum || op2 == ReduceOp::mean || op2 == ReduceOp::std || op2 == ReduceOp::min ||
           op2 == ReduceOp::max;
}

std::vector<FeatureDescriptor> enumerate_feature_space(const TaxonomyConfig& config) {
    std::vector<FeatureDescriptor> space;
    for (auto actor : config.actors)
        for (auto type : config.event_types)
            for (auto dir : config.directions)
                for (auto part : config.time_partitions)
                    for (auto field : config.fields)
                        for (auto op1 : config.ops) {
                            FeatureDescriptor d{actor, type, dir, part, field, op1, std::nullopt};
                            if (actor == Actor::ego) {
                                if (is_legal(d))
                                    space.push_back(d);
                                continue;
                            }
                            for (auto op2 : config.second_level_ops) {
                                d.op2 = op2;
                                if (is_legal(d))
                                    space.push_back(d);
                            }
                        }
    // std::set iteration is already in enum order, so `space` is sorted.
    if (space.empty())
        throw EmptySpace();
    return space;
}

TaxonomyConfig TaxonomyConfig::from_json_text(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("taxonomy config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object())
        throw ConfigError("taxonomy config must be a JSON object");
    static const std::set<std::string> known{"actors", "event_types", "directions", "time_partitions", "fields",
                                             "ops", "second_level_ops", "utc_offset_hours", "missing_policy"};
    for (const auto& [key, _] : doc.items())
        if (!known.contains(key))
            throw ConfigError("taxonomy: unknown key '" + key + "'");

    TaxonomyConfig c;
    c.actors = read_set(doc, "actors", actor_names, c.actors);
    c.event_types = read_set(doc, "event_types", event_filter_names, c.event_types);
    c.directions = read_set(doc, "directions", direction_names, c.directions);
    c.time_partitions = read_set(doc, "time_partitions", time_partition_names, c.time_partitions);
    c.fields = read_set(doc, "fields", field_names, c.fields);
    c.ops = read_set(doc, "ops", reduce_op_names, c.ops);
    c.second_level_ops = read_set(doc, "second_level_ops", reduce_op_names, c.second_level_ops);
    if (doc.contains("utc_offset_hours")) {
        if (!doc["utc_offset_hours"].is_number_integer())
            throw ConfigError("taxonomy.utc_offset_hours must be an integer");
        c.utc_offset_hours = doc["utc_offset_hours"].get<int>();
        if (c.utc_offset_hours < -14 || c.utc_offset_hours > 14)
            throw ConfigError("taxonomy.utc_offset_hours out of range");
    }
    if (doc.contains("missing_policy")) {
        auto p = doc["missing_policy"].get<std::string>();
        if (p == "zero_fill")
            c.missing_policy = MissingPolicy::zero_fill;
        else if (p == "nan")
            c.missing_policy = MissingPolicy::nan;
        else
            throw ConfigError("taxonomy.missing_policy must be 'zero_fill' or 'nan'");
    }
    return c;
}

std::string TaxonomyConfig::to_json_text() const {
    nlohmann::json doc;
    doc["actors"] = write_set(actors, actor_names);
    doc["event_types"] = write_set(event_types, event_filter_names);
    doc["directions"] = write_set(directions, direction_names);
    doc["time_partitions"] = write_set(time_partitions, time_partition_names);
    doc["fields"] = write_set(fields, field_names);
    doc["ops"] = write_set(ops, reduce_op_names);
    doc["second_level_ops"] = write_set(second_level_ops, reduce_op_names);
    doc["utc_offset_hours"] = utc_offset_hours;
    doc["missing_policy"] = missing_policy == MissingPolicy::zero_fill ? "zero_fill" : "nan";
    return doc.dump();
}

} // namespace cdrforge
