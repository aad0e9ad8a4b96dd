#include "cdrforge/feature_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>
#include <unordered_map>

#include <omp.h>

namespace cdrforge {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    auto q = a / b;
    return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}

struct Moments {
    std::size_t n = 0;
    double sum = 0.0;
    double mean = 0.0;
    double std = 0.0;
    double min = 0.0;
    double max = 0.0;
};

// Two-pass population moments over `xs` in the given order.
Moments moments(std::span<const double> xs) {
    Moments m;
    m.n = xs.size();
    if (xs.empty())
        return m;
    m.min = xs[0];
    m.max = xs[0];
    for (double x : xs) {
        m.sum += x;
        m.min = std::min(m.min, x);
        m.max = std::max(m.max, x);
    }
    m.mean = m.sum / static_cast<double>(m.n);
    double ss = 0.0;
    for (double x : xs) {
        double dx = x - m.mean;
        ss += dx * dx;
    }
    m.std = std::sqrt(ss / static_cast<double>(m.n));
    return m;
}

double pick(const Moments& m, ReduceOp op) {
    switch (op) {
    case ReduceOp::sum: return m.sum;
    case ReduceOp::mean: return m.mean;
    case ReduceOp::std: return m.std;
    case ReduceOp::min: return m.min;
    case ReduceOp::max: return m.max;
    default: break;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

// Natural-log entropy of the empirical distribution given by `counts`.
double entropy(std::span<const std::size_t> counts, std::size_t total) {
    double h = 0.0;
    const double n = static_cast<double>(total);
    for (auto c : counts) {
        double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
    }
    return h;
}

struct AlterStats {
    std::size_t count = 0;
    Moments durations;
    bool has_in = false;
    bool has_out = false;
};

// Everything a single (ego, filter) cell needs, computed once and shared by
// all descriptors with that filter.
struct GroupStats {
    std::size_t count = 0;
    Moments durations;
    std::vector<AlterStats> alters;
    std::vector<std::size_t> tower_counts;
    std::size_t tower_events = 0;
};

struct Scratch {
    std::vector<const EgoView*> filtered;
    std::vector<double> values;
    std::vector<std::int32_t> towers;
    GroupStats stats;
};

void collect(std::span<const EgoView> views, EventFilter type, Direction dir, TimePartition part, int offset,
             Scratch& s) {
    s.filtered.clear();
    for (const auto& v : views)
        if (matches(v, type, dir, part, offset))
            s.filtered.push_back(&v);

    auto& st = s.stats;
    st.count = s.filtered.size();

    s.values.clear();
    for (auto* v : s.filtered)
        s.values.push_back(static_cast<double>(v->duration));
    st.durations = moments(s.values);

    // Views are sorted by alter within an ego, so alters form runs.
    st.alters.clear();
    for (std::size_t i = 0; i < s.filtered.size();) {
        std::size_t j = i;
        AlterStats a;
        s.values.clear();
        while (j < s.filtered.size() && s.filtered[j]->alter == s.filtered[i]->alter) {
            s.values.push_back(static_cast<double>(s.filtered[j]->duration));
            (s.filtered[j]->direction == Direction::in ? a.has_in : a.has_out) = true;
            ++j;
        }
        a.count = j - i;
        a.durations = moments(s.values);
        st.alters.push_back(a);
        i = j;
    }

    s.towers.clear();
    for (auto* v : s.filtered)
        if (v->tower != no_tower)
            s.towers.push_back(v->tower);
    std::sort(s.towers.begin(), s.towers.end());
    st.tower_counts.clear();
    st.tower_events = s.towers.size();
    for (std::size_t i = 0; i < s.towers.size();) {
        std::size_t j = i;
        while (j < s.towers.size() && s.towers[j] == s.towers[i])
            ++j;
        st.tower_counts.push_back(j - i);
        i = j;
    }
}

double evaluate(const FeatureDescriptor& d, const GroupStats& st, double missing, std::vector<double>& buf) {
    if (d.actor == Actor::voice_alters) {
        if (st.alters.empty())
            return missing;
        buf.clear();
        for (const auto& a : st.alters)
            buf.push_back(d.field == Field::event ? static_cast<double>(a.count) : pick(a.durations, d.op1));
        return pick(moments(buf), *d.op2);
    }

    switch (d.field) {
    case Field::event:
        return static_cast<double>(st.count);
    case Field::duration:
        return st.count == 0 ? missing : pick(st.durations, d.op1);
    case Field::alter: {
        if (d.op1 == ReduceOp::distinct_count)
            return static_cast<double>(st.alters.size());
        if (st.alters.empty())
            return missing;
        if (d.op1 == ReduceOp::entropy) {
            buf.clear();
            std::vector<std::size_t> counts;
            counts.reserve(st.alters.size());
            for (const auto& a : st.alters)
                counts.push_back(a.count);
            return entropy(counts, st.count);
        }
        std::size_t both = 0;
        for (const auto& a : st.alters)
            both += (a.has_in && a.has_out) ? 1 : 0;
        return static_cast<double>(both) / static_cast<double>(st.alters.size());
    }
    case Field::tower:
        if (d.op1 == ReduceOp::distinct_count)
            return static_cast<double>(st.tower_counts.size());
        return st.tower_events == 0 ? missing : entropy(st.tower_counts, st.tower_events);
    }
    return missing;
}

double missing_value(MissingPolicy policy) {
    return policy == MissingPolicy::nan ? std::numeric_limits<double>::quiet_NaN() : 0.0;
}

struct FilterGroup {
    EventFilter type;
    Direction direction;
    TimePartition part;
    std::vector<std::size_t> columns;
};

std::vector<FilterGroup> group_by_filter(std::span<const FeatureDescriptor> features) {
    std::map<std::tuple<EventFilter, Direction, TimePartition>, std::vector<std::size_t>> groups;
    for (std::size_t c = 0; c < features.size(); ++c) {
        const auto& d = features[c];
        groups[{d.event_type, d.direction, d.time_partition}].push_back(c);
    }
    std::vector<FilterGroup> out;
    for (auto& [key, cols] : groups)
        out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), std::move(cols)});
    return out;
}

void compute_row(const EgoViews& ev, std::size_t ego, std::span<const FeatureDescriptor> features,
                 std::span<const FilterGroup> groups, int offset, MissingPolicy policy, FeatureMatrix& out,
                 Scratch& s) {
    const auto views = ev.of(ego);
    std::vector<double> buf;
    for (const auto& g : groups) {
        collect(views, g.type, g.direction, g.part, offset, s);
        for (auto col : g.columns) {
            const auto& d = features[col];
            double missing = is_count_like(d.op1) && d.actor == Actor::ego ? 0.0 : missing_value(policy);
            out.at(ego, col) = evaluate(d, s.stats, missing, buf);
        }
    }
}

std::map<SubscriberId, double> compute_single(const EgoViews& ev, const FeatureDescriptor& d, int offset,
                                              MissingPolicy policy) {
    std::map<SubscriberId, double> result;
    Scratch s;
    std::vector<double> buf;
    double missing = is_count_like(d.op1) && d.actor == Actor::ego ? 0.0 : missing_value(policy);
    for (std::size_t ego = 0; ego < ev.subscribers.size(); ++ego) {
        collect(ev.of(ego), d.event_type, d.direction, d.time_partition, offset, s);
        result.emplace(ev.subscribers[ego], evaluate(d, s.stats, missing, buf));
    }
    return result;
}

} // namespace

bool matches(const EgoView& v, EventFilter type, Direction direction, TimePartition part, int utc_offset_hours) {
    if (type == EventFilter::call && v.event_type != EventType::call)
        return false;
    if (type == EventFilter::sms && v.event_type != EventType::sms)
        return false;
    if (direction != Direction::all && v.direction != direction)
        return false;
    if (part == TimePartition::all)
        return true;
    const std::int64_t local = v.timestamp + std::int64_t{utc_offset_hours} * 3600;
    const std::int64_t day_index = floor_div(local, seconds_per_day);
    switch (part) {
    case TimePartition::day:
    case TimePartition::night: {
        const std::int64_t hour = (local - day_index * seconds_per_day) / 3600;
        const bool is_day = hour >= 6 && hour < 18;
        return (part == TimePartition::day) == is_day;
    }
    case TimePartition::weekday:
    case TimePartition::weekend: {
        // 1970-01-01 was a Thursday; 0 = Sunday.
        const std::int64_t dow = ((day_index + 4) % 7 + 7) % 7;
        const bool is_weekday = dow >= 1 && dow <= 5;
        return (part == TimePartition::weekday) == is_weekday;
    }
    case TimePartition::all: break;
    }
    return true;
}

EgoViews derive_ego_views(std::span<const CdrRecord> records) {
    EgoViews ev;
    {
        std::vector<std::string> ids;
        ids.reserve(records.size() * 2);
        std::vector<std::string> towers;
        for (const auto& r : records) {
            ids.push_back(r.caller.str());
            ids.push_back(r.callee.str());
            if (!r.caller_tower.empty())
                towers.push_back(r.caller_tower);
        }
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        std::sort(towers.begin(), towers.end());
        towers.erase(std::unique(towers.begin(), towers.end()), towers.end());
        ev.subscribers.reserve(ids.size());
        for (auto& id : ids)
            ev.subscribers.emplace_back(std::move(id));
        ev.towers = std::move(towers);
    }

    std::unordered_map<std::string_view, std::uint32_t> index;
    index.reserve(ev.subscribers.size());
    for (std::uint32_t i = 0; i < ev.subscribers.size(); ++i)
        index.emplace(ev.subscribers[i].str(), i);
    std::unordered_map<std::string_view, std::int32_t> tower_index;
    for (std::int32_t i = 0; i < static_cast<std::int32_t>(ev.towers.size()); ++i)
        tower_index.emplace(ev.towers[static_cast<std::size_t>(i)], i);

    ev.views.reserve(records.size() * 2);
    for (const auto& r : records) {
        const auto caller = index.at(r.caller.str());
        const auto callee = index.at(r.callee.str());
        const auto ts = r.timestamp.time_since_epoch().count();
        const auto tower = r.caller_tower.empty() ? no_tower : tower_index.at(r.caller_tower);
        ev.views.push_back({caller, callee, ts, r.duration, r.event_type, Direction::out, tower});
        ev.views.push_back({callee, caller, ts, r.duration, r.event_type, Direction::in, no_tower});
    }
    std::sort(ev.views.begin(), ev.views.end(), [](const EgoView& a, const EgoView& b) {
        return std::tie(a.ego, a.alter, a.timestamp, a.direction, a.event_type, a.duration, a.tower) <
               std::tie(b.ego, b.alter, b.timestamp, b.direction, b.event_type, b.duration, b.tower);
    });

    ev.offsets.assign(ev.subscribers.size() + 1, 0);
    for (const auto& v : ev.views)
        ++ev.offsets[v.ego + 1];
    for (std::size_t i = 1; i < ev.offsets.size(); ++i)
        ev.offsets[i] += ev.offsets[i - 1];
    return ev;
}

std::map<SubscriberId, double> compute_first_level(const EgoViews& views, const FeatureDescriptor& descriptor,
                                                   int utc_offset_hours, MissingPolicy policy) {
    if (descriptor.actor != Actor::ego || !is_legal(descriptor))
        throw std::invalid_argument("compute_first_level needs a legal EGO descriptor, got " +
                                    feature_name(descriptor));
    return compute_single(views, descriptor, utc_offset_hours, policy);
}

std::map<SubscriberId, double> compute_second_level(const EgoViews& views, const FeatureDescriptor& descriptor,
                                                    int utc_offset_hours, MissingPolicy policy) {
    if (!descriptor.op2 || !is_legal(descriptor))
        throw std::invalid_argument("compute_second_level needs a legal two-level descriptor, got " +
                                    feature_name(descriptor));
    return compute_single(views, descriptor, utc_offset_hours, policy);
}

std::vector<FeatureDescriptor> network_descriptors() {
    auto d = [](Direction dir, ReduceOp op) {
        return FeatureDescriptor{Actor::ego, EventFilter::all, dir, TimePartition::all, Field::alter, op,
                                 std::nullopt};
    };
    return {d(Direction::in, ReduceOp::distinct_count), d(Direction::out, ReduceOp::distinct_count),
            d(Direction::all, ReduceOp::distinct_count), d(Direction::all, ReduceOp::entropy),
            d(Direction::all, ReduceOp::reciprocity)};
}

std::map<SubscriberId, std::map<FeatureDescriptor, double>> compute_network_features(const EgoViews& views,
                                                                                     MissingPolicy policy) {
    std::map<SubscriberId, std::map<FeatureDescriptor, double>> out;
    for (const auto& d : network_descriptors())
        for (const auto& [id, value] : compute_first_level(views, d, 0, policy))
            out[id][d] = value;
    return out;
}

FeatureMatrix featurize(const EgoViews& ev, std::span<const FeatureDescriptor> features,
                        const TaxonomyConfig& config, Execution exec) {
    FeatureMatrix out(ev.subscribers, std::vector<FeatureDescriptor>(features.begin(), features.end()),
                      config.missing_policy);
    const auto groups = group_by_filter(features);
    const auto n = static_cast<std::int64_t>(ev.subscribers.size());
    const int offset = config.utc_offset_hours;

    if (exec == Execution::serial) {
        Scratch s;
        for (std::int64_t ego = 0; ego < n; ++ego)
            compute_row(ev, static_cast<std::size_t>(ego), features, groups, offset, config.missing_policy, out, s);
        return out;
    }

#pragma omp parallel
    {
        Scratch s;
#pragma omp for schedule(dynamic, 16)
        for (std::int64_t ego = 0; ego < n; ++ego)
            compute_row(ev, static_cast<std::size_t>(ego), features, groups, offset, config.missing_policy, out, s);
    }
    return out;
}

FeatureMatrix featurize(std::span<const CdrRecord> records, const TaxonomyConfig& config, Execution exec) {
    const auto features = enumerate_feature_space(config);
    return featurize(derive_ego_views(records), features, config, exec);
}

} // namespace cdrforge
