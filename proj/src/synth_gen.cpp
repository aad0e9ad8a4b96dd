#include "cdrforge/synth_gen.hpp"

#include "seeding.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iterator>
#include <numeric>
#include <ostream>
#include <random>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace cdrforge {

namespace {

constexpr std::array trait_names{"activity", "gregariousness", "mobility", "sms_affinity", "night_bias"};

constexpr std::uint64_t tag_population = 1;
constexpr std::uint64_t tag_counts = 2;
constexpr std::uint64_t tag_events = 3;
constexpr std::uint64_t tag_mmtr = 4;

constexpr std::int32_t tower_universe = 5000;
constexpr double call_duration_median = 60.0;
constexpr double call_duration_log_sd = 1.0;
constexpr double mmtr_amount_median = 50.0;
constexpr double mmtr_amount_log_sd = 1.0;
// Pool-size traits get their log-sd from the profile's contact/tower spread,
// capped so a handful of hubs cannot dominate the mean.
constexpr double pool_cv_cap = 1.0;

using detail::stream;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

double sigma_from_cv(double cv) { return std::sqrt(std::log1p(cv * cv)); }

double trait_sigma(Trait t, const CountryProfile& p) {
    switch (t) {
    case Trait::gregariousness:
        return sigma_from_cv(std::min(p.unique_contacts.std / p.unique_contacts.mean, pool_cv_cap));
    case Trait::mobility:
        return sigma_from_cv(std::min(p.unique_towers.std / p.unique_towers.mean, pool_cv_cap));
    default:
        return p.trait_sigma;
    }
}

// Gamma-Poisson sampler with the given mean and (capped) std. Falls back to
// Poisson when the std does not exceed the Poisson floor.
class DailyCount {
public:
    DailyCount(MeanStd target, double max_cv) {
        const double sd = std::min(target.std, max_cv * target.mean);
        const double excess = sd * sd - target.mean;
        shape_ = excess > 0.0 ? target.mean * target.mean / excess : 0.0;
    }

    template <class Rng>
    int operator()(double mean, Rng& rng) const {
        if (mean <= 0.0)
            return 0;
        double rate = mean;
        if (shape_ > 0.0)
            rate = std::gamma_distribution<double>(shape_, mean / shape_)(rng);
        if (rate <= 0.0)
            return 0;
        return static_cast<int>(std::poisson_distribution<long long>(rate)(rng));
    }

private:
    double shape_ = 0.0;
};

// Smallest scale c (to bisection precision) with mean_i min(size_i(c), cap_i)
// >= target, where size_i(c) = clamp(round(c * weight_i), 1, upper).
double solve_pool_scale(std::span<const double> weights, std::span<const int> caps, std::int64_t upper,
                        double target) {
    if (weights.empty() || upper < 1)
        return 0.0;
    auto mean_touched = [&](double c) {
        double total = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            auto size = std::clamp<std::int64_t>(std::llround(c * weights[i]), 1, upper);
            total += static_cast<double>(std::min<std::int64_t>(size, caps[i]));
        }
        return total / static_cast<double>(weights.size());
    };
    double lo = 0.0;
    double hi = static_cast<double>(upper) / *std::min_element(weights.begin(), weights.end()) + 1.0;
    if (mean_touched(hi) < target)
        return hi;
    for (int iter = 0; iter < 100; ++iter) {
        double mid = 0.5 * (lo + hi);
        (mean_touched(mid) < target ? lo : hi) = mid;
    }
    return hi;
}

// `k` distinct values from [0, range) excluding `skip` (pass range to skip
// nothing), in draw order. Floyd's algorithm.
template <class Rng>
std::vector<std::int64_t> sample_distinct(std::int64_t range, std::int64_t skip, std::int64_t k, Rng& rng) {
    const std::int64_t n = skip < range ? range - 1 : range;
    k = std::min(k, n);
    std::vector<std::int64_t> order;
    order.reserve(static_cast<std::size_t>(k));
    std::unordered_set<std::int64_t> chosen;
    chosen.reserve(static_cast<std::size_t>(k) * 2);
    for (std::int64_t j = n - k; j < n; ++j) {
        std::int64_t t = std::uniform_int_distribution<std::int64_t>(0, j)(rng);
        std::int64_t pick = chosen.contains(t) ? j : t;
        chosen.insert(pick);
        order.push_back(pick);
    }
    if (skip < range)
        for (auto& v : order)
            if (v >= skip)
                ++v;
    return order;
}

// First `pool.size()` slots cover the pool once, the rest draw uniformly;
// the assignment is then shuffled over the event sequence.
template <class Rng>
std::vector<std::int64_t> cover_then_draw(const std::vector<std::int64_t>& pool, std::size_t events, Rng& rng) {
    std::vector<std::int64_t> out;
    if (pool.empty())
        return out;
    out.reserve(events);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t k = 0; k < events; ++k)
        out.push_back(k < pool.size() ? pool[k] : pool[pick(rng)]);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

std::string tower_name(std::int64_t id) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "T%05lld", static_cast<long long>(id));
    return buf;
}

std::string subscriber_name(const std::string& prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%06zu", i);
    return prefix + buf;
}

std::string fmt(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

MeanStd read_mean_std(const nlohmann::json& doc, const char* key) {
    if (!doc.contains(key))
        throw ConfigError(std::string("profile: missing key '") + key + "'");
    const auto& v = doc.at(key);
    if (v.is_array() && v.size() == 2)
        return {v[0].get<double>(), v[1].get<double>()};
    if (v.is_object() && v.contains("mean") && v.contains("std"))
        return {v["mean"].get<double>(), v["std"].get<double>()};
    throw ConfigError(std::string("profile.") + key + " must be {\"mean\":..,\"std\":..}");
}

} // namespace

std::string_view to_string(Trait t) { return trait_names[static_cast<std::size_t>(t)]; }

std::optional<Trait> parse_trait(std::string_view s) {
    for (auto t : all_traits)
        if (to_string(t) == s)
            return t;
    return std::nullopt;
}

void CountryProfile::validate() const {
    if (name.empty())
        throw InvalidProfile("name must be non-empty");
    for (auto [label, ms] : {std::pair{"calls_per_user_day", calls_per_user_day},
                             std::pair{"sms_per_user_day", sms_per_user_day},
                             std::pair{"unique_contacts", unique_contacts}, std::pair{"unique_towers", unique_towers}}) {
        if (!(ms.mean > 0.0))
            throw InvalidProfile(std::string(label) + " mean must be > 0");
        if (!(ms.std >= 0.0))
            throw InvalidProfile(std::string(label) + " std must be >= 0");
    }
    if (!(adoption_base_rate > 0.0 && adoption_base_rate < 1.0))
        throw InvalidProfile("adoption_base_rate must lie in (0,1)");
    if (!(active_share > 0.0 && active_share < 1.0))
        throw InvalidProfile("active_share must lie in (0,1)");
    if (!(trait_sigma > 0.0))
        throw InvalidProfile("trait_sigma must be > 0");
    if (!(max_cv > 0.0))
        throw InvalidProfile("max_cv must be > 0");
    for (const auto& [t, c] : planted_coefficients)
        if (!std::isfinite(c))
            throw InvalidProfile("planted coefficient for " + std::string(to_string(t)) + " is not finite");
}

CountryProfile CountryProfile::from_json_text(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("profile is not valid JSON: ") + e.what());
    }
    CountryProfile p;
    try {
        if (!doc.contains("name"))
            throw ConfigError("profile: missing key 'name'");
        p.name = doc["name"].get<std::string>();
        p.calls_per_user_day = read_mean_std(doc, "calls_per_user_day");
        p.sms_per_user_day = read_mean_std(doc, "sms_per_user_day");
        p.unique_contacts = read_mean_std(doc, "unique_contacts");
        p.unique_towers = read_mean_std(doc, "unique_towers");
        if (!doc.contains("adoption_base_rate"))
            throw ConfigError("profile: missing key 'adoption_base_rate'");
        p.adoption_base_rate = doc["adoption_base_rate"].get<double>();
        if (doc.contains("planted_coefficients")) {
            for (const auto& [key, value] : doc["planted_coefficients"].items()) {
                auto t = parse_trait(key);
                if (!t)
                    throw ConfigError("profile.planted_coefficients: unknown trait '" + key + "'");
                p.planted_coefficients[*t] = value.get<double>();
            }
        }
        p.seed = doc.value("seed", std::uint64_t{0});
        p.active_share = doc.value("active_share", p.active_share);
        p.active_gain = doc.value("active_gain", p.active_gain);
        p.trait_sigma = doc.value("trait_sigma", p.trait_sigma);
        p.max_cv = doc.value("max_cv", p.max_cv);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("profile: ") + e.what());
    }
    p.validate();
    return p;
}

std::string CountryProfile::to_json_text() const {
    nlohmann::json doc;
    doc["name"] = name;
    doc["calls_per_user_day"] = {{"mean", calls_per_user_day.mean}, {"std", calls_per_user_day.std}};
    doc["sms_per_user_day"] = {{"mean", sms_per_user_day.mean}, {"std", sms_per_user_day.std}};
    doc["unique_contacts"] = {{"mean", unique_contacts.mean}, {"std", unique_contacts.std}};
    doc["unique_towers"] = {{"mean", unique_towers.mean}, {"std", unique_towers.std}};
    doc["adoption_base_rate"] = adoption_base_rate;
    doc["planted_coefficients"] = nlohmann::json::object();
    for (const auto& [t, c] : planted_coefficients)
        doc["planted_coefficients"][std::string(to_string(t))] = c;
    doc["seed"] = seed;
    doc["active_share"] = active_share;
    doc["active_gain"] = active_gain;
    doc["trait_sigma"] = trait_sigma;
    doc["max_cv"] = max_cv;
    return doc.dump(2);
}

std::vector<std::string> builtin_profile_names() { return {"ghana", "pakistan", "zambia"}; }

CountryProfile builtin_profile(std::string_view name) {
    CountryProfile p;
    p.name = std::string(name);
    p.adoption_base_rate = 0.5;
    // Planted coefficient vectors have disjoint trait support across the
    // three profiles, so a model fit on one context carries no signal into
    // another.
    if (name == "ghana") {
        p.calls_per_user_day = {6.53, 6.99};
        p.sms_per_user_day = {3.10, 100.36};
        p.unique_contacts = {21.66, 24.91};
        p.unique_towers = {12.98, 16.07};
        p.planted_coefficients = {{Trait::activity, 2.4}, {Trait::gregariousness, 1.8}};
        p.seed = 1001;
    } else if (name == "pakistan") {
        p.calls_per_user_day = {7.76, 10.25};
        p.sms_per_user_day = {38.71, 80.83};
        p.unique_contacts = {46.93, 139.67};
        p.unique_towers = {24.15, 57.30};
        p.planted_coefficients = {{Trait::mobility, 2.4}, {Trait::night_bias, 1.8}};
        p.seed = 1002;
    } else if (name == "zambia") {
        p.calls_per_user_day = {10.26, 102.86};
        p.sms_per_user_day = {10.88, 262.81};
        p.unique_contacts = {17.63, 328.63};
        p.unique_towers = {7.35, 17.56};
        p.planted_coefficients = {{Trait::sms_affinity, 3.0}};
        p.seed = 1003;
    } else {
        throw ConfigError("unknown profile '" + std::string(name) + "' (expected ghana, pakistan or zambia)");
    }
    return p;
}

std::vector<LatentSubscriber> generate_population(const CountryProfile& profile, std::size_t n) {
    profile.validate();
    if (n == 0)
        throw InvalidProfile("population size must be >= 1");

    std::array<double, trait_count> sigma{};
    for (auto t : all_traits)
        sigma[static_cast<std::size_t>(t)] = trait_sigma(t, profile);
    std::array<double, trait_count> coef{};
    for (const auto& [t, c] : profile.planted_coefficients)
        coef[static_cast<std::size_t>(t)] = c;

    const double base = logit(profile.adoption_base_rate);
    const double active_base = logit(profile.active_share);

    std::vector<LatentSubscriber> population(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto rng = stream(profile.seed, tag_population, i);
        std::normal_distribution<double> normal;
        std::uniform_real_distribution<double> unit;
        auto& s = population[i];
        s.id = SubscriberId(subscriber_name(profile.name, i));
        s.score = 0.0;
        for (std::size_t t = 0; t < trait_count; ++t) {
            s.z_scores[t] = normal(rng);
            s.traits[t] = std::exp(sigma[t] * s.z_scores[t] - 0.5 * sigma[t] * sigma[t]);
            s.score += coef[t] * s.z_scores[t];
        }
        s.adoption_propensity = logistic(base + s.score);
        const double u_adopt = unit(rng);
        const double u_active = unit(rng);
        if (u_adopt >= s.adoption_propensity)
            s.assigned_label = LabelClass::voice_only;
        else if (u_active < logistic(active_base + profile.active_gain * s.score))
            s.assigned_label = LabelClass::active;
        else
            s.assigned_label = LabelClass::registered;
    }
    return population;
}

std::vector<CdrRecord> generate_cdr(std::span<const LatentSubscriber> population, int days,
                                    const CountryProfile& profile, const CdrOptions& options, Execution exec) {
    profile.validate();
    if (days < 1)
        throw std::invalid_argument("generate_cdr: days must be >= 1");
    const auto n = static_cast<std::int64_t>(population.size());
    const auto ndays = static_cast<std::size_t>(days);

    // Daily counts per subscriber.
    const DailyCount call_count(profile.calls_per_user_day, profile.max_cv);
    const DailyCount sms_count(profile.sms_per_user_day, profile.max_cv);
    std::vector<std::vector<int>> calls(population.size()), sms(population.size());
    std::vector<int> out_events(population.size(), 0);
    auto draw_counts = [&](std::int64_t i) {
        const auto& s = population[static_cast<std::size_t>(i)];
        auto rng = stream(profile.seed, tag_counts, static_cast<std::uint64_t>(i));
        const double call_mean = options.silence ? 0.0 : profile.calls_per_user_day.mean * s.trait(Trait::activity);
        const double sms_mean = options.silence ? 0.0 : profile.sms_per_user_day.mean * s.trait(Trait::sms_affinity);
        auto& c = calls[static_cast<std::size_t>(i)];
        auto& m = sms[static_cast<std::size_t>(i)];
        c.resize(ndays);
        m.resize(ndays);
        int total = 0;
        for (std::size_t d = 0; d < ndays; ++d) {
            c[d] = call_count(call_mean, rng);
            m[d] = sms_count(sms_mean, rng);
            total += c[d] + m[d];
        }
        // A lone subscriber has nobody to call.
        out_events[static_cast<std::size_t>(i)] = n > 1 ? total : 0;
    };
    if (exec == Execution::serial) {
        for (std::int64_t i = 0; i < n; ++i)
            draw_counts(i);
    } else {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i)
            draw_counts(i);
    }

    // Pool sizes. Each touched pool member also sees the subscriber as an
    // incoming alter, so distinct contacts are about twice the touched pool.
    std::vector<double> greg, mob;
    greg.reserve(population.size());
    mob.reserve(population.size());
    for (const auto& s : population) {
        greg.push_back(s.trait(Trait::gregariousness));
        mob.push_back(s.trait(Trait::mobility));
    }
    const double contact_scale = solve_pool_scale(greg, out_events, n - 1, profile.unique_contacts.mean / 2.0);
    const double tower_scale = solve_pool_scale(mob, out_events, tower_universe, profile.unique_towers.mean);

    std::vector<std::vector<CdrRecord>> per_subscriber(population.size());
    auto emit = [&](std::int64_t i) {
        const auto idx = static_cast<std::size_t>(i);
        const auto& s = population[idx];
        const int total = out_events[idx];
        if (total == 0)
            return;
        auto rng = stream(profile.seed, tag_events, static_cast<std::uint64_t>(i));
        const auto contacts = std::clamp<std::int64_t>(std::llround(contact_scale * greg[idx]), 1, n - 1);
        const auto towers = std::clamp<std::int64_t>(std::llround(tower_scale * mob[idx]), 1, tower_universe);
        const auto contact_pool = sample_distinct(n, i, contacts, rng);
        const auto tower_pool = sample_distinct(tower_universe, tower_universe, towers, rng);
        const auto alters = cover_then_draw(contact_pool, static_cast<std::size_t>(total), rng);
        const auto cells = cover_then_draw(tower_pool, static_cast<std::size_t>(total), rng);

        const double nb = s.trait(Trait::night_bias);
        const double p_night = nb / (1.0 + nb);
        std::uniform_real_distribution<double> unit;
        std::uniform_int_distribution<std::int64_t> half_day(0, seconds_per_day / 2 - 1);
        std::lognormal_distribution<double> call_len(std::log(call_duration_median), call_duration_log_sd);

        auto& out = per_subscriber[idx];
        out.reserve(static_cast<std::size_t>(total));
        std::size_t k = 0;
        const auto start = options.start.time_since_epoch().count();
        for (std::size_t d = 0; d < ndays; ++d) {
            const int events_today = calls[idx][d] + sms[idx][d];
            for (int e = 0; e < events_today; ++e, ++k) {
                const bool is_call = e < calls[idx][d];
                const bool night = unit(rng) < p_night;
                std::int64_t second = half_day(rng);
                if (night)
                    second = second < seconds_per_day / 4 ? second : second + seconds_per_day / 2;
                else
                    second += seconds_per_day / 4;
                CdrRecord r;
                r.caller = s.id;
                r.callee = population[static_cast<std::size_t>(alters[k])].id;
                r.timestamp = Timestamp(std::chrono::seconds(
                    start + static_cast<std::int64_t>(d) * seconds_per_day + second));
                r.event_type = is_call ? EventType::call : EventType::sms;
                r.duration = is_call ? std::max<std::int64_t>(1, std::llround(call_len(rng))) : 0;
                r.caller_tower = tower_name(cells[k]);
                out.push_back(std::move(r));
            }
        }
    };
    if (exec == Execution::serial) {
        for (std::int64_t i = 0; i < n; ++i)
            emit(i);
    } else {
#pragma omp parallel for schedule(dynamic, 64)
        for (std::int64_t i = 0; i < n; ++i)
            emit(i);
    }

    std::size_t total = 0;
    for (const auto& v : per_subscriber)
        total += v.size();
    std::vector<CdrRecord> records;
    records.reserve(total);
    for (auto& v : per_subscriber) {
        std::move(v.begin(), v.end(), std::back_inserter(records));
        std::vector<CdrRecord>().swap(v);
    }
    std::sort(records.begin(), records.end(), [](const CdrRecord& a, const CdrRecord& b) {
        return std::tie(a.timestamp, a.caller, a.callee, a.event_type, a.duration, a.caller_tower) <
               std::tie(b.timestamp, b.caller, b.callee, b.event_type, b.duration, b.caller_tower);
    });
    return records;
}

std::vector<MmtrRecord> generate_mmtr(std::span<const LatentSubscriber> population, const TimeWindows& windows,
                                      const CountryProfile& profile) {
    windows.validate();
    const int months = windows.evaluation_months;
    const std::int64_t block = std::int64_t{windows.month_days} * seconds_per_day;
    const std::int64_t eval_start = windows.evaluation_start().time_since_epoch().count();

    std::vector<MmtrRecord> records;
    for (std::size_t i = 0; i < population.size(); ++i) {
        const auto& s = population[i];
        if (s.assigned_label == LabelClass::voice_only)
            continue;
        if (s.assigned_label == LabelClass::registered && months < 2)
            throw ConfigError("REGISTERED subscribers need evaluation_months >= 2");
        auto rng = stream(profile.seed, tag_mmtr, i);

        std::vector<int> blocks(static_cast<std::size_t>(months));
        std::iota(blocks.begin(), blocks.end(), 0);
        if (s.assigned_label == LabelClass::registered) {
            std::shuffle(blocks.begin(), blocks.end(), rng);
            const int keep = std::uniform_int_distribution<int>(1, months - 1)(rng);
            blocks.resize(static_cast<std::size_t>(keep));
            std::sort(blocks.begin(), blocks.end());
        }
        std::poisson_distribution<int> extra(s.assigned_label == LabelClass::active ? 1.5 : 1.0);
        std::uniform_int_distribution<std::int64_t> offset(0, block - 1);
        std::uniform_int_distribution<int> type(0, 4);
        std::lognormal_distribution<double> amount(std::log(mmtr_amount_median), mmtr_amount_log_sd);
        for (int b : blocks) {
            const int count = 1 + extra(rng);
            for (int k = 0; k < count; ++k) {
                MmtrRecord r;
                r.subscriber = s.id;
                r.timestamp = Timestamp(std::chrono::seconds(eval_start + std::int64_t{b} * block + offset(rng)));
                r.tx_type = static_cast<TxType>(type(rng));
                r.amount = Amount{std::llround(amount(rng) * 100.0), 2};
                records.push_back(std::move(r));
            }
        }
    }
    std::sort(records.begin(), records.end(), [](const MmtrRecord& a, const MmtrRecord& b) {
        return std::tie(a.timestamp, a.subscriber, a.tx_type, a.amount.units) <
               std::tie(b.timestamp, b.subscriber, b.tx_type, b.amount.units);
    });
    return records;
}

CdrMoments measure_moments(std::span<const CdrRecord> records, std::span<const LatentSubscriber> population,
                           int days) {
    CdrMoments m;
    if (population.empty() || days < 1)
        return m;
    std::unordered_map<std::string_view, std::uint32_t> index;
    index.reserve(population.size());
    for (std::uint32_t i = 0; i < population.size(); ++i)
        index.emplace(population[i].id.str(), i);

    std::size_t n_calls = 0, n_sms = 0;
    std::vector<std::uint64_t> contact_pairs;
    contact_pairs.reserve(records.size() * 2);
    std::vector<std::pair<std::uint32_t, std::string_view>> tower_pairs;
    tower_pairs.reserve(records.size());
    for (const auto& r : records) {
        (r.event_type == EventType::call ? n_calls : n_sms) += 1;
        const std::uint64_t a = index.at(r.caller.str());
        const std::uint64_t b = index.at(r.callee.str());
        contact_pairs.push_back(a << 32 | b);
        contact_pairs.push_back(b << 32 | a);
        tower_pairs.emplace_back(static_cast<std::uint32_t>(a), r.caller_tower);
    }
    std::sort(contact_pairs.begin(), contact_pairs.end());
    const auto distinct_contacts =
        std::unique(contact_pairs.begin(), contact_pairs.end()) - contact_pairs.begin();
    std::sort(tower_pairs.begin(), tower_pairs.end());
    const auto distinct_towers = std::unique(tower_pairs.begin(), tower_pairs.end()) - tower_pairs.begin();

    const double n = static_cast<double>(population.size());
    m.calls_per_user_day = static_cast<double>(n_calls) / (n * days);
    m.sms_per_user_day = static_cast<double>(n_sms) / (n * days);
    m.unique_contacts = static_cast<double>(distinct_contacts) / n;
    m.unique_towers = static_cast<double>(distinct_towers) / n;
    return m;
}

void write_ground_truth(std::ostream& out, std::span<const LatentSubscriber> population) {
    out << "subscriber,label,propensity";
    for (auto t : all_traits)
        out << ",trait_" << to_string(t);
    out << '\n';
    for (const auto& s : population) {
        out << s.id.str() << ',' << to_string(s.assigned_label) << ',' << fmt(s.adoption_propensity);
        for (auto v : s.traits)
            out << ',' << fmt(v);
        out << '\n';
    }
}

} // namespace cdrforge
