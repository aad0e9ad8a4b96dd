#pragma once

// Synthetic CDR/MMTR populations with a planted adoption mechanism.
//
// Each subscriber carries five log-normal latent traits with unit mean:
//   activity        scales the daily call rate
//   sms_affinity    scales the daily SMS rate
//   gregariousness  scales the outgoing contact pool
//   mobility        scales the tower pool
//   night_bias      shifts events towards 18:00-06:00
// The adoption score is sum_t coefficient_t * z_t with z_t the standardized
// log-trait, propensity = logistic(logit(base_rate) + score). Adopters become
// ACTIVE with probability logistic(logit(active_share) + active_gain * score),
// REGISTERED otherwise.
//
// Daily event counts are gamma-Poisson (negative binomial). Contact and tower
// pool sizes are solved by bisection so the expected distinct-contact and
// distinct-tower means hit the profile targets for the realised event
// counts.
//
// Randomness is counter-based: every subscriber gets its own engine seeded
// from (seed, stream tag, subscriber index), so results do not depend on
// thread count or scheduling.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdrforge/cdr_model.hpp"
#include "cdrforge/parallel.hpp"

namespace cdrforge {

enum class Trait : std::uint8_t { activity, gregariousness, mobility, sms_affinity, night_bias };
inline constexpr std::size_t trait_count = 5;
inline constexpr std::array all_traits{Trait::activity, Trait::gregariousness, Trait::mobility, Trait::sms_affinity,
                                       Trait::night_bias};

std::string_view to_string(Trait t);
std::optional<Trait> parse_trait(std::string_view s);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

struct CountryProfile {
    std::string name;
    MeanStd calls_per_user_day;
    MeanStd sms_per_user_day;
    MeanStd unique_contacts;
    MeanStd unique_towers;
    double adoption_base_rate = 0.5;
    std::map<Trait, double> planted_coefficients;
    std::uint64_t seed = 0;

    /// Share of adopters that are ACTIVE when the score is zero.
    double active_share = 0.3;
    /// Weight of the score in the ACTIVE vs REGISTERED draw.
    double active_gain = 0.5;
    /// Log-sd of activity, sms_affinity and night_bias.
    double trait_sigma = 0.7;
    /// Coefficient-of-variation cap applied to the profile stds before they
    /// drive the samplers.
    double max_cv = 1.5;

    /// Throws InvalidProfile.
    void validate() const;

    static CountryProfile from_json_text(std::string_view text);
    std::string to_json_text() const;
};

/// Built-in profiles: "ghana", "pakistan", "zambia".
std::vector<std::string> builtin_profile_names();
/// Throws ConfigError for an unknown name.
CountryProfile builtin_profile(std::string_view name);

struct LatentSubscriber {
    SubscriberId id;
    std::array<double, trait_count> traits{};
    /// Standardized log-traits, N(0,1) by construction.
    std::array<double, trait_count> z_scores{};
    double score = 0.0;
    double adoption_propensity = 0.0;
    LabelClass assigned_label = LabelClass::voice_only;

    double trait(Trait t) const { return traits[static_cast<std::size_t>(t)]; }
    double z(Trait t) const { return z_scores[static_cast<std::size_t>(t)]; }
};

std::vector<LatentSubscriber> generate_population(const CountryProfile& profile, std::size_t n);

struct CdrOptions {
    Timestamp start{};
    /// Forces every subscriber's activity and sms rates to zero.
    bool silence = false;
};

/// `days` of CDR starting at `options.start`, sorted by timestamp, then
/// caller, callee. Callees are always population members.
std::vector<CdrRecord> generate_cdr(std::span<const LatentSubscriber> population, int days,
                                    const CountryProfile& profile, const CdrOptions& options = {},
                                    Execution exec = Execution::parallel);

/// Mobile-money activity in the evaluation window consistent with each
/// subscriber's assigned label. REGISTERED needs at least two month blocks.
std::vector<MmtrRecord> generate_mmtr(std::span<const LatentSubscriber> population, const TimeWindows& windows,
                                      const CountryProfile& profile);

/// Per-user moments of a generated CDR set over `n` subscribers and
/// `days` days.
struct CdrMoments {
    double calls_per_user_day = 0.0;
    double sms_per_user_day = 0.0;
    double unique_contacts = 0.0;
    double unique_towers = 0.0;
};

CdrMoments measure_moments(std::span<const CdrRecord> records, std::span<const LatentSubscriber> population,
                           int days);

void write_ground_truth(std::ostream& out, std::span<const LatentSubscriber> population);

} // namespace cdrforge
