#pragma once

// Ego-view derivation and the reduce kernels that populate a FeatureMatrix.
//
// Every CDR row becomes two views: the caller's (direction OUT, carries the
// caller tower) and the callee's (direction IN, no tower). Views are grouped
// by ego and, within an ego, sorted on every field, so each reduction runs
// over a canonical sequence regardless of input order. Rows are computed
// independently, which makes the OpenMP version bit-identical to the serial
// one for any thread count.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cdrforge/cdr_model.hpp"
#include "cdrforge/feature_matrix.hpp"
#include "cdrforge/feature_space.hpp"
#include "cdrforge/parallel.hpp"

namespace cdrforge {

inline constexpr std::int32_t no_tower = -1;

struct EgoView {
    std::uint32_t ego = 0;
    std::uint32_t alter = 0;
    std::int64_t timestamp = 0;
    std::int64_t duration = 0;
    EventType event_type = EventType::call;
    Direction direction = Direction::out;
    std::int32_t tower = no_tower;
};

/// All views of a record set, sorted by (ego, alter, timestamp, direction,
/// type, duration, tower). `ego`/`alter` index `subscribers`, which is sorted.
struct EgoViews {
    std::vector<SubscriberId> subscribers;
    std::vector<std::string> towers;
    std::vector<EgoView> views;
    /// views of subscriber i are [offsets[i], offsets[i+1]).
    std::vector<std::size_t> offsets;

    std::span<const EgoView> of(std::size_t ego) const {
        return std::span<const EgoView>(views).subspan(offsets[ego], offsets[ego + 1] - offsets[ego]);
    }
};

EgoViews derive_ego_views(std::span<const CdrRecord> records);

/// True when the view passes the descriptor's type, direction and time
/// partition filters.
bool matches(const EgoView& view, EventFilter type, Direction direction, TimePartition part, int utc_offset_hours);

/// Per-ego value of one EGO descriptor.
std::map<SubscriberId, double> compute_first_level(const EgoViews& views, const FeatureDescriptor& descriptor,
                                                   int utc_offset_hours = 0,
                                                   MissingPolicy policy = MissingPolicy::zero_fill);

/// Per-ego value of one two-level (VOICE_ALTERS) descriptor: op1 per alter,
/// then op2 across the ego's alters.
std::map<SubscriberId, double> compute_second_level(const EgoViews& views, const FeatureDescriptor& descriptor,
                                                    int utc_offset_hours = 0,
                                                    MissingPolicy policy = MissingPolicy::zero_fill);

/// First-degree network structure over all events: in-degree, out-degree,
/// distinct alters, reciprocity and alter entropy.
std::vector<FeatureDescriptor> network_descriptors();
std::map<SubscriberId, std::map<FeatureDescriptor, double>> compute_network_features(
    const EgoViews& views, MissingPolicy policy = MissingPolicy::zero_fill);

/// Full matrix: one row per subscriber seen in `records`, one column per
/// enumerated descriptor.
FeatureMatrix featurize(std::span<const CdrRecord> records, const TaxonomyConfig& config,
                        Execution exec = Execution::parallel);

/// Same, over precomputed views and an explicit descriptor list.
FeatureMatrix featurize(const EgoViews& views, std::span<const FeatureDescriptor> features,
                        const TaxonomyConfig& config, Execution exec = Execution::parallel);

} // namespace cdrforge
