#pragma once

// Config loading and the cached synth -> labels -> featurize -> train-eval
// -> rank -> transfer pipeline behind the command-line tool.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cdrforge/cdr_model.hpp"
#include "cdrforge/feature_space.hpp"
#include "cdrforge/learn.hpp"
#include "cdrforge/parallel.hpp"
#include "cdrforge/synth_gen.hpp"

namespace cdrforge {

/// One dataset. Synthetic contexts carry a profile; data contexts point at
/// CDR (and optionally MMTR) files.
struct ContextSpec {
    std::string name;
    std::optional<CountryProfile> profile;
    std::filesystem::path cdr;
    std::filesystem::path mmtr;
    /// Generator seed; derived from the master seed when absent.
    std::optional<std::uint64_t> seed;

    bool synthetic() const { return profile.has_value(); }
};

enum class OutputFormat : std::uint8_t { csv, json };

struct SamplingConfig {
    std::size_t n_per_class = 1000;
    std::uint64_t seed = 0;
    double test_fraction = 0.2;
};

struct PipelineConfig {
    std::vector<ContextSpec> contexts;
    std::size_t population = 5000;
    TimeWindows windows;
    TaxonomyConfig taxonomy;
    SamplingConfig sampling;
    GbdtParams gbdt;
    std::vector<Task> tasks;
    std::filesystem::path output_dir;
    std::set<OutputFormat> formats{OutputFormat::csv};
    std::uint64_t seed = 0;
    /// Ridge strength of the logistic comparator.
    double logistic_l2 = 1.0;

    /// Required keys: contexts, windows, sampling, gbdt, tasks, output_dir,
    /// seed. Relative paths resolve against `base_dir`. Throws ConfigError
    /// naming the offending key.
    static PipelineConfig from_json_text(std::string_view text, const std::filesystem::path& base_dir = {});
    static PipelineConfig load(const std::filesystem::path& path);

    /// Canonical JSON of the whole config, used for cache keys.
    std::string to_json_text() const;

    std::uint64_t synth_seed(std::size_t context_index) const;
    std::uint64_t sampling_seed(std::string_view context) const;
    std::uint64_t gbdt_seed(std::string_view context, Task task) const;
};

enum class Stage : std::uint8_t { synth, labels, featurize, train_eval, rank, transfer };
std::string_view to_string(Stage s);

struct RunOptions {
    bool force = false;
    /// Restrict to one context.
    std::optional<std::string> context;
    /// Rank-table filters.
    std::optional<Actor> actor;
    std::optional<EventFilter> event_type;
    Execution exec = Execution::parallel;
    /// Whether a transfer run also produces the rank tables.
    bool with_rank = true;
    /// Progress messages; may be null.
    std::ostream* log = nullptr;
};

struct StageEvent {
    Stage stage = Stage::synth;
    std::string context;
    bool cached = false;
};

/// Runs every stage up to and including `target`, reusing cached outputs
/// whose inputs hash unchanged. Writes `stages.log` and `manifest.json`.
/// The output directory is locked for the duration.
std::vector<StageEvent> run_pipeline(const PipelineConfig& config, Stage target, const RunOptions& options = {});

/// `cdr.csv`, `mmtr.csv`, `ground_truth.csv` for one profile in `out_dir`.
void synth_to_directory(const CountryProfile& profile, std::size_t n, const TimeWindows& windows,
                        const std::filesystem::path& out_dir);

/// `features.csv` and `feature_dictionary.csv` for one CDR file.
void featurize_file(const std::filesystem::path& cdr_path, const TaxonomyConfig& taxonomy,
                    const std::filesystem::path& out_dir, Execution exec = Execution::parallel);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_text(std::string_view text);

} // namespace cdrforge
