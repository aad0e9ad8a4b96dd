#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cdrforge/errors.hpp"
#include "cdrforge/pipeline.hpp"

using namespace cdrforge;

namespace {

struct Args {
    std::string config;
    bool force = false;
    std::optional<std::uint64_t> seed;
    std::string profile;
    bool serial = false;
    bool quiet = false;
    // synth / featurize without a config
    std::size_t n = 10000;
    int days = 10;
    int months = 3;
    std::string start = "2024-01-01T00:00:00Z";
    std::string out = ".";
    std::string cdr;
    // rank filters
    std::string actor;
    std::string type;
};

PipelineConfig load_config(const Args& a) {
    if (a.config.empty())
        throw ConfigError("--config is required for this command");
    auto config = PipelineConfig::load(a.config);
    if (const char* env = std::getenv("CDRFORGE_OUT"); env && *env)
        config.output_dir = env;
    if (a.seed)
        config.seed = *a.seed;
    return config;
}

RunOptions run_options(const Args& a) {
    RunOptions o;
    o.force = a.force;
    if (!a.profile.empty())
        o.context = a.profile;
    o.exec = a.serial ? Execution::serial : Execution::parallel;
    o.log = a.quiet ? nullptr : &std::cerr;
    if (!a.actor.empty()) {
        o.actor = parse_actor(a.actor);
        if (!o.actor)
            throw ConfigError("unknown actor '" + a.actor + "'");
    }
    if (!a.type.empty()) {
        o.event_type = parse_event_filter(a.type);
        if (!o.event_type)
            throw ConfigError("unknown type '" + a.type + "'");
    }
    return o;
}

TimeWindows standalone_windows(const Args& a) {
    TimeWindows w;
    auto start = parse_iso8601(a.start);
    if (!start)
        throw ConfigError("--start must look like YYYY-MM-DDThh:mm:ssZ");
    w.training_start = *start;
    w.training_days = a.days;
    w.evaluation_months = a.months;
    w.validate();
    return w;
}

int cmd_synth(const Args& a, CLI::App& sub) {
    if (a.config.empty()) {
        if (a.profile.empty())
            throw ConfigError("synth needs --profile NAME or --config PATH");
        auto profile = builtin_profile(a.profile);
        if (a.seed)
            profile.seed = *a.seed;
        synth_to_directory(profile, a.n, standalone_windows(a), a.out);
        return 0;
    }
    auto config = load_config(a);
    if (sub.count("--n"))
        config.population = a.n;
    if (sub.count("--days"))
        config.windows.training_days = a.days;
    if (sub.count("--months"))
        config.windows.evaluation_months = a.months;
    config.windows.validate();
    run_pipeline(config, Stage::synth, run_options(a));
    return 0;
}

int cmd_featurize(const Args& a) {
    if (a.config.empty()) {
        if (a.cdr.empty())
            throw ConfigError("featurize needs --cdr PATH or --config PATH");
        featurize_file(a.cdr, TaxonomyConfig{}, a.out, a.serial ? Execution::serial : Execution::parallel);
        return 0;
    }
    run_pipeline(load_config(a), Stage::featurize, run_options(a));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cdrforge: behavioral features from call records and mobile-money adoption models"};
    app.require_subcommand(1);
    Args a;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", a.config, "Pipeline config (JSON)");
        sub->add_flag("--force", a.force, "Recompute every stage, ignoring the cache");
        sub->add_option("--seed", a.seed, "Master seed override");
        sub->add_option("--profile", a.profile, "Context / built-in profile name");
        sub->add_flag("--serial", a.serial, "Use the single-threaded reference kernels");
        sub->add_flag("--quiet", a.quiet, "No progress output");
    };

    auto* synth = app.add_subcommand("synth", "Generate synthetic CDR, MMTR and ground truth");
    add_common(synth);
    synth->add_option("--n", a.n, "Subscribers");
    synth->add_option("--days", a.days, "Training-window days of CDR");
    synth->add_option("--months", a.months, "Evaluation-window month blocks of MMTR");
    synth->add_option("--start", a.start, "Training window start (UTC)");
    synth->add_option("--out", a.out, "Output directory when no config is given");

    auto* featurize_cmd = app.add_subcommand("featurize", "Compute the feature matrix");
    add_common(featurize_cmd);
    featurize_cmd->add_option("--cdr", a.cdr, "CDR file when no config is given");
    featurize_cmd->add_option("--out", a.out, "Output directory when no config is given");

    auto* labels = app.add_subcommand("labels", "Assign adoption labels");
    add_common(labels);
    auto* train = app.add_subcommand("train-eval", "Train and evaluate both tasks per context");
    add_common(train);
    auto* rank = app.add_subcommand("rank", "Per-feature AUC and importance tables");
    add_common(rank);
    rank->add_option("--actor", a.actor, "Only features of this actor");
    rank->add_option("--type", a.type, "Only features of this event type");
    auto* transfer = app.add_subcommand("transfer", "Cross-context accuracy cube");
    add_common(transfer);
    auto* run_all = app.add_subcommand("run-all", "Every stage, with caching");
    add_common(run_all);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed())
            return cmd_synth(a, *synth);
        if (featurize_cmd->parsed())
            return cmd_featurize(a);
        Stage target = Stage::transfer;
        if (labels->parsed())
            target = Stage::labels;
        else if (train->parsed())
            target = Stage::train_eval;
        else if (rank->parsed())
            target = Stage::rank;
        auto options = run_options(a);
        options.with_rank = !transfer->parsed();
        run_pipeline(load_config(a), target, options);
        return 0;
    } catch (const Error& e) {
        std::cerr << "cdrforge: error: " << e.what() << "\n";
        return static_cast<int>(e.kind());
    } catch (const std::invalid_argument& e) {
        std::cerr << "cdrforge: error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::input);
    } catch (const std::exception& e) {
        std::cerr << "cdrforge: internal error: " << e.what() << "\n";
        return 1;
    }
}
