#include "cdrforge/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cdrforge/errors.hpp"
#include "seeding.hpp"

namespace cdrforge {

namespace {

using nlohmann::json;

constexpr std::uint64_t tag_synth = 0x53594e54;
constexpr std::uint64_t tag_sampling = 0x53414d50;
constexpr std::uint64_t tag_gbdt = 0x47424d4f;

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

const json& require(const json& doc, const std::string& key, const std::string& where = "") {
    if (!doc.is_object() || !doc.contains(key))
        throw ConfigError("config: missing key '" + where + key + "'");
    return doc.at(key);
}

template <class T>
T get_as(const json& doc, const std::string& key, const std::string& where = "") {
    try {
        return require(doc, key, where).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: key '" + where + key + "' has the wrong type");
    }
}

template <class T>
T get_or(const json& doc, const std::string& key, T fallback, const std::string& where = "") {
    if (!doc.contains(key))
        return fallback;
    return get_as<T>(doc, key, where);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

ContextSpec parse_context(const json& entry, std::size_t index, const std::filesystem::path& base) {
    const std::string where = "contexts[" + std::to_string(index) + "].";
    ContextSpec c;
    if (entry.is_string()) {
        c.name = entry.get<std::string>();
        c.profile = builtin_profile(c.name);
        return c;
    }
    if (!entry.is_object())
        throw ConfigError("config: " + where.substr(0, where.size() - 1) + " must be a string or an object");
    c.name = get_as<std::string>(entry, "name", where);
    if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos || c.name.front() == '.')
        throw ConfigError("config: " + where + "name '" + c.name + "' is not a usable directory name");
    if (entry.contains("seed"))
        c.seed = get_as<std::uint64_t>(entry, "seed", where);

    const int kinds = int(entry.contains("profile")) + int(entry.contains("profile_file")) + int(entry.contains("cdr"));
    if (kinds != 1)
        throw ConfigError("config: " + where + " needs exactly one of 'profile', 'profile_file' or 'cdr'");
    if (entry.contains("cdr")) {
        c.cdr = resolve(base, get_as<std::string>(entry, "cdr", where));
        if (entry.contains("mmtr"))
            c.mmtr = resolve(base, get_as<std::string>(entry, "mmtr", where));
        return c;
    }
    json profile_doc;
    if (entry.contains("profile")) {
        profile_doc = json::parse(builtin_profile(get_as<std::string>(entry, "profile", where)).to_json_text());
    } else {
        auto path = resolve(base, get_as<std::string>(entry, "profile_file", where));
        try {
            profile_doc = json::parse(read_file(path));
        } catch (const json::parse_error& e) {
            throw ConfigError(path.string() + ": " + e.what());
        }
    }
    if (entry.contains("profile_overrides")) {
        const auto& o = entry.at("profile_overrides");
        if (!o.is_object())
            throw ConfigError("config: " + where + "profile_overrides must be an object");
        for (const auto& [key, value] : o.items())
            profile_doc[key] = value;
    }
    profile_doc["name"] = c.name;
    c.profile = CountryProfile::from_json_text(profile_doc.dump());
    return c;
}

TimeWindows parse_windows(const json& w) {
    TimeWindows out;
    auto start = get_as<std::string>(w, "training_start", "windows.");
    auto ts = parse_iso8601(start);
    if (!ts)
        throw ConfigError("config: windows.training_start '" + start + "' is not YYYY-MM-DDThh:mm:ssZ");
    out.training_start = *ts;
    out.training_days = get_or<int>(w, "training_days", out.training_days, "windows.");
    out.evaluation_months = get_or<int>(w, "evaluation_months", out.evaluation_months, "windows.");
    out.month_days = get_or<int>(w, "month_days", out.month_days, "windows.");
    out.validate();
    return out;
}

json gbdt_json(const GbdtParams& p) {
    return {{"n_trees", p.n_trees},
            {"learning_rate", p.learning_rate},
            {"max_depth", p.max_depth},
            {"min_samples_leaf", p.min_samples_leaf},
            {"subsample", p.subsample},
            {"seed", p.seed}};
}

} // namespace

PipelineConfig PipelineConfig::from_json_text(std::string_view text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object())
        throw ConfigError("config must be a JSON object");

    PipelineConfig c;
    const auto& contexts = require(doc, "contexts");
    if (!contexts.is_array() || contexts.empty())
        throw ConfigError("config: 'contexts' must be a non-empty list");
    std::set<std::string> names;
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        c.contexts.push_back(parse_context(contexts[i], i, base_dir));
        if (!names.insert(c.contexts.back().name).second)
            throw ConfigError("config: duplicate context name '" + c.contexts.back().name + "'");
    }

    c.windows = parse_windows(require(doc, "windows"));
    if (doc.contains("taxonomy"))
        c.taxonomy = TaxonomyConfig::from_json_text(doc.at("taxonomy").dump());

    const auto& s = require(doc, "sampling");
    auto n_per_class = get_as<std::int64_t>(s, "n_per_class", "sampling.");
    if (n_per_class < 1)
        throw ConfigError("config: sampling.n_per_class must be positive");
    c.sampling.n_per_class = static_cast<std::size_t>(n_per_class);
    c.sampling.seed = get_as<std::uint64_t>(s, "seed", "sampling.");
    c.sampling.test_fraction = get_or<double>(s, "test_fraction", c.sampling.test_fraction, "sampling.");
    if (!(c.sampling.test_fraction > 0.0 && c.sampling.test_fraction < 1.0))
        throw ConfigError("config: sampling.test_fraction must be in (0,1)");

    const auto& g = require(doc, "gbdt");
    if (!g.is_object())
        throw ConfigError("config: 'gbdt' must be an object");
    c.gbdt.n_trees = get_or<int>(g, "n_trees", c.gbdt.n_trees, "gbdt.");
    c.gbdt.learning_rate = get_or<double>(g, "learning_rate", c.gbdt.learning_rate, "gbdt.");
    c.gbdt.max_depth = get_or<int>(g, "max_depth", c.gbdt.max_depth, "gbdt.");
    c.gbdt.min_samples_leaf = get_or<int>(g, "min_samples_leaf", c.gbdt.min_samples_leaf, "gbdt.");
    c.gbdt.subsample = get_or<double>(g, "subsample", c.gbdt.subsample, "gbdt.");
    c.gbdt.seed = get_or<std::uint64_t>(g, "seed", c.gbdt.seed, "gbdt.");
    c.gbdt.validate();

    const auto& tasks = require(doc, "tasks");
    if (!tasks.is_array() || tasks.empty())
        throw ConfigError("config: 'tasks' must be a non-empty list");
    for (const auto& t : tasks) {
        auto name = t.is_string() ? t.get<std::string>() : t.dump();
        auto task = parse_task(name);
        if (!task)
            throw ConfigError("config: unknown task '" + name + "'");
        if (std::find(c.tasks.begin(), c.tasks.end(), *task) == c.tasks.end())
            c.tasks.push_back(*task);
    }

    c.output_dir = resolve(base_dir, get_as<std::string>(doc, "output_dir"));
    c.seed = get_as<std::uint64_t>(doc, "seed");
    c.population = static_cast<std::size_t>(get_or<std::int64_t>(doc, "population", 5000));
    if (c.population < 2)
        throw ConfigError("config: population must be at least 2");
    c.logistic_l2 = get_or<double>(doc, "logistic_l2", c.logistic_l2);
    if (!(c.logistic_l2 > 0.0))
        throw ConfigError("config: logistic_l2 must be positive");

    if (doc.contains("formats")) {
        c.formats.clear();
        for (const auto& f : doc.at("formats")) {
            auto name = f.is_string() ? f.get<std::string>() : f.dump();
            std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
            if (name == "csv")
                c.formats.insert(OutputFormat::csv);
            else if (name == "json")
                c.formats.insert(OutputFormat::json);
            else
                throw ConfigError("config: unknown format '" + name + "'");
        }
    }

    static const std::set<std::string> known{"contexts", "population", "windows", "taxonomy", "sampling", "gbdt",
                                             "tasks",    "output_dir", "formats", "seed",     "logistic_l2"};
    for (const auto& [key, _] : doc.items())
        if (!known.contains(key))
            throw ConfigError("config: unknown key '" + key + "'");
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    return from_json_text(read_file(path), path.parent_path());
}

std::string PipelineConfig::to_json_text() const {
    json contexts_json = json::array();
    for (const auto& c : contexts) {
        json e = {{"name", c.name}};
        if (c.profile)
            e["profile"] = json::parse(c.profile->to_json_text());
        else {
            e["cdr"] = c.cdr.generic_string();
            e["mmtr"] = c.mmtr.generic_string();
        }
        if (c.seed)
            e["seed"] = *c.seed;
        contexts_json.push_back(e);
    }
    json task_list = json::array();
    for (auto t : tasks)
        task_list.push_back(std::string(to_string(t)));
    json format_list = json::array();
    for (auto f : formats)
        format_list.push_back(f == OutputFormat::csv ? "csv" : "json");
    json doc = {{"contexts", contexts_json},
                {"population", population},
                {"windows",
                 {{"training_start", format_iso8601(windows.training_start)},
                  {"training_days", windows.training_days},
                  {"evaluation_months", windows.evaluation_months},
                  {"month_days", windows.month_days}}},
                {"taxonomy", json::parse(taxonomy.to_json_text())},
                {"sampling",
                 {{"n_per_class", sampling.n_per_class},
                  {"seed", sampling.seed},
                  {"test_fraction", sampling.test_fraction}}},
                {"gbdt", gbdt_json(gbdt)},
                {"tasks", task_list},
                {"formats", format_list},
                {"seed", seed},
                {"logistic_l2", logistic_l2}};
    return doc.dump(1) + "\n";
}

std::uint64_t PipelineConfig::synth_seed(std::size_t context_index) const {
    const auto& c = contexts.at(context_index);
    return c.seed ? *c.seed : detail::derive_seed(seed, tag_synth, fnv1a(c.name));
}

std::uint64_t PipelineConfig::sampling_seed(std::string_view context) const {
    return detail::derive_seed(seed ^ sampling.seed, tag_sampling, fnv1a(context));
}

std::uint64_t PipelineConfig::gbdt_seed(std::string_view context, Task task) const {
    return detail::derive_seed(seed ^ gbdt.seed, tag_gbdt, fnv1a(context) ^ static_cast<std::uint64_t>(task));
}

} // namespace cdrforge
