#include "cdrforge/pipeline.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "cdrforge/errors.hpp"
#include "cdrforge/feature_engine.hpp"
#include "cdrforge/feature_matrix.hpp"

namespace cdrforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view tool_version = "1.0.0";
constexpr std::array stage_names{"synth", "labels", "featurize", "train-eval", "rank", "transfer"};
const std::string global_scope = "_global";

std::string fmt(double v) {
    if (std::isnan(v))
        return "nan";
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::string hex(const unsigned char* data, std::size_t n) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0xf]);
    }
    return out;
}

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
            throw std::runtime_error("SHA-256 unavailable");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
    std::string hex_digest() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_, md.data(), &len);
        return hex(md.data(), len);
    }

private:
    EVP_MD_CTX* ctx_;
};

// Writes through a temporary so a crashed run never leaves a half file
// under the final name.
template <class Fn>
void write_file(const fs::path& path, Fn&& body, bool binary = false) {
    fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
        if (!out)
            throw Error(ErrorKind::input, "cannot write " + tmp.string());
        body(out);
        if (!out)
            throw Error(ErrorKind::input, "write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write_text(const fs::path& path, const std::string& text) {
    write_file(path, [&](std::ostream& out) { out << text; });
}

std::ifstream open_input(const fs::path& path, bool binary = false) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in)
        throw Error(ErrorKind::input, "cannot read " + path.string());
    return in;
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path, std::string_view header) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || line != header)
        throw MalformedRow(1, path.string() + ": expected header '" + std::string(header) + "'");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

class DirectoryLock {
public:
    explicit DirectoryLock(const fs::path& dir) {
        fs::create_directories(dir);
        auto path = dir / ".lock";
        fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0)
            throw Error(ErrorKind::input, "cannot open lock file " + path.string());
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            throw Error(ErrorKind::input, "output directory " + dir.string() + " is in use by another run");
        }
    }
    ~DirectoryLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    int fd_ = -1;
};

std::string task_dir(Task t) { return std::string(to_string(t)); }

// Records which stages ran, consults and updates the content-hash cache, and
// collects every artifact for the manifest.
class Runner {
public:
    Runner(const PipelineConfig& config, const RunOptions& options)
        : config_(config), options_(options), out_(config.output_dir) {}

    const fs::path& out() const { return out_; }

    fs::path ctx_dir(const std::string& ctx) const { return out_ / ctx; }

    fs::path cdr_path(const ContextSpec& c) const { return c.synthetic() ? ctx_dir(c.name) / "cdr.csv" : c.cdr; }
    fs::path mmtr_path(const ContextSpec& c) const {
        return c.synthetic() ? ctx_dir(c.name) / "mmtr.csv" : c.mmtr;
    }

    std::string hash_of(const fs::path& p) {
        auto key = fs::absolute(p).lexically_normal().string();
        auto it = hashes_.find(key);
        if (it != hashes_.end())
            return it->second;
        if (!fs::exists(p))
            throw Error(ErrorKind::input, "missing input " + p.string());
        return hashes_[key] = sha256_file(p);
    }

    void forget(const fs::path& p) { hashes_.erase(fs::absolute(p).lexically_normal().string()); }

    // `compute` returns the files it wrote. Skipped when the cache entry for
    // (stage, scope) has the same key and every recorded output is intact.
    template <class Fn>
    void stage(Stage s, const std::string& scope, const std::string& key_material, Fn&& compute) {
        const auto key = sha256_text(std::string(to_string(s)) + "\n" + std::string(tool_version) + "\n" +
                                     key_material);
        const auto cache_file = out_ / ".cache" / (scope + "." + std::string(to_string(s)) + ".json");
        if (!options_.force && fs::exists(cache_file)) {
            try {
                auto in = open_input(cache_file);
                auto doc = json::parse(in);
                bool intact = doc.at("key") == key;
                std::vector<fs::path> outputs;
                for (const auto& [rel, sha] : doc.at("outputs").items()) {
                    auto p = out_ / rel;
                    intact = intact && fs::exists(p) && hash_of(p) == sha.template get<std::string>();
                    outputs.push_back(p);
                }
                if (intact) {
                    for (auto& p : outputs)
                        artifacts_.insert(p);
                    note(s, scope, true);
                    return;
                }
            } catch (const json::exception&) {
                // Unreadable cache entries are recomputed.
            }
        }
        std::vector<fs::path> written = compute();
        json outputs = json::object();
        for (const auto& p : written) {
            forget(p);
            outputs[fs::relative(p, out_).generic_string()] = hash_of(p);
            artifacts_.insert(p);
        }
        write_text(cache_file, json{{"key", key}, {"outputs", outputs}}.dump(1) + "\n");
        note(s, scope, false);
    }

    void add_artifact(const fs::path& p) {
        forget(p);
        artifacts_.insert(p);
    }

    void write_log_and_manifest() {
        std::string log;
        for (const auto& e : events_)
            log += std::string(to_string(e.stage)) + " " + e.context + " " + (e.cached ? "cached" : "computed") + "\n";
        write_text(out_ / "stages.log", log);

        json seeds = {{"master", config_.seed}};
        json per_ctx = json::object();
        for (std::size_t i = 0; i < config_.contexts.size(); ++i) {
            const auto& c = config_.contexts[i];
            json entry = {{"sampling", config_.sampling_seed(c.name)}};
            if (c.synthetic())
                entry["synth"] = config_.synth_seed(i);
            json gbdt = json::object();
            for (auto t : config_.tasks)
                gbdt[std::string(to_string(t))] = config_.gbdt_seed(c.name, t);
            entry["gbdt"] = gbdt;
            per_ctx[c.name] = entry;
        }
        seeds["contexts"] = per_ctx;

        json artifacts = json::array();
        std::vector<std::pair<std::string, fs::path>> sorted;
        for (const auto& p : artifacts_)
            sorted.emplace_back(fs::relative(p, out_).generic_string(), p);
        std::sort(sorted.begin(), sorted.end());
        for (const auto& [rel, p] : sorted)
            artifacts.push_back({{"path", rel}, {"sha256", hash_of(p)}, {"bytes", fs::file_size(p)}});

        json manifest = {{"tool", "cdrforge"},
                         {"version", std::string(tool_version)},
                         {"config_sha256", sha256_text(config_.to_json_text())},
                         {"seeds", seeds},
                         {"artifacts", artifacts}};
        write_text(out_ / "manifest.json", manifest.dump(1) + "\n");
    }

    std::vector<StageEvent> events() const { return events_; }

private:
    void note(Stage s, const std::string& scope, bool cached) {
        events_.push_back({s, scope, cached});
        if (options_.log)
            *options_.log << to_string(s) << " " << scope << (cached ? ": cached" : ": done") << "\n";
    }

    const PipelineConfig& config_;
    const RunOptions& options_;
    fs::path out_;
    std::map<std::string, std::string> hashes_;
    std::set<fs::path> artifacts_;
    std::vector<StageEvent> events_;
};

std::vector<CdrRecord> load_training_cdr(const fs::path& path, const TimeWindows& windows) {
    auto in = open_input(path);
    auto parsed = parse_cdr(in, Mode::strict);
    return split_windows<CdrRecord>(parsed.records, windows).training;
}

std::string windows_json(const TimeWindows& w) {
    return json{{"training_start", format_iso8601(w.training_start)},
                {"training_days", w.training_days},
                {"evaluation_months", w.evaluation_months},
                {"month_days", w.month_days}}
        .dump();
}

FeatureMatrix load_matrix(const fs::path& dir) {
    auto in = open_input(dir / "features.cfm", true);
    return read_matrix_binary(in);
}

std::map<SubscriberId, LabelClass> load_labels(const fs::path& dir) {
    auto in = open_input(dir / "labels.csv");
    return read_labels(in);
}

// ------------------------------------------------------------------ stages

std::vector<fs::path> run_synth(const ContextSpec& c, std::uint64_t seed, const PipelineConfig& config,
                                const fs::path& dir) {
    auto profile = *c.profile;
    profile.seed = seed;
    synth_to_directory(profile, config.population, config.windows, dir);
    return {dir / "cdr.csv", dir / "mmtr.csv", dir / "ground_truth.csv"};
}

std::vector<fs::path> run_labels(const fs::path& cdr, const fs::path& mmtr, const TimeWindows& windows,
                                 const fs::path& dir) {
    auto training = load_training_cdr(cdr, windows);
    auto in = open_input(mmtr);
    auto tx = parse_mmtr(in, Mode::strict);
    auto result = assign_labels(observed_subscribers(training), tx.records, windows, Mode::lenient);
    write_file(dir / "labels.csv", [&](std::ostream& out) { write_labels(out, result.labels); });
    std::map<LabelClass, std::size_t> counts{
        {LabelClass::voice_only, 0}, {LabelClass::registered, 0}, {LabelClass::active, 0}};
    for (const auto& [id, l] : result.labels)
        ++counts[l];
    write_file(dir / "labels_summary.csv", [&](std::ostream& out) {
        out << "item,count\n";
        for (const auto& [l, n] : counts)
            out << to_string(l) << ',' << n << '\n';
        out << "unknown_subscriber_rows," << result.unknown_subscriber_rows << '\n';
        out << "out_of_window_rows," << result.out_of_window_rows << '\n';
    });
    return {dir / "labels.csv", dir / "labels_summary.csv"};
}

std::vector<fs::path> write_features(const FeatureMatrix& m, const fs::path& dir, bool csv) {
    std::vector<fs::path> written{dir / "features.cfm", dir / "feature_dictionary.csv"};
    write_file(dir / "features.cfm", [&](std::ostream& out) { write_matrix_binary(out, m); }, true);
    write_file(dir / "feature_dictionary.csv", [&](std::ostream& out) { write_feature_dictionary(out, m.features()); });
    if (csv) {
        write_file(dir / "features.csv", [&](std::ostream& out) { write_matrix_csv(out, m); });
        written.push_back(dir / "features.csv");
    }
    return written;
}

std::vector<fs::path> run_featurize(const fs::path& cdr, const PipelineConfig& config, const fs::path& dir,
                                    Execution exec) {
    auto training = load_training_cdr(cdr, config.windows);
    auto m = featurize(training, config.taxonomy, exec);
    return write_features(m, dir, config.formats.contains(OutputFormat::csv));
}

const std::string metrics_header = "context,task,n_train,n_test,accuracy,baseline,auc,logreg_accuracy";

std::vector<fs::path> run_train_eval(const std::string& ctx, const PipelineConfig& config, const fs::path& dir,
                                     Execution exec) {
    auto matrix = load_matrix(dir);
    auto labels = load_labels(dir);
    const auto seed = config.sampling_seed(ctx);
    auto sample = stratified_sample(labels, config.sampling.n_per_class, seed);
    std::vector<fs::path> written{dir / "sample.csv", dir / "metrics.csv"};
    write_file(dir / "sample.csv", [&](std::ostream& out) {
        out << "subscriber,label\n";
        for (const auto& [label, ids] : sample)
            for (const auto& id : ids)
                out << id.str() << ',' << to_string(label) << '\n';
    });

    std::ostringstream metrics;
    metrics << metrics_header << '\n';
    for (auto task : config.tasks) {
        const auto tdir = dir / task_dir(task);
        auto split = split_train_test(sample, task, config.sampling.test_fraction, seed);
        auto train = make_task_data(matrix, split.train, labels, task);
        auto test = make_task_data(matrix, split.test, labels, task);
        auto params = config.gbdt;
        params.seed = config.gbdt_seed(ctx, task);
        auto model = train_gbdt(train.x, train.y, params, exec);
        auto probs = predict_proba(model, test.x);
        const double acc = accuracy(probs, test.y);
        const double base = naive_baseline(test.y);
        const double auc = rank_auc(probs, test.y);
        auto logreg = train_logistic(train.x, train.y, config.logistic_l2);
        const double logreg_acc = accuracy(logreg.predict_proba(test.x), test.y);

        write_text(tdir / "model.json", model.to_json_text());
        write_file(tdir / "split.csv", [&](std::ostream& out) {
            out << "subscriber,label,partition\n";
            for (const auto& id : split.train)
                out << id.str() << ',' << to_string(labels.at(id)) << ",train\n";
            for (const auto& id : split.test)
                out << id.str() << ',' << to_string(labels.at(id)) << ",test\n";
        });
        write_file(tdir / "predictions.csv", [&](std::ostream& out) {
            out << "subscriber,y,probability\n";
            for (std::size_t i = 0; i < split.test.size(); ++i)
                out << split.test[i].str() << ',' << test.y[i] << ',' << fmt(probs[i]) << '\n';
        });
        written.insert(written.end(), {tdir / "model.json", tdir / "split.csv", tdir / "predictions.csv"});
        metrics << ctx << ',' << to_string(task) << ',' << split.train.size() << ',' << split.test.size() << ','
                << fmt(acc) << ',' << fmt(base) << ',' << fmt(auc) << ',' << fmt(logreg_acc) << '\n';
    }
    write_text(dir / "metrics.csv", metrics.str());
    return written;
}

std::vector<SubscriberId> ids_for(const fs::path& split_csv, std::optional<std::string_view> partition) {
    std::vector<SubscriberId> ids;
    for (const auto& row : read_csv_rows(split_csv, "subscriber,label,partition"))
        if (row.size() == 3 && (!partition || row[2] == *partition))
            ids.emplace_back(row[0]);
    std::sort(ids.begin(), ids.end());
    return ids;
}

TrainedModel load_model(const fs::path& path) {
    auto in = open_input(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return TrainedModel::from_json_text(buf.str());
}

std::string filter_suffix(const RunOptions& o) {
    if (!o.actor && !o.event_type)
        return "";
    return "__" + std::string(o.actor ? to_string(*o.actor) : "any") + "__" +
           std::string(o.event_type ? to_string(*o.event_type) : "any");
}

std::vector<fs::path> run_rank(const PipelineConfig& config, const fs::path& dir,
                               const RunOptions& options) {
    auto matrix = load_matrix(dir);
    auto labels = load_labels(dir);
    const auto suffix = filter_suffix(options);
    std::vector<fs::path> written;
    for (auto task : config.tasks) {
        const auto tdir = dir / task_dir(task);
        // In-sample: every sampled subscriber of the task's two classes.
        auto ids = ids_for(tdir / "split.csv", std::nullopt);
        auto data = make_task_data(matrix, ids, labels, task);
        auto report = rank_all_features(data.x, data.y, options.exec);
        auto model = load_model(tdir / "model.json");
        auto nfi = normalized_feature_importance(model);

        std::vector<FeatureRanking> kept;
        std::vector<double> kept_nfi;
        for (std::size_t i = 0; i < report.rankings.size(); ++i) {
            const auto& f = report.rankings[i].feature;
            if (options.actor && f.actor != *options.actor)
                continue;
            if (options.event_type && f.event_type != *options.event_type)
                continue;
            kept.push_back(report.rankings[i]);
            kept_nfi.push_back(nfi.at(i));
        }
        const auto rankings = tdir / ("rankings" + suffix + ".csv");
        const auto quantiles = tdir / ("auc_by_category" + suffix + ".csv");
        const auto nfi_sums = tdir / ("nfi_by_category" + suffix + ".csv");
        const auto notes = tdir / ("ranking_notes" + suffix + ".csv");
        write_file(rankings, [&](std::ostream& out) {
            out << "feature,category,auc,nfi\n";
            for (std::size_t i = 0; i < kept.size(); ++i)
                out << feature_name(kept[i].feature) << ',' << to_string(kept[i].feature.category()) << ','
                    << fmt(kept[i].auc) << ',' << fmt(kept_nfi[i]) << '\n';
        });
        write_file(quantiles, [&](std::ostream& out) {
            out << "category,count,min,q25,median,q75,max\n";
            for (const auto& s : summarize_by_category(kept))
                out << to_string(s.category) << ',' << s.count << ',' << fmt(s.min) << ',' << fmt(s.q25) << ','
                    << fmt(s.median) << ',' << fmt(s.q75) << ',' << fmt(s.max) << '\n';
        });
        write_file(nfi_sums, [&](std::ostream& out) {
            out << "category,nfi\n";
            for (auto c : {Category::basic, Category::temporal, Category::movement, Category::network}) {
                double sum = 0.0;
                bool any = false;
                for (std::size_t i = 0; i < kept.size(); ++i)
                    if (kept[i].feature.category() == c) {
                        sum += kept_nfi[i];
                        any = true;
                    }
                if (any)
                    out << to_string(c) << ',' << fmt(sum) << '\n';
            }
        });
        write_file(notes, [&](std::ostream& out) {
            out << "feature,note\n";
            for (const auto& r : kept)
                if (!r.note.empty())
                    out << feature_name(r.feature) << ',' << r.note << '\n';
        });
        written.insert(written.end(), {rankings, quantiles, nfi_sums, notes});
    }
    return written;
}

std::vector<fs::path> run_transfer(const std::vector<const ContextSpec*>& contexts, const PipelineConfig& config,
                                   const fs::path& out) {
    std::map<ModelKey, TrainedModel> models;
    std::map<ModelKey, LabeledData> datasets;
    for (const auto* c : contexts) {
        const auto dir = out / c->name;
        auto matrix = load_matrix(dir);
        auto labels = load_labels(dir);
        for (auto task : config.tasks) {
            const auto tdir = dir / task_dir(task);
            models[{c->name, task}] = load_model(tdir / "model.json");
            auto test_ids = ids_for(tdir / "split.csv", "test");
            datasets[{c->name, task}] = make_task_data(matrix, test_ids, labels, task);
        }
    }
    auto cube = transfer_evaluate(models, datasets, config.tasks);
    write_file(out / "transfer.csv", [&](std::ostream& o) {
        o << "train_context,eval_context,task,accuracy,baseline\n";
        for (const auto& e : cube.entries)
            o << e.train_context << ',' << e.eval_context << ',' << to_string(e.task) << ',' << fmt(e.accuracy)
              << ',' << fmt(e.baseline) << '\n';
    });
    return {out / "transfer.csv"};
}

} // namespace

std::string_view to_string(Stage s) { return stage_names[static_cast<std::size_t>(s)]; }

std::string sha256_text(std::string_view text) {
    Sha256 h;
    h.update(text.data(), text.size());
    return h.hex_digest();
}

std::string sha256_file(const fs::path& path) {
    auto in = open_input(path, true);
    Sha256 h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex_digest();
}

void synth_to_directory(const CountryProfile& profile, std::size_t n, const TimeWindows& windows,
                        const fs::path& out_dir) {
    windows.validate();
    auto population = generate_population(profile, n);
    CdrOptions options;
    options.start = windows.training_start;
    auto cdr = generate_cdr(population, windows.training_days, profile, options);
    auto mmtr = generate_mmtr(population, windows, profile);
    write_file(out_dir / "cdr.csv", [&](std::ostream& out) { write_cdr(out, cdr); });
    write_file(out_dir / "mmtr.csv", [&](std::ostream& out) { write_mmtr(out, mmtr); });
    write_file(out_dir / "ground_truth.csv", [&](std::ostream& out) { write_ground_truth(out, population); });
}

void featurize_file(const fs::path& cdr_path, const TaxonomyConfig& taxonomy, const fs::path& out_dir,
                    Execution exec) {
    auto in = open_input(cdr_path);
    auto parsed = parse_cdr(in, Mode::strict);
    auto m = featurize(parsed.records, taxonomy, exec);
    write_file(out_dir / "features.csv", [&](std::ostream& out) { write_matrix_csv(out, m); });
    write_file(out_dir / "feature_dictionary.csv", [&](std::ostream& out) { write_feature_dictionary(out, m.features()); });
}

std::vector<StageEvent> run_pipeline(const PipelineConfig& config, Stage target, const RunOptions& options) {
    if (config.output_dir.empty())
        throw ConfigError("config: output_dir is empty");
    std::vector<const ContextSpec*> contexts;
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < config.contexts.size(); ++i)
        if (!options.context || config.contexts[i].name == *options.context) {
            contexts.push_back(&config.contexts[i]);
            indices.push_back(i);
        }
    if (contexts.empty())
        throw ConfigError("config has no context named '" + options.context.value_or("") + "'");

    DirectoryLock lock(config.output_dir);
    Runner run(config, options);
    const auto reached = [&](Stage s) { return static_cast<int>(s) <= static_cast<int>(target); };
    const auto windows = windows_json(config.windows);

    for (std::size_t k = 0; k < contexts.size(); ++k) {
        const auto& c = *contexts[k];
        const auto dir = run.ctx_dir(c.name);
        if (c.synthetic()) {
            auto profile = *c.profile;
            profile.seed = config.synth_seed(indices[k]);
            run.stage(Stage::synth, c.name,
                      profile.to_json_text() + std::to_string(config.population) + windows,
                      [&] { return run_synth(c, profile.seed, config, dir); });
        }
        if (target == Stage::synth)
            continue;
        if (reached(Stage::labels) && target != Stage::featurize) {
            if (run.mmtr_path(c).empty())
                throw ConfigError("context '" + c.name + "' has no MMTR file; labels need one");
            run.stage(Stage::labels, c.name,
                      run.hash_of(run.cdr_path(c)) + run.hash_of(run.mmtr_path(c)) + windows,
                      [&] { return run_labels(run.cdr_path(c), run.mmtr_path(c), config.windows, dir); });
        }
        if (target == Stage::labels)
            continue;
        run.stage(Stage::featurize, c.name,
                  run.hash_of(run.cdr_path(c)) + windows + config.taxonomy.to_json_text() +
                      (config.formats.contains(OutputFormat::csv) ? "csv" : ""),
                  [&] { return run_featurize(run.cdr_path(c), config, dir, options.exec); });
        if (target == Stage::featurize)
            continue;

        json learn_section = json::parse(config.to_json_text());
        const std::string learn_key = learn_section.at("sampling").dump() + learn_section.at("gbdt").dump() +
                                      learn_section.at("tasks").dump() + learn_section.at("seed").dump() +
                                      learn_section.at("logistic_l2").dump();
        run.stage(Stage::train_eval, c.name,
                  run.hash_of(dir / "features.cfm") + run.hash_of(dir / "labels.csv") + learn_key,
                  [&] { return run_train_eval(c.name, config, dir, options.exec); });

        if (target == Stage::rank || (target == Stage::transfer && options.with_rank)) {
            std::string inputs = run.hash_of(dir / "features.cfm") + run.hash_of(dir / "labels.csv");
            for (auto t : config.tasks)
                inputs += run.hash_of(dir / task_dir(t) / "model.json") + run.hash_of(dir / task_dir(t) / "split.csv");
            run.stage(Stage::rank, c.name, inputs + learn_key + filter_suffix(options),
                      [&] { return run_rank(config, dir, options); });
        }
    }

    if (reached(Stage::train_eval)) {
        // Cross-context accuracy table, concatenated from per-context metrics.
        std::string table = metrics_header + "\n";
        for (const auto* c : contexts) {
            auto in = open_input(run.ctx_dir(c->name) / "metrics.csv");
            std::string line;
            std::getline(in, line);
            while (std::getline(in, line))
                if (!line.empty())
                    table += line + "\n";
        }
        write_text(run.out() / "accuracy.csv", table);
        run.add_artifact(run.out() / "accuracy.csv");
    }

    if (target == Stage::transfer) {
        std::string inputs;
        for (const auto* c : contexts) {
            const auto dir = run.ctx_dir(c->name);
            inputs += c->name + run.hash_of(dir / "features.cfm") + run.hash_of(dir / "labels.csv");
            for (auto t : config.tasks)
                inputs += run.hash_of(dir / task_dir(t) / "model.json") + run.hash_of(dir / task_dir(t) / "split.csv");
        }
        run.stage(Stage::transfer, global_scope, inputs, [&] { return run_transfer(contexts, config, run.out()); });
    }

    if (config.formats.contains(OutputFormat::json) && reached(Stage::train_eval)) {
        json summary = {{"accuracy", json::array()}};
        for (const auto& row : read_csv_rows(run.out() / "accuracy.csv", metrics_header))
            summary["accuracy"].push_back({{"context", row.at(0)},
                                           {"task", row.at(1)},
                                           {"n_train", std::stoll(row.at(2))},
                                           {"n_test", std::stoll(row.at(3))},
                                           {"accuracy", std::stod(row.at(4))},
                                           {"baseline", std::stod(row.at(5))},
                                           {"auc", std::stod(row.at(6))},
                                           {"logreg_accuracy", std::stod(row.at(7))}});
        if (target == Stage::transfer) {
            summary["transfer"] = json::array();
            for (const auto& row :
                 read_csv_rows(run.out() / "transfer.csv", "train_context,eval_context,task,accuracy,baseline"))
                summary["transfer"].push_back({{"train_context", row.at(0)},
                                               {"eval_context", row.at(1)},
                                               {"task", row.at(2)},
                                               {"accuracy", std::stod(row.at(3))},
                                               {"baseline", std::stod(row.at(4))}});
        }
        write_text(run.out() / "summary.json", summary.dump(1) + "\n");
        run.add_artifact(run.out() / "summary.json");
    }

    run.write_log_and_manifest();
    return run.events();
}

} // namespace cdrforge
