// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include "brute_force.hpp"
#include "cdrforge/feature_engine.hpp"
#include "cdrforge/learn.hpp"
#include "cdrforge/pipeline.hpp"
#include "cdrforge/synth_gen.hpp"

using namespace cdrforge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (pass)
                detail << "failed: ";
            else
                detail << "; ";
            detail << what;
            pass = false;
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch_root() {
    static const fs::path root = [] {
        auto p = fs::temp_directory_path() / ("cdrforge_acceptance_" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::vector<CdrRecord> load_cdr(const fs::path& p) {
    std::ifstream in(p);
    return parse_cdr(in).records;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::getline(in, line);
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

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

TimeWindows default_windows() {
    TimeWindows w;
    w.training_start = *parse_iso8601("2024-01-01T00:00:00Z");
    return w;
}

std::vector<CdrRecord> synth_cdr(const std::string& profile, std::size_t n, int days) {
    auto p = builtin_profile(profile);
    auto pop = generate_population(p, n);
    CdrOptions o;
    o.start = default_windows().training_start;
    return generate_cdr(pop, days, p, o);
}

// ---------------------------------------------------------------- 1

Outcome feature_oracle() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t cells = 0, golden_bad = 0, brute_bad = 0;
    for (int n : {5, 20, 50}) {
        const auto base = fs::path(CDRFORGE_FIXTURES);
        auto records = load_cdr(base / ("cdr_" + std::to_string(n) + ".csv"));
        std::ifstream gin(base / ("golden_features_" + std::to_string(n) + ".csv"));
        auto golden = read_matrix_csv(gin);
        auto m = featurize(records, TaxonomyConfig{});
        if (m.subscribers() != golden.subscribers() || m.cols() != golden.cols()) {
            o.require(false, "shape differs on cdr_" + std::to_string(n));
            continue;
        }
        std::map<std::string, std::size_t> gcol;
        auto gnames = golden.feature_names();
        for (std::size_t c = 0; c < gnames.size(); ++c)
            gcol[gnames[c]] = c;
        auto names = m.feature_names();
        for (std::size_t c = 0; c < m.cols(); ++c) {
            const auto& d = m.features()[c];
            const bool count_like = is_count_like(d.op1) && !d.op2;
            auto it = gcol.find(names[c]);
            if (it == gcol.end()) {
                o.require(false, "golden lacks " + names[c]);
                continue;
            }
            for (std::size_t r = 0; r < m.rows(); ++r) {
                ++cells;
                golden_bad += !testing::oracle_equal(m.at(r, c), golden.at(r, it->second), count_like);
                const double brute = testing::brute_force_feature(records, m.subscribers()[r], d);
                brute_bad += !testing::oracle_equal(m.at(r, c), brute, count_like);
            }
        }
    }
    const double secs = seconds_since(t0);
    o.require(golden_bad == 0, std::to_string(golden_bad) + " cells differ from the golden oracle");
    o.require(brute_bad == 0, std::to_string(brute_bad) + " cells differ from the brute-force oracle");
    o.require(secs < 5.0, "runtime over 5 s");
    o.detail << (o.pass ? "" : "; ") << cells << " cells x 2 oracles, " << std::fixed << std::setprecision(2) << secs
             << " s";
    return o;
}

// ---------------------------------------------------------------- 2

std::map<std::string, std::size_t> column_index(const FeatureMatrix& m) {
    std::map<std::string, std::size_t> idx;
    auto names = m.feature_names();
    for (std::size_t c = 0; c < names.size(); ++c)
        idx[names[c]] = c;
    return idx;
}

std::string with_part(const std::string& name, std::size_t part_field, const std::string& value) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        auto pos = name.find("__", start);
        parts.push_back(name.substr(start, pos - start));
        if (pos == std::string::npos)
            break;
        start = pos + 2;
    }
    parts[part_field] = value;
    std::string out = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i)
        out += "__" + parts[i];
    return out;
}

Outcome conservation() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<CdrRecord>> sets{load_cdr(fs::path(CDRFORGE_FIXTURES) / "cdr_50.csv"),
                                             synth_cdr("pakistan", 300, 3)};
    std::size_t identities = 0, violations = 0, bounds = 0, bound_violations = 0, shuffles = 0;
    for (auto& records : sets) {
        auto m = featurize(records, TaxonomyConfig{});
        auto idx = column_index(m);
        auto sum_check = [&](const std::string& whole, std::size_t field, const std::string& a,
                             const std::string& b) {
            const auto cw = idx.at(whole), ca = idx.at(with_part(whole, field, a)), cb = idx.at(with_part(whole, field, b));
            for (std::size_t r = 0; r < m.rows(); ++r) {
                ++identities;
                violations += m.at(r, ca) + m.at(r, cb) != m.at(r, cw);
            }
        };
        for (const auto& d : m.features()) {
            if (d.actor != Actor::ego || d.field != Field::event)
                continue;
            const auto name = feature_name(d);
            if (d.direction == Direction::all)
                sum_check(name, 2, "in", "out");
            if (d.time_partition == TimePartition::all) {
                sum_check(name, 3, "day", "night");
                sum_check(name, 3, "weekday", "weekend");
            }
        }
        for (const auto& d : m.features()) {
            const bool is_mean = d.op2 ? *d.op2 == ReduceOp::mean : d.op1 == ReduceOp::mean;
            if (!is_mean)
                continue;
            const auto name = feature_name(d);
            const std::size_t op_field = d.op2 ? 6 : 5;
            const auto cm = idx.at(name), lo = idx.at(with_part(name, op_field, "min")),
                       hi = idx.at(with_part(name, op_field, "max"));
            for (std::size_t r = 0; r < m.rows(); ++r) {
                ++bounds;
                const double mean = m.at(r, cm);
                const double slack = 1e-12 * std::max(1.0, std::abs(mean));
                bound_violations += mean < m.at(r, lo) - slack || mean > m.at(r, hi) + slack;
            }
        }
        std::mt19937_64 rng(2024);
        auto shuffled = records;
        for (int i = 0; i < 10; ++i) {
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            ++shuffles;
            o.require(featurize(shuffled, TaxonomyConfig{}) == m, "shuffle " + std::to_string(i) + " changed the matrix");
        }
    }
    const double secs = seconds_since(t0);
    o.require(violations == 0, std::to_string(violations) + " partition identities broken");
    o.require(bound_violations == 0, std::to_string(bound_violations) + " means outside [min,max]");
    o.require(secs < 30.0, "runtime over 30 s");
    o.detail << (o.pass ? "" : "; ") << identities << " partition identities, " << bounds << " mean bounds, "
             << shuffles << " shuffles, " << std::fixed << std::setprecision(2) << secs << " s";
    return o;
}

// ---------------------------------------------------------------- 3

Outcome auc_correctness() {
    Outcome o;
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> size(2, 50);
    std::uniform_int_distribution<int> coarse(0, 6);
    std::normal_distribution<double> g;
    double worst_rank = 0.0, worst_fit = 0.0, worst_fitted = 0.0;
    int convergent = 0, skipped = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = size(rng);
        std::vector<double> x(n);
        std::vector<int> y(n);
        for (int i = 0; i < n; ++i) {
            x[i] = trial % 2 ? coarse(rng) : g(rng);
            y[i] = g(rng) + 0.4 * x[i] > 0.3;
        }
        y[0] = 0;
        y[n - 1] = 1;
        double wins = 0, pairs = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (y[i] == 1 && y[j] == 0) {
                    pairs += 1;
                    wins += x[i] > x[j] ? 1.0 : x[i] == x[j] ? 0.5 : 0.0;
                }
        const double a = rank_auc(x, y);
        worst_rank = std::max(worst_rank, std::abs(a - wins / pairs));
        try {
            auto fit = bivariate_logistic_auc(x, y);
            ++convergent;
            worst_fit = std::max(worst_fit, std::abs(fit.auc - std::max(a, 1.0 - a)));
            // AUC of the fitted probabilities themselves; a separated fit
            // saturates to 0/1 in floating point and loses the ranking.
            if (fit.perfect_separation)
                continue;
            std::vector<double> fitted(n);
            for (int i = 0; i < n; ++i)
                fitted[i] = 1.0 / (1.0 + std::exp(-(fit.intercept + fit.coefficient * x[i])));
            const double af = rank_auc(fitted, y);
            worst_fitted = std::max(worst_fitted, std::abs(fit.auc - std::max(af, 1.0 - af)));
        } catch (const NonConvergence&) {
            ++skipped;
        } catch (const std::invalid_argument&) {
            ++skipped;
        }
    }
    std::vector<double> flat(40, 3.25);
    std::vector<int> labels(40);
    for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = i % 2;
    const double constant_rank = rank_auc(flat, labels);
    auto space = enumerate_feature_space(TaxonomyConfig{});
    std::vector<SubscriberId> ids;
    for (int i = 0; i < 40; ++i)
        ids.emplace_back("id" + std::to_string(100 + i));
    FeatureMatrix m(ids, {space[0]});
    for (std::size_t r = 0; r < 40; ++r)
        m.at(r, 0) = 3.25;
    const double constant_ranked = rank_all_features(m, labels).rankings.at(0).auc;

    o.require(worst_rank <= 1e-12, "rank auc off by " + std::to_string(worst_rank));
    o.require(worst_fit <= 1e-9, "bivariate auc off by " + std::to_string(worst_fit));
    o.require(worst_fitted <= 1e-9, "fitted-probability auc off by " + std::to_string(worst_fitted));
    o.require(convergent > 0, "no convergent instance");
    o.require(constant_rank == 0.5 && constant_ranked == 0.5, "constant feature not 0.5");
    o.detail << (o.pass ? "" : "; ") << "max |rank - pairwise| " << std::scientific << std::setprecision(1)
             << worst_rank << ", max |bivariate - max(a,1-a)| " << worst_fit << ", max |bivariate - auc(fitted)| "
             << worst_fitted << " over " << convergent
             << " convergent fits (" << skipped << " skipped), constant -> " << std::fixed << constant_rank;
    return o;
}

// ---------------------------------------------------------------- 4

void collect(int, double deviance, void* user) { static_cast<std::vector<double>*>(user)->push_back(deviance); }

struct ContextData {
    FeatureMatrix m;
    std::map<SubscriberId, LabelClass> labels;
};

ContextData planted_context(const std::string& profile, std::size_t n) {
    auto p = builtin_profile(profile);
    auto w = default_windows();
    auto pop = generate_population(p, n);
    CdrOptions co;
    co.start = w.training_start;
    auto cdr = generate_cdr(pop, w.training_days, p, co);
    auto mmtr = generate_mmtr(pop, w, p);
    auto labels = assign_labels(observed_subscribers(cdr), mmtr, w, Mode::lenient).labels;
    return {featurize(cdr, TaxonomyConfig{}), labels};
}

Outcome gbdt_sanity() {
    Outcome o;
    auto ctx = planted_context("ghana", 2000);
    auto sample = stratified_sample(ctx.labels, 300, 11);
    auto split = split_train_test(sample, Task::voice_vs_active, 0.2, 12);
    auto data = make_task_data(ctx.m, split.train, ctx.labels, Task::voice_vs_active);
    GbdtParams p;
    p.n_trees = 200;
    p.learning_rate = 0.05;
    p.subsample = 1.0;
    std::vector<double> trace;
    auto model = train_gbdt(data.x, data.y, p, Execution::parallel, collect, &trace);
    double worst_rise = 0.0;
    for (std::size_t i = 1; i < trace.size(); ++i)
        worst_rise = std::max(worst_rise, trace[i] - trace[i - 1]);
    auto nfi = normalized_feature_importance(model);
    double nfi_sum = 0.0;
    for (double v : nfi)
        nfi_sum += v;

    // 200 points in the plane, labelled by the side of x1 + x2 = 0, none
    // closer than 1 to the boundary.
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    const std::size_t n = 200;
    std::vector<SubscriberId> ids;
    for (std::size_t i = 0; i < n; ++i)
        ids.emplace_back("t" + std::to_string(1000 + i));
    auto space = enumerate_feature_space(TaxonomyConfig{});
    FeatureMatrix toy(ids, {space[0], space[1]});
    std::vector<int> ty(n);
    for (std::size_t r = 0; r < n;) {
        const double a = u(rng), b = u(rng);
        if (std::abs(a + b) / std::sqrt(2.0) < 1.0)
            continue;
        toy.at(r, 0) = a;
        toy.at(r, 1) = b;
        ty[r] = a + b > 0;
        ++r;
    }
    GbdtParams tp;
    tp.n_trees = 50;
    const double toy_acc = accuracy(predict_proba(train_gbdt(toy, ty, tp), toy), ty);

    o.require(trace.size() == 200, "observer saw " + std::to_string(trace.size()) + " rounds");
    o.require(worst_rise <= 0.0, "deviance rose by " + std::to_string(worst_rise));
    o.require(toy_acc >= 0.99, "separable toy accuracy " + std::to_string(toy_acc));
    o.require(std::abs(nfi_sum - 1.0) <= 1e-12, "nfi sums to " + std::to_string(nfi_sum));
    o.detail << (o.pass ? "" : "; ") << std::fixed << std::setprecision(4) << "deviance " << trace.front() << " -> "
             << trace.back() << " over " << trace.size() << " rounds, max rise " << std::scientific
             << std::setprecision(1) << worst_rise << ", toy accuracy " << std::fixed << std::setprecision(3)
             << toy_acc << ", |nfi sum - 1| " << std::scientific << std::abs(nfi_sum - 1.0);
    return o;
}

// ---------------------------------------------------------------- 5, 6, 10

const char* tasks_json = R"(["voice_vs_registered", "voice_vs_active"])";

PipelineConfig pipeline_config(const std::string& contexts_json, std::size_t population, const fs::path& out) {
    const std::string text = R"({"contexts": )" + contexts_json + R"(, "population": )" +
                             std::to_string(population) +
                             R"(, "windows": {"training_start": "2024-01-01T00:00:00Z", "training_days": 10,
        "evaluation_months": 3},
      "sampling": {"n_per_class": 1000, "seed": 1, "test_fraction": 0.2},
      "gbdt": {}, "tasks": )" + tasks_json +
                             R"(, "output_dir": ")" + out.string() + R"(", "seed": 20240101})";
    return PipelineConfig::from_json_text(text);
}

struct Metric {
    double accuracy = 0.0;
    double baseline = 0.0;
};

std::map<std::pair<std::string, std::string>, Metric> read_accuracy(const fs::path& out) {
    std::map<std::pair<std::string, std::string>, Metric> m;
    for (const auto& row : read_csv(out / "accuracy.csv"))
        m[{row.at(0), row.at(1)}] = {std::stod(row.at(4)), std::stod(row.at(5))};
    return m;
}

struct TransferRun {
    fs::path out;
    double seconds = 0.0;
    std::string error;
};

const TransferRun& transfer_run() {
    static const TransferRun run = [] {
        TransferRun r;
        r.out = scratch_root() / "transfer";
        const auto t0 = std::chrono::steady_clock::now();
        try {
            RunOptions opts;
            opts.with_rank = false;
            run_pipeline(pipeline_config(R"(["ghana", "pakistan", "zambia"])", 5000, r.out), Stage::transfer, opts);
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        r.seconds = seconds_since(t0);
        return r;
    }();
    return run;
}

Outcome planted_recovery() {
    Outcome o;
    const auto& run = transfer_run();
    if (!run.error.empty()) {
        o.require(false, "pipeline error: " + run.error);
        return o;
    }
    auto acc = read_accuracy(run.out);
    const auto vr = acc.at({"ghana", "voice_vs_registered"});
    const auto va = acc.at({"ghana", "voice_vs_active"});
    o.require(vr.accuracy >= 0.5 + 0.15, "VR accuracy below 0.65");
    o.require(va.accuracy >= 0.5 + 0.15, "VA accuracy below 0.65");
    o.require(va.accuracy >= vr.accuracy - 0.02, "VA more than 0.02 below VR");
    o.require(vr.baseline == 0.5 && va.baseline == 0.5, "held-out baseline is not 0.5");
    o.require(run.seconds < 600.0, "three-context run over 10 min");
    o.detail << (o.pass ? "" : "; ") << std::fixed << std::setprecision(4) << "ghana VR " << vr.accuracy << ", VA "
             << va.accuracy << " (baseline " << vr.baseline << "), three-context run " << std::setprecision(1)
             << run.seconds << " s";
    return o;
}

Outcome transfer_failure() {
    Outcome o;
    const auto& run = transfer_run();
    if (!run.error.empty()) {
        o.require(false, "pipeline error: " + run.error);
        return o;
    }
    auto acc = read_accuracy(run.out);
    const std::vector<std::string> ctxs{"ghana", "pakistan", "zambia"};
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    double worst_margin = 1.0;
    for (const auto& row : read_csv(run.out / "transfer.csv")) {
        seen.insert({row.at(0), row.at(1), row.at(2)});
        if (row.at(0) == row.at(1))
            continue;
        const double a = std::stod(row.at(3));
        const double own_train = acc.at({row.at(0), row.at(2)}).accuracy;
        const double own_eval = acc.at({row.at(1), row.at(2)}).accuracy;
        const double margin = std::min(own_train, own_eval) - a;
        worst_margin = std::min(worst_margin, margin);
        if (margin < 0.10)
            o.require(false, row.at(0) + "->" + row.at(1) + " " + row.at(2) + " accuracy " + row.at(3));
    }
    o.require(seen.size() == 18, "cube has " + std::to_string(seen.size()) + " of 18 cells");
    o.detail << (o.pass ? "" : "; ") << seen.size() << " cells, smallest in-context minus off-diagonal gap "
             << std::fixed << std::setprecision(4) << worst_margin;
    return o;
}

Outcome noise_floor() {
    Outcome o;
    const auto out = scratch_root() / "noise";
    try {
        run_pipeline(pipeline_config(R"([{"name": "noise", "profile": "ghana",
                                         "profile_overrides": {"planted_coefficients": {}}}])",
                                     8000, out),
                     Stage::rank, RunOptions{});
    } catch (const std::exception& e) {
        o.require(false, std::string("pipeline error: ") + e.what());
        return o;
    }
    auto acc = read_accuracy(out);
    double lo_acc = 1.0, hi_acc = 0.0, lo_med = 1.0, hi_med = 0.0;
    for (const auto& [key, m] : acc) {
        lo_acc = std::min(lo_acc, m.accuracy);
        hi_acc = std::max(hi_acc, m.accuracy);
        o.require(m.accuracy >= 0.45 && m.accuracy <= 0.55, key.second + " accuracy " + std::to_string(m.accuracy));
        for (const auto& row : read_csv(out / "noise" / key.second / "auc_by_category.csv")) {
            const double median = std::stod(row.at(4));
            lo_med = std::min(lo_med, median);
            hi_med = std::max(hi_med, median);
            o.require(median >= 0.45 && median <= 0.55, key.second + " " + row.at(0) + " median " + row.at(4));
        }
    }
    o.require(acc.size() == 2, "expected two tasks");
    o.detail << (o.pass ? "" : "; ") << std::fixed << std::setprecision(4) << "accuracy in [" << lo_acc << ", "
             << hi_acc << "], category AUC medians in [" << lo_med << ", " << hi_med << "]";
    return o;
}

// ---------------------------------------------------------------- 7

Outcome calibration() {
    Outcome o;
    double worst = 0.0;
    std::ostringstream values;
    values << std::fixed << std::setprecision(2);
    for (const auto& name : builtin_profile_names()) {
        auto p = builtin_profile(name);
        auto pop = generate_population(p, 10000);
        CdrOptions co;
        co.start = default_windows().training_start;
        auto cdr = generate_cdr(pop, 10, p, co);
        auto m = measure_moments(cdr, pop, 10);
        // Distinct-count moments (contacts, towers) are the heavy-tailed ones.
        const std::vector<std::tuple<std::string, double, MeanStd, double>> checks{
            {"calls/day", m.calls_per_user_day, p.calls_per_user_day, 0.10},
            {"sms/day", m.sms_per_user_day, p.sms_per_user_day, 0.10},
            {"contacts", m.unique_contacts, p.unique_contacts, 0.15},
            {"towers", m.unique_towers, p.unique_towers, 0.15}};
        for (const auto& [label, got, target, tol] : checks) {
            const double rel = std::abs(got - target.mean) / target.mean;
            worst = std::max(worst, rel / tol);
            o.require(rel <= tol, name + " " + label + " " + std::to_string(got) + " vs " + std::to_string(target.mean));
            values << " " << name << ' ' << label << ' ' << got << '/' << target.mean << ';';
        }
    }
    o.detail << (o.pass ? "" : "; ") << "worst deviation " << std::fixed << std::setprecision(2) << 100 * worst
             << "% of tolerance;" << values.str();
    return o;
}

// ---------------------------------------------------------------- 8

Outcome label_round_trip() {
    Outcome o;
    std::size_t total = 0, agree = 0;
    const auto w = default_windows();
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        for (const auto& name : builtin_profile_names()) {
            auto p = builtin_profile(name);
            p.seed = seed * 7919 + 17;
            auto pop = generate_population(p, 3000);
            auto mmtr = generate_mmtr(pop, w, p);
            std::set<SubscriberId> subs;
            for (const auto& s : pop)
                subs.insert(s.id);
            auto labels = assign_labels(subs, mmtr, w).labels;
            for (const auto& s : pop) {
                ++total;
                agree += labels.at(s.id) == s.assigned_label;
            }
        }
    }
    o.require(agree == total, std::to_string(total - agree) + " subscribers disagree");
    o.detail << (o.pass ? "" : "; ") << agree << "/" << total << " subscribers over 5 seeds x 3 profiles";
    return o;
}

// ---------------------------------------------------------------- 9

int run_cli(const std::string& args, const std::map<std::string, std::string>& env = {}) {
    std::string cmd;
    for (const auto& [k, v] : env)
        cmd += k + "='" + v + "' ";
    cmd += std::string(CDRFORGE_CLI) + " " + args;
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename() != ".lock")
            files[fs::relative(e.path(), root).generic_string()] = sha256_file(e.path());
    return files;
}

Outcome determinism() {
    Outcome o;
    const auto root = scratch_root() / "determinism";
    fs::create_directories(root);
    const auto config = root / "config.json";
    {
        std::ofstream out(config);
        out << R"({"contexts": ["ghana", "zambia"], "population": 800,
  "windows": {"training_start": "2024-01-01T00:00:00Z", "training_days": 5, "evaluation_months": 3},
  "sampling": {"n_per_class": 80, "seed": 3}, "gbdt": {"n_trees": 20, "min_samples_leaf": 10, "subsample": 0.8},
  "tasks": ["voice_vs_registered", "voice_vs_active"], "formats": ["csv", "json"],
  "output_dir": "unused", "seed": 99})";
    }
    std::vector<std::map<std::string, std::string>> trees;
    for (auto dir : {"a", "b"}) {
        const auto out = root / dir;
        const int code = run_cli("run-all --quiet --config " + config.string() + " > /dev/null 2>&1",
                                 {{"CDRFORGE_OUT", out.string()}});
        o.require(code == 0, std::string("run-all into ") + dir + " exited " + std::to_string(code));
        if (code != 0)
            return o;
        trees.push_back(tree(out));
    }
    const auto manifest_a = slurp(root / "a" / "manifest.json");
    const auto manifest_b = slurp(root / "b" / "manifest.json");
    o.require(!manifest_a.empty() && manifest_a == manifest_b, "manifests differ");
    std::size_t differing = 0;
    for (const auto& [rel, sha] : trees[0]) {
        auto it = trees[1].find(rel);
        differing += it == trees[1].end() || it->second != sha;
    }
    differing += trees[1].size() > trees[0].size() ? trees[1].size() - trees[0].size() : 0;
    o.require(differing == 0, std::to_string(differing) + " files differ");
    // Every manifest entry must describe the bytes on disk.
    const auto manifest = nlohmann::json::parse(manifest_a);
    std::size_t listed = 0, stale = 0;
    for (const auto& entry : manifest.at("artifacts")) {
        ++listed;
        auto it = trees[0].find(entry.at("path").get<std::string>());
        stale += it == trees[0].end() || it->second != entry.at("sha256").get<std::string>();
    }
    o.require(listed > 0 && stale == 0, std::to_string(stale) + " manifest entries do not match the files");
    o.detail << (o.pass ? "" : "; ") << trees[0].size() << " files byte-identical across two runs, " << listed
             << " manifest entries";
    return o;
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"feature-oracle equivalence", feature_oracle},
        {"conservation suite", conservation},
        {"auc correctness", auc_correctness},
        {"gbdt sanity", gbdt_sanity},
        {"planted-signal recovery", planted_recovery},
        {"transfer failure", transfer_failure},
        {"generator calibration", calibration},
        {"label round trip", label_round_trip},
        {"determinism", determinism},
        {"noise floor", noise_floor},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << i + 1 << "  " << criteria[i].first
                  << ": " << o.detail.str() << std::endl;
    }
    fs::remove_all(scratch_root());
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
