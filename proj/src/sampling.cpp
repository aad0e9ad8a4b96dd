#include "cdrforge/learn.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "cdrforge/errors.hpp"
#include "seeding.hpp"

namespace cdrforge {

namespace {

constexpr std::uint64_t sample_tag = 0x53414d50;
constexpr std::uint64_t split_tag = 0x53504c54;

constexpr std::array task_names{"voice_vs_registered", "voice_vs_active"};

} // namespace

std::string_view to_string(Task t) { return task_names[static_cast<std::size_t>(t)]; }

std::optional<Task> parse_task(std::string_view s) {
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (std::size_t i = 0; i < task_names.size(); ++i)
        if (lower == task_names[i])
            return static_cast<Task>(i);
    return std::nullopt;
}

LabelClass positive_class(Task task) {
    return task == Task::voice_vs_registered ? LabelClass::registered : LabelClass::active;
}

std::map<LabelClass, std::vector<SubscriberId>> stratified_sample(const std::map<SubscriberId, LabelClass>& labels,
                                                                  std::size_t n_per_class, std::uint64_t seed) {
    if (n_per_class == 0)
        throw ConfigError("n_per_class must be positive");
    std::map<LabelClass, std::vector<SubscriberId>> by_class;
    for (auto c : {LabelClass::voice_only, LabelClass::registered, LabelClass::active})
        by_class[c];
    // Map iteration is sorted by id, so each pool starts in a canonical order.
    for (const auto& [id, c] : labels)
        by_class[c].push_back(id);

    std::map<LabelClass, std::vector<SubscriberId>> out;
    for (auto& [c, pool] : by_class) {
        if (pool.size() < n_per_class)
            throw InsufficientClass(std::string(to_string(c)), pool.size(), n_per_class);
        auto rng = detail::stream(seed, sample_tag, static_cast<std::uint64_t>(c));
        // Partial Fisher-Yates: the first n_per_class slots are a uniform
        // sample without replacement.
        for (std::size_t i = 0; i < n_per_class; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        pool.resize(n_per_class);
        std::sort(pool.begin(), pool.end());
        out[c] = std::move(pool);
    }
    return out;
}

TrainTestSplit split_train_test(const std::map<LabelClass, std::vector<SubscriberId>>& sample, Task task,
                                double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("test_fraction must be in (0,1)");
    TrainTestSplit split;
    for (auto c : {LabelClass::voice_only, positive_class(task)}) {
        auto it = sample.find(c);
        auto available = it == sample.end() ? std::size_t{0} : it->second.size();
        if (available < 2)
            throw InsufficientClass(std::string(to_string(c)), available, 2);
        auto ids = it->second;
        std::sort(ids.begin(), ids.end());
        auto rng = detail::stream(seed, split_tag, static_cast<std::uint64_t>(c));
        std::shuffle(ids.begin(), ids.end(), rng);
        auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ids.size())));
        n_test = std::clamp<std::size_t>(n_test, 1, ids.size() - 1);
        split.test.insert(split.test.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
        split.train.insert(split.train.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

LabeledData make_task_data(const FeatureMatrix& m, std::span<const SubscriberId> ids,
                           const std::map<SubscriberId, LabelClass>& labels, Task task) {
    std::vector<std::size_t> rows;
    std::vector<int> y;
    rows.reserve(ids.size());
    y.reserve(ids.size());
    auto pos = positive_class(task);
    for (const auto& id : ids) {
        auto r = m.row_of(id);
        if (!r)
            throw UnknownSubscriber(id.str());
        auto l = labels.find(id);
        if (l == labels.end())
            throw UnknownSubscriber(id.str());
        if (l->second != pos && l->second != LabelClass::voice_only)
            throw std::invalid_argument("subscriber " + id.str() + " is not part of task " +
                                        std::string(to_string(task)));
        rows.push_back(*r);
        y.push_back(l->second == pos ? 1 : 0);
    }
    auto x = m.select_rows(rows);
    x.resolve_missing();
    return {std::move(x), std::move(y)};
}

double accuracy(std::span<const double> probabilities, std::span<const int> y, double threshold) {
    if (probabilities.size() != y.size())
        throw std::invalid_argument("accuracy: length mismatch");
    if (y.empty())
        return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        correct += (probabilities[i] >= threshold) == (y[i] != 0);
    return static_cast<double>(correct) / static_cast<double>(y.size());
}

double naive_baseline(std::span<const int> y) {
    if (y.empty())
        throw std::invalid_argument("naive_baseline: empty labels");
    auto pos = static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](int v) { return v != 0; }));
    return static_cast<double>(std::max(pos, y.size() - pos)) / static_cast<double>(y.size());
}

} // namespace cdrforge
