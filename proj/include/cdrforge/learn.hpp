#pragma once

// Supervised modeling: stratified sampling, gradient-boosted trees on the
// binomial deviance, rank AUC, one-feature logistic fits, normalized
// feature importance and cross-context transfer evaluation.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdrforge/cdr_model.hpp"
#include "cdrforge/feature_matrix.hpp"
#include "cdrforge/parallel.hpp"

namespace cdrforge {

enum class Task : std::uint8_t { voice_vs_registered, voice_vs_active };

std::string_view to_string(Task t);
std::optional<Task> parse_task(std::string_view s);
/// The mobile-money class that is positive for `task`.
LabelClass positive_class(Task task);

// ---------------------------------------------------------------- sampling

/// Exactly `n_per_class` ids from every class, without replacement, each
/// list sorted. Throws InsufficientClass.
std::map<LabelClass, std::vector<SubscriberId>> stratified_sample(const std::map<SubscriberId, LabelClass>& labels,
                                                                  std::size_t n_per_class, std::uint64_t seed);

struct TrainTestSplit {
    std::vector<SubscriberId> train;
    std::vector<SubscriberId> test;
};

/// Per-class split of `sample` restricted to the task's two classes. Each
/// class contributes round(test_fraction * size) test rows.
TrainTestSplit split_train_test(const std::map<LabelClass, std::vector<SubscriberId>>& sample, Task task,
                                double test_fraction, std::uint64_t seed);

/// Rows of `m` for `ids` (in order) and the matching 0/1 targets.
struct LabeledData {
    FeatureMatrix x;
    std::vector<int> y;
};
LabeledData make_task_data(const FeatureMatrix& m, std::span<const SubscriberId> ids,
                           const std::map<SubscriberId, LabelClass>& labels, Task task);

// ---------------------------------------------------------------- boosting

struct GbdtParams {
    int n_trees = 200;
    double learning_rate = 0.1;
    int max_depth = 3;
    int min_samples_leaf = 20;
    double subsample = 1.0;
    std::uint64_t seed = 0;

    /// Throws ConfigError.
    void validate() const;
};

struct TreeNode {
    /// -1 for leaves.
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    /// Newton leaf value (before learning-rate scaling).
    double value = 0.0;

    bool is_leaf() const noexcept { return feature < 0; }
};

/// Axis-aligned regression tree; node 0 is the root. `x <= threshold` goes
/// left.
struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> row) const;
    int depth() const;
};

struct TrainedModel {
    std::vector<RegressionTree> trees;
    double intercept = 0.0;
    GbdtParams params;
    std::vector<std::string> feature_names;
    std::vector<double> importance_gain;

    /// Raw score F(x) = intercept + lr * sum_k tree_k(x).
    double decision(std::span<const double> row) const;

    std::string to_json_text() const;
    static TrainedModel from_json_text(std::string_view text);
};

/// Called after each boosting round with the training deviance.
using RoundObserver = void (*)(int round, double deviance, void* user);

/// Friedman gradient boosting on binomial deviance with Newton leaf values.
/// Throws DegenerateLabels when `y` has one class.
TrainedModel train_gbdt(const FeatureMatrix& x, std::span<const int> y, const GbdtParams& params,
                        Execution exec = Execution::parallel, RoundObserver observer = nullptr,
                        void* observer_data = nullptr);

/// Mean binomial deviance of raw scores `f` against `y`.
double binomial_deviance(std::span<const double> f, std::span<const int> y);

/// Throws FeatureMismatch when columns differ from model.feature_names.
std::vector<double> predict_proba(const TrainedModel& model, const FeatureMatrix& x);

double accuracy(std::span<const double> probabilities, std::span<const int> y, double threshold = 0.5);

/// Majority-class share. Throws std::invalid_argument on empty input.
double naive_baseline(std::span<const int> y);

/// Per-feature gain divided by total gain. Throws ZeroGain.
std::vector<double> normalized_feature_importance(const TrainedModel& model);

// ---------------------------------------------------------------- ranking

/// P(random positive outranks random negative), ties counted one half.
/// Throws DegenerateLabels.
double rank_auc(std::span<const double> feature, std::span<const int> y);

struct UnivariateFit {
    double auc = 0.5;
    double intercept = 0.0;
    double coefficient = 0.0;
    int iterations = 0;
    bool perfect_separation = false;
};

/// Slope magnitude (per standard deviation of the feature) beyond which a
/// one-feature fit is flagged as perfectly separated.
inline constexpr double separation_slope_cap = 30.0;

/// Intercept + slope logistic fit by IRLS (at most 50 iterations, stop when
/// the log-likelihood moves by less than 1e-8). The returned AUC is
/// orientation-free: max(a, 1 - a) for a = rank_auc(feature, y).
/// Throws DegenerateLabels, std::invalid_argument for a constant feature,
/// and NonConvergence.
UnivariateFit bivariate_logistic_auc(std::span<const double> feature, std::span<const int> y);

struct FeatureRanking {
    FeatureDescriptor feature;
    double auc = 0.5;
    double coefficient = 0.0;
    /// Empty when the fit was clean; otherwise why it was not.
    std::string note;
};

struct CategorySummary {
    Category category = Category::basic;
    std::size_t count = 0;
    double min = 0.0;
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;
    double max = 0.0;
};

struct RankingReport {
    std::vector<FeatureRanking> rankings;
    std::vector<CategorySummary> categories;
};

/// Linear-interpolation quantile of a sorted sample.
double quantile_sorted(std::span<const double> sorted, double q);

std::vector<CategorySummary> summarize_by_category(std::span<const FeatureRanking> rankings);

/// One bivariate AUC per column plus per-category quantiles. Degenerate
/// columns are kept with AUC 0.5 and a note.
RankingReport rank_all_features(const FeatureMatrix& x, std::span<const int> y,
                                Execution exec = Execution::parallel);

// ---------------------------------------------------------------- logistic

/// Ridge-penalized multivariate logistic regression on standardized
/// features, the sanity comparator for the boosted model.
struct LogisticModel {
    std::vector<double> means;
    std::vector<double> scales;
    std::vector<double> weights;
    double bias = 0.0;

    std::vector<double> predict_proba(const FeatureMatrix& x) const;
};

LogisticModel train_logistic(const FeatureMatrix& x, std::span<const int> y, double l2 = 1.0, int max_iter = 25);

// ---------------------------------------------------------------- transfer

struct TransferEntry {
    std::string train_context;
    std::string eval_context;
    Task task = Task::voice_vs_registered;
    double accuracy = 0.0;
    double baseline = 0.0;
};

struct TransferMatrix {
    std::vector<Task> tasks;
    std::vector<std::string> contexts;
    std::vector<TransferEntry> entries;

    const TransferEntry& at(std::string_view train, std::string_view eval, Task task) const;
};

using ModelKey = std::pair<std::string, Task>;

/// Every model evaluated on every context's held-out data for its task.
/// Throws FeatureMismatch when feature lists differ.
TransferMatrix transfer_evaluate(const std::map<ModelKey, TrainedModel>& models,
                                 const std::map<ModelKey, LabeledData>& datasets, std::span<const Task> tasks);

} // namespace cdrforge
