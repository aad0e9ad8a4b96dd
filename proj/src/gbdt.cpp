#include "cdrforge/learn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cdrforge/errors.hpp"
#include "seeding.hpp"

namespace cdrforge {

namespace {

constexpr std::uint64_t subsample_tag = 0x47424454;
constexpr double min_split_gain = 1e-12;
constexpr int model_format_version = 1;

double logistic(double f) { return 1.0 / (1.0 + std::exp(-f)); }

// log(1 + exp(f)) - y f, without overflow.
double log_loss(double f, int y) {
    double softplus = f > 0 ? f + std::log1p(std::exp(-f)) : std::log1p(std::exp(f));
    return softplus - (y != 0 ? f : 0.0);
}

double predict_row(const RegressionTree& tree, const FeatureMatrix& x, std::size_t r) {
    std::size_t k = 0;
    while (!tree.nodes[k].is_leaf()) {
        const auto& n = tree.nodes[k];
        k = static_cast<std::size_t>(x.at(r, static_cast<std::size_t>(n.feature)) <= n.threshold ? n.left : n.right);
    }
    return tree.nodes[k].value;
}

struct SplitCandidate {
    double gain = 0.0;
    double threshold = 0.0;
    int feature = -1;
};

// Row order of every column by (value, row).
std::vector<std::vector<std::uint32_t>> presort(const FeatureMatrix& x, Execution exec) {
    std::vector<std::vector<std::uint32_t>> order(x.cols());
    auto sort_column = [&](std::size_t c) {
        auto col = x.column(c);
        auto& o = order[c];
        o.resize(x.rows());
        std::iota(o.begin(), o.end(), 0u);
        std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    };
    const auto n = static_cast<std::int64_t>(x.cols());
    if (exec == Execution::serial) {
        for (std::int64_t c = 0; c < n; ++c)
            sort_column(static_cast<std::size_t>(c));
    } else {
#pragma omp parallel for schedule(dynamic, 8)
        for (std::int64_t c = 0; c < n; ++c)
            sort_column(static_cast<std::size_t>(c));
    }
    return order;
}

class TreeBuilder {
public:
    TreeBuilder(const FeatureMatrix& x, const std::vector<std::vector<std::uint32_t>>& order,
                const GbdtParams& params, Execution exec)
        : x_(x), order_(order), params_(params), exec_(exec) {}

    // `slot[i]` is the node row i currently sits in, -1 when out of the
    // round's subsample. Returns the tree and adds split gains to `gain`.
    RegressionTree build(std::span<const double> residual, std::span<const double> hessian,
                         std::vector<int>& slot, std::vector<double>& gain) {
        RegressionTree tree;
        tree.nodes.push_back({});
        std::vector<int> frontier{0};
        for (int depth = 0; depth < params_.max_depth && !frontier.empty(); ++depth) {
            auto best = find_splits(residual, slot, frontier);
            std::vector<int> next;
            std::vector<std::pair<int, int>> children(frontier.size(), {-1, -1});
            for (std::size_t k = 0; k < frontier.size(); ++k) {
                const auto& b = best[k];
                if (b.feature < 0)
                    continue;
                auto node = frontier[k];
                int left = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back({});
                tree.nodes.push_back({});
                auto& n = tree.nodes[static_cast<std::size_t>(node)];
                n.feature = b.feature;
                n.threshold = b.threshold;
                n.left = left;
                n.right = left + 1;
                gain[static_cast<std::size_t>(b.feature)] += b.gain;
                children[k] = {left, left + 1};
                next.push_back(left);
                next.push_back(left + 1);
            }
            // Route rows of split nodes to their children.
            std::vector<int> pos(tree.nodes.size(), -1);
            for (std::size_t k = 0; k < frontier.size(); ++k)
                pos[static_cast<std::size_t>(frontier[k])] = static_cast<int>(k);
            for (std::size_t i = 0; i < slot.size(); ++i) {
                if (slot[i] < 0)
                    continue;
                auto k = pos[static_cast<std::size_t>(slot[i])];
                if (k < 0 || children[static_cast<std::size_t>(k)].first < 0)
                    continue;
                const auto& n = tree.nodes[static_cast<std::size_t>(slot[i])];
                slot[i] = x_.at(i, static_cast<std::size_t>(n.feature)) <= n.threshold
                              ? children[static_cast<std::size_t>(k)].first
                              : children[static_cast<std::size_t>(k)].second;
            }
            frontier = std::move(next);
        }
        // Newton leaf values.
        std::vector<double> num(tree.nodes.size(), 0.0);
        std::vector<double> den(tree.nodes.size(), 0.0);
        for (std::size_t i = 0; i < slot.size(); ++i) {
            if (slot[i] < 0)
                continue;
            num[static_cast<std::size_t>(slot[i])] += residual[i];
            den[static_cast<std::size_t>(slot[i])] += hessian[i];
        }
        for (std::size_t k = 0; k < tree.nodes.size(); ++k)
            if (tree.nodes[k].is_leaf())
                tree.nodes[k].value = den[k] > 1e-150 ? num[k] / den[k] : 0.0;
        return tree;
    }

private:
    std::vector<SplitCandidate> find_splits(std::span<const double> residual, const std::vector<int>& slot,
                                            const std::vector<int>& frontier) {
        const std::size_t n_nodes = frontier.size();
        int max_node = *std::max_element(frontier.begin(), frontier.end());
        std::vector<int> pos(static_cast<std::size_t>(max_node) + 1, -1);
        for (std::size_t k = 0; k < n_nodes; ++k)
            pos[static_cast<std::size_t>(frontier[k])] = static_cast<int>(k);

        std::vector<double> total_sum(n_nodes, 0.0);
        std::vector<std::size_t> total_count(n_nodes, 0);
        for (std::size_t i = 0; i < slot.size(); ++i) {
            if (slot[i] < 0 || slot[i] > max_node || pos[static_cast<std::size_t>(slot[i])] < 0)
                continue;
            auto k = static_cast<std::size_t>(pos[static_cast<std::size_t>(slot[i])]);
            total_sum[k] += residual[i];
            ++total_count[k];
        }

        const auto n_features = x_.cols();
        std::vector<std::vector<SplitCandidate>> per_feature(n_features);
        auto scan = [&](std::size_t f) {
            auto& best = per_feature[f];
            best.assign(n_nodes, {});
            std::vector<double> left_sum(n_nodes, 0.0);
            std::vector<std::size_t> left_count(n_nodes, 0);
            std::vector<double> last(n_nodes, 0.0);
            auto col = x_.column(f);
            const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
            for (auto i : order_[f]) {
                auto s = slot[i];
                if (s < 0 || s > max_node || pos[static_cast<std::size_t>(s)] < 0)
                    continue;
                auto k = static_cast<std::size_t>(pos[static_cast<std::size_t>(s)]);
                const double v = col[i];
                const auto nl = left_count[k];
                const auto nr = total_count[k] - nl;
                if (nl >= min_leaf && nr >= min_leaf && v > last[k]) {
                    const double sl = left_sum[k];
                    const double sr = total_sum[k] - sl;
                    const double g = sl * sl / static_cast<double>(nl) + sr * sr / static_cast<double>(nr) -
                                     total_sum[k] * total_sum[k] / static_cast<double>(total_count[k]);
                    if (g > best[k].gain && g > min_split_gain) {
                        double mid = last[k] + (v - last[k]) / 2.0;
                        if (!(mid < v))
                            mid = last[k];
                        best[k] = {g, mid, static_cast<int>(f)};
                    }
                }
                left_sum[k] += residual[i];
                ++left_count[k];
                last[k] = v;
            }
        };
        const auto nf = static_cast<std::int64_t>(n_features);
        if (exec_ == Execution::serial) {
            for (std::int64_t f = 0; f < nf; ++f)
                scan(static_cast<std::size_t>(f));
        } else {
#pragma omp parallel for schedule(dynamic, 8)
            for (std::int64_t f = 0; f < nf; ++f)
                scan(static_cast<std::size_t>(f));
        }

        // Ascending feature order with a strict comparison keeps the lowest
        // feature on ties; the scan already kept the lowest threshold.
        std::vector<SplitCandidate> best(n_nodes);
        for (std::size_t f = 0; f < n_features; ++f)
            for (std::size_t k = 0; k < n_nodes; ++k)
                if (per_feature[f][k].feature >= 0 && per_feature[f][k].gain > best[k].gain)
                    best[k] = per_feature[f][k];
        return best;
    }

    const FeatureMatrix& x_;
    const std::vector<std::vector<std::uint32_t>>& order_;
    const GbdtParams& params_;
    Execution exec_;
};

nlohmann::json params_to_json(const GbdtParams& p) {
    return {{"n_trees", p.n_trees},
            {"learning_rate", p.learning_rate},
            {"max_depth", p.max_depth},
            {"min_samples_leaf", p.min_samples_leaf},
            {"subsample", p.subsample},
            {"seed", p.seed}};
}

} // namespace

void GbdtParams::validate() const {
    if (n_trees < 0)
        throw ConfigError("gbdt.n_trees must be non-negative");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0))
        throw ConfigError("gbdt.learning_rate must be in (0,1]");
    if (max_depth < 1)
        throw ConfigError("gbdt.max_depth must be positive");
    if (min_samples_leaf < 1)
        throw ConfigError("gbdt.min_samples_leaf must be positive");
    if (!(subsample > 0.0 && subsample <= 1.0))
        throw ConfigError("gbdt.subsample must be in (0,1]");
}

double RegressionTree::predict(std::span<const double> row) const {
    std::size_t k = 0;
    while (!nodes[k].is_leaf())
        k = static_cast<std::size_t>(row[static_cast<std::size_t>(nodes[k].feature)] <= nodes[k].threshold
                                         ? nodes[k].left
                                         : nodes[k].right);
    return nodes[k].value;
}

int RegressionTree::depth() const {
    if (nodes.empty())
        return 0;
    std::vector<int> d(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (nodes[k].is_leaf())
            continue;
        d[static_cast<std::size_t>(nodes[k].left)] = d[k] + 1;
        d[static_cast<std::size_t>(nodes[k].right)] = d[k] + 1;
        deepest = std::max(deepest, d[k] + 1);
    }
    return deepest;
}

double TrainedModel::decision(std::span<const double> row) const {
    double f = 0.0;
    for (const auto& t : trees)
        f += t.predict(row);
    return intercept + params.learning_rate * f;
}

std::string TrainedModel::to_json_text() const {
    nlohmann::json trees_json = nlohmann::json::array();
    for (const auto& t : trees) {
        nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                       left = nlohmann::json::array(), right = nlohmann::json::array(),
                       value = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            feature.push_back(n.feature);
            threshold.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            value.push_back(n.value);
        }
        trees_json.push_back(
            {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}});
    }
    nlohmann::json j = {{"format", "cdrforge-gbdt"},
                        {"version", model_format_version},
                        {"params", params_to_json(params)},
                        {"intercept", intercept},
                        {"feature_names", feature_names},
                        {"importance_gain", importance_gain},
                        {"trees", trees_json}};
    return j.dump(1) + "\n";
}

TrainedModel TrainedModel::from_json_text(std::string_view text) {
    TrainedModel m;
    try {
        auto j = nlohmann::json::parse(text);
        if (j.at("format") != "cdrforge-gbdt" || j.at("version") != model_format_version)
            throw ConfigError("unsupported model format");
        const auto& p = j.at("params");
        m.params.n_trees = p.at("n_trees").get<int>();
        m.params.learning_rate = p.at("learning_rate").get<double>();
        m.params.max_depth = p.at("max_depth").get<int>();
        m.params.min_samples_leaf = p.at("min_samples_leaf").get<int>();
        m.params.subsample = p.at("subsample").get<double>();
        m.params.seed = p.at("seed").get<std::uint64_t>();
        m.intercept = j.at("intercept").get<double>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.importance_gain = j.at("importance_gain").get<std::vector<double>>();
        for (const auto& t : j.at("trees")) {
            auto feature = t.at("feature").get<std::vector<int>>();
            auto threshold = t.at("threshold").get<std::vector<double>>();
            auto left = t.at("left").get<std::vector<int>>();
            auto right = t.at("right").get<std::vector<int>>();
            auto value = t.at("value").get<std::vector<double>>();
            RegressionTree tree;
            for (std::size_t k = 0; k < feature.size(); ++k)
                tree.nodes.push_back({feature.at(k), threshold.at(k), left.at(k), right.at(k), value.at(k)});
            m.trees.push_back(std::move(tree));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed model file: ") + e.what());
    }
    return m;
}

double binomial_deviance(std::span<const double> f, std::span<const int> y) {
    if (f.size() != y.size() || y.empty())
        throw std::invalid_argument("binomial_deviance: length mismatch or empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        total += log_loss(f[i], y[i]);
    return 2.0 * total / static_cast<double>(y.size());
}

TrainedModel train_gbdt(const FeatureMatrix& x, std::span<const int> y, const GbdtParams& params, Execution exec,
                        RoundObserver observer, void* observer_data) {
    params.validate();
    const std::size_t n = x.rows();
    if (y.size() != n)
        throw std::invalid_argument("train_gbdt: " + std::to_string(n) + " rows but " + std::to_string(y.size()) +
                                    " labels");
    if (n > std::numeric_limits<std::uint32_t>::max())
        throw std::invalid_argument("train_gbdt: too many rows");
    for (std::size_t c = 0; c < x.cols(); ++c)
        for (double v : x.column(c))
            if (std::isnan(v))
                throw std::invalid_argument("train_gbdt: NaN in column " + feature_name(x.features()[c]));
    const auto positives = static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](int v) { return v != 0; }));
    if (positives == 0 || positives == n)
        throw DegenerateLabels();

    TrainedModel model;
    model.params = params;
    model.feature_names = x.feature_names();
    model.importance_gain.assign(x.cols(), 0.0);
    const double prior = static_cast<double>(positives) / static_cast<double>(n);
    model.intercept = std::log(prior / (1.0 - prior));

    const auto order = presort(x, exec);
    TreeBuilder builder(x, order, params, exec);
    std::vector<double> f(n, model.intercept), residual(n), hessian(n);
    std::vector<int> slot(n);

    for (int round = 0; round < params.n_trees; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = logistic(f[i]);
            residual[i] = (y[i] != 0 ? 1.0 : 0.0) - p;
            hessian[i] = p * (1.0 - p);
        }
        if (params.subsample < 1.0) {
            auto rng = detail::stream(params.seed, subsample_tag, static_cast<std::uint64_t>(round));
            std::bernoulli_distribution keep(params.subsample);
            for (auto& s : slot)
                s = keep(rng) ? 0 : -1;
        } else {
            std::fill(slot.begin(), slot.end(), 0);
        }
        auto tree = builder.build(residual, hessian, slot, model.importance_gain);
        // In-sample rows already sit in their leaf.
        for (std::size_t i = 0; i < n; ++i) {
            double v = slot[i] >= 0 ? tree.nodes[static_cast<std::size_t>(slot[i])].value : predict_row(tree, x, i);
            f[i] += params.learning_rate * v;
        }
        model.trees.push_back(std::move(tree));
        if (observer)
            observer(round + 1, binomial_deviance(f, y), observer_data);
    }
    return model;
}

std::vector<double> predict_proba(const TrainedModel& model, const FeatureMatrix& x) {
    if (x.cols() != model.feature_names.size())
        throw FeatureMismatch("model has " + std::to_string(model.feature_names.size()) + " features, matrix has " +
                              std::to_string(x.cols()));
    for (std::size_t c = 0; c < x.cols(); ++c)
        if (feature_name(x.features()[c]) != model.feature_names[c])
            throw FeatureMismatch("column " + std::to_string(c) + " is " + feature_name(x.features()[c]) +
                                  ", model expects " + model.feature_names[c]);
    std::vector<double> out(x.rows());
    std::vector<double> row(x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            double v = x.at(r, c);
            row[c] = std::isnan(v) ? 0.0 : v;
        }
        out[r] = logistic(model.decision(row));
    }
    return out;
}

std::vector<double> normalized_feature_importance(const TrainedModel& model) {
    double total = 0.0;
    for (double g : model.importance_gain)
        total += g;
    if (!(total > 0.0))
        throw ZeroGain();
    std::vector<double> out(model.importance_gain.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = model.importance_gain[i] / total;
    return out;
}

} // namespace cdrforge
