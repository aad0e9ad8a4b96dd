#include "cdrforge/learn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "cdrforge/errors.hpp"

namespace cdrforge {

namespace {

FeatureRanking rank_column(const FeatureDescriptor& d, std::span<const double> raw, std::span<const int> y) {
    FeatureRanking out;
    out.feature = d;
    std::vector<double> col(raw.begin(), raw.end());
    for (auto& v : col)
        if (std::isnan(v))
            v = 0.0;
    if (std::adjacent_find(col.begin(), col.end(), std::not_equal_to<>()) == col.end()) {
        out.auc = 0.5;
        out.note = "constant";
        return out;
    }
    try {
        auto fit = bivariate_logistic_auc(col, y);
        out.auc = fit.auc;
        out.coefficient = fit.coefficient;
        if (fit.perfect_separation)
            out.note = "perfect_separation";
    } catch (const NonConvergence&) {
        const double a = rank_auc(col, y);
        out.auc = std::max(a, 1.0 - a);
        out.note = "non_convergence";
    }
    return out;
}

} // namespace

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty())
        throw std::invalid_argument("quantile of an empty sample");
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<CategorySummary> summarize_by_category(std::span<const FeatureRanking> rankings) {
    std::vector<CategorySummary> out;
    for (auto c : {Category::basic, Category::temporal, Category::movement, Category::network}) {
        std::vector<double> aucs;
        for (const auto& r : rankings)
            if (r.feature.category() == c)
                aucs.push_back(r.auc);
        if (aucs.empty())
            continue;
        std::sort(aucs.begin(), aucs.end());
        out.push_back({c, aucs.size(), aucs.front(), quantile_sorted(aucs, 0.25), quantile_sorted(aucs, 0.5),
                       quantile_sorted(aucs, 0.75), aucs.back()});
    }
    return out;
}

RankingReport rank_all_features(const FeatureMatrix& x, std::span<const int> y, Execution exec) {
    RankingReport report;
    if (x.cols() == 0)
        return report;
    if (y.size() != x.rows())
        throw std::invalid_argument("rank_all_features: " + std::to_string(x.rows()) + " rows but " +
                                    std::to_string(y.size()) + " labels");
    const auto positives = std::count_if(y.begin(), y.end(), [](int v) { return v != 0; });
    if (positives == 0 || static_cast<std::size_t>(positives) == y.size())
        throw DegenerateLabels();

    report.rankings.resize(x.cols());
    const auto n = static_cast<std::int64_t>(x.cols());
    if (exec == Execution::serial) {
        for (std::int64_t c = 0; c < n; ++c) {
            auto k = static_cast<std::size_t>(c);
            report.rankings[k] = rank_column(x.features()[k], x.column(k), y);
        }
    } else {
#pragma omp parallel for schedule(dynamic, 4)
        for (std::int64_t c = 0; c < n; ++c) {
            auto k = static_cast<std::size_t>(c);
            report.rankings[k] = rank_column(x.features()[k], x.column(k), y);
        }
    }
    report.categories = summarize_by_category(report.rankings);
    return report;
}

} // namespace cdrforge
