#include "cdrforge/learn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cdrforge/errors.hpp"

namespace cdrforge {

namespace {

constexpr int irls_max_iterations = 50;
constexpr double irls_tolerance = 1e-8;

void check_labels(std::span<const double> feature, std::span<const int> y) {
    if (feature.size() != y.size())
        throw std::invalid_argument("feature and label lengths differ");
    const auto positives = std::count_if(y.begin(), y.end(), [](int v) { return v != 0; });
    if (positives == 0 || static_cast<std::size_t>(positives) == y.size())
        throw DegenerateLabels();
}

double log_likelihood(std::span<const double> z, std::span<const int> y, double b0, double b1) {
    double ll = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double eta = b0 + b1 * z[i];
        const double softplus = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
        ll += (y[i] != 0 ? eta : 0.0) - softplus;
    }
    return ll;
}

} // namespace

double rank_auc(std::span<const double> feature, std::span<const int> y) {
    check_labels(feature, y);
    for (double v : feature)
        if (std::isnan(v))
            throw std::invalid_argument("rank_auc: NaN feature value");
    const std::size_t n = feature.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return feature[a] < feature[b]; });

    // Sum of (1-based, tie-averaged) ranks of the positives.
    double rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        std::size_t tie_pos = 0;
        while (j < n && feature[order[j]] == feature[order[i]]) {
            tie_pos += y[order[j]] != 0;
            ++j;
        }
        const double avg_rank = static_cast<double>(i + 1 + j) / 2.0;
        rank_sum += avg_rank * static_cast<double>(tie_pos);
        positives += tie_pos;
        i = j;
    }
    const double n1 = static_cast<double>(positives);
    const double n0 = static_cast<double>(n - positives);
    const double u = rank_sum - n1 * (n1 + 1.0) / 2.0;
    return u / (n1 * n0);
}

UnivariateFit bivariate_logistic_auc(std::span<const double> feature, std::span<const int> y) {
    check_labels(feature, y);
    const std::size_t n = feature.size();
    double mean = 0.0;
    for (double v : feature)
        mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : feature)
        var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (!(sd > 0.0) || !std::isfinite(sd))
        throw std::invalid_argument("bivariate_logistic_auc: feature needs at least two distinct finite values");

    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i)
        z[i] = (feature[i] - mean) / sd;

    UnivariateFit fit;
    double b0 = 0.0, b1 = 0.0;
    double ll = log_likelihood(z, y, b0, b1);
    bool converged = false;
    for (int it = 1; it <= irls_max_iterations; ++it) {
        fit.iterations = it;
        double g0 = 0.0, g1 = 0.0, h00 = 0.0, h01 = 0.0, h11 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double p = 1.0 / (1.0 + std::exp(-(b0 + b1 * z[i])));
            const double r = (y[i] != 0 ? 1.0 : 0.0) - p;
            const double w = p * (1.0 - p);
            g0 += r;
            g1 += r * z[i];
            h00 += w;
            h01 += w * z[i];
            h11 += w * z[i] * z[i];
        }
        const double det = h00 * h11 - h01 * h01;
        if (!(det > 1e-300)) {
            // Weights have collapsed: the data are separated.
            fit.perfect_separation = true;
            converged = true;
            break;
        }
        double d0 = (h11 * g0 - h01 * g1) / det;
        double d1 = (h00 * g1 - h01 * g0) / det;
        double step = 1.0;
        double next_ll = log_likelihood(z, y, b0 + d0, b1 + d1);
        while (next_ll < ll && step > 1e-6) {
            step /= 2.0;
            next_ll = log_likelihood(z, y, b0 + step * d0, b1 + step * d1);
        }
        b0 += step * d0;
        b1 += step * d1;
        const double change = std::abs(next_ll - ll);
        ll = next_ll;
        if (std::abs(b1) > separation_slope_cap) {
            fit.perfect_separation = true;
            converged = true;
            break;
        }
        if (change < irls_tolerance) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw NonConvergence(fit.iterations);

    fit.coefficient = b1 / sd;
    fit.intercept = b0 - b1 * mean / sd;
    const double a = rank_auc(feature, y);
    fit.auc = std::max(a, 1.0 - a);
    return fit;
}

} // namespace cdrforge
