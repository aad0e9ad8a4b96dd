#include "cdrforge/learn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "cdrforge/errors.hpp"

namespace cdrforge {

namespace {

Eigen::MatrixXd standardized(const FeatureMatrix& x, const std::vector<double>& means,
                             const std::vector<double>& scales) {
    Eigen::MatrixXd z(static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols()));
    for (std::size_t c = 0; c < x.cols(); ++c) {
        auto col = x.column(c);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            double v = std::isnan(col[r]) ? 0.0 : col[r];
            z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (v - means[c]) / scales[c];
        }
    }
    return z;
}

} // namespace

std::vector<double> LogisticModel::predict_proba(const FeatureMatrix& x) const {
    if (x.cols() != weights.size())
        throw FeatureMismatch("logistic model has " + std::to_string(weights.size()) + " features, matrix has " +
                              std::to_string(x.cols()));
    const auto z = standardized(x, means, scales);
    const Eigen::Map<const Eigen::VectorXd> w(weights.data(), static_cast<Eigen::Index>(weights.size()));
    const Eigen::VectorXd eta = (z * w).array() + bias;
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 1.0 / (1.0 + std::exp(-eta(static_cast<Eigen::Index>(i))));
    return out;
}

LogisticModel train_logistic(const FeatureMatrix& x, std::span<const int> y, double l2, int max_iter) {
    if (y.size() != x.rows())
        throw std::invalid_argument("train_logistic: row/label mismatch");
    if (!(l2 > 0.0))
        throw std::invalid_argument("train_logistic: l2 must be positive");
    const auto positives = std::count_if(y.begin(), y.end(), [](int v) { return v != 0; });
    if (positives == 0 || static_cast<std::size_t>(positives) == y.size())
        throw DegenerateLabels();

    LogisticModel m;
    const std::size_t n = x.rows(), p = x.cols();
    m.means.assign(p, 0.0);
    m.scales.assign(p, 1.0);
    for (std::size_t c = 0; c < p; ++c) {
        auto col = x.column(c);
        double mean = 0.0;
        for (double v : col)
            mean += std::isnan(v) ? 0.0 : v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : col) {
            double d = (std::isnan(v) ? 0.0 : v) - mean;
            var += d * d;
        }
        const double sd = std::sqrt(var / static_cast<double>(n));
        m.means[c] = mean;
        m.scales[c] = sd > 0.0 ? sd : 1.0;
    }

    // Design with a leading intercept column; the intercept is not penalized.
    Eigen::MatrixXd design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p + 1));
    design.col(0).setOnes();
    design.rightCols(static_cast<Eigen::Index>(p)) = standardized(x, m.means, m.scales);
    Eigen::VectorXd target(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        target(static_cast<Eigen::Index>(i)) = y[i] != 0 ? 1.0 : 0.0;

    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p + 1), l2);
    penalty(0) = 0.0;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p + 1));
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd eta = design * beta;
        const Eigen::VectorXd prob = (1.0 + (-eta.array()).exp()).inverse().matrix();
        const Eigen::VectorXd w = (prob.array() * (1.0 - prob.array())).max(1e-12).matrix();
        const Eigen::VectorXd grad = design.transpose() * (target - prob) - penalty.cwiseProduct(beta);
        Eigen::MatrixXd hess = design.transpose() * w.asDiagonal() * design;
        hess.diagonal() += penalty;
        const Eigen::VectorXd step = hess.ldlt().solve(grad);
        beta += step;
        if (step.lpNorm<Eigen::Infinity>() < 1e-8)
            break;
    }
    m.bias = beta(0);
    m.weights.assign(beta.data() + 1, beta.data() + beta.size());
    return m;
}

} // namespace cdrforge
