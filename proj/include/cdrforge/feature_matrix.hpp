#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "cdrforge/cdr_model.hpp"
#include "cdrforge/feature_space.hpp"

namespace cdrforge {

/// Dense subscribers x features table, stored column-major.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::vector<SubscriberId> subscribers, std::vector<FeatureDescriptor> features,
                  MissingPolicy policy = MissingPolicy::zero_fill);

    std::size_t rows() const noexcept { return subscribers_.size(); }
    std::size_t cols() const noexcept { return features_.size(); }

    double at(std::size_t row, std::size_t col) const { return values_[col * rows() + row]; }
    double& at(std::size_t row, std::size_t col) { return values_[col * rows() + row]; }

    std::span<const double> column(std::size_t col) const {
        return {values_.data() + col * rows(), rows()};
    }
    std::span<double> column(std::size_t col) { return {values_.data() + col * rows(), rows()}; }

    const std::vector<SubscriberId>& subscribers() const noexcept { return subscribers_; }
    const std::vector<FeatureDescriptor>& features() const noexcept { return features_; }
    std::vector<std::string> feature_names() const;
    MissingPolicy missing_policy() const noexcept { return policy_; }

    std::optional<std::size_t> row_of(const SubscriberId& id) const;

    /// New matrix holding the given rows, in the given order.
    FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
    /// New matrix holding the given columns, in the given order.
    FeatureMatrix select_columns(std::span<const std::size_t> cols) const;

    /// NaN -> 0. Afterwards the policy reads ZERO_FILL.
    void resolve_missing();

    friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

private:
    std::vector<SubscriberId> subscribers_;
    std::vector<FeatureDescriptor> features_;
    MissingPolicy policy_ = MissingPolicy::zero_fill;
    std::vector<double> values_;
};

/// CSV: header `subscriber,<feature names...>`; shortest round-trip decimal
/// values, `nan` for missing.
void write_matrix_csv(std::ostream& out, const FeatureMatrix& m);
FeatureMatrix read_matrix_csv(std::istream& in);

/// Binary columnar container (`CDRFMAT1`): header, row ids, feature names,
/// then one contiguous little-endian f64 block per column.
void write_matrix_binary(std::ostream& out, const FeatureMatrix& m);
FeatureMatrix read_matrix_binary(std::istream& in);

/// `name,actor,type,direction,time_partition,field,op1,op2,category`
void write_feature_dictionary(std::ostream& out, std::span<const FeatureDescriptor> features);

} // namespace cdrforge
