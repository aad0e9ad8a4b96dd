#include "cdrforge/feature_matrix.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace cdrforge {

namespace {

constexpr std::array<char, 8> binary_magic{'C', 'D', 'R', 'F', 'M', 'A', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "binary matrix format assumes a little-endian host");

std::string format_double(double v) {
    if (std::isnan(v))
        return "nan";
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

double parse_double(std::string_view s, std::size_t line) {
    if (s == "nan")
        return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw MalformedRow(line, "unparseable value '" + std::string(s) + "'");
    return v;
}

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw MalformedRow(0, "truncated binary matrix");
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    auto n = get<std::uint32_t>(in);
    std::string s(n, '\0');
    if (!in.read(s.data(), n))
        throw MalformedRow(0, "truncated binary matrix");
    return s;
}

FeatureDescriptor descriptor_from_name(const std::string& name, std::size_t line) {
    auto d = parse_feature_name(name);
    if (!d)
        throw MalformedRow(line, "unknown feature name '" + name + "'");
    return *d;
}

} // namespace

FeatureMatrix::FeatureMatrix(std::vector<SubscriberId> subscribers, std::vector<FeatureDescriptor> features,
                             MissingPolicy policy)
    : subscribers_(std::move(subscribers)), features_(std::move(features)), policy_(policy),
      values_(subscribers_.size() * features_.size(), 0.0) {}

std::vector<std::string> FeatureMatrix::feature_names() const {
    std::vector<std::string> names;
    names.reserve(features_.size());
    for (const auto& f : features_)
        names.push_back(feature_name(f));
    return names;
}

std::optional<std::size_t> FeatureMatrix::row_of(const SubscriberId& id) const {
    // Rows produced by featurize are sorted; fall back to a scan otherwise.
    auto it = std::lower_bound(subscribers_.begin(), subscribers_.end(), id);
    if (it != subscribers_.end() && *it == id)
        return static_cast<std::size_t>(it - subscribers_.begin());
    for (std::size_t i = 0; i < subscribers_.size(); ++i)
        if (subscribers_[i] == id)
            return i;
    return std::nullopt;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
    std::vector<SubscriberId> ids;
    ids.reserve(rows.size());
    for (auto r : rows)
        ids.push_back(subscribers_.at(r));
    FeatureMatrix out(std::move(ids), features_, policy_);
    for (std::size_t c = 0; c < cols(); ++c) {
        auto src = column(c);
        auto dst = out.column(c);
        for (std::size_t i = 0; i < rows.size(); ++i)
            dst[i] = src[rows[i]];
    }
    return out;
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const std::size_t> cols) const {
    std::vector<FeatureDescriptor> feats;
    feats.reserve(cols.size());
    for (auto c : cols)
        feats.push_back(features_.at(c));
    FeatureMatrix out(subscribers_, std::move(feats), policy_);
    for (std::size_t i = 0; i < cols.size(); ++i) {
        auto src = column(cols[i]);
        std::copy(src.begin(), src.end(), out.column(i).begin());
    }
    return out;
}

void FeatureMatrix::resolve_missing() {
    for (auto& v : values_)
        if (std::isnan(v))
            v = 0.0;
    policy_ = MissingPolicy::zero_fill;
}

void write_matrix_csv(std::ostream& out, const FeatureMatrix& m) {
    out << "subscriber";
    for (const auto& f : m.features())
        out << ',' << feature_name(f);
    out << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out << m.subscribers()[r].str();
        for (std::size_t c = 0; c < m.cols(); ++c)
            out << ',' << format_double(m.at(r, c));
        out << '\n';
    }
}

FeatureMatrix read_matrix_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line))
        throw MalformedRow(1, "missing header");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    std::vector<FeatureDescriptor> features;
    {
        std::stringstream header(line);
        std::string cell;
        std::getline(header, cell, ',');
        if (cell != "subscriber")
            throw MalformedRow(1, "first column must be 'subscriber'");
        while (std::getline(header, cell, ','))
            features.push_back(descriptor_from_name(cell, 1));
    }
    std::vector<SubscriberId> ids;
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    bool saw_nan = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        std::string_view rest(line);
        auto comma = rest.find(',');
        if (comma == std::string_view::npos && !features.empty())
            throw MalformedRow(line_no, "expected " + std::to_string(features.size() + 1) + " fields");
        ids.emplace_back(std::string(rest.substr(0, comma)));
        std::vector<double> values;
        values.reserve(features.size());
        while (comma != std::string_view::npos) {
            rest.remove_prefix(comma + 1);
            comma = rest.find(',');
            values.push_back(parse_double(rest.substr(0, comma), line_no));
            saw_nan = saw_nan || std::isnan(values.back());
        }
        if (values.size() != features.size())
            throw MalformedRow(line_no, "expected " + std::to_string(features.size() + 1) + " fields");
        rows.push_back(std::move(values));
    }
    FeatureMatrix m(std::move(ids), std::move(features), saw_nan ? MissingPolicy::nan : MissingPolicy::zero_fill);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c)
            m.at(r, c) = rows[r][c];
    return m;
}

void write_matrix_binary(std::ostream& out, const FeatureMatrix& m) {
    out.write(binary_magic.data(), binary_magic.size());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(m.missing_policy()));
    put<std::uint64_t>(out, m.rows());
    put<std::uint64_t>(out, m.cols());
    for (const auto& id : m.subscribers())
        put_string(out, id.str());
    for (const auto& f : m.features())
        put_string(out, feature_name(f));
    for (std::size_t c = 0; c < m.cols(); ++c) {
        auto col = m.column(c);
        out.write(reinterpret_cast<const char*>(col.data()), static_cast<std::streamsize>(col.size_bytes()));
    }
}

FeatureMatrix read_matrix_binary(std::istream& in) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != binary_magic)
        throw MalformedRow(0, "not a CDRFMAT1 matrix");
    auto policy = static_cast<MissingPolicy>(get<std::uint8_t>(in));
    auto rows = get<std::uint64_t>(in);
    auto cols = get<std::uint64_t>(in);
    std::vector<SubscriberId> ids;
    ids.reserve(rows);
    for (std::uint64_t i = 0; i < rows; ++i)
        ids.emplace_back(get_string(in));
    std::vector<FeatureDescriptor> features;
    features.reserve(cols);
    for (std::uint64_t i = 0; i < cols; ++i)
        features.push_back(descriptor_from_name(get_string(in), 0));
    FeatureMatrix m(std::move(ids), std::move(features), policy);
    for (std::size_t c = 0; c < m.cols(); ++c) {
        auto col = m.column(c);
        if (!in.read(reinterpret_cast<char*>(col.data()), static_cast<std::streamsize>(col.size_bytes())))
            throw MalformedRow(0, "truncated binary matrix");
    }
    return m;
}

void write_feature_dictionary(std::ostream& out, std::span<const FeatureDescriptor> features) {
    out << "name,actor,type,direction,time_partition,field,op1,op2,category\n";
    for (const auto& d : features) {
        out << feature_name(d) << ',' << to_string(d.actor) << ',' << to_string(d.event_type) << ','
            << to_string(d.direction) << ',' << to_string(d.time_partition) << ',' << to_string(d.field) << ','
            << to_string(d.op1) << ',' << (d.op2 ? to_string(*d.op2) : std::string_view{}) << ','
            << to_string(d.category()) << '\n';
    }
}

} // namespace cdrforge
