#include "cdrforge/cdr_model.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>

namespace cdrforge {

namespace {

using namespace std::chrono;

template <class Int>
bool parse_int(std::string_view s, Int& out) {
    if (s.empty())
        return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string_view chomp(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t'))
        s.remove_suffix(1);
    return s;
}

// Drives the line loop shared by both CSV readers. `parse_row` throws
// MalformedRow; lenient mode catches, records and continues.
template <class Record, class RowParser>
ParseResult<Record> parse_csv(std::istream& in, std::string_view header, Mode mode, RowParser parse_row) {
    ParseResult<Record> result;
    std::string line;
    if (!std::getline(in, line)) {
        throw MalformedRow(1, "missing header, expected '" + std::string(header) + "'");
    }
    if (chomp(line) != header) {
        throw MalformedRow(1, "unexpected header '" + std::string(chomp(line)) + "', expected '" +
                                  std::string(header) + "'");
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        auto row = chomp(line);
        if (row.empty())
            continue;
        try {
            result.records.push_back(parse_row(split_commas(row), line_no));
        } catch (const MalformedRow& e) {
            if (mode == Mode::strict)
                throw;
            ++result.skipped;
            result.issues.push_back({e.line(), e.reason()});
        }
    }
    return result;
}

SubscriberId id_field(std::string_view s, std::size_t line, const char* what) {
    if (s.empty())
        throw MalformedRow(line, std::string("empty ") + what);
    return SubscriberId(std::string(s));
}

Timestamp ts_field(std::string_view s, std::size_t line) {
    auto ts = parse_iso8601(s);
    if (!ts)
        throw MalformedRow(line, "unparseable timestamp '" + std::string(s) + "'");
    return *ts;
}

} // namespace

std::optional<Timestamp> parse_iso8601(std::string_view s) {
    // YYYY-MM-DDThh:mm:ssZ
    if (s.size() != 20 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' || s[16] != ':' ||
        s[19] != 'Z')
        return std::nullopt;
    int y = 0;
    unsigned mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), mo) || !parse_int(s.substr(8, 2), d) ||
        !parse_int(s.substr(11, 2), h) || !parse_int(s.substr(14, 2), mi) || !parse_int(s.substr(17, 2), sec))
        return std::nullopt;
    year_month_day ymd{year{y}, month{mo}, day{d}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 59)
        return std::nullopt;
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec};
}

std::string format_iso8601(Timestamp ts) {
    auto day_point = floor<days>(ts);
    year_month_day ymd{day_point};
    hh_mm_ss hms{ts - day_point};
    std::array<char, 32> buf{};
    std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()), int(hms.hours().count()), int(hms.minutes().count()),
                  int(hms.seconds().count()));
    return buf.data();
}

SubscriberId::SubscriberId(std::string value) : value_(std::move(value)) {
    if (value_.empty())
        throw std::invalid_argument("SubscriberId must be non-empty");
}

std::string_view to_string(EventType t) {
    return t == EventType::call ? "CALL" : "SMS";
}

std::string_view to_string(TxType t) {
    switch (t) {
    case TxType::deposit: return "DEPOSIT";
    case TxType::withdrawal: return "WITHDRAWAL";
    case TxType::p2p_send: return "P2P_SEND";
    case TxType::p2p_receive: return "P2P_RECEIVE";
    case TxType::topup: return "TOPUP";
    }
    return "?";
}

std::optional<EventType> parse_event_type(std::string_view s) {
    if (s == "CALL")
        return EventType::call;
    if (s == "SMS")
        return EventType::sms;
    return std::nullopt;
}

std::optional<TxType> parse_tx_type(std::string_view s) {
    for (auto t : {TxType::deposit, TxType::withdrawal, TxType::p2p_send, TxType::p2p_receive, TxType::topup})
        if (to_string(t) == s)
            return t;
    return std::nullopt;
}

double Amount::value() const noexcept {
    double v = static_cast<double>(units);
    for (int i = 0; i < scale; ++i)
        v /= 10.0;
    return v;
}

std::string Amount::str() const {
    auto digits = std::to_string(units);
    if (scale == 0)
        return digits;
    if (digits.size() <= static_cast<std::size_t>(scale))
        digits.insert(0, static_cast<std::size_t>(scale) - digits.size() + 1, '0');
    digits.insert(digits.size() - static_cast<std::size_t>(scale), 1, '.');
    return digits;
}

std::optional<Amount> Amount::parse(std::string_view text) {
    auto dot = text.find('.');
    std::string_view whole = text.substr(0, dot);
    std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
    if (whole.empty() || (dot != std::string_view::npos && frac.empty()) || frac.size() > 9)
        return std::nullopt;
    for (char c : whole)
        if (c < '0' || c > '9')
            return std::nullopt;
    for (char c : frac)
        if (c < '0' || c > '9')
            return std::nullopt;
    std::string joined(whole);
    joined.append(frac);
    Amount a;
    if (!parse_int(std::string_view(joined), a.units))
        return std::nullopt;
    a.scale = static_cast<int>(frac.size());
    return a;
}

ParseResult<CdrRecord> parse_cdr(std::istream& in, Mode mode) {
    return parse_csv<CdrRecord>(in, cdr_header, mode, [](const std::vector<std::string_view>& f, std::size_t line) {
        if (f.size() != 6)
            throw MalformedRow(line, "expected 6 fields, found " + std::to_string(f.size()));
        CdrRecord r;
        r.caller = id_field(f[0], line, "caller");
        r.callee = id_field(f[1], line, "callee");
        if (r.caller == r.callee)
            throw MalformedRow(line, "caller equals callee");
        r.timestamp = ts_field(f[2], line);
        if (!parse_int(f[3], r.duration))
            throw MalformedRow(line, "unparseable duration '" + std::string(f[3]) + "'");
        if (r.duration < 0)
            throw MalformedRow(line, "negative duration");
        auto type = parse_event_type(f[4]);
        if (!type)
            throw MalformedRow(line, "unknown event type '" + std::string(f[4]) + "'");
        r.event_type = *type;
        if (r.event_type == EventType::sms && r.duration != 0)
            throw MalformedRow(line, "SMS with nonzero duration");
        r.caller_tower = std::string(f[5]);
        return r;
    });
}

ParseResult<MmtrRecord> parse_mmtr(std::istream& in, Mode mode) {
    return parse_csv<MmtrRecord>(in, mmtr_header, mode, [](const std::vector<std::string_view>& f, std::size_t line) {
        if (f.size() != 4)
            throw MalformedRow(line, "expected 4 fields, found " + std::to_string(f.size()));
        MmtrRecord r;
        r.subscriber = id_field(f[0], line, "subscriber");
        r.timestamp = ts_field(f[1], line);
        auto type = parse_tx_type(f[2]);
        if (!type)
            throw MalformedRow(line, "unknown tx_type '" + std::string(f[2]) + "'");
        r.tx_type = *type;
        if (!f[3].empty() && f[3].front() == '-')
            throw MalformedRow(line, "negative amount");
        auto amount = Amount::parse(f[3]);
        if (!amount)
            throw MalformedRow(line, "unparseable amount '" + std::string(f[3]) + "'");
        r.amount = *amount;
        return r;
    });
}

void write_cdr(std::ostream& out, std::span<const CdrRecord> records) {
    out << cdr_header << '\n';
    for (const auto& r : records) {
        out << r.caller.str() << ',' << r.callee.str() << ',' << format_iso8601(r.timestamp) << ',' << r.duration
            << ',' << to_string(r.event_type) << ',' << r.caller_tower << '\n';
    }
}

void write_mmtr(std::ostream& out, std::span<const MmtrRecord> records) {
    out << mmtr_header << '\n';
    for (const auto& r : records) {
        out << r.subscriber.str() << ',' << format_iso8601(r.timestamp) << ',' << to_string(r.tx_type) << ','
            << r.amount.str() << '\n';
    }
}

Timestamp TimeWindows::training_end() const {
    return training_start + seconds{std::int64_t{training_days} * seconds_per_day};
}

Timestamp TimeWindows::evaluation_end() const {
    return training_end() + seconds{std::int64_t{evaluation_months} * month_days * seconds_per_day};
}

std::optional<int> TimeWindows::month_block(Timestamp ts) const {
    auto start = evaluation_start();
    if (ts < start || ts >= evaluation_end())
        return std::nullopt;
    auto offset = (ts - start).count();
    return static_cast<int>(offset / (std::int64_t{month_days} * seconds_per_day));
}

void TimeWindows::validate() const {
    if (training_days <= 0)
        throw ConfigError("windows.training_days must be positive");
    if (evaluation_months <= 0)
        throw ConfigError("windows.evaluation_months must be positive");
    if (month_days <= 0)
        throw ConfigError("windows.month_days must be positive");
}

std::string_view to_string(LabelClass c) {
    switch (c) {
    case LabelClass::voice_only: return "VOICE_ONLY";
    case LabelClass::registered: return "REGISTERED";
    case LabelClass::active: return "ACTIVE";
    }
    return "?";
}

std::optional<LabelClass> parse_label(std::string_view s) {
    for (auto c : {LabelClass::voice_only, LabelClass::registered, LabelClass::active})
        if (to_string(c) == s)
            return c;
    return std::nullopt;
}

LabelResult assign_labels(const std::set<SubscriberId>& subscribers, std::span<const MmtrRecord> eval_mmtr,
                          const TimeWindows& windows, Mode mode) {
    windows.validate();
    LabelResult result;
    std::map<SubscriberId, std::vector<bool>> months_seen;
    for (const auto& r : eval_mmtr) {
        if (!subscribers.contains(r.subscriber)) {
            if (mode == Mode::strict)
                throw UnknownSubscriber(r.subscriber.str());
            ++result.unknown_subscriber_rows;
            continue;
        }
        auto block = windows.month_block(r.timestamp);
        if (!block) {
            ++result.out_of_window_rows;
            continue;
        }
        auto& seen = months_seen[r.subscriber];
        if (seen.empty())
            seen.assign(static_cast<std::size_t>(windows.evaluation_months), false);
        seen[static_cast<std::size_t>(*block)] = true;
    }
    for (const auto& id : subscribers) {
        auto it = months_seen.find(id);
        LabelClass label = LabelClass::voice_only;
        if (it != months_seen.end()) {
            bool every_month = std::find(it->second.begin(), it->second.end(), false) == it->second.end();
            label = every_month ? LabelClass::active : LabelClass::registered;
        }
        result.labels.emplace(id, label);
    }
    return result;
}

std::set<SubscriberId> observed_subscribers(std::span<const CdrRecord> records) {
    std::set<SubscriberId> ids;
    for (const auto& r : records) {
        ids.insert(r.caller);
        ids.insert(r.callee);
    }
    return ids;
}

void write_labels(std::ostream& out, const std::map<SubscriberId, LabelClass>& labels) {
    out << labels_header << '\n';
    for (const auto& [id, label] : labels)
        out << id.str() << ',' << to_string(label) << '\n';
}

std::map<SubscriberId, LabelClass> read_labels(std::istream& in) {
    std::map<SubscriberId, LabelClass> labels;
    std::string line;
    if (!std::getline(in, line) || chomp(line) != labels_header)
        throw MalformedRow(1, "expected header '" + std::string(labels_header) + "'");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        auto row = chomp(line);
        if (row.empty())
            continue;
        auto f = split_commas(row);
        if (f.size() != 2)
            throw MalformedRow(line_no, "expected 2 fields");
        auto label = parse_label(f[1]);
        if (!label)
            throw MalformedRow(line_no, "unknown label '" + std::string(f[1]) + "'");
        labels.emplace(id_field(f[0], line_no, "subscriber"), *label);
    }
    return labels;
}

} // namespace cdrforge
