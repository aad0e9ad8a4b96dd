#pragma once

// Call/mobile-money record types, CSV ingestion, time windowing and
// adoption labels.

#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdrforge/errors.hpp"

namespace cdrforge {

using Timestamp = std::chrono::sys_seconds;

inline constexpr std::int64_t seconds_per_day = 86400;

/// Parses `YYYY-MM-DDThh:mm:ssZ`. Returns nullopt on anything else.
std::optional<Timestamp> parse_iso8601(std::string_view text);
std::string format_iso8601(Timestamp ts);

/// Anonymized subscriber token. Never empty.
class SubscriberId {
public:
    SubscriberId() = default;
    explicit SubscriberId(std::string value);

    const std::string& str() const noexcept { return value_; }
    bool empty() const noexcept { return value_.empty(); }

    friend auto operator<=>(const SubscriberId&, const SubscriberId&) = default;
    friend bool operator==(const SubscriberId&, const SubscriberId&) = default;

private:
    std::string value_;
};

enum class EventType : std::uint8_t { call, sms };
enum class TxType : std::uint8_t { deposit, withdrawal, p2p_send, p2p_receive, topup };

std::string_view to_string(EventType t);
std::string_view to_string(TxType t);
std::optional<EventType> parse_event_type(std::string_view s);
std::optional<TxType> parse_tx_type(std::string_view s);

/// Fixed-point decimal as written in the MMTR file; keeps the digit count so
/// a parsed amount prints back unchanged.
struct Amount {
    std::int64_t units = 0;
    int scale = 0;

    double value() const noexcept;
    std::string str() const;
    static std::optional<Amount> parse(std::string_view text);

    friend bool operator==(const Amount&, const Amount&) = default;
};

struct CdrRecord {
    SubscriberId caller;
    SubscriberId callee;
    Timestamp timestamp{};
    std::int64_t duration = 0;
    EventType event_type = EventType::call;
    std::string caller_tower;

    friend bool operator==(const CdrRecord&, const CdrRecord&) = default;
};

struct MmtrRecord {
    SubscriberId subscriber;
    Timestamp timestamp{};
    TxType tx_type = TxType::deposit;
    Amount amount;

    friend bool operator==(const MmtrRecord&, const MmtrRecord&) = default;
};

enum class Mode { strict, lenient };

struct RowIssue {
    std::size_t line = 0;
    std::string reason;
};

template <class Record>
struct ParseResult {
    std::vector<Record> records;
    std::size_t skipped = 0;
    std::vector<RowIssue> issues;
};

inline constexpr std::string_view cdr_header = "caller,callee,timestamp,duration,type,tower";
inline constexpr std::string_view mmtr_header = "subscriber,timestamp,tx_type,amount";
inline constexpr std::string_view labels_header = "subscriber,label";

/// Strict mode throws MalformedRow on the first bad row; lenient mode skips
/// and records it. A bad header always throws (line 1).
ParseResult<CdrRecord> parse_cdr(std::istream& in, Mode mode = Mode::strict);
ParseResult<MmtrRecord> parse_mmtr(std::istream& in, Mode mode = Mode::strict);

void write_cdr(std::ostream& out, std::span<const CdrRecord> records);
void write_mmtr(std::ostream& out, std::span<const MmtrRecord> records);

struct TimeWindows {
    Timestamp training_start{};
    int training_days = 10;
    int evaluation_months = 3;
    /// Length of one evaluation "month" block.
    int month_days = 30;

    Timestamp training_end() const;
    Timestamp evaluation_start() const { return training_end(); }
    Timestamp evaluation_end() const;
    /// Index of the month block containing `ts`, or nullopt outside the
    /// evaluation window.
    std::optional<int> month_block(Timestamp ts) const;

    /// Throws ConfigError when a window would be empty.
    void validate() const;
};

template <class Record>
struct WindowSplit {
    std::vector<Record> training;
    std::vector<Record> evaluation;
    std::size_t discarded = 0;
};

/// Half-open: training = [start, training_end), evaluation =
/// [training_end, evaluation_end). Everything else is discarded.
template <class Record>
WindowSplit<Record> split_windows(std::span<const Record> records, const TimeWindows& windows) {
    windows.validate();
    WindowSplit<Record> out;
    const auto train_end = windows.training_end();
    const auto eval_end = windows.evaluation_end();
    for (const auto& r : records) {
        if (r.timestamp < windows.training_start || r.timestamp >= eval_end)
            ++out.discarded;
        else if (r.timestamp < train_end)
            out.training.push_back(r);
        else
            out.evaluation.push_back(r);
    }
    return out;
}

enum class LabelClass : std::uint8_t { voice_only = 0, registered = 1, active = 2 };

std::string_view to_string(LabelClass c);
std::optional<LabelClass> parse_label(std::string_view s);

struct LabelResult {
    std::map<SubscriberId, LabelClass> labels;
    std::size_t unknown_subscriber_rows = 0;
    std::size_t out_of_window_rows = 0;
};

/// VOICE_ONLY: no MMTR; ACTIVE: at least one MMTR in every month block;
/// REGISTERED otherwise. MMTRs for subscribers outside `subscribers` raise
/// UnknownSubscriber in strict mode. Rows outside the evaluation window are
/// counted and ignored.
LabelResult assign_labels(const std::set<SubscriberId>& subscribers, std::span<const MmtrRecord> eval_mmtr,
                          const TimeWindows& windows, Mode mode = Mode::strict);

/// Every caller and callee seen in the records.
std::set<SubscriberId> observed_subscribers(std::span<const CdrRecord> records);

void write_labels(std::ostream& out, const std::map<SubscriberId, LabelClass>& labels);
std::map<SubscriberId, LabelClass> read_labels(std::istream& in);

} // namespace cdrforge

template <>
struct std::hash<cdrforge::SubscriberId> {
    std::size_t operator()(const cdrforge::SubscriberId& id) const noexcept {
        return std::hash<std::string>{}(id.str());
    }
};
