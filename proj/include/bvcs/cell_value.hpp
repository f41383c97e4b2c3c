#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "bvcs/errors.hpp"

namespace bvcs {

/// Error codes a cell can evaluate to. They travel as values, not exceptions.
enum class ErrorCode { DIV0, REF, VALUE, NAME, CYCLE };

inline const char* error_code_text(ErrorCode c) {
    switch (c) {
        case ErrorCode::DIV0: return "#DIV/0!";
        case ErrorCode::REF: return "#REF!";
        case ErrorCode::VALUE: return "#VALUE!";
        case ErrorCode::NAME: return "#NAME?";
        case ErrorCode::CYCLE: return "#CYCLE!";
    }
    return "#VALUE!";
}

inline std::optional<ErrorCode> error_code_from_text(const std::string& s) {
    if (s == "#DIV/0!") return ErrorCode::DIV0;
    if (s == "#REF!") return ErrorCode::REF;
    if (s == "#VALUE!") return ErrorCode::VALUE;
    if (s == "#NAME?") return ErrorCode::NAME;
    if (s == "#CYCLE!") return ErrorCode::CYCLE;
    return std::nullopt;
}

/// Calendar date. Kept as y/m/d; converted to a serial day count only for
/// arithmetic. Serial epoch is 1899-12-30 (serial 0), so 1900-01-01 == 2.
struct Date {
    int year = 1899;
    int month = 12;  // 1..12
    int day = 30;    // 1..31

    auto operator<=>(const Date&) const = default;
};

namespace detail {

// Days from civil date relative to 1970-01-01 (proleptic Gregorian).
inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);                    // [0, 399]
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 + static_cast<unsigned>(d) - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;                   // [0, 146096]
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);                 // [0, 146096]
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;   // [0, 399]
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);                 // [0, 365]
    const unsigned mp = (5 * doy + 2) / 153;                                      // [0, 11]
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

// 1899-12-30 relative to the unix epoch.
inline constexpr std::int64_t kSerialEpochDays = -25569;

}  // namespace detail

inline double date_to_serial(const Date& d) {
    return static_cast<double>(detail::days_from_civil(d.year, d.month, d.day) - detail::kSerialEpochDays);
}

inline Date date_from_serial(double serial) {
    Date d;
    detail::civil_from_days(static_cast<std::int64_t>(serial) + detail::kSerialEpochDays, d.year, d.month, d.day);
    return d;
}

inline std::string date_to_iso(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

inline std::optional<Date> date_from_iso(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    auto digits = [&](int from, int to) -> std::optional<int> {
        int v = 0;
        for (int i = from; i < to; ++i) {
            if (s[i] < '0' || s[i] > '9') return std::nullopt;
            v = v * 10 + (s[i] - '0');
        }
        return v;
    };
    auto y = digits(0, 4), m = digits(5, 7), d = digits(8, 10);
    if (!y || !m || !d) return std::nullopt;
    if (*m < 1 || *m > 12 || *d < 1 || *d > 31) return std::nullopt;
    Date date{*y, *m, *d};
    // Reject dates that do not round-trip through the serial form (e.g. Feb 30).
    if (date_from_serial(date_to_serial(date)) != date) return std::nullopt;
    return date;
}

struct Blank {
    auto operator<=>(const Blank&) const = default;
};

/// The value a cell holds or evaluates to.
class CellValue {
public:
    using Storage = std::variant<Blank, double, std::string, bool, Date, ErrorCode>;

    CellValue() : v_(Blank{}) {}
    CellValue(double n) : v_(n) {}
    CellValue(int n) : v_(static_cast<double>(n)) {}
    CellValue(std::string s) : v_(std::move(s)) {}
    CellValue(const char* s) : v_(std::string(s)) {}
    CellValue(bool b) : v_(b) {}
    CellValue(Date d) : v_(d) {}
    CellValue(ErrorCode e) : v_(e) {}

    static CellValue blank() { return CellValue(); }

    bool is_blank() const { return std::holds_alternative<Blank>(v_); }
    bool is_number() const { return std::holds_alternative<double>(v_); }
    bool is_text() const { return std::holds_alternative<std::string>(v_); }
    bool is_boolean() const { return std::holds_alternative<bool>(v_); }
    bool is_date() const { return std::holds_alternative<Date>(v_); }
    bool is_error() const { return std::holds_alternative<ErrorCode>(v_); }

    double number() const { return std::get<double>(v_); }
    const std::string& text() const { return std::get<std::string>(v_); }
    bool boolean() const { return std::get<bool>(v_); }
    const Date& date() const { return std::get<Date>(v_); }
    ErrorCode error() const { return std::get<ErrorCode>(v_); }

    bool operator==(const CellValue& o) const { return v_ == o.v_; }

    const Storage& storage() const { return v_; }

private:
    Storage v_;
};

/// Shortest decimal string that round-trips to the same double. Matches what
/// a sheet displays for an unformatted numeric cell ("1", not "1.000000").
inline std::string format_number(double x) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, r.ptr);
}

/// Display form used in golden files, evidence output and "&" coercion.
inline std::string format_value(const CellValue& v) {
    if (v.is_blank()) return "";
    if (v.is_number()) return format_number(v.number());
    if (v.is_text()) return v.text();
    if (v.is_boolean()) return v.boolean() ? "TRUE" : "FALSE";
    if (v.is_date()) return date_to_iso(v.date());
    return error_code_text(v.error());
}

}  // namespace bvcs
