#pragma once

#include <algorithm>
#include <charconv>
#include <optional>
#include <string>

#include "bvcs/cell_value.hpp"
#include "bvcs/errors.hpp"
#include "bvcs/strings.hpp"

namespace bvcs {

enum class FormatKind { Text, Date, Number, Percentage, Currency };

/// A field format: a kind plus decimal precision for the numeric kinds.
struct FormatSpec {
    FormatKind kind = FormatKind::Text;
    int precision = 0;

    bool numeric() const {
        return kind == FormatKind::Number || kind == FormatKind::Percentage || kind == FormatKind::Currency;
    }
};

inline FormatSpec parse_format(const std::string& format) {
    if (format == "Text") return {FormatKind::Text, 0};
    if (format == "Date") return {FormatKind::Date, 0};
    auto bracket = [&](const std::string& prefix) -> std::optional<int> {
        // e.g. "Number[2]": a single digit of decimal precision
        if (format.size() == prefix.size() + 3 && starts_with(format, prefix) &&
            format[prefix.size()] == '[' && format.back() == ']') {
            char d = format[prefix.size() + 1];
            if (d >= '0' && d <= '9') return d - '0';
        }
        return std::nullopt;
    };
    if (auto p = bracket("Number")) return {FormatKind::Number, *p};
    if (auto p = bracket("Percentage")) return {FormatKind::Percentage, *p};
    if (auto p = bracket("Currency")) return {FormatKind::Currency, *p};
    throw SchemaFormatError("format '" + format + "' does not match the format grammar");
}

namespace detail {

/// Strict full-string double parse after stripping thousands separators.
/// Locale is fixed: period decimal point, comma thousands.
inline std::optional<double> parse_plain_number(std::string text) {
    text.erase(std::remove(text.begin(), text.end(), ','), text.end());
    if (text.empty()) return std::nullopt;
    double out = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return out;
}

}  // namespace detail

/// Parses source text under a field format. "1,234.50" under Number[2] is
/// 1234.5; "7%" under Percentage[p] is 0.07 while a bare "0.07" stays 0.07;
/// Currency accepts an optional dollar sign. Dates are ISO YYYY-MM-DD.
inline CellValue parse_value_text(const std::string& raw, const FormatSpec& fmt) {
    std::string text = trim(raw);
    auto reject = [&](const std::string& why) -> CellValue {
        throw TypeMismatch("'" + raw + "' " + why);
    };
    switch (fmt.kind) {
        case FormatKind::Text:
            return CellValue(raw);
        case FormatKind::Date: {
            auto d = date_from_iso(text);
            if (!d) return reject("is not an ISO date (YYYY-MM-DD)");
            return CellValue(*d);
        }
        case FormatKind::Number: {
            auto v = detail::parse_plain_number(text);
            if (!v) return reject("is not a number");
            return CellValue(*v);
        }
        case FormatKind::Percentage: {
            bool percent_sign = !text.empty() && text.back() == '%';
            if (percent_sign) text = trim(text.substr(0, text.size() - 1));
            auto v = detail::parse_plain_number(text);
            if (!v) return reject("is not a percentage");
            return CellValue(percent_sign ? *v / 100.0 : *v);
        }
        case FormatKind::Currency: {
            bool negative = false;
            if (!text.empty() && text.front() == '-') {
                negative = true;
                text = trim(text.substr(1));
            }
            if (!text.empty() && text.front() == '$') text = trim(text.substr(1));
            if (!text.empty() && text.front() == '-') {
                if (negative) return reject("has two minus signs");
                negative = true;
                text = trim(text.substr(1));
            }
            auto v = detail::parse_plain_number(text);
            if (!v) return reject("is not a currency amount");
            return CellValue(negative ? -*v : *v);
        }
    }
    return reject("has no usable format");
}

}  // namespace bvcs
