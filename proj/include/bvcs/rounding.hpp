#pragma once

#include <charconv>
#include <cmath>
#include <string>

#include "bvcs/cell_value.hpp"

namespace bvcs {

enum class RoundMode { HalfAwayFromZero, AwayFromZero, TowardZero };

namespace detail {

struct DecimalParts {
    bool negative = false;
    std::string digits;  // significant digits, no dot
    int point_pos = 0;   // digits before the decimal point (may be <= 0)
};

/// Decomposes the shortest round-trip decimal representation of x.
inline DecimalParts decompose_decimal(double x) {
    DecimalParts p;
    std::string s = format_number(x);
    size_t i = 0;
    if (i < s.size() && s[i] == '-') {
        p.negative = true;
        ++i;
    }
    std::string mantissa;
    int exp = 0;
    size_t epos = s.find_first_of("eE", i);
    if (epos != std::string::npos) {
        exp = std::stoi(s.substr(epos + 1));
        mantissa = s.substr(i, epos - i);
    } else {
        mantissa = s.substr(i);
    }
    size_t dot = mantissa.find('.');
    std::string digits = mantissa;
    int int_digits = static_cast<int>(mantissa.size());
    if (dot != std::string::npos) {
        digits = mantissa.substr(0, dot) + mantissa.substr(dot + 1);
        int_digits = static_cast<int>(dot);
    }
    p.point_pos = int_digits + exp;
    // Strip leading zeros, moving the decimal point with them.
    size_t lead = 0;
    while (lead < digits.size() && digits[lead] == '0') ++lead;
    digits.erase(0, lead);
    p.point_pos -= static_cast<int>(lead);
    p.digits = std::move(digits);
    return p;
}

inline std::string increment_digits(std::string digits, bool& grew) {
    grew = false;
    int i = static_cast<int>(digits.size()) - 1;
    for (; i >= 0; --i) {
        if (digits[i] != '9') {
            ++digits[i];
            return digits;
        }
        digits[i] = '0';
    }
    grew = true;
    return "1" + digits;
}

inline double recompose_decimal(const DecimalParts& p) {
    if (p.digits.empty()) return 0.0;
    std::string s = (p.negative ? "-0." : "0.") + p.digits + "e" + std::to_string(p.point_pos);
    double out = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), out);
    return out;
}

}  // namespace detail

/// Rounds at `digits` decimal places on the decimal string form of the
/// double, not on its binary value, so ROUND(2.675, 2) gives 2.68 the way a
/// displayed sheet does. Negative digits round left of the decimal point.
inline double round_decimal(double x, int digits, RoundMode mode) {
    if (!std::isfinite(x) || x == 0.0) return x == 0.0 ? 0.0 : x;
    if (digits > 17) return x;
    if (digits < -17) digits = -17;

    detail::DecimalParts p = detail::decompose_decimal(x);
    int cut = p.point_pos + digits;
    if (cut >= static_cast<int>(p.digits.size())) return x;  // nothing beyond the position

    bool round_away = false;
    if (mode == RoundMode::HalfAwayFromZero) {
        round_away = cut >= 0 && p.digits[static_cast<size_t>(cut)] >= '5';
    } else if (mode == RoundMode::AwayFromZero) {
        for (size_t i = static_cast<size_t>(std::max(cut, 0)); i < p.digits.size(); ++i)
            if (p.digits[i] != '0') {
                round_away = true;
                break;
            }
    }

    detail::DecimalParts out = p;
    out.digits = cut > 0 ? p.digits.substr(0, static_cast<size_t>(cut)) : std::string{};
    if (round_away) {
        bool grew = false;
        out.digits = detail::increment_digits(out.digits, grew);
        if (grew && cut > 0) out.point_pos += 1;
        if (cut <= 0) {
            // All original digits dropped; the carry lands at the rounding position.
            out.digits = "1";
            out.point_pos = -digits + 1;
        }
    }
    // Trim trailing zeros; they carry no value in the 0.digits * 10^point form.
    while (!out.digits.empty() && out.digits.back() == '0') out.digits.pop_back();
    return detail::recompose_decimal(out);
}

inline double round_half_away(double x, int digits) { return round_decimal(x, digits, RoundMode::HalfAwayFromZero); }

}  // namespace bvcs
