#pragma once

#include <compare>
#include <string>
#include <string_view>
#include <tuple>

#include "bvcs/errors.hpp"
#include "bvcs/strings.hpp"

namespace bvcs {

/// Fully qualified cell position: sheet name plus 1-based column/row.
struct CellAddress {
    std::string sheet;
    int col = 1;
    int row = 1;

    friend bool operator==(const CellAddress& a, const CellAddress& b) {
        return a.col == b.col && a.row == b.row && iequals(a.sheet, b.sheet);
    }

    /// Ordered by (sheet, row, col); sheet comparison is case-insensitive.
    friend bool operator<(const CellAddress& a, const CellAddress& b) {
        if (!iequals(a.sheet, b.sheet)) return iless(a.sheet, b.sheet);
        return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    }
};

struct CellAddressHash {
    size_t operator()(const CellAddress& a) const {
        size_t h = 1469598103934665603ull;
        for (char c : a.sheet) {
            h ^= static_cast<size_t>(ascii_lower(c));
            h *= 1099511628211ull;
        }
        h ^= static_cast<size_t>(a.col) * 0x9e3779b97f4a7c15ull;
        h ^= static_cast<size_t>(a.row) * 0xc2b2ae3d27d4eb4full;
        return h;
    }
};

/// Bijective base-26 column index: "A" -> 1, "Z" -> 26, "AA" -> 27.
inline int column_from_letters(std::string_view letters) {
    if (letters.empty()) throw MalformedAddress("empty column letters");
    long v = 0;
    for (char c : letters) {
        char u = ascii_upper(c);
        if (u < 'A' || u > 'Z') throw MalformedAddress("bad column letter in '" + std::string(letters) + "'");
        v = v * 26 + (u - 'A' + 1);
        if (v > 1'000'000) throw MalformedAddress("column out of range in '" + std::string(letters) + "'");
    }
    return static_cast<int>(v);
}

inline std::string column_to_letters(int col) {
    if (col < 1) throw MalformedAddress("column index must be >= 1");
    std::string out;
    while (col > 0) {
        int rem = (col - 1) % 26;
        out.insert(out.begin(), static_cast<char>('A' + rem));
        col = (col - 1) / 26;
    }
    return out;
}

namespace detail {

/// Splits an optional leading sheet qualifier ("Sheet!" or "'My Sheet'!")
/// from an A1 reference. Returns the unconsumed remainder.
inline std::string_view split_sheet_qualifier(std::string_view s, std::string& sheet_out, bool& has_sheet) {
    has_sheet = false;
    if (!s.empty() && s.front() == '\'') {
        std::string name;
        size_t i = 1;
        for (; i < s.size(); ++i) {
            if (s[i] == '\'') {
                if (i + 1 < s.size() && s[i + 1] == '\'') {  // doubled quote escape
                    name += '\'';
                    ++i;
                    continue;
                }
                break;
            }
            name += s[i];
        }
        if (i >= s.size() || s[i] != '\'') throw MalformedAddress("unterminated quoted sheet name in '" + std::string(s) + "'");
        if (i + 1 >= s.size() || s[i + 1] != '!') throw MalformedAddress("quoted sheet name must be followed by '!' in '" + std::string(s) + "'");
        if (name.empty()) throw MalformedAddress("empty sheet name in '" + std::string(s) + "'");
        sheet_out = name;
        has_sheet = true;
        return s.substr(i + 2);
    }
    size_t bang = s.find('!');
    if (bang != std::string_view::npos) {
        if (bang == 0) throw MalformedAddress("empty sheet name in '" + std::string(s) + "'");
        sheet_out = std::string(s.substr(0, bang));
        has_sheet = true;
        return s.substr(bang + 1);
    }
    return s;
}

}  // namespace detail

/// Parses an A1 reference, e.g. "B3", "$AA$10", "Rates!B2", "'My Sheet'!A1".
/// Case-insensitive; "$" absolute markers are accepted and ignored.
inline CellAddress a1_to_address(std::string_view a1, std::string_view default_sheet) {
    std::string sheet;
    bool has_sheet = false;
    std::string_view rest = detail::split_sheet_qualifier(a1, sheet, has_sheet);
    if (!has_sheet) sheet = std::string(default_sheet);

    size_t i = 0;
    if (i < rest.size() && rest[i] == '$') ++i;
    size_t col_begin = i;
    while (i < rest.size() && std::isalpha(static_cast<unsigned char>(rest[i]))) ++i;
    if (i == col_begin) throw MalformedAddress("missing column letters in '" + std::string(a1) + "'");
    std::string_view letters = rest.substr(col_begin, i - col_begin);
    if (i < rest.size() && rest[i] == '$') ++i;
    size_t row_begin = i;
    while (i < rest.size() && std::isdigit(static_cast<unsigned char>(rest[i]))) ++i;
    if (i == row_begin || i != rest.size()) throw MalformedAddress("malformed A1 reference '" + std::string(a1) + "'");
    std::string_view digits = rest.substr(row_begin);
    if (digits.front() == '0') throw MalformedAddress("row must start at 1 in '" + std::string(a1) + "'");
    long row = 0;
    for (char c : digits) {
        row = row * 10 + (c - '0');
        if (row > 100'000'000) throw MalformedAddress("row out of range in '" + std::string(a1) + "'");
    }
    return CellAddress{std::move(sheet), column_from_letters(letters), static_cast<int>(row)};
}

/// Renders an address back to A1 form. The sheet prefix is included only when
/// requested, quoted when the name contains a space or quote.
inline std::string address_to_a1(const CellAddress& addr, bool include_sheet = false) {
    std::string out;
    if (include_sheet) {
        bool needs_quotes = addr.sheet.find(' ') != std::string::npos || addr.sheet.find('\'') != std::string::npos;
        if (needs_quotes) {
            out += '\'';
            for (char c : addr.sheet) {
                out += c;
                if (c == '\'') out += '\'';
            }
            out += '\'';
        } else {
            out += addr.sheet;
        }
        out += '!';
    }
    out += column_to_letters(addr.col);
    out += std::to_string(addr.row);
    return out;
}

}  // namespace bvcs
