#pragma once

#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "bvcs/address.hpp"
#include "bvcs/cell_value.hpp"
#include "bvcs/errors.hpp"
#include "bvcs/strings.hpp"

namespace bvcs {

struct AstNode;
using AstPtr = std::shared_ptr<const AstNode>;

enum class BinaryOp { Pow, Mul, Div, Add, Sub, Concat, Eq, Ne, Lt, Le, Gt, Ge };
enum class UnaryOp { Negate, Plus, Percent };

struct NumberLit { double value; };
struct TextLit { std::string value; };
struct BoolLit { bool value; };

/// Single-cell reference; sheet is always resolved after parsing.
struct RefNode { CellAddress addr; };

/// Rectangular range, normalized so start <= end in both axes. Both corners
/// carry the same resolved sheet.
struct RangeNode {
    CellAddress start;
    CellAddress end;
};

struct UnaryNode {
    UnaryOp op;
    AstPtr operand;
};

struct BinaryNode {
    BinaryOp op;
    AstPtr lhs;
    AstPtr rhs;
};

struct CallNode {
    std::string name;  // uppercased
    std::vector<AstPtr> args;
};

struct AstNode {
    std::variant<NumberLit, TextLit, BoolLit, RefNode, RangeNode, UnaryNode, BinaryNode, CallNode> node;
};

/// Cells and foreign sheets referenced by one formula.
struct RefSet {
    std::set<CellAddress> cells;
    std::vector<std::string> sheets;  // unique, first-appearance order, containing sheet excluded
};

namespace detail {

inline bool is_volatile_function(std::string_view name) {
    return name == "TODAY" || name == "NOW" || name == "RAND" || name == "RANDBETWEEN";
}

/// Recursive-descent parser over the raw formula text.
class FormulaParser {
public:
    FormulaParser(std::string_view text, std::string_view containing_sheet)
        : text_(text), sheet_(containing_sheet) {}

    AstPtr parse() {
        if (text_.empty() || text_[0] != '=') fail(0, "formula must start with '='");
        pos_ = 1;
        AstPtr expr = parse_comparison();
        skip_ws();
        if (pos_ != text_.size()) fail(pos_, "unexpected trailing input");
        return expr;
    }

private:
    [[noreturn]] void fail(size_t at, const std::string& msg) const {
        throw ParseError("parse error at position " + std::to_string(at + 1) + ": " + msg);
    }

    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    AstPtr parse_comparison() {
        AstPtr lhs = parse_concat();
        for (;;) {
            skip_ws();
            BinaryOp op;
            if (match("<>")) op = BinaryOp::Ne;
            else if (match("<=")) op = BinaryOp::Le;
            else if (match(">=")) op = BinaryOp::Ge;
            else if (match("<")) op = BinaryOp::Lt;
            else if (match(">")) op = BinaryOp::Gt;
            else if (match("=")) op = BinaryOp::Eq;
            else break;
            AstPtr rhs = parse_concat();
            lhs = make(BinaryNode{op, std::move(lhs), std::move(rhs)});
        }
        return lhs;
    }

    AstPtr parse_concat() {
        AstPtr lhs = parse_additive();
        while (eat('&')) {
            AstPtr rhs = parse_additive();
            lhs = make(BinaryNode{BinaryOp::Concat, std::move(lhs), std::move(rhs)});
        }
        return lhs;
    }

    AstPtr parse_additive() {
        AstPtr lhs = parse_multiplicative();
        for (;;) {
            skip_ws();
            if (eat('+')) lhs = make(BinaryNode{BinaryOp::Add, std::move(lhs), parse_multiplicative()});
            else if (eat('-')) lhs = make(BinaryNode{BinaryOp::Sub, std::move(lhs), parse_multiplicative()});
            else break;
        }
        return lhs;
    }

    AstPtr parse_multiplicative() {
        AstPtr lhs = parse_power();
        for (;;) {
            skip_ws();
            if (eat('*')) lhs = make(BinaryNode{BinaryOp::Mul, std::move(lhs), parse_power()});
            else if (eat('/')) lhs = make(BinaryNode{BinaryOp::Div, std::move(lhs), parse_power()});
            else break;
        }
        return lhs;
    }

    // '^' is left-associative and binds looser than unary minus, so
    // "=-2^2" parses as (-2)^2.
    AstPtr parse_power() {
        AstPtr lhs = parse_unary();
        while (eat('^')) {
            AstPtr rhs = parse_unary();
            lhs = make(BinaryNode{BinaryOp::Pow, std::move(lhs), std::move(rhs)});
        }
        return lhs;
    }

    AstPtr parse_unary() {
        skip_ws();
        if (eat('-')) return make(UnaryNode{UnaryOp::Negate, parse_unary()});
        if (eat('+')) return make(UnaryNode{UnaryOp::Plus, parse_unary()});
        return parse_postfix();
    }

    AstPtr parse_postfix() {
        AstPtr operand = parse_primary();
        while (eat('%')) operand = make(UnaryNode{UnaryOp::Percent, std::move(operand)});
        return operand;
    }

    AstPtr parse_primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail(pos_, "unexpected end of formula");
        char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            AstPtr inner = parse_comparison();
            if (!eat(')')) fail(pos_, "expected ')'");
            return inner;
        }
        if (c == '"') return parse_string();
        if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && pos_ + 1 < text_.size() &&
                                                            std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))))
            return parse_number();
        if (c == '\'') return parse_reference(read_quoted_sheet());
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$') return parse_identifier();
        fail(pos_, std::string("unexpected character '") + c + "'");
    }

    AstPtr parse_string() {
        size_t start = pos_;
        ++pos_;  // opening quote
        std::string value;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (c == '"') {
                if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '"') {  // "" escape
                    value += '"';
                    pos_ += 2;
                    continue;
                }
                ++pos_;
                return make(TextLit{std::move(value)});
            }
            value += c;
            ++pos_;
        }
        fail(start, "unterminated string literal");
    }

    AstPtr parse_number() {
        size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        }
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            size_t mark = pos_;
            ++pos_;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            } else {
                pos_ = mark;  // not an exponent after all
            }
        }
        double value = 0;
        auto r = std::from_chars(text_.data() + start, text_.data() + pos_, value);
        if (r.ec != std::errc()) fail(start, "malformed number");
        return make(NumberLit{value});
    }

    /// Reads 'Quoted Sheet Name' and the trailing '!'.
    std::string read_quoted_sheet() {
        size_t start = pos_;
        ++pos_;  // opening quote
        std::string name;
        for (;;) {
            if (pos_ >= text_.size()) fail(start, "unterminated sheet name");
            char c = text_[pos_];
            if (c == '\'') {
                if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '\'') {
                    name += '\'';
                    pos_ += 2;
                    continue;
                }
                ++pos_;
                break;
            }
            name += c;
            ++pos_;
        }
        if (pos_ >= text_.size() || text_[pos_] != '!') fail(pos_, "expected '!' after sheet name");
        ++pos_;
        if (name.empty()) fail(start, "empty sheet name");
        return name;
    }

    /// Identifier already consumed into `word`; decides between cell
    /// reference, range, boolean literal and function call.
    AstPtr parse_identifier() {
        size_t start = pos_;
        std::string word = read_word();
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == '(') return parse_call(word, start);
        if (pos_ < text_.size() && text_[pos_] == '!') {
            ++pos_;
            return parse_reference(word);
        }
        if (iequals(word, "TRUE")) return make(BoolLit{true});
        if (iequals(word, "FALSE")) return make(BoolLit{false});
        if (!is_cell_word(word)) fail(start, "unknown name '" + word + "'");
        return finish_reference(word, std::string(sheet_), start);
    }

    std::string read_word() {
        std::string word;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$' || c == '.') {
                word += c;
                ++pos_;
            } else {
                break;
            }
        }
        return word;
    }

    static bool is_cell_word(std::string_view w) {
        size_t i = 0;
        if (i < w.size() && w[i] == '$') ++i;
        size_t letters = 0;
        while (i < w.size() && std::isalpha(static_cast<unsigned char>(w[i]))) ++i, ++letters;
        if (letters == 0) return false;
        if (i < w.size() && w[i] == '$') ++i;
        size_t digits = 0;
        while (i < w.size() && std::isdigit(static_cast<unsigned char>(w[i]))) ++i, ++digits;
        return digits > 0 && i == w.size();
    }

    /// Parses the cell part after an explicit sheet qualifier.
    AstPtr parse_reference(const std::string& sheet) {
        size_t start = pos_;
        skip_ws();
        std::string word = read_word();
        if (!is_cell_word(word)) fail(start, "expected cell reference after sheet name");
        return finish_reference(word, sheet, start);
    }

    AstPtr finish_reference(const std::string& cell_word, const std::string& sheet, size_t start) {
        CellAddress first = to_address(cell_word, sheet, start);
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ':') {
            ++pos_;
            skip_ws();
            std::string end_sheet = sheet;
            if (pos_ < text_.size() && text_[pos_] == '\'') {
                end_sheet = read_quoted_sheet();
            }
            size_t end_start = pos_;
            std::string end_word = read_word();
            if (pos_ < text_.size() && text_[pos_] == '!') {
                ++pos_;
                end_sheet = end_word;
                end_start = pos_;
                end_word = read_word();
            }
            if (!is_cell_word(end_word)) fail(end_start, "expected cell reference after ':'");
            if (!iequals(end_sheet, first.sheet)) fail(end_start, "range endpoints must be on the same sheet");
            CellAddress second = to_address(end_word, first.sheet, end_start);
            RangeNode range;
            range.start = CellAddress{first.sheet, std::min(first.col, second.col), std::min(first.row, second.row)};
            range.end = CellAddress{first.sheet, std::max(first.col, second.col), std::max(first.row, second.row)};
            return make(std::move(range));
        }
        return make(RefNode{std::move(first)});
    }

    CellAddress to_address(const std::string& word, const std::string& sheet, size_t start) {
        try {
            return a1_to_address(word, sheet);
        } catch (const MalformedAddress& e) {
            fail(start, e.what());
        }
    }

    AstPtr parse_call(const std::string& raw_name, size_t start) {
        std::string name = to_upper(raw_name);
        if (is_volatile_function(name))
            fail(start, "volatile function " + name + " is not supported; results must be reproducible");
        ++pos_;  // '('
        std::vector<AstPtr> args;
        skip_ws();
        if (peek() == ')') {
            ++pos_;
        } else {
            for (;;) {
                args.push_back(parse_comparison());
                if (eat(',')) continue;
                if (eat(')')) break;
                fail(pos_, "expected ',' or ')' in argument list of " + name);
            }
        }
        return make(CallNode{std::move(name), std::move(args)});
    }

    bool match(std::string_view s) {
        if (text_.substr(pos_, s.size()) == s) {
            pos_ += s.size();
            return true;
        }
        return false;
    }

    template <typename T>
    static AstPtr make(T&& node) {
        return std::make_shared<AstNode>(AstNode{std::forward<T>(node)});
    }

    std::string_view text_;
    std::string_view sheet_;
    size_t pos_ = 0;
};

}  // namespace detail

/// Parses "=..." into an AST. Every reference in the result carries a
/// resolved sheet name (default: the containing sheet).
inline AstPtr parse_formula(std::string_view text, std::string_view containing_sheet) {
    return detail::FormulaParser(text, containing_sheet).parse();
}

namespace detail {

inline void collect_refs(const AstNode& node, std::set<CellAddress>& cells,
                         std::vector<std::string>& sheet_order) {
    auto note_sheet = [&](const std::string& s) {
        for (const auto& seen : sheet_order)
            if (iequals(seen, s)) return;
        sheet_order.push_back(s);
    };
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, RefNode>) {
                cells.insert(n.addr);
                note_sheet(n.addr.sheet);
            } else if constexpr (std::is_same_v<T, RangeNode>) {
                for (int row = n.start.row; row <= n.end.row; ++row)
                    for (int col = n.start.col; col <= n.end.col; ++col)
                        cells.insert(CellAddress{n.start.sheet, col, row});
                note_sheet(n.start.sheet);
            } else if constexpr (std::is_same_v<T, UnaryNode>) {
                collect_refs(*n.operand, cells, sheet_order);
            } else if constexpr (std::is_same_v<T, BinaryNode>) {
                collect_refs(*n.lhs, cells, sheet_order);
                collect_refs(*n.rhs, cells, sheet_order);
            } else if constexpr (std::is_same_v<T, CallNode>) {
                for (const auto& arg : n.args) collect_refs(*arg, cells, sheet_order);
            }
        },
        node.node);
}

}  // namespace detail

/// All cells a formula references, with ranges expanded cell-by-cell, plus
/// the referenced sheets other than the containing one.
inline RefSet extract_refs(const AstPtr& ast, std::string_view containing_sheet) {
    RefSet out;
    std::vector<std::string> order;
    detail::collect_refs(*ast, out.cells, order);
    for (auto& s : order)
        if (!iequals(s, containing_sheet)) out.sheets.push_back(s);
    return out;
}

}  // namespace bvcs
