#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "bvcs/cell_value.hpp"
#include "bvcs/formula.hpp"
#include "bvcs/rounding.hpp"
#include "bvcs/workbook.hpp"

namespace bvcs {

namespace detail {

/// A materialized rectangular block of evaluated cell values, row-major.
struct RangeValue {
    int width = 0;
    int height = 0;
    std::vector<CellValue> values;

    const CellValue& at(int row, int col) const { return values[static_cast<size_t>(row * width + col)]; }
};

using EvalResult = std::variant<CellValue, RangeValue>;

inline bool is_range(const EvalResult& r) { return std::holds_alternative<RangeValue>(r); }
inline const CellValue& scalar(const EvalResult& r) { return std::get<CellValue>(r); }

/// Picks the error to propagate among already-evaluated operands. CYCLE wins
/// so that every cell on a reference cycle reports the cycle, not whatever
/// other error happens to sit next to it; otherwise first in argument order.
inline std::optional<ErrorCode> first_error(const std::vector<CellValue>& values) {
    std::optional<ErrorCode> first;
    for (const auto& v : values) {
        if (!v.is_error()) continue;
        if (v.error() == ErrorCode::CYCLE) return ErrorCode::CYCLE;
        if (!first) first = v.error();
    }
    return first;
}

}  // namespace detail

/// Memoizing evaluator over one workbook. Reuse one cache per recomputation;
/// it also collects human-readable diagnostics (unknown functions,
/// unsupported feature requests) keyed to the cell that raised them.
class EvalCache {
public:
    explicit EvalCache(const Workbook& wb) : wb_(&wb) {}

    CellValue evaluate(const CellAddress& addr) {
        auto it = memo_.find(addr);
        if (it != memo_.end()) return it->second;

        const Sheet* sheet = wb_->find_sheet(addr.sheet);
        if (!sheet) return CellValue(ErrorCode::REF);
        const Cell* cell = sheet->find(addr.col, addr.row);
        if (!cell || !cell->is_formula()) {
            CellValue v = cell ? cell->literal : CellValue::blank();
            memo_.emplace(addr, v);
            return v;
        }
        if (in_progress_.count(addr)) return CellValue(ErrorCode::CYCLE);  // probe, not memoized
        in_progress_.insert(addr);
        detail::EvalResult r = eval_node(*cell->ast, sheet->name, addr);
        in_progress_.erase(addr);
        // A bare range cannot be the value of a cell.
        CellValue v = detail::is_range(r) ? CellValue(ErrorCode::REF) : detail::scalar(r);
        memo_.emplace(addr, v);
        return v;
    }

    const std::vector<std::string>& diagnostics() const { return diagnostics_; }

private:
    using RangeValue = detail::RangeValue;
    using EvalResult = detail::EvalResult;

    void diagnose(const CellAddress& at, const std::string& msg) {
        diagnostics_.push_back(address_to_a1(at, true) + ": " + msg);
    }

    // ---- scalar coercions -------------------------------------------------

    static std::optional<double> to_number(const CellValue& v) {
        if (v.is_number()) return v.number();
        if (v.is_date()) return date_to_serial(v.date());
        if (v.is_boolean()) return v.boolean() ? 1.0 : 0.0;
        if (v.is_blank()) return 0.0;
        return std::nullopt;  // Text does not silently coerce
    }

    static std::optional<bool> to_boolean(const CellValue& v) {
        if (v.is_boolean()) return v.boolean();
        if (v.is_number()) return v.number() != 0.0;
        if (v.is_date()) return true;
        if (v.is_blank()) return false;
        return std::nullopt;
    }

    static CellValue numeric_result(double x) {
        if (!std::isfinite(x)) return CellValue(ErrorCode::VALUE);
        return CellValue(x);
    }

    // ---- expression tree --------------------------------------------------

    EvalResult eval_node(const AstNode& node, const std::string& sheet, const CellAddress& at) {
        return std::visit(
            [&](const auto& n) -> EvalResult {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, NumberLit>) return CellValue(n.value);
                else if constexpr (std::is_same_v<T, TextLit>) return CellValue(n.value);
                else if constexpr (std::is_same_v<T, BoolLit>) return CellValue(n.value);
                else if constexpr (std::is_same_v<T, RefNode>) return evaluate(n.addr);
                else if constexpr (std::is_same_v<T, RangeNode>) return eval_range(n);
                else if constexpr (std::is_same_v<T, UnaryNode>) return eval_unary(n, sheet, at);
                else if constexpr (std::is_same_v<T, BinaryNode>) return eval_binary(n, sheet, at);
                else return eval_call(n, sheet, at);
            },
            node.node);
    }

    RangeValue eval_range(const RangeNode& r) {
        RangeValue out;
        out.width = r.end.col - r.start.col + 1;
        out.height = r.end.row - r.start.row + 1;
        out.values.reserve(static_cast<size_t>(out.width) * static_cast<size_t>(out.height));
        for (int row = r.start.row; row <= r.end.row; ++row)
            for (int col = r.start.col; col <= r.end.col; ++col)
                out.values.push_back(evaluate(CellAddress{r.start.sheet, col, row}));
        return out;
    }

    EvalResult eval_unary(const UnaryNode& n, const std::string& sheet, const CellAddress& at) {
        EvalResult operand = eval_node(*n.operand, sheet, at);
        if (detail::is_range(operand)) return CellValue(ErrorCode::REF);
        const CellValue& v = detail::scalar(operand);
        if (v.is_error()) return v;
        auto num = to_number(v);
        if (!num) return CellValue(ErrorCode::VALUE);
        switch (n.op) {
            case UnaryOp::Negate: return numeric_result(-*num);
            case UnaryOp::Plus: return numeric_result(*num);
            case UnaryOp::Percent: return numeric_result(*num / 100.0);
        }
        return CellValue(ErrorCode::VALUE);
    }

    EvalResult eval_binary(const BinaryNode& n, const std::string& sheet, const CellAddress& at) {
        EvalResult lr = eval_node(*n.lhs, sheet, at);
        EvalResult rr = eval_node(*n.rhs, sheet, at);
        if (detail::is_range(lr) || detail::is_range(rr)) return CellValue(ErrorCode::REF);
        const CellValue& a = detail::scalar(lr);
        const CellValue& b = detail::scalar(rr);
        if (auto err = detail::first_error({a, b})) return CellValue(*err);

        switch (n.op) {
            case BinaryOp::Concat:
                return CellValue(format_value(a) + format_value(b));
            case BinaryOp::Eq:
            case BinaryOp::Ne:
            case BinaryOp::Lt:
            case BinaryOp::Le:
            case BinaryOp::Gt:
            case BinaryOp::Ge:
                return compare(a, b, n.op);
            default:
                break;
        }

        auto x = to_number(a), y = to_number(b);
        if (!x || !y) return CellValue(ErrorCode::VALUE);
        switch (n.op) {
            case BinaryOp::Add: return numeric_result(*x + *y);
            case BinaryOp::Sub: return numeric_result(*x - *y);
            case BinaryOp::Mul: return numeric_result(*x * *y);
            case BinaryOp::Div:
                if (*y == 0.0) return CellValue(ErrorCode::DIV0);
                return numeric_result(*x / *y);
            case BinaryOp::Pow: return numeric_result(std::pow(*x, *y));
            default: return CellValue(ErrorCode::VALUE);
        }
    }

    /// Spreadsheet comparison: numbers (and dates, via serials) compare
    /// numerically, text case-insensitively; mismatched kinds are unequal
    /// under =/<> and a VALUE error under an ordering operator.
    static CellValue compare(const CellValue& a, const CellValue& b, BinaryOp op) {
        enum class Kind { Num, Text, Bool };
        auto kind_of = [](const CellValue& v) -> std::optional<Kind> {
            if (v.is_number() || v.is_date()) return Kind::Num;
            if (v.is_text()) return Kind::Text;
            if (v.is_boolean()) return Kind::Bool;
            return std::nullopt;  // blank resolved below
        };
        CellValue lhs = a, rhs = b;
        if (lhs.is_blank() && rhs.is_blank()) {
            lhs = 0.0;
            rhs = 0.0;
        } else if (lhs.is_blank() || rhs.is_blank()) {
            const CellValue& other = lhs.is_blank() ? rhs : lhs;
            CellValue zero = other.is_text() ? CellValue(std::string{})
                             : other.is_boolean() ? CellValue(false)
                                                  : CellValue(0.0);
            (lhs.is_blank() ? lhs : rhs) = zero;
        }
        Kind ka = *kind_of(lhs), kb = *kind_of(rhs);
        if (ka != kb) {
            if (op == BinaryOp::Eq) return CellValue(false);
            if (op == BinaryOp::Ne) return CellValue(true);
            return CellValue(ErrorCode::VALUE);
        }
        int cmp = 0;
        if (ka == Kind::Num) {
            double x = lhs.is_date() ? date_to_serial(lhs.date()) : lhs.number();
            double y = rhs.is_date() ? date_to_serial(rhs.date()) : rhs.number();
            cmp = x < y ? -1 : (x > y ? 1 : 0);
        } else if (ka == Kind::Text) {
            if (iequals(lhs.text(), rhs.text())) cmp = 0;
            else cmp = iless(lhs.text(), rhs.text()) ? -1 : 1;
        } else {
            cmp = static_cast<int>(lhs.boolean()) - static_cast<int>(rhs.boolean());
        }
        switch (op) {
            case BinaryOp::Eq: return CellValue(cmp == 0);
            case BinaryOp::Ne: return CellValue(cmp != 0);
            case BinaryOp::Lt: return CellValue(cmp < 0);
            case BinaryOp::Le: return CellValue(cmp <= 0);
            case BinaryOp::Gt: return CellValue(cmp > 0);
            case BinaryOp::Ge: return CellValue(cmp >= 0);
            default: return CellValue(ErrorCode::VALUE);
        }
    }

    // ---- function calls ---------------------------------------------------

    /// Flattens scalar and range arguments into one value list (row-major
    /// within each range), checking for errors along the way.
    static std::vector<CellValue> flatten(const std::vector<EvalResult>& args) {
        std::vector<CellValue> out;
        for (const auto& a : args) {
            if (detail::is_range(a)) {
                const auto& r = std::get<RangeValue>(a);
                out.insert(out.end(), r.values.begin(), r.values.end());
            } else {
                out.push_back(detail::scalar(a));
            }
        }
        return out;
    }

    EvalResult eval_call(const CallNode& call, const std::string& sheet, const CellAddress& at) {
        // IF evaluates only the selected branch; everything else is strict.
        if (call.name == "IF") return eval_if(call, sheet, at);

        std::vector<EvalResult> args;
        args.reserve(call.args.size());
        for (const auto& a : call.args) args.push_back(eval_node(*a, sheet, at));

        // Strict propagation: an error anywhere in the arguments (including
        // inside a range) becomes the call's value, cycles first.
        if (auto err = detail::first_error(flatten(args))) return CellValue(*err);

        const std::string& f = call.name;
        if (f == "SUM" || f == "AVERAGE" || f == "MIN" || f == "MAX" || f == "COUNT")
            return eval_aggregate(f, args);
        if (f == "AND" || f == "OR") return eval_and_or(f, args, at);
        if (f == "NOT") return eval_not(args);
        if (f == "ABS") return eval_numeric1(args, [](double x) { return std::fabs(x); });
        if (f == "ROUND") return eval_round(args, RoundMode::HalfAwayFromZero);
        if (f == "ROUNDUP") return eval_round(args, RoundMode::AwayFromZero);
        if (f == "ROUNDDOWN") return eval_round(args, RoundMode::TowardZero);
        if (f == "VLOOKUP") return eval_vlookup(args, at);
        if (f == "INDEX") return eval_index(args);
        if (f == "MATCH") return eval_match(args, at);
        if (f == "DATE") return eval_date(args);
        if (f == "YEAR" || f == "MONTH" || f == "DAY") return eval_date_part(f, args);

        diagnose(at, "unknown function " + f);
        return CellValue(ErrorCode::NAME);
    }

    EvalResult eval_if(const CallNode& call, const std::string& sheet, const CellAddress& at) {
        if (call.args.size() < 2 || call.args.size() > 3) return CellValue(ErrorCode::VALUE);
        EvalResult cr = eval_node(*call.args[0], sheet, at);
        if (detail::is_range(cr)) return CellValue(ErrorCode::REF);
        const CellValue& cond = detail::scalar(cr);
        if (cond.is_error()) return cond;
        auto b = to_boolean(cond);
        if (!b) return CellValue(ErrorCode::VALUE);
        if (*b) return eval_node(*call.args[1], sheet, at);
        if (call.args.size() == 3) return eval_node(*call.args[2], sheet, at);
        return CellValue(false);
    }

    static EvalResult eval_aggregate(const std::string& f, const std::vector<EvalResult>& args) {
        if (args.empty()) return CellValue(ErrorCode::VALUE);
        std::vector<CellValue> values = flatten(args);
        if (auto err = detail::first_error(values)) return CellValue(*err);
        std::vector<double> nums;
        for (const auto& v : values) {
            if (v.is_number()) nums.push_back(v.number());
            else if (v.is_date()) nums.push_back(date_to_serial(v.date()));
            // Text, Boolean and Blank are ignored by the numeric aggregates.
        }
        if (f == "COUNT") return CellValue(static_cast<double>(nums.size()));
        if (f == "SUM") {
            double s = 0;
            for (double x : nums) s += x;
            return numeric_result(s);
        }
        if (f == "AVERAGE") {
            if (nums.empty()) return CellValue(ErrorCode::DIV0);
            double s = 0;
            for (double x : nums) s += x;
            return numeric_result(s / static_cast<double>(nums.size()));
        }
        if (nums.empty()) return CellValue(0.0);  // MIN/MAX of nothing
        double best = nums.front();
        for (double x : nums) best = (f == "MIN") ? std::min(best, x) : std::max(best, x);
        return CellValue(best);
    }

    EvalResult eval_and_or(const std::string& f, const std::vector<EvalResult>& args, const CellAddress& at) {
        if (args.empty()) return CellValue(ErrorCode::VALUE);
        std::vector<CellValue> values = flatten(args);
        if (auto err = detail::first_error(values)) return CellValue(*err);
        bool any = false, acc = (f == "AND");
        for (const auto& v : values) {
            if (v.is_text() || v.is_blank()) continue;  // ignored, like the numeric aggregates
            auto b = to_boolean(v);
            if (!b) return CellValue(ErrorCode::VALUE);
            any = true;
            acc = (f == "AND") ? (acc && *b) : (acc || *b);
        }
        if (!any) {
            diagnose(at, f + " found no boolean or numeric argument");
            return CellValue(ErrorCode::VALUE);
        }
        return CellValue(acc);
    }

    static EvalResult eval_not(const std::vector<EvalResult>& args) {
        if (args.size() != 1 || detail::is_range(args[0])) return CellValue(ErrorCode::VALUE);
        const CellValue& v = detail::scalar(args[0]);
        if (v.is_error()) return v;
        auto b = to_boolean(v);
        if (!b) return CellValue(ErrorCode::VALUE);
        return CellValue(!*b);
    }

    template <typename F>
    static EvalResult eval_numeric1(const std::vector<EvalResult>& args, F&& fn) {
        if (args.size() != 1 || detail::is_range(args[0])) return CellValue(ErrorCode::VALUE);
        const CellValue& v = detail::scalar(args[0]);
        if (v.is_error()) return v;
        auto x = to_number(v);
        if (!x) return CellValue(ErrorCode::VALUE);
        return numeric_result(fn(*x));
    }

    static EvalResult eval_round(const std::vector<EvalResult>& args, RoundMode mode) {
        if (args.size() != 2 || detail::is_range(args[0]) || detail::is_range(args[1]))
            return CellValue(ErrorCode::VALUE);
        const CellValue& xv = detail::scalar(args[0]);
        const CellValue& dv = detail::scalar(args[1]);
        if (auto err = detail::first_error({xv, dv})) return CellValue(*err);
        auto x = to_number(xv);
        auto d = to_number(dv);
        if (!x || !d) return CellValue(ErrorCode::VALUE);
        return numeric_result(round_decimal(*x, static_cast<int>(*d), mode));
    }

    /// Exact-match equality used by VLOOKUP and MATCH keys.
    static bool lookup_equal(const CellValue& key, const CellValue& v) {
        if (key.is_text() && v.is_text()) return iequals(key.text(), v.text());
        auto kn = key.is_number() ? std::optional(key.number())
                  : key.is_date() ? std::optional(date_to_serial(key.date()))
                                  : std::nullopt;
        auto vn = v.is_number() ? std::optional(v.number())
                  : v.is_date() ? std::optional(date_to_serial(v.date()))
                                : std::nullopt;
        if (kn && vn) return *kn == *vn;
        if (key.is_boolean() && v.is_boolean()) return key.boolean() == v.boolean();
        return false;
    }

    /// The exact/approximate flag: only exact lookups are supported.
    /// Returns nullopt when the request is fine, otherwise the error to yield.
    std::optional<CellValue> reject_approximate(const std::string& f, const std::vector<EvalResult>& args,
                                                size_t flag_index, const CellAddress& at) {
        if (args.size() <= flag_index) {
            diagnose(at, "UnsupportedFeature: " + f + " approximate match (pass the exact-match flag)");
            return CellValue(ErrorCode::VALUE);
        }
        if (detail::is_range(args[flag_index])) return CellValue(ErrorCode::REF);
        const CellValue& fv = detail::scalar(args[flag_index]);
        if (fv.is_error()) return fv;
        auto b = to_boolean(fv);
        if (!b) return CellValue(ErrorCode::VALUE);
        if (*b) {  // any truthy flag requests approximate matching

            diagnose(at, "UnsupportedFeature: " + f + " approximate match is not implemented");
            return CellValue(ErrorCode::VALUE);
        }
        return std::nullopt;
    }

    EvalResult eval_vlookup(const std::vector<EvalResult>& args, const CellAddress& at) {
        if (args.size() < 3 || args.size() > 4) return CellValue(ErrorCode::VALUE);
        if (detail::is_range(args[0]) || !detail::is_range(args[1]) || detail::is_range(args[2]))
            return CellValue(ErrorCode::REF);
        const CellValue& key = detail::scalar(args[0]);
        const auto& table = std::get<RangeValue>(args[1]);
        const CellValue& colv = detail::scalar(args[2]);
        if (auto err = detail::first_error({key, colv})) return CellValue(*err);
        if (auto err = detail::first_error(table.values)) return CellValue(*err);
        if (auto rejected = reject_approximate("VLOOKUP", args, 3, at)) return *rejected;
        auto col = to_number(colv);
        if (!col) return CellValue(ErrorCode::VALUE);
        int c = static_cast<int>(*col);
        if (c < 1 || c > table.width) return CellValue(ErrorCode::REF);
        for (int row = 0; row < table.height; ++row) {
            if (lookup_equal(key, table.at(row, 0))) return table.at(row, c - 1);
        }
        diagnose(at, "VLOOKUP found no exact match");
        return CellValue(ErrorCode::VALUE);
    }

    static EvalResult eval_index(const std::vector<EvalResult>& args) {
        if (args.size() != 3) return CellValue(ErrorCode::VALUE);
        if (!detail::is_range(args[0]) || detail::is_range(args[1]) || detail::is_range(args[2]))
            return CellValue(ErrorCode::REF);
        const auto& table = std::get<RangeValue>(args[0]);
        const CellValue& rv = detail::scalar(args[1]);
        const CellValue& cv = detail::scalar(args[2]);
        if (auto err = detail::first_error({rv, cv})) return CellValue(*err);
        if (auto err = detail::first_error(table.values)) return CellValue(*err);
        auto r = to_number(rv), c = to_number(cv);
        if (!r || !c) return CellValue(ErrorCode::VALUE);
        int row = static_cast<int>(*r), col = static_cast<int>(*c);
        if (row < 1 || row > table.height || col < 1 || col > table.width) return CellValue(ErrorCode::REF);
        return table.at(row - 1, col - 1);
    }

    EvalResult eval_match(const std::vector<EvalResult>& args, const CellAddress& at) {
        if (args.size() < 2 || args.size() > 3) return CellValue(ErrorCode::VALUE);
        if (detail::is_range(args[0]) || !detail::is_range(args[1])) return CellValue(ErrorCode::REF);
        const CellValue& key = detail::scalar(args[0]);
        const auto& vec = std::get<RangeValue>(args[1]);
        if (key.is_error()) return key;
        if (auto err = detail::first_error(vec.values)) return CellValue(*err);
        if (vec.width != 1 && vec.height != 1) return CellValue(ErrorCode::REF);
        if (args.size() == 3) {
            if (detail::is_range(args[2])) return CellValue(ErrorCode::REF);
            const CellValue& mt = detail::scalar(args[2]);
            if (mt.is_error()) return mt;
            auto m = to_number(mt);
            if (!m) return CellValue(ErrorCode::VALUE);
            if (*m != 0.0) {
                diagnose(at, "UnsupportedFeature: MATCH approximate match (use match type 0)");
                return CellValue(ErrorCode::VALUE);
            }
        } else {
            diagnose(at, "UnsupportedFeature: MATCH approximate match (use match type 0)");
            return CellValue(ErrorCode::VALUE);
        }
        for (size_t i = 0; i < vec.values.size(); ++i)
            if (lookup_equal(key, vec.values[i])) return CellValue(static_cast<double>(i + 1));
        diagnose(at, "MATCH found no exact match");
        return CellValue(ErrorCode::VALUE);
    }

    static EvalResult eval_date(const std::vector<EvalResult>& args) {
        if (args.size() != 3) return CellValue(ErrorCode::VALUE);
        double parts[3];
        for (int i = 0; i < 3; ++i) {
            if (detail::is_range(args[static_cast<size_t>(i)])) return CellValue(ErrorCode::REF);
            const CellValue& v = detail::scalar(args[static_cast<size_t>(i)]);
            if (v.is_error()) return v;
            auto n = to_number(v);
            if (!n) return CellValue(ErrorCode::VALUE);
            parts[i] = *n;
        }
        // Out-of-range months and days roll over, so DATE(2020,13,1) is 2021-01-01.
        long long y = static_cast<long long>(parts[0]);
        long long m = static_cast<long long>(parts[1]);
        long long d = static_cast<long long>(parts[2]);
        long long months = y * 12 + (m - 1);
        long long base_year = months >= 0 ? months / 12 : (months - 11) / 12;
        int month = static_cast<int>(months - base_year * 12) + 1;
        if (base_year < 1 || base_year > 9999) return CellValue(ErrorCode::VALUE);
        std::int64_t serial = detail::days_from_civil(static_cast<int>(base_year), month, 1) -
                              detail::kSerialEpochDays + (d - 1);
        Date out = date_from_serial(static_cast<double>(serial));
        if (out.year < 1 || out.year > 9999) return CellValue(ErrorCode::VALUE);
        return CellValue(out);
    }

    static EvalResult eval_date_part(const std::string& f, const std::vector<EvalResult>& args) {
        if (args.size() != 1 || detail::is_range(args[0])) return CellValue(ErrorCode::VALUE);
        const CellValue& v = detail::scalar(args[0]);
        if (v.is_error()) return v;
        Date d;
        if (v.is_date()) d = v.date();
        else if (v.is_number()) d = date_from_serial(v.number());
        else return CellValue(ErrorCode::VALUE);
        if (f == "YEAR") return CellValue(static_cast<double>(d.year));
        if (f == "MONTH") return CellValue(static_cast<double>(d.month));
        return CellValue(static_cast<double>(d.day));
    }

    const Workbook* wb_;
    std::unordered_map<CellAddress, CellValue, CellAddressHash> memo_;
    std::unordered_set<CellAddress, CellAddressHash> in_progress_;
    std::vector<std::string> diagnostics_;
};

/// Evaluates one cell with memoization; literals come back as stored.
inline CellValue evaluate_cell(const Workbook& wb, const CellAddress& addr, EvalCache& cache) {
    (void)wb;
    return cache.evaluate(addr);
}

/// Evaluates every formula cell of the workbook exactly once. The result is
/// independent of iteration order because evaluation is dependency-driven.
inline std::map<CellAddress, CellValue> recompute_all(const Workbook& wb) {
    EvalCache cache(wb);
    std::map<CellAddress, CellValue> out;
    for (const auto& sheet : wb.sheets)
        for (const auto& [key, cell] : sheet.cells)
            if (cell.is_formula()) out.emplace(cell.address, cache.evaluate(cell.address));
    return out;
}

}  // namespace bvcs
