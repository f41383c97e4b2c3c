#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bvcs/adapters.hpp"
#include "bvcs/eval.hpp"
#include "bvcs/format.hpp"
#include "bvcs/rounding.hpp"
#include "bvcs/schema.hpp"
#include "bvcs/workbook.hpp"

namespace bvcs {

enum class RunStatus { Passed, Failed, Error };

inline const char* run_status_text(RunStatus s) {
    switch (s) {
        case RunStatus::Passed: return "PASSED";
        case RunStatus::Failed: return "FAILED";
        case RunStatus::Error: return "ERROR";
    }
    return "?";
}

/// The comparison outcome for one output cell.
struct CellVerdict {
    CellAddress cell;
    CellValue expected;  // recomputed from the sheet's formulas
    CellValue actual;    // collected from the system under validation
    std::string format;
    bool match = false;
    std::string detail;  // empty on a match
};

struct ValidationRun {
    std::string policy_id;
    std::string cs_sheet;
    std::vector<CellVerdict> verdicts;
    RunStatus status = RunStatus::Error;
    std::vector<std::string> issues;
    std::string evidence_path;  // JSON evidence; the HTML page shares the stem
    std::int64_t duration_ms = 0;
};

/// Format-aware comparison. Numeric formats round both sides to the format's
/// precision (half away from zero) and require exact equality of the rounded
/// values, mirroring what a tester sees on screen; `epsilon` switches to raw
/// |expected-actual| <= epsilon for diagnostics. Text compares case-sensitive
/// after trimming; dates compare as calendar dates.
inline std::pair<bool, std::string> compare_values(const CellValue& expected, const CellValue& actual,
                                                   const std::string& format,
                                                   std::optional<double> epsilon = std::nullopt) {
    FormatSpec fmt = parse_format(format);
    if (expected.is_error())
        return {false, std::string("expected value is an error: ") + error_code_text(expected.error())};
    if (actual.is_error())
        return {false, std::string("actual value is an error: ") + error_code_text(actual.error())};

    if (fmt.numeric()) {
        if (!expected.is_number() || !actual.is_number())
            return {false, "expected " + format_value(expected) + " but actual is " + format_value(actual) +
                               " (non-numeric under " + format + ")"};
        double e = expected.number(), a = actual.number();
        if (epsilon) {
            double diff = e > a ? e - a : a - e;
            if (diff <= *epsilon) return {true, ""};
            return {false, "difference " + format_number(diff) + " exceeds epsilon " +
                               format_number(*epsilon)};
        }
        double re = round_half_away(e, fmt.precision);
        double ra = round_half_away(a, fmt.precision);
        if (re == ra) return {true, ""};
        return {false, "at " + std::to_string(fmt.precision) + " decimals: expected " + format_number(re) +
                           ", actual " + format_number(ra)};
    }
    if (fmt.kind == FormatKind::Date) {
        if (!expected.is_date() || !actual.is_date())
            return {false, "expected " + format_value(expected) + " but actual is " + format_value(actual) +
                               " (non-date under Date)"};
        if (expected.date() == actual.date()) return {true, ""};
        return {false, "expected " + date_to_iso(expected.date()) + ", actual " + date_to_iso(actual.date())};
    }
    std::string et = trim(format_value(expected));
    std::string at = trim(format_value(actual));
    if (et == at) return {true, ""};
    return {false, "expected '" + et + "', actual '" + at + "'"};
}

namespace detail {

/// Writes one resolved field into the workbook. Table anchors spread their
/// value list along the growth direction and blank out the remaining slots so
/// a short list cannot inherit stale template literals.
inline void fill_record(Workbook& wb, const SchemaRecord& rec, const ResolvedValue& rv) {
    CellAddress anchor = record_address(rec);
    auto dir = split_cell_id(rec.cell_id).second;
    if (!dir) {
        set_input(wb, anchor, rv.values.at(0));
        return;
    }
    int capacity = table_capacity(wb, anchor, *dir);
    if (static_cast<int>(rv.values.size()) > capacity)
        throw CapacityExceeded(rec.cell_id + ": " + std::to_string(rv.values.size()) +
                               " values exceed table capacity " + std::to_string(capacity));
    for (int i = 0; i < capacity; ++i) {
        CellAddress target = *dir == TableDirection::RowWise
                                 ? CellAddress{anchor.sheet, anchor.col, anchor.row + i}
                                 : CellAddress{anchor.sheet, anchor.col + i, anchor.row};
        CellValue v = i < static_cast<int>(rv.values.size()) ? rv.values[static_cast<size_t>(i)]
                                                             : CellValue::blank();
        set_input(wb, target, v);
    }
}

inline std::string safe_path_component(const std::string& name) {
    std::string out = name;
    for (char& c : out) {
        if (c == '/' || c == '\\' || c == ':' || c == '\0' || c == '*' || c == '?') c = '_';
    }
    return out.empty() ? "_" : out;
}

inline nlohmann::ordered_json value_to_json(const CellValue& v) {
    if (v.is_error()) return nlohmann::ordered_json{{"e", error_code_text(v.error())}};
    return literal_to_json(v);
}

inline std::string html_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string utc_timestamp() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace detail

/// Clones the template and enters every resolved input. Fields missing from
/// the map are left untouched; the caller records those gaps as issues.
inline Workbook fill_inputs(Workbook wb, const SchemaExtraction& schema,
                            const std::map<CellAddress, ResolvedValue>& inputs) {
    for (const auto& rec : schema.records) {
        if (rec.field_type != FieldType::Input) continue;
        auto it = inputs.find(detail::record_address(rec));
        if (it == inputs.end()) continue;
        detail::fill_record(wb, rec, it->second);
    }
    return wb;
}

struct ValidateOptions {
    std::string out_dir = "out";  // empty skips evidence files
    bool no_timestamp = false;    // deterministic output: zero duration, no generated_at
    std::optional<double> epsilon;
    ResolveOptions resolve;
};

/// Renders the evidence pair (JSON document and HTML page) for a finished
/// run. Returns the JSON path; the HTML page sits next to it.
inline std::string write_evidence(const ValidationRun& run, const Workbook& filled,
                                  const std::string& out_dir, bool no_timestamp = false) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(out_dir) / detail::safe_path_component(run.cs_sheet);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    fs::path stem = dir / detail::safe_path_component(run.policy_id);

    EvalCache cache(filled);

    nlohmann::ordered_json doc;
    doc["policy_id"] = run.policy_id;
    doc["cs_sheet"] = run.cs_sheet;
    doc["status"] = run_status_text(run.status);
    doc["duration_ms"] = run.duration_ms;
    doc["issues"] = run.issues;
    doc["verdicts"] = nlohmann::ordered_json::array();
    for (const auto& v : run.verdicts) {
        nlohmann::ordered_json jv;
        jv["cell"] = address_to_a1(v.cell, true);
        jv["expected"] = detail::value_to_json(v.expected);
        jv["actual"] = detail::value_to_json(v.actual);
        jv["format"] = v.format;
        jv["match"] = v.match;
        if (!v.detail.empty()) jv["detail"] = v.detail;
        doc["verdicts"].push_back(std::move(jv));
    }
    doc["workbook"] = workbook_to_json(filled);
    if (!no_timestamp) doc["generated_at"] = detail::utc_timestamp();
    write_text_file((stem.string() + ".evidence.json"), doc.dump(2) + "\n");

    // ---- HTML page ---------------------------------------------------------

    std::map<CellAddress, const CellVerdict*> verdict_at;
    for (const auto& v : run.verdicts) verdict_at[v.cell] = &v;

    std::string html;
    html += "<!doctype html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
    html += "<title>" + detail::html_escape(run.cs_sheet + " " + run.policy_id) + "</title>\n";
    html += "<style>\n"
            "body { font-family: sans-serif; margin: 1.5em; }\n"
            "table.grid { border-collapse: collapse; margin: 1em 0; }\n"
            "table.grid td, table.grid th { border: 1px solid #bbb; padding: 2px 8px; "
            "min-width: 3em; text-align: right; }\n"
            "table.grid th { background: #eee; font-weight: normal; color: #555; }\n"
            ".banner { padding: 0.6em 1em; border-radius: 4px; font-weight: bold; }\n"
            ".banner.passed { background: #d7f5d7; }\n"
            ".banner.failed { background: #fbd9d3; }\n"
            ".banner.error { background: #fdeebf; }\n"
            "td.mismatch { background: #f8a5a5; font-weight: bold; }\n"
            "td.matched { background: #d7f5d7; }\n"
            "td.filled { background: #ddebf7; }\n"
            "table.verdicts { border-collapse: collapse; }\n"
            "table.verdicts td, table.verdicts th { border: 1px solid #bbb; padding: 2px 10px; }\n"
            "</style>\n</head>\n<body>\n";

    int mismatches = 0;
    for (const auto& v : run.verdicts)
        if (!v.match) ++mismatches;
    std::string status_class = run.status == RunStatus::Passed ? "passed"
                               : run.status == RunStatus::Failed ? "failed"
                                                                 : "error";
    html += "<div class=\"banner " + status_class + "\">" + detail::html_escape(run.cs_sheet) + " &middot; policy " +
            detail::html_escape(run.policy_id) + " &middot; " + run_status_text(run.status);
    if (run.status == RunStatus::Failed)
        html += " (" + std::to_string(mismatches) + (mismatches == 1 ? " mismatch)" : " mismatches)");
    html += "</div>\n";

    if (!run.issues.empty()) {
        html += "<h2>Issues</h2>\n<ul>\n";
        for (const auto& issue : run.issues) html += "<li>" + detail::html_escape(issue) + "</li>\n";
        html += "</ul>\n";
    }

    if (!run.verdicts.empty()) {
        html += "<h2>Outputs</h2>\n<table class=\"verdicts\">\n"
                "<tr><th>Cell</th><th>Expected</th><th>Actual</th><th>Format</th><th>Result</th></tr>\n";
        for (const auto& v : run.verdicts) {
            html += "<tr><td>" + detail::html_escape(address_to_a1(v.cell, true)) + "</td><td>" +
                    detail::html_escape(format_value(v.expected)) + "</td><td>" +
                    detail::html_escape(format_value(v.actual)) + "</td><td>" + detail::html_escape(v.format) +
                    "</td><td>" + (v.match ? "match" : "MISMATCH: " + detail::html_escape(v.detail)) +
                    "</td></tr>\n";
        }
        html += "</table>\n";
    }

    std::set<CellAddress> filled_inputs;
    for (const auto& sheet : filled.sheets) {
        if (sheet.cells.empty()) continue;
        int max_row = 0, max_col = 0;
        for (const auto& [key, cell] : sheet.cells) {
            max_row = std::max(max_row, key.first);
            max_col = std::max(max_col, key.second);
        }
        html += "<h2>" + detail::html_escape(sheet.name) + "</h2>\n<table class=\"grid\">\n<tr><th></th>";
        for (int c = 1; c <= max_col; ++c) html += "<th>" + column_to_letters(c) + "</th>";
        html += "</tr>\n";
        for (int r = 1; r <= max_row; ++r) {
            html += "<tr><th>" + std::to_string(r) + "</th>";
            for (int c = 1; c <= max_col; ++c) {
                const Cell* cell = sheet.find(c, r);
                CellAddress addr{sheet.name, c, r};
                std::string classes;
                std::string title;
                auto vit = verdict_at.find(addr);
                if (vit != verdict_at.end()) {
                    classes = vit->second->match ? "matched" : "mismatch";
                    title = vit->second->match
                                ? "actual matches"
                                : "actual " + format_value(vit->second->actual) + "; " + vit->second->detail;
                }
                std::string text;
                if (cell) {
                    CellValue value = cell->is_formula() ? cache.evaluate(addr) : cell->literal;
                    text = format_value(value);
                    if (cell->is_formula()) title = title.empty() ? cell->formula_text : cell->formula_text + "; " + title;
                }
                html += "<td";
                if (!classes.empty()) html += " class=\"" + classes + "\"";
                html += " data-cell=\"" + detail::html_escape(address_to_a1(addr)) + "\"";
                if (!title.empty()) html += " title=\"" + detail::html_escape(title) + "\"";
                html += ">" + detail::html_escape(text) + "</td>";
            }
            html += "</tr>\n";
        }
        html += "</table>\n";
    }
    html += "</body>\n</html>\n";
    write_text_file(stem.string() + ".html", html);

    return stem.string() + ".evidence.json";
}

/// One policy, end to end: collect, fill a private clone, recompute, compare
/// each output, write evidence. Data problems never throw; they surface as
/// issues with status ERROR.
inline ValidationRun validate_policy(const Workbook& wb_template, const SchemaExtraction& schema,
                                     const std::vector<Binding>& bindings, const std::string& policy_id,
                                     const ValidateOptions& opts = {}) {
    auto started = std::chrono::steady_clock::now();
    ValidationRun run;
    run.policy_id = policy_id;
    std::string root = !schema.root_sheet.empty() ? schema.root_sheet
                       : !wb_template.sheets.empty() ? wb_template.sheets.front().name
                                                     : "";
    run.cs_sheet = wb_template.file_name + "$" + root;

    Workbook filled = wb_template;
    try {
        CollectResult collected = collect_policy(schema, bindings, policy_id, opts.resolve);
        run.issues = std::move(collected.issues);

        for (const auto& rec : schema.records) {
            if (rec.field_type != FieldType::Input) continue;
            auto it = collected.inputs.find(detail::record_address(rec));
            if (it == collected.inputs.end()) continue;  // already an issue
            try {
                detail::fill_record(filled, rec, it->second);
            } catch (const Error& e) {
                run.issues.push_back(rec.cs_sheet + " " + rec.cell_id + ": " + e.what());
            }
        }

        EvalCache cache(filled);
        for (const auto& rec : schema.records) {
            if (rec.field_type != FieldType::Output) continue;
            CellAddress addr = detail::record_address(rec);
            auto it = collected.pas_outputs.find(addr);
            if (it == collected.pas_outputs.end()) continue;  // already an issue
            CellVerdict v;
            v.cell = addr;
            v.expected = cache.evaluate(addr);
            v.actual = it->second.values.at(0);
            v.format = rec.format;
            auto [match, why] = compare_values(v.expected, v.actual, v.format, opts.epsilon);
            v.match = match;
            v.detail = why;
            run.verdicts.push_back(std::move(v));
        }
    } catch (const Error& e) {
        run.issues.push_back(e.what());
    }

    bool all_match = true;
    for (const auto& v : run.verdicts)
        if (!v.match) all_match = false;
    run.status = !run.issues.empty() ? RunStatus::Error
                 : all_match         ? RunStatus::Passed
                                     : RunStatus::Failed;

    if (!opts.no_timestamp) {
        auto elapsed = std::chrono::steady_clock::now() - started;
        run.duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
    }
    if (!opts.out_dir.empty())
        run.evidence_path = write_evidence(run, filled, opts.out_dir, opts.no_timestamp);
    return run;
}

}  // namespace bvcs
