#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "bvcs/csv.hpp"
#include "bvcs/validator.hpp"

namespace bvcs {

struct BatchEntry {
    std::string workbook_path;
    std::string root_sheet;    // empty: the workbook's first sheet
    std::string schema_path;   // empty: regenerate from the workbook
    std::string bindings_path;
    std::vector<std::string> policies;
};

struct BatchManifest {
    std::vector<BatchEntry> entries;
    int jobs = 1;
    std::string out_dir = "out";
};

namespace detail {

inline std::vector<std::string> read_policy_lines(const std::string& path) {
    std::vector<std::string> out;
    for (const auto& row : parse_csv(read_text_file(path))) {
        if (row.empty()) continue;
        std::string id = trim(row.at(0));
        if (!id.empty()) out.push_back(std::move(id));
    }
    return out;
}

}  // namespace detail

inline BatchManifest load_manifest(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ManifestError(path + ": " + e.what());
    }
    if (!j.is_object()) throw ManifestError(path + ": manifest must be a JSON object");

    BatchManifest m;
    if (j.contains("jobs")) {
        if (!j["jobs"].is_number_integer() || j["jobs"].get<int>() < 1)
            throw ManifestError(path + ": jobs must be a positive integer");
        m.jobs = j["jobs"].get<int>();
    }
    if (j.contains("out_dir")) {
        if (!j["out_dir"].is_string()) throw ManifestError(path + ": out_dir must be a string");
        m.out_dir = j["out_dir"].get<std::string>();
    }
    if (!j.contains("entries") || !j["entries"].is_array() || j["entries"].empty())
        throw ManifestError(path + ": entries must be a non-empty array");

    std::filesystem::path base = std::filesystem::path(path).parent_path();
    auto resolve_rel = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };

    size_t index = 0;
    for (const auto& je : j["entries"]) {
        std::string ctx = path + ": entries[" + std::to_string(index) + "]";
        ++index;
        if (!je.is_object()) throw ManifestError(ctx + " must be an object");
        BatchEntry e;
        auto str_field = [&](const char* key, bool required) -> std::string {
            if (!je.contains(key)) {
                if (required) throw ManifestError(ctx + " is missing " + key);
                return "";
            }
            if (!je[key].is_string() || je[key].get<std::string>().empty())
                throw ManifestError(ctx + ": " + key + " must be a non-empty string");
            return je[key].get<std::string>();
        };
        e.workbook_path = resolve_rel(str_field("workbook_path", true));
        e.bindings_path = resolve_rel(str_field("bindings_path", true));
        e.root_sheet = str_field("root_sheet", false);
        std::string schema = str_field("schema_path", false);
        if (!schema.empty()) e.schema_path = resolve_rel(schema);

        bool inline_policies = je.contains("policies");
        bool file_policies = je.contains("policies_file");
        if (inline_policies == file_policies)
            throw ManifestError(ctx + " needs exactly one of policies or policies_file");
        if (inline_policies) {
            if (!je["policies"].is_array()) throw ManifestError(ctx + ": policies must be an array");
            for (const auto& p : je["policies"]) {
                if (!p.is_string() || p.get<std::string>().empty())
                    throw ManifestError(ctx + ": policy ids must be non-empty strings");
                e.policies.push_back(p.get<std::string>());
            }
        } else {
            std::string pf = resolve_rel(str_field("policies_file", true));
            try {
                e.policies = detail::read_policy_lines(pf);
            } catch (const IoError& err) {
                throw ManifestError(ctx + ": " + err.what());
            }
        }
        if (e.policies.empty()) throw ManifestError(ctx + ": policies list is empty");
        m.entries.push_back(std::move(e));
    }
    return m;
}

struct SummaryRow {
    std::string cs_sheet;
    std::string policy_id;
    RunStatus status = RunStatus::Error;
    int mismatches = 0;
    std::int64_t duration_ms = 0;
    std::string evidence_html;  // relative to out_dir
};

struct SheetTotals {
    int passed = 0;
    int failed = 0;
    int error = 0;
    int total() const { return passed + failed + error; }
};

struct BatchSummary {
    std::vector<SummaryRow> rows;              // sorted by (cs_sheet, policy_id)
    std::map<std::string, SheetTotals> totals; // per cs_sheet, the fold of rows
    std::int64_t wall_ms = 0;
};

namespace detail {

inline SummaryRow row_from_run(const ValidationRun& run) {
    SummaryRow row;
    row.cs_sheet = run.cs_sheet;
    row.policy_id = run.policy_id;
    row.status = run.status;
    for (const auto& v : run.verdicts)
        if (!v.match) ++row.mismatches;
    row.duration_ms = run.duration_ms;
    row.evidence_html =
        safe_path_component(run.cs_sheet) + "/" + safe_path_component(run.policy_id) + ".html";
    return row;
}

inline void finalize_summary(BatchSummary& summary) {
    std::stable_sort(summary.rows.begin(), summary.rows.end(), [](const SummaryRow& a, const SummaryRow& b) {
        if (a.cs_sheet != b.cs_sheet) return a.cs_sheet < b.cs_sheet;
        return a.policy_id < b.policy_id;
    });
    summary.totals.clear();
    for (const auto& row : summary.rows) {
        SheetTotals& t = summary.totals[row.cs_sheet];
        switch (row.status) {
            case RunStatus::Passed: ++t.passed; break;
            case RunStatus::Failed: ++t.failed; break;
            case RunStatus::Error: ++t.error; break;
        }
    }
}

}  // namespace detail

struct BatchRunOptions {
    bool no_timestamp = false;
    std::function<void(const ValidationRun&)> progress;  // called as runs finish, any order
};

/// Runs every (entry, policy) task on a pool of manifest.jobs threads. All
/// inputs load and parse before the first validation so a bad manifest fails
/// fast; after that, one policy's trouble is its own ERROR row, never a crash.
inline BatchSummary run_batch(const BatchManifest& manifest, const BatchRunOptions& opts = {}) {
    auto started = std::chrono::steady_clock::now();

    struct Prepared {
        const Workbook* wb = nullptr;
        const SchemaExtraction* schema = nullptr;
        const std::vector<Binding>* bindings = nullptr;
        std::string cs_label;
        std::string base_dir;  // stores resolve relative to the bindings file
    };

    // node-based maps keep references stable while more entries load
    std::map<std::string, Workbook> workbooks;
    std::map<std::string, SchemaExtraction> schemas;
    std::map<std::string, std::vector<Binding>> binding_sets;
    std::vector<Prepared> prepared;

    for (const auto& entry : manifest.entries) {
        Prepared p;
        auto wit = workbooks.find(entry.workbook_path);
        if (wit == workbooks.end())
            wit = workbooks.emplace(entry.workbook_path, load_workbook(entry.workbook_path)).first;
        p.wb = &wit->second;

        std::string root = !entry.root_sheet.empty() ? entry.root_sheet
                           : !p.wb->sheets.empty()   ? p.wb->sheets.front().name
                                                     : "";
        std::string schema_key =
            !entry.schema_path.empty() ? entry.schema_path : entry.workbook_path + "|" + root;
        auto sit = schemas.find(schema_key);
        if (sit == schemas.end()) {
            SchemaExtraction ex = !entry.schema_path.empty() ? parse_schema(entry.schema_path)
                                                             : generate_schema(*p.wb, root);
            sit = schemas.emplace(schema_key, std::move(ex)).first;
        }
        p.schema = &sit->second;

        auto bit = binding_sets.find(entry.bindings_path);
        if (bit == binding_sets.end())
            bit = binding_sets.emplace(entry.bindings_path, load_bindings(entry.bindings_path)).first;
        p.bindings = &bit->second;

        std::string label_root = !p.schema->root_sheet.empty() ? p.schema->root_sheet : root;
        p.cs_label = p.wb->file_name + "$" + label_root;
        p.base_dir = std::filesystem::path(entry.bindings_path).parent_path().string();
        if (p.base_dir.empty()) p.base_dir = ".";
        prepared.push_back(std::move(p));
    }

    struct Task {
        size_t entry = 0;
        const std::string* policy = nullptr;
    };
    std::vector<Task> tasks;
    for (size_t i = 0; i < manifest.entries.size(); ++i)
        for (const auto& policy : manifest.entries[i].policies) tasks.push_back({i, &policy});

    std::vector<ValidationRun> results(tasks.size());
    std::atomic<size_t> next{0};
    std::mutex progress_mu;

    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& task = tasks[i];
            const Prepared& p = prepared[task.entry];
            ValidateOptions vopts;
            vopts.out_dir = manifest.out_dir;
            vopts.no_timestamp = opts.no_timestamp;
            vopts.resolve.base_dir = p.base_dir;
            try {
                results[i] = validate_policy(*p.wb, *p.schema, *p.bindings, *task.policy, vopts);
            } catch (const std::exception& e) {
                // evidence writing failed or similar; keep the batch alive
                ValidationRun run;
                run.policy_id = *task.policy;
                run.cs_sheet = p.cs_label;
                run.status = RunStatus::Error;
                run.issues.push_back(e.what());
                results[i] = std::move(run);
            }
            if (opts.progress) {
                std::lock_guard<std::mutex> lock(progress_mu);
                opts.progress(results[i]);
            }
        }
    };

    int jobs = std::max(1, manifest.jobs);
    size_t n_threads = std::min<size_t>(static_cast<size_t>(jobs), tasks.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    BatchSummary summary;
    summary.rows.reserve(results.size());
    for (const auto& run : results) summary.rows.push_back(detail::row_from_run(run));
    detail::finalize_summary(summary);
    if (!opts.no_timestamp) {
        auto elapsed = std::chrono::steady_clock::now() - started;
        summary.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
    }
    return summary;
}

inline std::string summary_to_csv(const BatchSummary& summary) {
    std::string out = "cs_sheet,policy_id,status,mismatches,duration_ms\n";
    for (const auto& row : summary.rows) {
        out += csv_line({row.cs_sheet, row.policy_id, run_status_text(row.status),
                         std::to_string(row.mismatches), std::to_string(row.duration_ms)});
    }
    return out;
}

inline void emit_summary_csv(const BatchSummary& summary, const std::string& path) {
    write_text_file(path, summary_to_csv(summary));
}

/// Static dashboard page: totals per sheet, then one row per policy linking
/// to its evidence page. Byte-stable when timestamps are suppressed.
inline std::string dashboard_html(const BatchSummary& summary, bool no_timestamp = false) {
    using detail::html_escape;
    std::string html;
    html += "<!doctype html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
    html += "<title>Validation dashboard</title>\n";
    html += "<style>\n"
            "body { font-family: sans-serif; margin: 1.5em; }\n"
            "table { border-collapse: collapse; margin: 1em 0; }\n"
            "td, th { border: 1px solid #bbb; padding: 3px 10px; text-align: left; }\n"
            "th { background: #eee; }\n"
            "td.num { text-align: right; }\n"
            ".status-passed { color: #1a7f1a; font-weight: bold; }\n"
            ".status-failed { color: #b22222; font-weight: bold; }\n"
            ".status-error { color: #b8860b; font-weight: bold; }\n"
            "</style>\n</head>\n<body>\n";
    html += "<h1>Validation dashboard</h1>\n";

    html += "<h2>Totals</h2>\n<table>\n<tr><th>CS sheet</th><th>Passed</th><th>Failed</th>"
            "<th>Error</th><th>Total</th></tr>\n";
    for (const auto& [sheet, t] : summary.totals) {
        html += "<tr><td>" + html_escape(sheet) + "</td><td class=\"num\">" + std::to_string(t.passed) +
                "</td><td class=\"num\">" + std::to_string(t.failed) + "</td><td class=\"num\">" +
                std::to_string(t.error) + "</td><td class=\"num\">" + std::to_string(t.total()) +
                "</td></tr>\n";
    }
    html += "</table>\n";

    html += "<h2>Policies</h2>\n<table>\n<tr><th>CS sheet</th><th>Policy</th><th>Status</th>"
            "<th>Mismatches</th><th>Duration (ms)</th><th>Evidence</th></tr>\n";
    for (const auto& row : summary.rows) {
        std::string cls = row.status == RunStatus::Passed ? "status-passed"
                          : row.status == RunStatus::Failed ? "status-failed"
                                                            : "status-error";
        html += "<tr><td>" + html_escape(row.cs_sheet) + "</td><td>" + html_escape(row.policy_id) +
                "</td><td class=\"" + cls + "\">" + run_status_text(row.status) +
                "</td><td class=\"num\">" + std::to_string(row.mismatches) + "</td><td class=\"num\">" +
                std::to_string(row.duration_ms) + "</td><td><a href=\"" + html_escape(row.evidence_html) +
                "\">view</a></td></tr>\n";
    }
    html += "</table>\n";
    if (!no_timestamp)
        html += "<p>Generated " + detail::utc_timestamp() + " in " + std::to_string(summary.wall_ms) +
                " ms</p>\n";
    html += "</body>\n</html>\n";
    return html;
}

inline void emit_dashboard_html(const BatchSummary& summary, const std::string& out_dir,
                                bool no_timestamp = false) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
    write_text_file((std::filesystem::path(out_dir) / "dashboard.html").string(),
                    dashboard_html(summary, no_timestamp));
}

/// Rebuilds a summary from evidence files already on disk, so the dashboard
/// can be regenerated without revalidating anything.
inline BatchSummary read_runs(const std::string& dir) {
    namespace fs = std::filesystem;
    BatchSummary summary;
    if (!fs::exists(dir)) return summary;
    std::vector<fs::path> files;
    for (const auto& sub : fs::directory_iterator(dir)) {
        if (!sub.is_directory()) continue;
        for (const auto& f : fs::directory_iterator(sub.path())) {
            if (!f.is_regular_file()) continue;
            if (ends_with(f.path().filename().string(), ".evidence.json")) files.push_back(f.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_text_file(file.string()));
        } catch (const nlohmann::json::parse_error& e) {
            throw IoError(file.string() + ": " + e.what());
        }
        SummaryRow row;
        row.cs_sheet = j.value("cs_sheet", "");
        row.policy_id = j.value("policy_id", "");
        std::string status = j.value("status", "");
        if (status == "PASSED") row.status = RunStatus::Passed;
        else if (status == "FAILED") row.status = RunStatus::Failed;
        else if (status == "ERROR") row.status = RunStatus::Error;
        else throw IoError(file.string() + ": unknown status '" + status + "'");
        row.duration_ms = j.value("duration_ms", std::int64_t{0});
        if (j.contains("verdicts") && j["verdicts"].is_array()) {
            for (const auto& v : j["verdicts"])
                if (!v.value("match", true)) ++row.mismatches;
        }
        fs::path rel = fs::relative(file, dir);
        std::string stem = rel.string();
        stem.erase(stem.size() - std::string(".evidence.json").size());
        row.evidence_html = stem + ".html";
        summary.rows.push_back(std::move(row));
    }
    detail::finalize_summary(summary);
    return summary;
}

/// Worst row status as a process exit code: 0 passed, 1 failed, 2 error.
inline int summary_exit_code(const BatchSummary& summary) {
    int code = 0;
    for (const auto& row : summary.rows) {
        if (row.status == RunStatus::Error) return 2;
        if (row.status == RunStatus::Failed) code = std::max(code, 1);
    }
    return code;
}

}  // namespace bvcs
