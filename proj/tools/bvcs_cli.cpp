// bvcs: validate policy administration systems against calculation sheets.
//
// Subcommands: schema (extract a field schema from a workbook), validate
// (one policy end to end), batch (many policies from a manifest), report
// (rebuild the dashboard from stored evidence).
//
// Stdout carries machine-readable verdict lines only; everything else goes
// to stderr. Exit code: 0 all passed, 1 at least one failed, 2 errors.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "bvcs/batch.hpp"
#include "bvcs/log.hpp"

namespace fs = std::filesystem;

namespace {

std::string verdict_text(const bvcs::ValidationRun& run) {
    if (run.status == bvcs::RunStatus::Error) return "ERROR";
    if (run.status == bvcs::RunStatus::Passed) return "PASSED";
    int mismatches = 0;
    for (const auto& v : run.verdicts)
        if (!v.match) ++mismatches;
    return "FAILED (" + std::to_string(mismatches) + (mismatches == 1 ? " mismatch)" : " mismatches)");
}

std::string verdict_text(const bvcs::SummaryRow& row) {
    if (row.status == bvcs::RunStatus::Error) return "ERROR";
    if (row.status == bvcs::RunStatus::Passed) return "PASSED";
    return "FAILED (" + std::to_string(row.mismatches) +
           (row.mismatches == 1 ? " mismatch)" : " mismatches)");
}

std::string parent_dir(const std::string& path) {
    std::string dir = fs::path(path).parent_path().string();
    return dir.empty() ? "." : dir;
}

int cmd_schema(const std::string& workbook_path, const std::string& root, const std::string& out,
               bool neighbor_compat) {
    bvcs::Workbook wb = bvcs::load_workbook(workbook_path);
    std::string root_sheet = !root.empty() ? root : wb.sheets.front().name;
    bvcs::AnnotateOptions opts;
    opts.neighbor_compat = neighbor_compat;
    bvcs::SchemaExtraction schema = bvcs::generate_schema(wb, root_sheet, opts);
    for (const auto& w : schema.warnings) std::cerr << "warning: " << w << "\n";
    if (out.empty()) {
        std::cout << bvcs::schema_to_csv_text(schema);
    } else {
        bvcs::emit_schema(schema, out);
        std::cerr << "wrote " << out << " (" << schema.records.size() << " fields)\n";
    }
    return 0;
}

int cmd_validate(const std::string& workbook_path, const std::string& schema_path,
                 const std::string& bindings_path, const std::string& root, const std::string& policy,
                 const std::string& out_dir, bool no_timestamp, std::optional<double> epsilon) {
    bvcs::Workbook wb = bvcs::load_workbook(workbook_path);
    std::string root_sheet = !root.empty() ? root : wb.sheets.front().name;
    bvcs::SchemaExtraction schema = !schema_path.empty() ? bvcs::parse_schema(schema_path)
                                                         : bvcs::generate_schema(wb, root_sheet);
    std::vector<bvcs::Binding> bindings = bvcs::load_bindings(bindings_path);

    bvcs::ValidateOptions opts;
    opts.out_dir = out_dir;
    opts.no_timestamp = no_timestamp;
    opts.epsilon = epsilon;
    opts.resolve.base_dir = parent_dir(bindings_path);

    bvcs::ValidationRun run = bvcs::validate_policy(wb, schema, bindings, policy, opts);
    for (const auto& issue : run.issues) std::cerr << "issue: " << issue << "\n";
    std::cout << verdict_text(run) << "\n";
    if (!run.evidence_path.empty()) std::cerr << "evidence: " << run.evidence_path << "\n";
    switch (run.status) {
        case bvcs::RunStatus::Passed: return 0;
        case bvcs::RunStatus::Failed: return 1;
        case bvcs::RunStatus::Error: return 2;
    }
    return 2;
}

int cmd_batch(const std::string& manifest_path, std::optional<int> jobs, const std::string& out_dir,
              bool no_timestamp, bool progress) {
    bvcs::BatchManifest manifest = bvcs::load_manifest(manifest_path);
    if (jobs) manifest.jobs = *jobs;
    if (!out_dir.empty()) manifest.out_dir = out_dir;

    bvcs::BatchRunOptions opts;
    opts.no_timestamp = no_timestamp;
    if (progress) {
        opts.progress = [](const bvcs::ValidationRun& run) {
            std::cerr << run.cs_sheet << " " << run.policy_id << ": " << verdict_text(run) << "\n";
        };
    }
    bvcs::BatchSummary summary = bvcs::run_batch(manifest, opts);
    for (const auto& row : summary.rows)
        std::cout << row.cs_sheet << " " << row.policy_id << ": " << verdict_text(row) << "\n";
    bvcs::emit_summary_csv(summary, (fs::path(manifest.out_dir) / "summary.csv").string());
    bvcs::emit_dashboard_html(summary, manifest.out_dir, no_timestamp);
    std::cerr << "summary: " << (fs::path(manifest.out_dir) / "summary.csv").string() << "\n";
    std::cerr << "dashboard: " << (fs::path(manifest.out_dir) / "dashboard.html").string() << "\n";
    return bvcs::summary_exit_code(summary);
}

int cmd_report(const std::string& runs_dir, const std::string& out) {
    bvcs::BatchSummary summary = bvcs::read_runs(runs_dir);
    std::string out_path = !out.empty() ? out : (fs::path(runs_dir) / "dashboard.html").string();
    std::error_code ec;
    fs::create_directories(fs::path(out_path).parent_path(), ec);
    bvcs::write_text_file(out_path, bvcs::dashboard_html(summary, true));
    std::cerr << "dashboard: " << out_path << " (" << summary.rows.size() << " runs)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Validate policy administration systems against calculation sheets"};
    app.require_subcommand(1);

    // schema
    std::string s_workbook, s_root, s_out;
    bool s_compat = false;
    auto* schema_cmd = app.add_subcommand("schema", "Extract the field schema from a workbook");
    schema_cmd->add_option("workbook", s_workbook, "Workbook JSON file")->required();
    schema_cmd->add_option("--root", s_root, "Root sheet (default: first sheet)");
    schema_cmd->add_option("-o,--out", s_out, "Schema CSV path (default: stdout)");
    schema_cmd->add_flag("--compat-neighbor-annotations", s_compat,
                         "Take a missing data source from the text cell right of the input");

    // validate
    std::string v_workbook, v_schema, v_bindings, v_root, v_policy, v_out = "out";
    bool v_no_ts = false;
    double v_epsilon = -1.0;
    auto* validate_cmd = app.add_subcommand("validate", "Validate one policy against one workbook");
    validate_cmd->add_option("--workbook", v_workbook, "Workbook JSON file")->required();
    validate_cmd->add_option("--schema", v_schema, "Schema CSV (default: regenerate from the workbook)");
    validate_cmd->add_option("--bindings", v_bindings, "Bindings JSON file")->required();
    validate_cmd->add_option("--root", v_root, "Root sheet when regenerating the schema");
    validate_cmd->add_option("--policy", v_policy, "Policy id")->required();
    validate_cmd->add_option("--out", v_out, "Evidence output directory");
    validate_cmd->add_flag("--no-timestamp", v_no_ts, "Deterministic output: no timestamps or durations");
    auto* eps_opt = validate_cmd->add_option("--epsilon", v_epsilon,
                                             "Compare with |expected-actual| <= epsilon instead of "
                                             "format-precision rounding");

    // batch
    std::string b_manifest, b_out;
    int b_jobs = 0;
    bool b_no_ts = false, b_progress = false;
    auto* batch_cmd = app.add_subcommand("batch", "Validate every policy in a manifest");
    batch_cmd->add_option("--manifest", b_manifest, "Batch manifest JSON file")->required();
    batch_cmd->add_option("--jobs", b_jobs, "Parallel policy tasks (overrides the manifest)");
    batch_cmd->add_option("--out", b_out, "Output directory (overrides the manifest)");
    batch_cmd->add_flag("--no-timestamp", b_no_ts, "Deterministic output: no timestamps or durations");
    batch_cmd->add_flag("--progress", b_progress, "Report each run on stderr as it finishes");

    // report
    std::string r_runs, r_out;
    auto* report_cmd = app.add_subcommand("report", "Rebuild the dashboard from stored evidence");
    report_cmd->add_option("--runs", r_runs, "Directory holding evidence files")->required();
    report_cmd->add_option("--out", r_out, "Dashboard path (default: <runs>/dashboard.html)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (schema_cmd->parsed()) return cmd_schema(s_workbook, s_root, s_out, s_compat);
        if (validate_cmd->parsed()) {
            std::optional<double> epsilon;
            if (eps_opt->count() > 0) epsilon = v_epsilon;
            return cmd_validate(v_workbook, v_schema, v_bindings, v_root, v_policy, v_out, v_no_ts,
                                epsilon);
        }
        if (batch_cmd->parsed()) {
            std::optional<int> jobs;
            if (b_jobs > 0) jobs = b_jobs;
            return cmd_batch(b_manifest, jobs, b_out, b_no_ts, b_progress);
        }
        if (report_cmd->parsed()) return cmd_report(r_runs, r_out);
    } catch (const bvcs::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
