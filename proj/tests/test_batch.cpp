#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>

#include "bvcs/batch.hpp"
#include "helpers.hpp"

using namespace bvcs;
using testutil::fixture;
namespace fs = std::filesystem;

namespace {

struct Scratch {
    fs::path dir;
    explicit Scratch(const char* tag) : dir(testutil::scratch_dir(tag)) {}
    ~Scratch() { fs::remove_all(dir); }
};

BatchManifest fixture_manifest(const std::string& out_dir) {
    BatchManifest m = load_manifest(fixture("batch.manifest.json"));
    m.out_dir = out_dir;
    return m;
}

void write_manifest(const fs::path& path, const std::string& body) {
    write_text_file(path.string(), body);
}

}  // namespace

TEST_CASE("manifest loading") {
    SECTION("the fixture manifest resolves paths against its own directory") {
        BatchManifest m = load_manifest(fixture("batch.manifest.json"));
        CHECK(m.jobs == 2);
        CHECK(m.out_dir == "out");
        REQUIRE(m.entries.size() == 2);
        fs::path base = fs::path(fixture("batch.manifest.json")).parent_path();
        CHECK(m.entries[0].workbook_path == (base / "withdrawal_charge.wbk.json").string());
        CHECK(m.entries[0].schema_path == (base / "withdrawal_charge.schema.csv").string());
        CHECK(m.entries[0].bindings_path == (base / "withdrawal_charge.bindings.json").string());
        CHECK(m.entries[0].policies == std::vector<std::string>{"P001", "P002", "P003"});
        CHECK(m.entries[1].schema_path.empty());
        CHECK(m.entries[1].root_sheet.empty());
        // policies_file contents become the inline list
        CHECK(m.entries[1].policies == std::vector<std::string>{"P001", "P002"});
    }
    SECTION("absolute paths pass through untouched") {
        Scratch s("manifest_abs");
        fs::path wb = fs::absolute(fixture("withdrawal_charge.wbk.json"));
        fs::path bind = fs::absolute(fixture("withdrawal_charge.bindings.json"));
        write_manifest(s.dir / "m.json", std::string("{\"entries\": [{\"workbook_path\": \"") + wb.string() +
                                             "\", \"bindings_path\": \"" + bind.string() +
                                             "\", \"policies\": [\"P001\"]}]}");
        BatchManifest m = load_manifest((s.dir / "m.json").string());
        CHECK(m.entries[0].workbook_path == wb.string());
        CHECK(m.jobs == 1);  // default
    }
    SECTION("malformed manifests are rejected with the entry named") {
        Scratch s("manifest_bad");
        auto loads = [&](const std::string& body) {
            write_manifest(s.dir / "m.json", body);
            return load_manifest((s.dir / "m.json").string());
        };
        CHECK_THROWS_AS(loads("{not json"), ManifestError);
        CHECK_THROWS_AS(loads("[]"), ManifestError);
        CHECK_THROWS_AS(loads(R"x({"entries": []})x"), ManifestError);
        CHECK_THROWS_AS(loads(R"x({"jobs": 0, "entries": [{}]})x"), ManifestError);
        CHECK_THROWS_AS(loads(R"x({"jobs": "2", "entries": [{}]})x"), ManifestError);
        CHECK_THROWS_AS(loads(R"x({"out_dir": 3, "entries": [{}]})x"), ManifestError);
        CHECK_THROWS_AS(loads(R"x({"entries": [42]})x"), ManifestError);
        CHECK_THROWS_AS(loads(R"x({"entries": [{"bindings_path": "b", "policies": ["P"]}]})x"),
                        ManifestError);
        CHECK_THROWS_AS(loads(R"x({"entries": [{"workbook_path": "w", "policies": ["P"]}]})x"),
                        ManifestError);
        CHECK_THROWS_AS(loads(R"x({"entries": [{"workbook_path": "", "bindings_path": "b", "policies": ["P"]}]})x"),
                        ManifestError);
        // exactly one of policies and policies_file
        CHECK_THROWS_AS(loads(R"x({"entries": [{"workbook_path": "w", "bindings_path": "b"}]})x"),
                        ManifestError);
        CHECK_THROWS_AS(
            loads(R"x({"entries": [{"workbook_path": "w", "bindings_path": "b", "policies": ["P"], "policies_file": "p.txt"}]})x"),
            ManifestError);
        CHECK_THROWS_AS(
            loads(R"x({"entries": [{"workbook_path": "w", "bindings_path": "b", "policies": "P001"}]})x"),
            ManifestError);
        CHECK_THROWS_AS(
            loads(R"x({"entries": [{"workbook_path": "w", "bindings_path": "b", "policies": ["P", ""]}]})x"),
            ManifestError);
        CHECK_THROWS_AS(
            loads(R"x({"entries": [{"workbook_path": "w", "bindings_path": "b", "policies": []}]})x"),
            ManifestError);
        CHECK_THROWS_AS(
            loads(R"x({"entries": [{"workbook_path": "w", "bindings_path": "b", "policies_file": "absent.txt"}]})x"),
            ManifestError);
        try {
            loads(R"x({"entries": [{"workbook_path": "w", "bindings_path": "b", "policies": ["P"]}, {"workbook_path": "w"}]})x");
            FAIL("expected ManifestError");
        } catch (const ManifestError& e) {
            CHECK(std::string(e.what()).find("entries[1]") != std::string::npos);
        }
    }
    SECTION("a policies file of blank lines leaves the list empty") {
        Scratch s("manifest_blank");
        write_text_file((s.dir / "p.txt").string(), "\n\n   \n");
        write_manifest(s.dir / "m.json",
                       R"x({"entries": [{"workbook_path": "w", "bindings_path": "b", "policies_file": "p.txt"}]})x");
        CHECK_THROWS_AS(load_manifest((s.dir / "m.json").string()), ManifestError);
    }
}

TEST_CASE("running the fixture batch") {
    Scratch out("batch_run");
    BatchManifest m = fixture_manifest((out.dir / "out").string());
    BatchRunOptions opts;
    opts.no_timestamp = true;

    SECTION("every task gets a row and rows sort by sheet then policy") {
        BatchSummary s = run_batch(m, opts);
        REQUIRE(s.rows.size() == 5);
        CHECK(summary_to_csv(s) ==
              "cs_sheet,policy_id,status,mismatches,duration_ms\n"
              "annuity.wbk$Calc,P001,PASSED,0,0\n"
              "annuity.wbk$Calc,P002,PASSED,0,0\n"
              "wc.wbk$Main,P001,PASSED,0,0\n"
              "wc.wbk$Main,P002,FAILED,1,0\n"
              "wc.wbk$Main,P003,ERROR,0,0\n");
        CHECK(s.wall_ms == 0);
        CHECK(summary_exit_code(s) == 2);

        // One policy's data problem stayed its own row; its evidence page exists too.
        CHECK(s.totals.at("wc.wbk$Main").passed == 1);
        CHECK(s.totals.at("wc.wbk$Main").failed == 1);
        CHECK(s.totals.at("wc.wbk$Main").error == 1);
        CHECK(s.totals.at("wc.wbk$Main").total() == 3);
        CHECK(s.totals.at("annuity.wbk$Calc").passed == 2);
        for (const auto& row : s.rows)
            CHECK(fs::exists(out.dir / "out" / row.evidence_html));
    }
    SECTION("one worker and eight produce identical bytes") {
        BatchManifest serial = m;
        serial.jobs = 1;
        serial.out_dir = (out.dir / "serial").string();
        BatchManifest parallel = m;
        parallel.jobs = 8;
        parallel.out_dir = (out.dir / "parallel").string();
        BatchSummary a = run_batch(serial, opts);
        BatchSummary b = run_batch(parallel, opts);
        CHECK(summary_to_csv(a) == summary_to_csv(b));
        CHECK(dashboard_html(a, true) == dashboard_html(b, true));
        for (const auto& row : a.rows) {
            fs::path ra = fs::path(serial.out_dir) / row.evidence_html;
            fs::path rb = fs::path(parallel.out_dir) / row.evidence_html;
            CHECK(read_text_file(ra.string()) == read_text_file(rb.string()));
        }
    }
    SECTION("progress fires once per task") {
        std::atomic<int> calls{0};
        BatchRunOptions with_progress = opts;
        with_progress.progress = [&](const ValidationRun&) { ++calls; };
        run_batch(m, with_progress);
        CHECK(calls.load() == 5);
    }
    SECTION("a missing workbook fails the whole batch before any run") {
        BatchManifest bad = m;
        bad.entries[0].workbook_path = (out.dir / "absent.wbk.json").string();
        CHECK_THROWS_AS(run_batch(bad, opts), IoError);
    }
    SECTION("timestamps bring real durations") {
        BatchRunOptions stamped;
        BatchSummary s = run_batch(m, stamped);
        CHECK(s.wall_ms >= 0);
        std::string page = dashboard_html(s, false);
        CHECK(page.find("Generated ") != std::string::npos);
        CHECK(dashboard_html(s, true).find("Generated ") == std::string::npos);
    }
}

TEST_CASE("summaries round-trip through evidence files") {
    Scratch out("batch_rt");
    BatchManifest m = fixture_manifest((out.dir / "out").string());
    BatchRunOptions opts;
    opts.no_timestamp = true;
    BatchSummary original = run_batch(m, opts);
    emit_summary_csv(original, (out.dir / "out" / "summary.csv").string());
    emit_dashboard_html(original, (out.dir / "out").string(), true);

    SECTION("read_runs rebuilds the same rows") {
        BatchSummary rebuilt = read_runs((out.dir / "out").string());
        REQUIRE(rebuilt.rows.size() == original.rows.size());
        for (size_t i = 0; i < original.rows.size(); ++i) {
            CHECK(rebuilt.rows[i].cs_sheet == original.rows[i].cs_sheet);
            CHECK(rebuilt.rows[i].policy_id == original.rows[i].policy_id);
            CHECK(rebuilt.rows[i].status == original.rows[i].status);
            CHECK(rebuilt.rows[i].mismatches == original.rows[i].mismatches);
            CHECK(rebuilt.rows[i].evidence_html == original.rows[i].evidence_html);
        }
        CHECK(summary_to_csv(rebuilt) == summary_to_csv(original));
        CHECK(summary_exit_code(rebuilt) == 2);
    }
    SECTION("an empty or absent directory is an empty summary") {
        CHECK(read_runs((out.dir / "nowhere").string()).rows.empty());
    }
    SECTION("a corrupt evidence file is reported, not skipped") {
        fs::path dir = out.dir / "out" / "wc.wbk$Main";
        write_text_file((dir / "junk.evidence.json").string(), "{broken");
        CHECK_THROWS_AS(read_runs((out.dir / "out").string()), IoError);
    }
}

TEST_CASE("summary csv quotes awkward fields") {
    BatchSummary s;
    SummaryRow row;
    row.cs_sheet = "file,with comma$Tab";
    row.policy_id = "P\"Q";
    row.status = RunStatus::Passed;
    s.rows.push_back(row);
    detail::finalize_summary(s);
    CHECK(summary_to_csv(s) ==
          "cs_sheet,policy_id,status,mismatches,duration_ms\n"
          "\"file,with comma$Tab\",\"P\"\"Q\",PASSED,0,0\n");
}

TEST_CASE("exit codes fold worst-first") {
    auto code_for = [](std::vector<RunStatus> statuses) {
        BatchSummary s;
        for (RunStatus st : statuses) {
            SummaryRow r;
            r.status = st;
            s.rows.push_back(r);
        }
        return summary_exit_code(s);
    };
    CHECK(code_for({}) == 0);
    CHECK(code_for({RunStatus::Passed, RunStatus::Passed}) == 0);
    CHECK(code_for({RunStatus::Passed, RunStatus::Failed}) == 1);
    CHECK(code_for({RunStatus::Failed, RunStatus::Error, RunStatus::Passed}) == 2);
}
