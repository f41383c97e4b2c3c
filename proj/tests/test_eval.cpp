#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bvcs/csv.hpp"
#include "bvcs/eval.hpp"
#include "helpers.hpp"
#include "random_workbook.hpp"

using namespace bvcs;
using testutil::fixture;
using testutil::wb_from_text;

namespace {

CellValue eval_single(const std::string& formula) {
    Workbook wb;
    wb.file_name = "t";
    Sheet s;
    s.name = "S";
    Cell c;
    c.address = a1_to_address("A1", "S");
    c.formula_text = formula;
    c.ast = parse_formula(formula, "S");
    s.cells[{1, 1}] = c;
    wb.sheets.push_back(std::move(s));
    EvalCache cache(wb);
    return cache.evaluate(a1_to_address("A1", "S"));
}

Workbook grid_workbook(const std::vector<std::pair<std::string, std::string>>& cells) {
    nlohmann::json doc;
    doc["file"] = "t";
    doc["sheets"] = nlohmann::json::array();
    nlohmann::json js;
    js["name"] = "S";
    js["cells"] = nlohmann::json::object();
    for (const auto& [id, spec] : cells) {
        if (!spec.empty() && spec[0] == '=') js["cells"][id] = {{"f", spec}};
        else if (!spec.empty() && std::isdigit(static_cast<unsigned char>(spec[0]))) {
            js["cells"][id] = {{"v", std::stod(spec)}};
        } else {
            js["cells"][id] = {{"v", spec}};
        }
    }
    doc["sheets"].push_back(js);
    return load_workbook_from_json(doc, "t");
}

CellValue eval_at(const Workbook&, EvalCache& cache, const std::string& a1) {
    return cache.evaluate(a1_to_address(a1, "S"));
}

}  // namespace

TEST_CASE("golden formula corpus") {
    auto rows = read_csv_file(fixture("formula_golden.csv"));
    REQUIRE(rows.size() >= 51);  // header plus at least 50 cases
    REQUIRE(rows[0] == std::vector<std::string>{"formula", "kind", "expected"});

    for (size_t i = 1; i < rows.size(); ++i) {
        REQUIRE(rows[i].size() == 3);
        const std::string& formula = rows[i][0];
        const std::string& kind = rows[i][1];
        const std::string& expected = rows[i][2];
        INFO("row " << i << ": " << formula << " -> " << expected);

        CellValue got = eval_single(formula);
        if (kind == "number") {
            REQUIRE(got.is_number());
            double want = std::stod(expected);
            if (got.number() != want) {
                double denom = std::max(std::abs(want), 1.0);
                REQUIRE(std::abs(got.number() - want) / denom <= 1e-9);
            }
        } else if (kind == "text") {
            REQUIRE(got.is_text());
            CHECK(got.text() == expected);
        } else if (kind == "bool") {
            REQUIRE(got.is_boolean());
            CHECK(got.boolean() == (expected == "TRUE"));
        } else if (kind == "date") {
            REQUIRE(got.is_date());
            auto want = date_from_iso(expected);
            REQUIRE(want.has_value());
            CHECK(got.date() == *want);
        } else if (kind == "error") {
            REQUIRE(got.is_error());
            CHECK(error_code_text(got.error()) == expected);
        } else {
            FAIL("unknown kind '" << kind << "'");
        }
    }
}

TEST_CASE("memoized evaluation matches fresh per-cell evaluation") {
    testutil::RandomWorkbookConfig cfg;
    cfg.max_sheets = 3;
    cfg.max_cells = 80;
    for (unsigned seed = 1; seed <= 60; ++seed) {
        std::mt19937 rng(seed);
        testutil::RandomWorkbook gen(rng, cfg);
        Workbook wb = gen.generate();
        auto shared = recompute_all(wb);
        for (const auto& [addr, value] : shared) {
            EvalCache fresh(wb);
            CellValue alone = fresh.evaluate(addr);
            INFO("seed " << seed << " cell " << address_to_a1(addr, true));
            CHECK(alone == value);
        }
    }
}

TEST_CASE("cycles poison every member and downstream cell, nothing else") {
    Workbook wb = grid_workbook({
        {"A1", "5"},
        {"B1", "=C1+A1"},
        {"C1", "=B1"},
        {"D1", "=C1*2"},
        {"E1", "=A1*2"},
    });

    SECTION("shared cache, any entry order") {
        for (const char* first : {"B1", "C1", "D1"}) {
            EvalCache cache(wb);
            eval_at(wb, cache, first);
            CHECK(eval_at(wb, cache, "B1") == CellValue(ErrorCode::CYCLE));
            CHECK(eval_at(wb, cache, "C1") == CellValue(ErrorCode::CYCLE));
            CHECK(eval_at(wb, cache, "D1") == CellValue(ErrorCode::CYCLE));
            CHECK(eval_at(wb, cache, "E1") == CellValue(10.0));
            CHECK(eval_at(wb, cache, "A1") == CellValue(5.0));
        }
    }
    SECTION("recompute_all terminates and agrees") {
        auto all = recompute_all(wb);
        CHECK(all.at(a1_to_address("B1", "S")) == CellValue(ErrorCode::CYCLE));
        CHECK(all.at(a1_to_address("C1", "S")) == CellValue(ErrorCode::CYCLE));
        CHECK(all.at(a1_to_address("D1", "S")) == CellValue(ErrorCode::CYCLE));
        CHECK(all.at(a1_to_address("E1", "S")) == CellValue(10.0));
    }
    SECTION("self-reference") {
        Workbook self = grid_workbook({{"A1", "=A1"}});
        EvalCache cache(self);
        CHECK(eval_at(self, cache, "A1") == CellValue(ErrorCode::CYCLE));
    }
    SECTION("cycle through a range aggregate") {
        Workbook ranged = grid_workbook({{"A1", "=SUM(A1:A3)"}, {"A2", "1"}});
        EvalCache cache(ranged);
        CHECK(eval_at(ranged, cache, "A1") == CellValue(ErrorCode::CYCLE));
    }
}

TEST_CASE("cycle dominates other errors in propagation") {
    Workbook wb = grid_workbook({
        {"A1", "=1/0"},
        {"B1", "=B1"},
        {"C1", "=A1+B1"},
        {"D1", "=B1+A1"},
    });
    EvalCache cache(wb);
    CHECK(eval_at(wb, cache, "C1") == CellValue(ErrorCode::CYCLE));
    CHECK(eval_at(wb, cache, "D1") == CellValue(ErrorCode::CYCLE));
}

TEST_CASE("first operand error wins when no cycle is involved") {
    Workbook wb = grid_workbook({
        {"A1", "=1/0"},
        {"B1", "=NOPE(1)"},
        {"C1", "=A1+B1"},
        {"D1", "=B1+A1"},
    });
    EvalCache cache(wb);
    CHECK(eval_at(wb, cache, "B1") == CellValue(ErrorCode::NAME));
    CHECK(eval_at(wb, cache, "C1") == CellValue(ErrorCode::DIV0));
    CHECK(eval_at(wb, cache, "D1") == CellValue(ErrorCode::NAME));
}

TEST_CASE("references and coercions") {
    SECTION("blank references act as zero in arithmetic") {
        Workbook wb = grid_workbook({{"B1", "=A1+3"}});
        EvalCache cache(wb);
        CHECK(eval_at(wb, cache, "B1") == CellValue(3.0));
    }
    SECTION("text never silently coerces to a number") {
        Workbook wb = grid_workbook({{"A1", "oops"}, {"B1", "=A1+1"}});
        EvalCache cache(wb);
        CHECK(eval_at(wb, cache, "B1") == CellValue(ErrorCode::VALUE));
    }
    SECTION("a bare range cannot be a cell's value") {
        Workbook wb = grid_workbook({{"A1", "1"}, {"A2", "2"}, {"B1", "=A1:A2"}});
        EvalCache cache(wb);
        CHECK(eval_at(wb, cache, "B1") == CellValue(ErrorCode::REF));
    }
    SECTION("IF does not evaluate the untaken branch") {
        Workbook wb = grid_workbook({{"A1", "1"}, {"C1", "7"}, {"D1", "=1/0"}, {"B1", "=IF(A1>0,C1,D1)"}});
        EvalCache cache(wb);
        CHECK(eval_at(wb, cache, "B1") == CellValue(7.0));
    }
    SECTION("aggregates skip text and blanks inside ranges") {
        Workbook wb = grid_workbook({
            {"A1", "1"}, {"A2", "note"}, {"A4", "3"},
            {"B1", "=SUM(A1:A4)"}, {"B2", "=COUNT(A1:A4)"}, {"B3", "=AVERAGE(A1:A4)"},
        });
        EvalCache cache(wb);
        CHECK(eval_at(wb, cache, "B1") == CellValue(4.0));
        CHECK(eval_at(wb, cache, "B2") == CellValue(2.0));
        CHECK(eval_at(wb, cache, "B3") == CellValue(2.0));
    }
}

TEST_CASE("lookup functions are exact-match only") {
    Workbook wb = grid_workbook({
        {"A1", "alpha"}, {"B1", "1"}, {"C1", "10"},
        {"A2", "beta"},  {"B2", "2"}, {"C2", "20"},
        {"A3", "gamma"}, {"B3", "3"}, {"C3", "30"},
    });

    auto run = [&](const std::string& f) {
        Workbook copy = wb;
        Sheet* s = copy.find_sheet("S");
        Cell c;
        c.address = a1_to_address("E1", "S");
        c.formula_text = f;
        c.ast = parse_formula(f, "S");
        s->cells[{1, 5}] = c;
        EvalCache cache(copy);
        CellValue v = cache.evaluate(c.address);
        return std::pair(v, cache.diagnostics());
    };

    SECTION("VLOOKUP exact hit, case-insensitive text keys") {
        CHECK(run("=VLOOKUP(\"BETA\",A1:C3,3,FALSE)").first == CellValue(20.0));
        CHECK(run("=VLOOKUP(\"beta\",A1:C3,2,0)").first == CellValue(2.0));
    }
    SECTION("VLOOKUP misses report a diagnostic") {
        auto [v, diags] = run("=VLOOKUP(\"delta\",A1:C3,2,FALSE)");
        CHECK(v == CellValue(ErrorCode::VALUE));
        REQUIRE_FALSE(diags.empty());
        CHECK(diags[0].find("no exact match") != std::string::npos);
    }
    SECTION("approximate lookups are refused") {
        auto [v, diags] = run("=VLOOKUP(\"beta\",A1:C3,2,TRUE)");
        CHECK(v == CellValue(ErrorCode::VALUE));
        REQUIRE_FALSE(diags.empty());
        CHECK(diags[0].find("approximate") != std::string::npos);
        CHECK(run("=VLOOKUP(\"beta\",A1:C3,2)").first == CellValue(ErrorCode::VALUE));
    }
    SECTION("VLOOKUP column bounds") {
        CHECK(run("=VLOOKUP(\"beta\",A1:C3,4,FALSE)").first == CellValue(ErrorCode::REF));
        CHECK(run("=VLOOKUP(\"beta\",A1:C3,0,FALSE)").first == CellValue(ErrorCode::REF));
    }
    SECTION("INDEX addresses by one-based row and column") {
        CHECK(run("=INDEX(A1:C3,3,1)").first == CellValue(std::string("gamma")));
        CHECK(run("=INDEX(A1:C3,2,3)").first == CellValue(20.0));
        CHECK(run("=INDEX(A1:C3,4,1)").first == CellValue(ErrorCode::REF));
        CHECK(run("=INDEX(A1:C3,0,1)").first == CellValue(ErrorCode::REF));
    }
    SECTION("MATCH needs type 0 and a one-dimensional vector") {
        CHECK(run("=MATCH(\"gamma\",A1:A3,0)").first == CellValue(3.0));
        CHECK(run("=MATCH(2,B1:B3,0)").first == CellValue(2.0));
        CHECK(run("=MATCH(\"gamma\",A1:A3)").first == CellValue(ErrorCode::VALUE));
        CHECK(run("=MATCH(\"gamma\",A1:A3,1)").first == CellValue(ErrorCode::VALUE));
        CHECK(run("=MATCH(\"beta\",A1:C3,0)").first == CellValue(ErrorCode::REF));
    }
    SECTION("numeric keys match dates by serial") {
        Workbook dwb = wb_from_text(R"x({
          "file": "d", "sheets": [{"name": "S", "cells": {
            "A1": {"v": {"d": "2024-01-15"}}, "B1": {"v": 7},
            "C1": {"f": "=MATCH(DATE(2024,1,15),A1:A1,0)"}
          }}]
        })x");
        EvalCache cache(dwb);
        CHECK(cache.evaluate(a1_to_address("C1", "S")) == CellValue(1.0));
    }
}
