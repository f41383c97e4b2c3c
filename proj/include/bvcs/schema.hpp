#pragma once

#include <algorithm>
#include <array>
#include <deque>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "bvcs/csv.hpp"
#include "bvcs/errors.hpp"
#include "bvcs/graph.hpp"
#include "bvcs/log.hpp"
#include "bvcs/workbook.hpp"

namespace bvcs {

enum class FieldType { Input, Output };

inline const char* field_type_text(FieldType t) { return t == FieldType::Input ? "Input" : "Output"; }

/// One schema field. cell_id carries an optional RowWise/ColumnWise suffix
/// marking a table anchor; cs_sheet is "file$tab".
struct SchemaRecord {
    std::string cs_sheet;
    FieldType field_type = FieldType::Input;
    std::string cell_id;
    std::string data_source;
    std::string format;

    bool operator==(const SchemaRecord&) const = default;
};

/// A table anchor with its growth direction and how many member cells it may
/// hold. Derived from an explicit declaration or from a covering range.
struct TablePlan {
    CellAddress anchor;
    TableDirection direction = TableDirection::RowWise;
    int capacity = 0;
};

struct SchemaExtraction {
    std::vector<CellAddress> inputs;    // every classified input, table members included
    std::vector<CellAddress> outputs;
    std::vector<std::string> referred_sheets;  // discovery order, root excluded
    std::vector<SchemaRecord> records;

    // Working state, not serialized and not part of equality.
    std::string root_sheet;
    std::vector<TablePlan> tables;
    std::vector<std::string> warnings;

    friend bool operator==(const SchemaExtraction& a, const SchemaExtraction& b) {
        return a.inputs == b.inputs && a.outputs == b.outputs &&
               a.referred_sheets == b.referred_sheets && a.records == b.records;
    }
};

namespace detail {

inline const std::string kRowWiseSuffix = "RowWise";
inline const std::string kColumnWiseSuffix = "ColumnWise";

/// Splits "B6RowWise" into the bare id and the optional direction suffix.
inline std::pair<std::string, std::optional<TableDirection>> split_cell_id(const std::string& cell_id) {
    if (ends_with(cell_id, kRowWiseSuffix))
        return {cell_id.substr(0, cell_id.size() - kRowWiseSuffix.size()), TableDirection::RowWise};
    if (ends_with(cell_id, kColumnWiseSuffix))
        return {cell_id.substr(0, cell_id.size() - kColumnWiseSuffix.size()), TableDirection::ColumnWise};
    return {cell_id, std::nullopt};
}

inline std::pair<std::string, std::string> split_cs_sheet(const std::string& cs_sheet) {
    size_t pos = cs_sheet.find('$');
    if (pos == std::string::npos || cs_sheet.find('$', pos + 1) != std::string::npos)
        throw SchemaFormatError("cs sheet label must be file$tab with exactly one '$', got '" + cs_sheet + "'");
    return {cs_sheet.substr(0, pos), cs_sheet.substr(pos + 1)};
}

inline std::string make_cs_sheet(const std::string& file, const std::string& tab) {
    std::string label = file + "$" + tab;
    if (std::count(label.begin(), label.end(), '$') != 1)
        throw SchemaFormatError("workbook or sheet name contains '$'; cannot form cs sheet label '" + label + "'");
    return label;
}

/// The address a record points at, table suffix stripped.
inline CellAddress record_address(const SchemaRecord& rec) {
    std::string tab = split_cs_sheet(rec.cs_sheet).second;
    std::string bare = split_cell_id(rec.cell_id).first;
    return a1_to_address(bare, tab);
}

inline bool valid_format(const std::string& format) {
    static const std::regex grammar(R"(Text|Date|(Number|Percentage|Currency)\[[0-9]\])",
                                    std::regex::optimize);
    return std::regex_match(format, grammar);
}

inline void walk_ranges(const AstNode& node, std::vector<const RangeNode*>& out) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, RangeNode>) out.push_back(&n);
            else if constexpr (std::is_same_v<T, UnaryNode>) walk_ranges(*n.operand, out);
            else if constexpr (std::is_same_v<T, BinaryNode>) {
                walk_ranges(*n.lhs, out);
                walk_ranges(*n.rhs, out);
            } else if constexpr (std::is_same_v<T, CallNode>) {
                for (const auto& a : n.args) walk_ranges(*a, out);
            }
        },
        node.node);
}

/// A contiguous run of cells along one row or column.
struct TableRun {
    std::string sheet;  // canonical name
    TableDirection dir = TableDirection::RowWise;
    int line = 0;       // column for RowWise runs, row for ColumnWise runs
    int start = 0;      // first row (RowWise) or column (ColumnWise)
    int length = 0;
    bool declared = false;
    int declared_capacity = 0;

    int end() const { return start + length - 1; }
    CellAddress anchor() const {
        return dir == TableDirection::RowWise ? CellAddress{sheet, line, start}
                                              : CellAddress{sheet, start, line};
    }
    CellAddress member(int offset) const {
        return dir == TableDirection::RowWise ? CellAddress{sheet, line, start + offset}
                                              : CellAddress{sheet, start + offset, line};
    }
    /// Cells the plan owns: up to declared capacity for declarations,
    /// the observed run for heuristic finds.
    int member_count() const { return declared ? declared_capacity : length; }
};

}  // namespace detail

/// Walks sheets breadth-first from the root, following cross-sheet
/// references, and classifies cells over the union of all visited sheets'
/// dependency edges so a cell referenced from another sheet cannot end up
/// input here and output there. Records are skeletal after this step:
/// data_source and format are filled by annotate, table suffixes by
/// detect_tables.
inline SchemaExtraction crawl_referred_sheets(const Workbook& wb, const std::string& root) {
    const Sheet& root_sheet = wb.sheet_or_throw(root);

    std::vector<std::string> order;  // BFS processing order, canonical names
    std::set<std::string> seen;      // lowercase
    std::deque<std::string> queue;
    queue.push_back(root_sheet.name);
    seen.insert(to_lower(root_sheet.name));

    DependencyGraph g;
    while (!queue.empty()) {
        std::string name = std::move(queue.front());
        queue.pop_front();
        order.push_back(name);
        const Sheet& sheet = *wb.find_sheet(name);
        for (const auto& [key, cell] : sheet.cells) {
            g.nodes.insert(cell.address);
            if (!cell.is_formula()) continue;
            RefSet refs = extract_refs(cell.ast, sheet.name);
            for (const auto& referred : refs.cells) {
                g.nodes.insert(referred);
                g.edges.emplace(referred, cell.address);
            }
            for (const auto& rs : refs.sheets) {
                const Sheet* next = wb.find_sheet(rs);
                if (!next) throw UnresolvedSheet("formula in " + address_to_a1(cell.address, true) +
                                                 " refers to unknown sheet '" + rs + "'");
                if (seen.insert(to_lower(next->name)).second) queue.push_back(next->name);
            }
        }
    }

    Classification cls = classify(g);

    SchemaExtraction out;
    out.root_sheet = root_sheet.name;
    out.referred_sheets.assign(order.begin() + 1, order.end());
    for (const auto& sheet_name : order) {
        std::vector<CellAddress> sheet_inputs, sheet_outputs;
        for (const auto& a : cls.inputs)
            if (iequals(a.sheet, sheet_name)) sheet_inputs.push_back(a);
        for (const auto& a : cls.outputs)
            if (iequals(a.sheet, sheet_name)) sheet_outputs.push_back(a);
        std::string cs_sheet = detail::make_cs_sheet(wb.file_name, sheet_name);
        for (const auto& a : sheet_inputs) {
            out.inputs.push_back(a);
            out.records.push_back({cs_sheet, FieldType::Input, address_to_a1(a), "", ""});
        }
        for (const auto& a : sheet_outputs) {
            out.outputs.push_back(a);
            out.records.push_back({cs_sheet, FieldType::Output, address_to_a1(a), "", ""});
        }
    }
    return out;
}

/// Finds input tables and collapses them in the records: explicit workbook
/// declarations first, then maximal runs of 2+ contiguous classified inputs
/// covered by a single row or column range in some formula. Only the anchor
/// record survives, suffixed with the growth direction; the full input list
/// keeps the member cells.
inline SchemaExtraction detect_tables(const Workbook& wb, SchemaExtraction extraction) {
    using detail::TableRun;
    std::vector<std::string> sheets;
    sheets.push_back(extraction.root_sheet);
    sheets.insert(sheets.end(), extraction.referred_sheets.begin(), extraction.referred_sheets.end());

    std::set<CellAddress> input_set(extraction.inputs.begin(), extraction.inputs.end());
    auto on_visited_sheet = [&](const CellAddress& a) {
        for (const auto& s : sheets)
            if (iequals(s, a.sheet)) return true;
        return false;
    };

    std::vector<TableRun> runs;
    for (const auto& decl : wb.table_decls) {
        if (!on_visited_sheet(decl.anchor)) continue;
        TableRun r;
        r.sheet = wb.find_sheet(decl.anchor.sheet)->name;
        r.dir = decl.direction;
        r.declared = true;
        r.declared_capacity = decl.capacity;
        r.length = decl.capacity;
        if (decl.direction == TableDirection::RowWise) {
            r.line = decl.anchor.col;
            r.start = decl.anchor.row;
        } else {
            r.line = decl.anchor.row;
            r.start = decl.anchor.col;
        }
        runs.push_back(r);
    }

    // Heuristic: vector ranges only; a lookup block (2-D range) never implies
    // a table by itself, the declaration escape hatch covers those.
    for (const auto& sheet_name : sheets) {
        const Sheet& sheet = *wb.find_sheet(sheet_name);
        for (const auto& [key, cell] : sheet.cells) {
            if (!cell.is_formula()) continue;
            std::vector<const RangeNode*> ranges;
            detail::walk_ranges(*cell.ast, ranges);
            for (const RangeNode* r : ranges) {
                int width = r->end.col - r->start.col + 1;
                int height = r->end.row - r->start.row + 1;
                bool vertical = width == 1 && height >= 2;
                bool horizontal = height == 1 && width >= 2;
                if (!vertical && !horizontal) continue;
                const Sheet* target = wb.find_sheet(r->start.sheet);
                int line = vertical ? r->start.col : r->start.row;
                int lo = vertical ? r->start.row : r->start.col;
                int hi = vertical ? r->end.row : r->end.col;
                int run_start = 0, run_len = 0;
                auto flush = [&] {
                    if (run_len >= 2) {
                        TableRun run;
                        run.sheet = target->name;
                        run.dir = vertical ? TableDirection::RowWise : TableDirection::ColumnWise;
                        run.line = line;
                        run.start = run_start;
                        run.length = run_len;
                        runs.push_back(run);
                    }
                    run_len = 0;
                };
                for (int pos = lo; pos <= hi; ++pos) {
                    CellAddress member{target->name, vertical ? line : pos, vertical ? pos : line};
                    if (input_set.count(member)) {
                        if (run_len == 0) run_start = pos;
                        ++run_len;
                    } else {
                        flush();
                    }
                }
                flush();
            }
        }
    }

    // Merge overlapping runs along the same line. A declaration overrides
    // whatever the heuristic saw; two disagreeing declarations are an error.
    std::map<std::tuple<std::string, int, int>, std::vector<TableRun>> by_line;  // (sheet lc, dir, line)
    for (const auto& r : runs)
        by_line[{to_lower(r.sheet), static_cast<int>(r.dir), r.line}].push_back(r);

    std::vector<TableRun> merged;
    for (auto& [key, group] : by_line) {
        std::sort(group.begin(), group.end(), [](const TableRun& a, const TableRun& b) {
            if (a.start != b.start) return a.start < b.start;
            return a.length > b.length;
        });
        TableRun cur = group.front();
        auto absorb = [](TableRun& into, const TableRun& next) {
            if (next.declared && into.declared &&
                (next.start != into.start || next.declared_capacity != into.declared_capacity))
                throw ConflictingTable("overlapping table declarations at " +
                                       address_to_a1(into.anchor(), true) + " and " +
                                       address_to_a1(next.anchor(), true));
            if (next.declared && !into.declared) {
                into = next;  // declaration governs anchor and capacity
            } else if (!next.declared && !into.declared) {
                int end = std::max(into.end(), next.end());
                into.start = std::min(into.start, next.start);
                into.length = end - into.start + 1;
            }
            // declared `into` absorbs heuristic `next` unchanged
        };
        for (size_t i = 1; i < group.size(); ++i) {
            const TableRun& next = group[i];
            if (next.start <= cur.end()) absorb(cur, next);
            else {
                merged.push_back(cur);
                cur = next;
            }
        }
        merged.push_back(cur);
    }

    // A cell claimed by both a row table and a column table has no single
    // growth direction.
    std::map<CellAddress, TableDirection> owner;
    for (const auto& r : merged) {
        for (int i = 0; i < r.member_count(); ++i) {
            CellAddress m = r.member(i);
            auto [it, fresh] = owner.emplace(m, r.dir);
            if (!fresh && it->second != r.dir)
                throw ConflictingTable("cell " + address_to_a1(m, true) +
                                       " belongs to both a RowWise and a ColumnWise table");
        }
    }

    extraction.tables.clear();
    std::map<CellAddress, TableDirection> anchors;
    std::set<CellAddress> dropped;
    for (const auto& r : merged) {
        extraction.tables.push_back({r.anchor(), r.dir, r.member_count()});
        anchors.emplace(r.anchor(), r.dir);
        for (int i = 1; i < r.member_count(); ++i) dropped.insert(r.member(i));
    }

    std::vector<SchemaRecord> kept;
    kept.reserve(extraction.records.size());
    for (auto& rec : extraction.records) {
        if (rec.field_type != FieldType::Input) {
            kept.push_back(std::move(rec));
            continue;
        }
        CellAddress addr = detail::record_address(rec);
        if (dropped.count(addr)) continue;
        auto it = anchors.find(addr);
        if (it != anchors.end())
            rec.cell_id += it->second == TableDirection::RowWise ? detail::kRowWiseSuffix
                                                                 : detail::kColumnWiseSuffix;
        kept.push_back(std::move(rec));
    }
    extraction.records = std::move(kept);

    for (const auto& r : merged) {
        if (!r.declared) continue;
        if (!input_set.count(r.anchor()))
            extraction.warnings.push_back("declared table anchor " + address_to_a1(r.anchor(), true) +
                                          " is not a classified input; its fields are absent from the schema");
    }
    return extraction;
}

struct AnnotateOptions {
    bool neighbor_compat = false;  // read a missing data source from the cell to the right
};

/// Fills data_source and format on every record. Outputs always read from the
/// application UI; inputs use the cell's annotation, optionally falling back
/// to a text literal in the right-hand neighbor, and otherwise become
/// "Unspecified" with a warning. Formats fall back to the current literal's
/// kind, also with a warning.
inline SchemaExtraction annotate(const Workbook& wb, SchemaExtraction extraction,
                                 const AnnotateOptions& opts = {}) {
    for (auto& rec : extraction.records) {
        CellAddress addr = detail::record_address(rec);
        const Sheet* sheet = wb.find_sheet(addr.sheet);
        const Cell* cell = sheet ? sheet->find(addr.col, addr.row) : nullptr;

        if (rec.field_type == FieldType::Output) {
            rec.data_source = "App UI";
        } else {
            if (cell && cell->data_source) {
                rec.data_source = *cell->data_source;
            } else if (opts.neighbor_compat) {
                const Cell* right = sheet ? sheet->find(addr.col + 1, addr.row) : nullptr;
                if (right && !right->is_formula() && right->literal.is_text() &&
                    !trim(right->literal.text()).empty())
                    rec.data_source = trim(right->literal.text());
            }
            if (rec.data_source.empty()) {
                rec.data_source = "Unspecified";
                extraction.warnings.push_back(address_to_a1(addr, true) +
                                              ": no data source annotation; recording Unspecified");
            }
        }

        std::string annotated = cell && cell->format ? *cell->format : "";
        if (!annotated.empty() && !detail::valid_format(annotated)) {
            extraction.warnings.push_back(address_to_a1(addr, true) + ": format annotation '" + annotated +
                                          "' is not valid; inferring from the current value");
            annotated.clear();
        }
        if (!annotated.empty()) {
            rec.format = annotated;
        } else {
            const CellValue* lit = cell && !cell->is_formula() ? &cell->literal : nullptr;
            if (lit && lit->is_number()) rec.format = "Number[2]";
            else if (lit && lit->is_date()) rec.format = "Date";
            else rec.format = "Text";
            extraction.warnings.push_back(address_to_a1(addr, true) +
                                          ": no format annotation; inferred " + rec.format);
        }
    }
    return extraction;
}

/// The full extraction pipeline: crawl, collapse tables, annotate.
inline SchemaExtraction generate_schema(const Workbook& wb, const std::string& root,
                                        const AnnotateOptions& opts = {}) {
    return annotate(wb, detect_tables(wb, crawl_referred_sheets(wb, root)), opts);
}

inline const std::array<std::string, 5> kSchemaRowLabels = {"CS Sheet", "Field Type", "Cell ID",
                                                            "Data Source", "Format"};

/// Renders the transposed layout: five labeled rows, one column per record.
inline std::string schema_to_csv_text(const SchemaExtraction& extraction) {
    std::vector<std::vector<std::string>> rows(5);
    for (size_t i = 0; i < 5; ++i) rows[i].push_back(kSchemaRowLabels[i]);
    for (const auto& rec : extraction.records) {
        rows[0].push_back(rec.cs_sheet);
        rows[1].push_back(field_type_text(rec.field_type));
        rows[2].push_back(rec.cell_id);
        rows[3].push_back(rec.data_source);
        rows[4].push_back(rec.format);
    }
    return csv_text(rows);
}

inline void emit_schema(const SchemaExtraction& extraction, const std::string& path) {
    write_text_file(path, schema_to_csv_text(extraction));
}

namespace detail {

inline SchemaRecord validate_schema_record(std::string cs_sheet, const std::string& field_type,
                                           std::string cell_id, std::string data_source,
                                           std::string format, size_t column) {
    auto fail = [&](const std::string& what) {
        throw SchemaFormatError("schema record " + std::to_string(column) + ": " + what);
    };
    SchemaRecord rec;
    try {
        split_cs_sheet(cs_sheet);
    } catch (const SchemaFormatError& e) {
        fail(e.what());
    }
    rec.cs_sheet = std::move(cs_sheet);
    if (field_type == "Input") rec.field_type = FieldType::Input;
    else if (field_type == "Output") rec.field_type = FieldType::Output;
    else fail("field type must be Input or Output, got '" + field_type + "'");
    try {
        a1_to_address(split_cell_id(cell_id).first, "x");
    } catch (const MalformedAddress& e) {
        fail(std::string("bad cell id: ") + e.what());
    }
    rec.cell_id = std::move(cell_id);
    if (data_source.empty()) fail("empty data source");
    if (rec.field_type == FieldType::Output && data_source != "App UI")
        fail("output fields always read from App UI, got '" + data_source + "'");
    rec.data_source = std::move(data_source);
    if (!valid_format(format)) fail("format '" + format + "' does not match the format grammar");
    rec.format = std::move(format);
    return rec;
}

/// Rebuilds the address lists and sheet order a CSV cannot carry explicitly.
/// Table member cells are not represented in the file, so inputs contains
/// anchors only after a parse.
inline SchemaExtraction extraction_from_records(std::vector<SchemaRecord> records) {
    SchemaExtraction out;
    std::set<std::string> seen;
    for (const auto& rec : records) {
        std::string tab = split_cs_sheet(rec.cs_sheet).second;
        CellAddress addr = record_address(rec);
        if (rec.field_type == FieldType::Input) out.inputs.push_back(addr);
        else out.outputs.push_back(addr);
        if (seen.insert(to_lower(tab)).second) {
            if (out.root_sheet.empty()) out.root_sheet = tab;
            else out.referred_sheets.push_back(tab);
        }
        auto dir = split_cell_id(rec.cell_id).second;
        if (dir) out.tables.push_back({addr, *dir, 0});  // capacity lives in the workbook
    }
    out.records = std::move(records);
    return out;
}

}  // namespace detail

/// Reads a schema CSV. The canonical layout is the transposed one emitted by
/// emit_schema; a record-per-row layout with the same labels as a header row
/// is also accepted, detected by the first column of the second row.
inline SchemaExtraction parse_schema_text(const std::string& text) {
    auto rows = parse_csv(text);
    if (rows.empty()) throw SchemaFormatError("schema file is empty");

    // The record-per-row transposition is recognized by its header: the five
    // labels across the first row, and a second row (when present) that opens
    // with a cs-sheet value rather than the "Field Type" label.
    bool row_layout = rows[0].size() == 5 &&
                      std::equal(rows[0].begin(), rows[0].end(), kSchemaRowLabels.begin()) &&
                      (rows.size() < 2 || rows[1].empty() || rows[1][0] != kSchemaRowLabels[1]);
    std::vector<SchemaRecord> records;
    if (!row_layout) {
        if (rows.size() != 5)
            throw SchemaFormatError("expected 5 labeled rows, got " + std::to_string(rows.size()));
        size_t width = rows[0].size();
        for (size_t i = 0; i < 5; ++i) {
            if (rows[i].empty() || rows[i][0] != kSchemaRowLabels[i])
                throw SchemaFormatError("row " + std::to_string(i + 1) + " must be labeled '" +
                                        kSchemaRowLabels[i] + "'");
            if (rows[i].size() != width)
                throw SchemaFormatError("ragged schema: row " + std::to_string(i + 1) + " has " +
                                        std::to_string(rows[i].size()) + " cells, expected " +
                                        std::to_string(width));
        }
        for (size_t c = 1; c < width; ++c)
            records.push_back(detail::validate_schema_record(rows[0][c], rows[1][c], rows[2][c],
                                                             rows[3][c], rows[4][c], c));
    } else {
        for (size_t r = 1; r < rows.size(); ++r) {
            if (rows[r].size() != 5)
                throw SchemaFormatError("ragged schema: line " + std::to_string(r + 1) + " has " +
                                        std::to_string(rows[r].size()) + " cells, expected 5");
            records.push_back(detail::validate_schema_record(rows[r][0], rows[r][1], rows[r][2],
                                                             rows[r][3], rows[r][4], r));
        }
    }
    return detail::extraction_from_records(std::move(records));
}

inline SchemaExtraction parse_schema(const std::string& path) {
    try {
        return parse_schema_text(read_text_file(path));
    } catch (const SchemaFormatError& e) {
        throw SchemaFormatError(path + ": " + e.what());
    }
}

/// Capacity of the table anchored at `anchor`: the declared capacity when a
/// declaration exists, otherwise the farthest a covering vector range extends
/// from the anchor in the growth direction. 1 when nothing covers the anchor.
inline int table_capacity(const Workbook& wb, const CellAddress& anchor, TableDirection dir) {
    for (const auto& decl : wb.table_decls) {
        if (decl.direction == dir && decl.anchor == anchor) return decl.capacity;
    }
    bool vertical = dir == TableDirection::RowWise;
    int line = vertical ? anchor.col : anchor.row;
    int pos = vertical ? anchor.row : anchor.col;
    int best = 1;
    for (const auto& sheet : wb.sheets) {
        for (const auto& [key, cell] : sheet.cells) {
            if (!cell.is_formula()) continue;
            std::vector<const RangeNode*> ranges;
            detail::walk_ranges(*cell.ast, ranges);
            for (const RangeNode* r : ranges) {
                if (!iequals(r->start.sheet, anchor.sheet)) continue;
                int width = r->end.col - r->start.col + 1;
                int height = r->end.row - r->start.row + 1;
                if (vertical) {
                    if (width != 1 || height < 2) continue;
                    if (r->start.col != line || r->start.row > pos || r->end.row < pos) continue;
                    best = std::max(best, r->end.row - pos + 1);
                } else {
                    if (height != 1 || width < 2) continue;
                    if (r->start.row != line || r->start.col > pos || r->end.col < pos) continue;
                    best = std::max(best, r->end.col - pos + 1);
                }
            }
        }
    }
    return best;
}

}  // namespace bvcs
