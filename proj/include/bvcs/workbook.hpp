#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bvcs/address.hpp"
#include "bvcs/cell_value.hpp"
#include "bvcs/errors.hpp"
#include "bvcs/formula.hpp"

namespace bvcs {

enum class TableDirection { RowWise, ColumnWise };

inline const char* table_direction_text(TableDirection d) {
    return d == TableDirection::RowWise ? "RowWise" : "ColumnWise";
}

/// Explicit table declaration: anchor cell, growth direction, row/column capacity.
struct TableDecl {
    CellAddress anchor;
    TableDirection direction = TableDirection::RowWise;
    int capacity = 0;
};

/// One grid cell: a literal value or a parsed formula, plus optional
/// data-source/format annotations used by schema generation.
struct Cell {
    CellAddress address;
    CellValue literal;                 // meaningful when ast == nullptr
    std::string formula_text;          // original "=..." source
    AstPtr ast;                        // non-null iff this is a formula cell
    std::optional<std::string> data_source;
    std::optional<std::string> format;

    bool is_formula() const { return ast != nullptr; }
    bool is_blank_literal() const { return !is_formula() && literal.is_blank(); }
};

/// Sparse sheet grid, iterated in (row, col) order.
struct Sheet {
    std::string name;
    std::map<std::pair<int, int>, Cell> cells;  // key = {row, col}

    const Cell* find(int col, int row) const {
        auto it = cells.find({row, col});
        return it == cells.end() ? nullptr : &it->second;
    }
};

/// In-memory workbook. Copying one gives an independent grid that shares the
/// immutable formula ASTs, so per-task clones are cheap.
class Workbook {
public:
    std::string file_name;
    std::vector<Sheet> sheets;
    std::vector<TableDecl> table_decls;

    const Sheet* find_sheet(std::string_view name) const {
        for (const auto& s : sheets)
            if (iequals(s.name, name)) return &s;
        return nullptr;
    }

    Sheet* find_sheet(std::string_view name) {
        for (auto& s : sheets)
            if (iequals(s.name, name)) return &s;
        return nullptr;
    }

    const Sheet& sheet_or_throw(std::string_view name) const {
        const Sheet* s = find_sheet(name);
        if (!s) throw UnknownSheet("unknown sheet '" + std::string(name) + "'");
        return *s;
    }
};

/// Reads a cell; positions absent from the sparse grid come back as Blank.
inline Cell get_cell(const Workbook& wb, const CellAddress& addr) {
    const Sheet& sheet = wb.sheet_or_throw(addr.sheet);
    if (const Cell* c = sheet.find(addr.col, addr.row)) return *c;
    Cell blank;
    blank.address = addr;
    return blank;
}

/// Replaces the literal content of a cell. Refuses to touch formula cells:
/// that means the schema or bindings disagree with the workbook.
inline void set_input(Workbook& wb, const CellAddress& addr, const CellValue& value) {
    Sheet* sheet = wb.find_sheet(addr.sheet);
    if (!sheet) throw UnknownSheet("unknown sheet '" + addr.sheet + "'");
    auto key = std::make_pair(addr.row, addr.col);
    auto it = sheet->cells.find(key);
    if (it != sheet->cells.end()) {
        if (it->second.is_formula())
            throw OverwriteFormula("cell " + address_to_a1(addr, true) + " holds a formula and cannot take an input value");
        it->second.literal = value;
        return;
    }
    Cell cell;
    cell.address = CellAddress{sheet->name, addr.col, addr.row};
    cell.literal = value;
    sheet->cells.emplace(key, std::move(cell));
}

namespace detail {

inline CellValue literal_from_json(const nlohmann::json& j, const std::string& where) {
    if (j.is_number()) return CellValue(j.get<double>());
    if (j.is_string()) return CellValue(j.get<std::string>());
    if (j.is_boolean()) return CellValue(j.get<bool>());
    if (j.is_null()) return CellValue::blank();
    if (j.is_object() && j.contains("d") && j.size() == 1 && j["d"].is_string()) {
        auto d = date_from_iso(j["d"].get<std::string>());
        if (!d) throw ParseError(where + ": bad date literal '" + j["d"].get<std::string>() + "'");
        return CellValue(*d);
    }
    throw ParseError(where + ": unsupported literal value " + j.dump());
}

inline nlohmann::ordered_json literal_to_json(const CellValue& v) {
    if (v.is_number()) return v.number();
    if (v.is_text()) return v.text();
    if (v.is_boolean()) return v.boolean();
    if (v.is_date()) return nlohmann::ordered_json{{"d", date_to_iso(v.date())}};
    return nullptr;  // Blank (error values never appear as stored literals)
}

}  // namespace detail

/// Parses the canonical workbook document. Formulas are parsed eagerly and
/// all cross-sheet references are checked against the sheet list.
inline Workbook load_workbook_from_json(const nlohmann::json& doc, const std::string& origin) {
    if (!doc.is_object()) throw ParseError(origin + ": workbook document must be a JSON object");
    Workbook wb;
    if (!doc.contains("file") || !doc["file"].is_string() || doc["file"].get<std::string>().empty())
        throw ParseError(origin + ": missing or empty 'file'");
    wb.file_name = doc["file"].get<std::string>();
    if (!doc.contains("sheets") || !doc["sheets"].is_array())
        throw ParseError(origin + ": missing 'sheets' array");
    if (doc["sheets"].empty()) throw EmptyWorkbook(origin + ": workbook has no sheets");

    // First pass: sheet names, so formulas can be resolved against them.
    for (const auto& js : doc["sheets"]) {
        if (!js.is_object() || !js.contains("name") || !js["name"].is_string())
            throw ParseError(origin + ": each sheet needs a string 'name'");
        std::string name = js["name"].get<std::string>();
        if (name.empty()) throw ParseError(origin + ": empty sheet name");
        if (wb.find_sheet(name))
            throw ParseError(origin + ": duplicate sheet name '" + name + "' (names are case-insensitive)");
        wb.sheets.push_back(Sheet{name, {}});
    }

    for (size_t si = 0; si < doc["sheets"].size(); ++si) {
        const auto& js = doc["sheets"][si];
        Sheet& sheet = wb.sheets[si];
        if (!js.contains("cells")) continue;
        if (!js["cells"].is_object())
            throw ParseError(origin + ": sheet '" + sheet.name + "' cells must be an object");
        for (auto it = js["cells"].begin(); it != js["cells"].end(); ++it) {
            const std::string where = origin + ": " + sheet.name + "!" + it.key();
            CellAddress addr;
            try {
                addr = a1_to_address(it.key(), sheet.name);
            } catch (const MalformedAddress& e) {
                throw ParseError(where + ": " + e.what());
            }
            if (!iequals(addr.sheet, sheet.name))
                throw ParseError(where + ": cell keys may not carry a sheet qualifier");
            const auto& jc = it.value();
            if (!jc.is_object()) throw ParseError(where + ": cell must be an object");
            Cell cell;
            cell.address = addr;
            if (jc.contains("f")) {
                if (jc.contains("v")) throw ParseError(where + ": cell cannot have both 'v' and 'f'");
                if (!jc["f"].is_string()) throw ParseError(where + ": 'f' must be a string");
                cell.formula_text = jc["f"].get<std::string>();
                try {
                    cell.ast = parse_formula(cell.formula_text, sheet.name);
                } catch (const ParseError& e) {
                    throw ParseError(where + ": " + e.what());
                }
            } else if (jc.contains("v")) {
                cell.literal = detail::literal_from_json(jc["v"], where);
            }
            if (jc.contains("src")) {
                if (!jc["src"].is_string()) throw ParseError(where + ": 'src' must be a string");
                cell.data_source = jc["src"].get<std::string>();
            }
            if (jc.contains("fmt")) {
                if (!jc["fmt"].is_string()) throw ParseError(where + ": 'fmt' must be a string");
                cell.format = jc["fmt"].get<std::string>();
            }
            auto key = std::make_pair(addr.row, addr.col);
            if (!sheet.cells.emplace(key, std::move(cell)).second)
                throw ParseError(where + ": duplicate cell address");
        }
    }

    // Cross-sheet references must name sheets of this workbook.
    for (const auto& sheet : wb.sheets) {
        for (const auto& [key, cell] : sheet.cells) {
            if (!cell.is_formula()) continue;
            RefSet refs = extract_refs(cell.ast, sheet.name);
            for (const auto& rs : refs.sheets)
                if (!wb.find_sheet(rs))
                    throw UnresolvedSheet(origin + ": " + address_to_a1(cell.address, true) +
                                          " references unknown sheet '" + rs + "'");
        }
    }

    if (doc.contains("tables")) {
        if (!doc["tables"].is_array()) throw ParseError(origin + ": 'tables' must be an array");
        for (const auto& jt : doc["tables"]) {
            TableDecl t;
            if (!jt.is_object() || !jt.contains("anchor") || !jt.contains("direction") || !jt.contains("capacity") ||
                !jt["anchor"].is_string() || !jt["direction"].is_string())
                throw ParseError(origin + ": table declarations need anchor, direction and capacity");
            std::string anchor = jt["anchor"].get<std::string>();
            try {
                t.anchor = a1_to_address(anchor, wb.sheets.front().name);
            } catch (const MalformedAddress& e) {
                throw ParseError(origin + ": bad table anchor '" + anchor + "': " + e.what());
            }
            if (!wb.find_sheet(t.anchor.sheet))
                throw UnresolvedSheet(origin + ": table anchor names unknown sheet '" + t.anchor.sheet + "'");
            std::string dir = jt["direction"].get<std::string>();
            if (dir == "RowWise") t.direction = TableDirection::RowWise;
            else if (dir == "ColumnWise") t.direction = TableDirection::ColumnWise;
            else throw ParseError(origin + ": table direction must be RowWise or ColumnWise, got '" + dir + "'");
            if (!jt["capacity"].is_number_integer() || jt["capacity"].get<int>() < 1)
                throw ParseError(origin + ": table capacity must be a positive integer");
            t.capacity = jt["capacity"].get<int>();
            wb.table_decls.push_back(std::move(t));
        }
    }
    return wb;
}

inline Workbook load_workbook(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open workbook file: " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return load_workbook_from_json(doc, path.filename().string());
}

/// Canonical serialization: fixed key order, cells sorted by (row, col),
/// shortest round-trip number formatting, two-space indent, trailing newline.
inline nlohmann::ordered_json workbook_to_json(const Workbook& wb) {
    nlohmann::ordered_json doc;
    doc["file"] = wb.file_name;
    doc["sheets"] = nlohmann::ordered_json::array();
    for (const auto& sheet : wb.sheets) {
        nlohmann::ordered_json js;
        js["name"] = sheet.name;
        nlohmann::ordered_json cells = nlohmann::ordered_json::object();
        for (const auto& [key, cell] : sheet.cells) {
            nlohmann::ordered_json jc = nlohmann::ordered_json::object();
            if (cell.is_formula()) {
                jc["f"] = cell.formula_text;
            } else if (!cell.literal.is_blank()) {
                jc["v"] = detail::literal_to_json(cell.literal);
            }
            if (cell.data_source) jc["src"] = *cell.data_source;
            if (cell.format) jc["fmt"] = *cell.format;
            cells[address_to_a1(cell.address)] = std::move(jc);
        }
        js["cells"] = std::move(cells);
        doc["sheets"].push_back(std::move(js));
    }
    if (!wb.table_decls.empty()) {
        doc["tables"] = nlohmann::ordered_json::array();
        for (const auto& t : wb.table_decls) {
            doc["tables"].push_back({{"anchor", address_to_a1(t.anchor, true)},
                                     {"direction", table_direction_text(t.direction)},
                                     {"capacity", t.capacity}});
        }
    }
    return doc;
}

inline std::string serialize_workbook(const Workbook& wb) {
    return workbook_to_json(wb).dump(2) + "\n";
}

inline void save_workbook(const Workbook& wb, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write workbook file: " + path.string());
    out << serialize_workbook(wb);
}

}  // namespace bvcs
