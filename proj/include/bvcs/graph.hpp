#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bvcs/address.hpp"
#include "bvcs/formula.hpp"
#include "bvcs/workbook.hpp"

namespace bvcs {

/// Cell dependency graph. An edge runs from a referred cell to the cell whose
/// formula refers to it, so in-degree 0 means "depends on nothing" and
/// out-degree 0 means "nothing depends on it".
struct DependencyGraph {
    std::set<CellAddress> nodes;
    std::set<std::pair<CellAddress, CellAddress>> edges;  // (referred, referring)
};

/// Builds the graph for one sheet: a node per nonempty cell of the sheet plus
/// every cell its formulas refer to (cross-sheet refs included), and an edge
/// per distinct reference. Parse problems surface at workbook load, not here.
inline DependencyGraph build_graph(const Workbook& wb, const std::string& sheet_name) {
    const Sheet& sheet = wb.sheet_or_throw(sheet_name);
    DependencyGraph g;
    for (const auto& [key, cell] : sheet.cells) {
        g.nodes.insert(cell.address);
        if (!cell.is_formula()) continue;
        RefSet refs = extract_refs(cell.ast, sheet.name);
        for (const auto& referred : refs.cells) {
            g.nodes.insert(referred);
            g.edges.emplace(referred, cell.address);
        }
    }
    return g;
}

struct Classification {
    std::vector<CellAddress> inputs;
    std::vector<CellAddress> outputs;
};

/// Degree-based classification. Inputs feed other cells but depend on none;
/// outputs depend on other cells but feed none; cells with both kinds of
/// edges are intermediates and cells with neither (labels, display text) are
/// isolated. Both result lists are ordered by (sheet, row, col).
inline Classification classify(const DependencyGraph& g) {
    std::map<CellAddress, std::pair<int, int>> degrees;  // node -> {in, out}
    for (const auto& n : g.nodes) degrees[n];
    for (const auto& [referred, referring] : g.edges) {
        ++degrees[referred].second;
        ++degrees[referring].first;
    }
    Classification out;
    for (const auto& [addr, deg] : degrees) {
        if (deg.first == 0 && deg.second >= 1) out.inputs.push_back(addr);
        else if (deg.second == 0 && deg.first >= 1) out.outputs.push_back(addr);
    }
    return out;
}

}  // namespace bvcs
