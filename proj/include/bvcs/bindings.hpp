#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "bvcs/csv.hpp"
#include "bvcs/errors.hpp"
#include "bvcs/schema.hpp"
#include "bvcs/strings.hpp"

namespace bvcs {

enum class AdapterKind { Tabular, Config, UiExtract, Http };

inline const char* adapter_kind_text(AdapterKind k) {
    switch (k) {
        case AdapterKind::Tabular: return "tabular";
        case AdapterKind::Config: return "config";
        case AdapterKind::UiExtract: return "ui_extract";
        case AdapterKind::Http: return "http";
    }
    return "?";
}

/// Declarative row filter over a CSV table: equality on named columns,
/// projection of one column, optional sort.
struct TabularParams {
    std::string file;
    std::vector<std::pair<std::string, std::string>> where;  // column -> expected text
    std::string select;
    std::string order_by;  // empty when unsorted
};

struct ConfigParams {
    std::string file;
    std::string key;
};

struct UiExtractParams {
    std::string dir;
    std::string screen;
    std::string field;
};

struct HttpParams {
    std::string url_template;
    std::string pointer;  // slash-delimited path into the response document
    int timeout_ms = 2000;
};

/// One expert-supplied rule for fetching a schema field's value.
struct Binding {
    std::string cs_sheet;
    std::string cell_id;  // matches the schema record's id, table suffix included
    AdapterKind adapter = AdapterKind::Config;
    bool multi = false;
    std::variant<TabularParams, ConfigParams, UiExtractParams, HttpParams> params;
};

namespace detail {

/// Every {token} in a parameter value must be the one supported placeholder.
inline void check_placeholders(const std::string& value, const std::string& context) {
    size_t open = value.find('{');
    while (open != std::string::npos) {
        size_t close = value.find('}', open + 1);
        if (close == std::string::npos) break;  // a stray brace is literal text
        std::string token = value.substr(open + 1, close - open - 1);
        if (token != "policy_id")
            throw BindingFormatError(context + ": unknown placeholder {" + token +
                                     "} (only {policy_id} is supported)");
        open = value.find('{', close + 1);
    }
}

inline std::string substitute_policy_id(std::string value, const std::string& policy_id) {
    const std::string placeholder = "{policy_id}";
    size_t pos = 0;
    while ((pos = value.find(placeholder, pos)) != std::string::npos) {
        value.replace(pos, placeholder.size(), policy_id);
        pos += policy_id.size();
    }
    return value;
}

inline std::string require_string(const nlohmann::json& obj, const std::string& field,
                                  const std::string& context) {
    if (!obj.contains(field) || !obj[field].is_string() || obj[field].get<std::string>().empty())
        throw BindingFormatError(context + ": missing or empty '" + field + "'");
    return obj[field].get<std::string>();
}

}  // namespace detail

/// Parses the bindings document: a JSON array of
/// {sheet, cell, adapter, multi, params}. Placeholders are validated here so
/// typos fail at load, not mid-batch; config parameters may not use the
/// policy placeholder at all because config lookups are policy-independent.
inline std::vector<Binding> load_bindings_from_json(const nlohmann::json& doc, const std::string& origin) {
    if (!doc.is_array()) throw BindingFormatError(origin + ": bindings document must be a JSON array");
    std::vector<Binding> out;
    std::set<std::pair<std::string, std::string>> seen;
    for (size_t i = 0; i < doc.size(); ++i) {
        const auto& jb = doc[i];
        std::string context = origin + ": binding " + std::to_string(i + 1);
        if (!jb.is_object()) throw BindingFormatError(context + ": must be an object");
        Binding b;
        b.cs_sheet = detail::require_string(jb, "sheet", context);
        try {
            detail::split_cs_sheet(b.cs_sheet);  // validates the file$tab shape
        } catch (const SchemaFormatError& e) {
            throw BindingFormatError(context + ": " + e.what());
        }
        b.cell_id = detail::require_string(jb, "cell", context);
        context += " (" + b.cs_sheet + " " + b.cell_id + ")";
        if (!seen.emplace(to_lower(b.cs_sheet), to_lower(b.cell_id)).second)
            throw BindingFormatError(context + ": duplicate binding for this field");

        std::string adapter = detail::require_string(jb, "adapter", context);
        if (adapter == "tabular") b.adapter = AdapterKind::Tabular;
        else if (adapter == "config") b.adapter = AdapterKind::Config;
        else if (adapter == "ui_extract") b.adapter = AdapterKind::UiExtract;
        else if (adapter == "http") b.adapter = AdapterKind::Http;
        else throw UnknownAdapter(context + ": unknown adapter '" + adapter + "'");

        if (jb.contains("multi")) {
            if (!jb["multi"].is_boolean()) throw BindingFormatError(context + ": 'multi' must be a boolean");
            b.multi = jb["multi"].get<bool>();
        }
        bool suffixed = detail::split_cell_id(b.cell_id).second.has_value();
        if (b.multi != suffixed)
            throw BindingFormatError(context + (suffixed
                                         ? ": table anchors (RowWise/ColumnWise ids) need \"multi\": true"
                                         : ": \"multi\": true is only for table anchor ids"));

        if (!jb.contains("params") || !jb["params"].is_object())
            throw BindingFormatError(context + ": missing 'params' object");
        const auto& jp = jb["params"];
        auto check = [&](const std::string& v) {
            detail::check_placeholders(v, context);
            return v;
        };
        switch (b.adapter) {
            case AdapterKind::Tabular: {
                TabularParams p;
                p.file = check(detail::require_string(jp, "file", context));
                p.select = check(detail::require_string(jp, "select", context));
                if (!jp.contains("where") || !jp["where"].is_object() || jp["where"].empty())
                    throw BindingFormatError(context + ": tabular params need a non-empty 'where' object");
                for (const auto& [col, val] : jp["where"].items()) {
                    if (!val.is_string())
                        throw BindingFormatError(context + ": where values must be strings");
                    p.where.emplace_back(col, check(val.get<std::string>()));
                }
                if (jp.contains("order_by")) {
                    if (!jp["order_by"].is_string())
                        throw BindingFormatError(context + ": 'order_by' must be a string");
                    p.order_by = check(jp["order_by"].get<std::string>());
                }
                b.params = std::move(p);
                break;
            }
            case AdapterKind::Config: {
                ConfigParams p;
                p.file = detail::require_string(jp, "file", context);
                p.key = detail::require_string(jp, "key", context);
                for (const auto& v : {p.file, p.key}) {
                    if (v.find("{policy_id}") != std::string::npos)
                        throw BindingFormatError(context +
                                                 ": config lookups are policy-independent; "
                                                 "{policy_id} is not allowed here");
                    detail::check_placeholders(v, context);
                }
                b.params = std::move(p);
                break;
            }
            case AdapterKind::UiExtract: {
                UiExtractParams p;
                p.dir = check(detail::require_string(jp, "dir", context));
                p.screen = check(detail::require_string(jp, "screen", context));
                p.field = check(detail::require_string(jp, "field", context));
                b.params = std::move(p);
                break;
            }
            case AdapterKind::Http: {
                HttpParams p;
                p.url_template = check(detail::require_string(jp, "url_template", context));
                p.pointer = check(detail::require_string(jp, "pointer", context));
                if (jp.contains("timeout_ms")) {
                    if (!jp["timeout_ms"].is_number_integer() || jp["timeout_ms"].get<int>() < 1)
                        throw BindingFormatError(context + ": 'timeout_ms' must be a positive integer");
                    p.timeout_ms = jp["timeout_ms"].get<int>();
                }
                b.params = std::move(p);
                break;
            }
        }
        out.push_back(std::move(b));
    }
    return out;
}

inline std::vector<Binding> load_bindings(const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw BindingFormatError(path + ": not valid JSON: " + e.what());
    }
    return load_bindings_from_json(doc, path);
}

}  // namespace bvcs
