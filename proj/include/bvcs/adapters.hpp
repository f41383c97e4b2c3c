#pragma once

#include <algorithm>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "bvcs/bindings.hpp"
#include "bvcs/csv.hpp"
#include "bvcs/errors.hpp"
#include "bvcs/format.hpp"
#include "bvcs/log.hpp"
#include "bvcs/schema.hpp"

namespace bvcs {

/// What an adapter hands back for one field: one value for scalar fields, an
/// ordered list for table anchors, plus a provenance trail for evidence.
struct ResolvedValue {
    std::vector<CellValue> values;
    std::string provenance;
};

struct ResolveOptions {
    std::string base_dir = ".";  // store paths in bindings resolve against this
};

namespace detail {

/// Bounds concurrent in-flight HTTP requests across all threads.
class HttpLimiter {
public:
    void set_limit(int n) {
        std::lock_guard<std::mutex> lock(m_);
        limit_ = n < 1 ? 1 : n;
        cv_.notify_all();
    }

    class Slot {
    public:
        explicit Slot(HttpLimiter& l) : l_(&l) {
            std::unique_lock<std::mutex> lock(l_->m_);
            l_->cv_.wait(lock, [&] { return l_->inflight_ < l_->limit_; });
            ++l_->inflight_;
        }
        ~Slot() {
            std::lock_guard<std::mutex> lock(l_->m_);
            --l_->inflight_;
            l_->cv_.notify_one();
        }
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;

    private:
        HttpLimiter* l_;
    };

private:
    std::mutex m_;
    std::condition_variable cv_;
    int limit_ = 8;
    int inflight_ = 0;
};

inline HttpLimiter& http_limiter() {
    static HttpLimiter limiter;
    return limiter;
}

inline std::string resolve_store_path(const std::string& base_dir, const std::string& file) {
    std::filesystem::path p(file);
    if (p.is_absolute()) return file;
    return (std::filesystem::path(base_dir) / p).string();
}

inline std::vector<std::vector<std::string>> read_store_csv(const std::string& path) {
    try {
        return read_csv_file(path);
    } catch (const IoError& e) {
        throw SourceUnavailable(e.what());
    }
}

/// Column sort used by order_by: numeric when both keys parse as numbers,
/// lexicographic otherwise, which puts ISO dates in calendar order.
inline bool order_by_less(const std::string& a, const std::string& b) {
    auto x = parse_plain_number(trim(a));
    auto y = parse_plain_number(trim(b));
    if (x && y) return *x < *y;
    return a < b;
}

/// A scalar pulled out of a JSON document, interpreted under the field's
/// format. Strings go through the text parser; numbers are taken as already
/// in engine units (a Percentage field holds the fraction, a Date a serial).
inline CellValue value_from_json_scalar(const nlohmann::json& v, const FormatSpec& fmt,
                                        const std::string& context) {
    if (v.is_null()) throw MissingData(context + ": value is null");
    if (v.is_string()) return parse_value_text(v.get<std::string>(), fmt);
    if (v.is_boolean()) {
        if (fmt.kind == FormatKind::Text) return CellValue(v.get<bool>());
        throw TypeMismatch(context + ": boolean where " + (fmt.numeric() ? "a number" : "a date") +
                           " is expected");
    }
    if (v.is_number()) {
        double n = v.get<double>();
        if (fmt.kind == FormatKind::Date) return CellValue(date_from_serial(n));
        return CellValue(n);
    }
    throw TypeMismatch(context + ": structured value where a scalar is expected");
}

inline ResolvedValue resolve_tabular(const TabularParams& p, const FormatSpec& fmt, bool multi,
                                     const std::string& policy_id, const ResolveOptions& opts) {
    std::string path = resolve_store_path(opts.base_dir, substitute_policy_id(p.file, policy_id));
    auto rows = read_store_csv(path);
    if (rows.empty()) throw SourceUnavailable(path + ": table file is empty");
    const auto& header = rows[0];
    auto column = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw MissingData(path + ": no column '" + name + "'");
        return static_cast<size_t>(it - header.begin());
    };
    std::vector<std::pair<size_t, std::string>> filters;
    std::string where_text;
    for (const auto& [col, raw] : p.where) {
        std::string want = substitute_policy_id(raw, policy_id);
        filters.emplace_back(column(col), want);
        where_text += (where_text.empty() ? "" : ",") + col + "=" + want;
    }
    size_t select = column(p.select);
    size_t order = p.order_by.empty() ? 0 : column(p.order_by);

    std::vector<const std::vector<std::string>*> hits;
    for (size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        bool ok = true;
        for (const auto& [idx, want] : filters) {
            if (idx >= row.size() || trim(row[idx]) != want) {
                ok = false;
                break;
            }
        }
        if (ok) hits.push_back(&row);
    }
    if (!p.order_by.empty())
        std::stable_sort(hits.begin(), hits.end(),
                         [&](const std::vector<std::string>* a, const std::vector<std::string>* b) {
                             std::string ka = order < a->size() ? (*a)[order] : "";
                             std::string kb = order < b->size() ? (*b)[order] : "";
                             return order_by_less(ka, kb);
                         });

    if (hits.empty()) throw MissingData(path + ": no row matches " + where_text);
    if (!multi && hits.size() > 1)
        throw AmbiguousData(path + ": " + std::to_string(hits.size()) + " rows match " + where_text);

    ResolvedValue out;
    for (const auto* row : hits) {
        if (select >= row->size()) throw MissingData(path + ": row is missing the '" + p.select + "' cell");
        out.values.push_back(parse_value_text((*row)[select], fmt));
    }
    out.provenance = "tabular " + path + " where " + where_text + " select " + p.select +
                     (p.order_by.empty() ? "" : " order_by " + p.order_by);
    return out;
}

inline ResolvedValue resolve_config(const ConfigParams& p, const FormatSpec& fmt,
                                    const ResolveOptions& opts) {
    std::string path = resolve_store_path(opts.base_dir, p.file);
    auto rows = read_store_csv(path);
    const std::string* found = nullptr;
    for (size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() < 2) throw SourceUnavailable(path + ": config row " + std::to_string(r + 1) +
                                                    " needs key,value");
        if (trim(row[0]) != p.key) continue;
        if (found) throw AmbiguousData(path + ": key '" + p.key + "' appears more than once");
        found = &row[1];
    }
    if (!found) throw MissingData(path + ": no key '" + p.key + "'");
    ResolvedValue out;
    out.values.push_back(parse_value_text(*found, fmt));
    out.provenance = "config " + path + " key " + p.key;
    return out;
}

inline ResolvedValue resolve_ui_extract(const UiExtractParams& p, const FormatSpec& fmt,
                                        const std::string& policy_id, const ResolveOptions& opts) {
    std::string dir = resolve_store_path(opts.base_dir, substitute_policy_id(p.dir, policy_id));
    std::string path = dir + "/" + policy_id + ".json";
    std::string screen = substitute_policy_id(p.screen, policy_id);
    std::string field = substitute_policy_id(p.field, policy_id);
    if (!std::filesystem::exists(path))
        throw MissingData(path + ": no captured screens for policy " + policy_id);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(path));
    } catch (const IoError& e) {
        throw SourceUnavailable(e.what());
    } catch (const nlohmann::json::parse_error& e) {
        throw SourceUnavailable(path + ": not valid JSON: " + e.what());
    }
    if (!doc.is_object() || !doc.contains(screen))
        throw MissingData(path + ": no screen '" + screen + "'");
    const auto& js = doc[screen];
    if (!js.is_object() || !js.contains(field))
        throw MissingData(path + ": screen '" + screen + "' has no field '" + field + "'");
    ResolvedValue out;
    out.values.push_back(detail::value_from_json_scalar(js[field], fmt, path));
    out.provenance = "ui_extract " + path + " " + screen + "." + field;
    return out;
}

inline ResolvedValue resolve_http(const HttpParams& p, const FormatSpec& fmt,
                                  const std::string& policy_id) {
    std::string url = substitute_policy_id(p.url_template, policy_id);
    if (!starts_with(url, "http://"))
        throw SourceUnavailable(url + ": only http:// endpoints are supported");
    size_t host_start = 7;
    size_t path_start = url.find('/', host_start);
    std::string base = path_start == std::string::npos ? url : url.substr(0, path_start);
    std::string request_path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(base);
    time_t timeout_s = p.timeout_ms / 1000;
    time_t timeout_us = (p.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(timeout_s, timeout_us);
    client.set_read_timeout(timeout_s, timeout_us);

    httplib::Result res;
    for (int attempt = 0; attempt < 3; ++attempt) {  // first try plus two retries
        {
            HttpLimiter::Slot slot(http_limiter());
            res = client.Get(request_path);
        }
        if (res && res->status < 500) break;
        if (attempt < 2) log_debug("retrying GET " + url);
    }
    if (!res) throw SourceUnavailable(url + ": no response after 3 attempts");
    if (res->status == 404) throw MissingData(url + ": 404 for policy " + policy_id);
    if (res->status != 200)
        throw SourceUnavailable(url + ": HTTP " + std::to_string(res->status));

    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw SourceUnavailable(url + ": response is not valid JSON: " + e.what());
    }
    std::string pointer = p.pointer;
    if (pointer.empty() || pointer.front() != '/') pointer = "/" + pointer;
    nlohmann::json value;
    try {
        value = doc.at(nlohmann::json::json_pointer(pointer));
    } catch (const nlohmann::json::exception&) {
        throw MissingData(url + ": nothing at pointer '" + p.pointer + "'");
    }
    ResolvedValue out;
    out.values.push_back(detail::value_from_json_scalar(value, fmt, url));
    out.provenance = "http " + url + " pointer " + p.pointer;
    return out;
}

}  // namespace detail

/// Caps simultaneous HTTP requests across every thread in the process.
inline void set_http_concurrency_limit(int n) { detail::http_limiter().set_limit(n); }

/// Fetches one field's value(s) for a policy. The format string drives value
/// parsing, so a store's "7%" enters the engine as 0.07.
inline ResolvedValue resolve(const Binding& binding, const std::string& format,
                             const std::string& policy_id, const ResolveOptions& opts = {}) {
    FormatSpec fmt = parse_format(format);
    ResolvedValue out;
    switch (binding.adapter) {
        case AdapterKind::Tabular:
            out = detail::resolve_tabular(std::get<TabularParams>(binding.params), fmt, binding.multi,
                                          policy_id, opts);
            break;
        case AdapterKind::Config:
            out = detail::resolve_config(std::get<ConfigParams>(binding.params), fmt, opts);
            break;
        case AdapterKind::UiExtract:
            out = detail::resolve_ui_extract(std::get<UiExtractParams>(binding.params), fmt, policy_id,
                                             opts);
            break;
        case AdapterKind::Http:
            out = detail::resolve_http(std::get<HttpParams>(binding.params), fmt, policy_id);
            break;
    }
    if (!binding.multi && out.values.size() != 1)
        throw AmbiguousData(binding.cell_id + ": scalar field resolved to " +
                            std::to_string(out.values.size()) + " values");
    return out;
}

struct CollectResult {
    std::map<CellAddress, ResolvedValue> inputs;
    std::map<CellAddress, ResolvedValue> pas_outputs;
    std::vector<std::string> issues;
};

/// Resolves every schema field for one policy. Coverage gaps abort up front;
/// a field that fails to resolve becomes an issue and never blocks the other
/// fields.
inline CollectResult collect_policy(const SchemaExtraction& schema, const std::vector<Binding>& bindings,
                                    const std::string& policy_id, const ResolveOptions& opts = {}) {
    std::map<std::pair<std::string, std::string>, const Binding*> by_key;
    for (const auto& b : bindings) by_key[{to_lower(b.cs_sheet), to_lower(b.cell_id)}] = &b;

    std::string gaps;
    for (const auto& rec : schema.records) {
        if (!by_key.count({to_lower(rec.cs_sheet), to_lower(rec.cell_id)}))
            gaps += (gaps.empty() ? "" : ", ") + rec.cs_sheet + " " + rec.cell_id;
    }
    if (!gaps.empty()) throw UnboundField("no binding for: " + gaps);

    CollectResult out;
    for (const auto& rec : schema.records) {
        const Binding& b = *by_key[{to_lower(rec.cs_sheet), to_lower(rec.cell_id)}];
        CellAddress addr = detail::record_address(rec);
        try {
            ResolvedValue v = resolve(b, rec.format, policy_id, opts);
            if (rec.field_type == FieldType::Input) out.inputs.emplace(addr, std::move(v));
            else out.pas_outputs.emplace(addr, std::move(v));
        } catch (const Error& e) {
            out.issues.push_back(rec.cs_sheet + " " + rec.cell_id + ": " + e.what());
        }
    }
    return out;
}

}  // namespace bvcs
