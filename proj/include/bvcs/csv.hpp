#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bvcs/errors.hpp"

namespace bvcs {

/// RFC 4180 field quoting: quote when the field contains a comma, a quote,
/// or a line break; embedded quotes double.
inline std::string csv_escape(const std::string& field) {
    bool needs_quoting = field.find_first_of(",\"\r\n") != std::string::npos;
    if (!needs_quoting) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string csv_line(const std::vector<std::string>& fields) {
    std::string out;
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_escape(fields[i]);
    }
    out += '\n';
    return out;
}

inline std::string csv_text(const std::vector<std::vector<std::string>>& rows) {
    std::string out;
    for (const auto& row : rows) out += csv_line(row);
    return out;
}

/// Parses CSV text into rows of fields. Accepts LF and CRLF line endings and
/// quoted fields with doubled quotes; a trailing newline does not produce an
/// empty final row.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;  // distinguishes "" (one empty field) from nothing
    size_t i = 0;
    size_t line = 1;
    auto end_field = [&] {
        row.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
    };
    while (i < text.size()) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    i += 2;
                } else {
                    in_quotes = false;
                    ++i;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
                ++i;
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field.empty() || field_started)
                    throw IoError("csv: stray quote inside unquoted field at line " + std::to_string(line));
                in_quotes = true;
                field_started = true;
                ++i;
                break;
            case ',':
                end_field();
                ++i;
                break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
                [[fallthrough]];
            case '\n':
                end_row();
                ++line;
                ++i;
                break;
            default:
                field += c;
                field_started = true;
                ++i;
                break;
        }
    }
    if (in_quotes) throw IoError("csv: unterminated quoted field at line " + std::to_string(line));
    if (field_started || !field.empty() || !row.empty()) end_row();
    return rows;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("short write to " + path);
}

inline std::vector<std::vector<std::string>> read_csv_file(const std::string& path) {
    return parse_csv(read_text_file(path));
}

}  // namespace bvcs
