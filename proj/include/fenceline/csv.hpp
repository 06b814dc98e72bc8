#pragma once

// Minimal RFC 4180 reader/writer: quoted fields, doubled quotes, CRLF or LF.

#include "fenceline/errors.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace fenceline::csv {

struct Record {
    std::size_t line; // physical line where the record starts, 1-based
    std::vector<std::string> fields;
};

inline std::vector<Record> parse(std::string_view text) {
    std::vector<Record> out;
    std::size_t line = 1;
    std::size_t i = 0;
    if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
    while (i < text.size()) {
        Record rec{line, {}};
        std::string field;
        bool in_quotes = false;
        bool done = false;
        while (!done) {
            if (i >= text.size()) {
                if (in_quotes) throw ValidationError("csv", "unterminated quote in record at line " + std::to_string(rec.line));
                rec.fields.push_back(std::move(field));
                break;
            }
            const char c = text[i];
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
                    in_quotes = true;
                    ++i;
                    break;
                case ',':
                    rec.fields.push_back(std::move(field));
                    field.clear();
                    ++i;
                    break;
                case '\r':
                    ++i;
                    break;
                case '\n':
                    rec.fields.push_back(std::move(field));
                    ++line;
                    ++i;
                    done = true;
                    break;
                default:
                    field += c;
                    ++i;
            }
        }
        const bool blank = rec.fields.size() == 1 && rec.fields[0].empty();
        if (!blank) out.push_back(std::move(rec));
    }
    return out;
}

inline std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string format_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += escape(fields[i]);
    }
    out += "\r\n";
    return out;
}

} // namespace fenceline::csv
