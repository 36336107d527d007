#pragma once

// Column-labelled result table written as CSV (RFC 4180 quoting) preceded by
// '#'-prefixed "key: value" metadata lines.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cctype>
#include <cstdlib>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pairsim/errors.hpp"

namespace pairsim::io {

struct ResultTable {
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_meta(std::string key, std::string value) { metadata.emplace_back(std::move(key), std::move(value)); }

    void add_row(std::vector<std::string> row)
    {
        if (row.size() != columns.size()) throw std::logic_error("ResultTable: row width does not match columns");
        rows.push_back(std::move(row));
    }

    std::optional<std::string> meta(const std::string& key) const
    {
        for (const auto& [k, v] : metadata) {
            if (k == key) return v;
        }
        return std::nullopt;
    }

    std::size_t column(const std::string& name) const
    {
        for (std::size_t k = 0; k < columns.size(); ++k) {
            if (columns[k] == name) return k;
        }
        throw std::out_of_range("ResultTable: no column " + name);
    }

    bool operator==(const ResultTable&) const = default;
};

/// Shortest round-trippable text for a double; "nan"/"inf" for non-finite.
inline std::string format_number(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    for (int prec = 6; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string format_number(std::uint64_t v) { return std::to_string(v); }

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

inline double parse_number(const std::string& s)
{
    if (s == "nan") return std::nan("");
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || std::isspace(static_cast<unsigned char>(s.front())) || end != s.c_str() + s.size()) {
        throw config_error("not a number: '" + s + "'");
    }
    return v;
}

inline std::string csv_escape(const std::string& field)
{
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline void write_csv(std::ostream& os, const ResultTable& table)
{
    for (const auto& [k, v] : table.metadata) {
        std::string flat = v;
        for (auto& c : flat) {
            if (c == '\n' || c == '\r') c = ' ';
        }
        os << "# " << k << ": " << flat << '\n';
    }
    auto line = [&os](const std::vector<std::string>& fields) {
        for (std::size_t k = 0; k < fields.size(); ++k) {
            if (k) os << ',';
            os << csv_escape(fields[k]);
        }
        os << "\r\n";
    };
    line(table.columns);
    for (const auto& r : table.rows) line(r);
}

inline std::string to_csv(const ResultTable& table)
{
    std::ostringstream os;
    write_csv(os, table);
    return os.str();
}

namespace detail {

// Reads one CSV record; returns false at end of input.
inline bool read_record(std::istream& is, std::vector<std::string>& fields)
{
    fields.clear();
    if (is.peek() == std::char_traits<char>::eof()) return false;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (;;) {
        const int ch = is.get();
        if (ch == std::char_traits<char>::eof()) {
            if (quoted) throw config_error("csv: unterminated quoted field");
            fields.push_back(field);
            return any || !fields.empty();
        }
        any = true;
        const char c = static_cast<char>(ch);
        if (quoted) {
            if (c == '"') {
                if (is.peek() == '"') {
                    field += '"';
                    is.get();
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\r' && is.peek() == '\n') {
            is.get();
            fields.push_back(std::move(field));
            return true;
        } else if (c == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else {
            field += c;
        }
    }
}

} // namespace detail

inline ResultTable read_csv(std::istream& is)
{
    ResultTable table;
    while (is.peek() == '#') {
        std::string line;
        std::getline(is, line);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto colon = line.find(": ");
        if (line.size() < 2 || line[1] != ' ' || colon == std::string::npos) {
            throw config_error("csv: malformed metadata line '" + line + "'");
        }
        table.add_meta(line.substr(2, colon - 2), line.substr(colon + 2));
    }
    std::vector<std::string> fields;
    if (!detail::read_record(is, fields)) throw config_error("csv: missing header row");
    table.columns = fields;
    while (detail::read_record(is, fields)) {
        if (fields.size() == 1 && fields[0].empty() && table.columns.size() != 1) continue;
        if (fields.size() != table.columns.size()) throw config_error("csv: row width does not match header");
        table.rows.push_back(fields);
    }
    return table;
}

inline ResultTable from_csv(const std::string& text)
{
    std::istringstream is(text);
    return read_csv(is);
}

} // namespace pairsim::io
