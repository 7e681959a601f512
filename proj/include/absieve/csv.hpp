#pragma once

// Minimal RFC 4180 reader/writer: quoted fields, doubled quotes, embedded
// delimiters and line breaks, CRLF or LF records, optional UTF-8 BOM.

#include "absieve/error.hpp"

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace absieve::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Case-insensitive, whitespace-trimmed header lookup.
    [[nodiscard]] std::optional<std::size_t> column(std::string_view name) const {
        auto norm = [](std::string_view s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
            std::string out(s);
            for (auto& c : out) c = static_cast<char>((c >= 'A' && c <= 'Z') ? c - 'A' + 'a' : c);
            return out;
        };
        const auto wanted = norm(name);
        for (std::size_t i = 0; i < header.size(); ++i)
            if (norm(header[i]) == wanted) return i;
        return std::nullopt;
    }

    /// Cell accessor tolerant of short rows.
    [[nodiscard]] std::string_view cell(std::size_t row, std::size_t col) const {
        const auto& r = rows[row];
        return col < r.size() ? std::string_view(r[col]) : std::string_view{};
    }
};

inline Table parse(std::string_view text, char delim = ',') {
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        // a bare blank line is not a record
        if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == delim) {
            end_field();
        } else if (c == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_record();
        } else if (c == '\n') {
            end_record();
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (field_started || !field.empty() || !record.empty()) end_record();

    Table table;
    if (records.empty()) return table;
    table.header = std::move(records.front());
    table.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
    return table;
}

inline Table read_file(const std::filesystem::path& path, char delim = ',') {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error(errc::io_failure, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), delim);
}

inline std::string quote(std::string_view field, char delim = ',') {
    const bool needs = field.find_first_of(std::string{delim, '"', '\n', '\r'}) != std::string_view::npos ||
                       (!field.empty() && (field.front() == ' ' || field.back() == ' '));
    if (!needs) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline std::string format_row(const std::vector<std::string>& fields, char delim = ',') {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line.push_back(delim);
        line += quote(fields[i], delim);
    }
    line.push_back('\n');
    return line;
}

inline std::string format(const Table& table, char delim = ',') {
    std::string out = format_row(table.header, delim);
    for (const auto& row : table.rows) out += format_row(row, delim);
    return out;
}

/// Writes `contents` to a sibling temp file and renames it over `path`, so
/// readers only ever see a complete old or complete new file.
inline void write_atomic(const std::filesystem::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw error(errc::io_failure, "cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw error(errc::io_failure, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw error(errc::io_failure, "rename to " + path.string() + ": " + ec.message());
}

} // namespace absieve::csv
