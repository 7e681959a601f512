#pragma once

#include "absieve/csv.hpp"
#include "absieve/decision.hpp"
#include "absieve/error.hpp"

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace absieve {

/// Reduces text to printable ASCII: every byte of a multi-byte UTF-8 sequence
/// is dropped (non-ASCII code points are removed, not transliterated), tabs
/// and line breaks become spaces, other control characters are dropped, then
/// whitespace runs collapse to one space and the ends are trimmed.
inline std::string clean_text(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (unsigned char c : raw) {
        if (c >= 0x80 || c == 0x7F) continue;
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
            pending_space = !out.empty();
            continue;
        }
        if (c < 0x20) continue;
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(c));
    }
    return out;
}

struct CriteriaSet {
    std::string inclusion;
    std::string exclusion;
};

struct ManifestEntry {
    std::string dataset_name;
    CriteriaSet criteria;
};

struct ScreeningManifest {
    std::vector<ManifestEntry> entries;

    [[nodiscard]] const ManifestEntry* find(std::string_view name) const {
        for (const auto& e : entries)
            if (e.dataset_name == name) return &e;
        return nullptr;
    }

    [[nodiscard]] const ManifestEntry& at(std::string_view name) const {
        if (const auto* e = find(name)) return *e;
        throw error(errc::unknown_dataset, std::string(name));
    }
};

struct ScreeningRecord {
    std::size_t row_index = 0;
    std::string title;
    std::string abstract;
    std::optional<Decision> human_decision;
    std::optional<Decision> model_decision;
    std::optional<std::string> explanation;
    std::optional<std::string> reflection;

    bool operator==(const ScreeningRecord&) const = default;
};

namespace detail {

inline std::size_t require_column(const csv::Table& t, std::string_view name, const std::filesystem::path& path) {
    if (auto col = t.column(name)) return *col;
    throw error(errc::missing_column, "'" + std::string(name) + "' in " + path.string());
}

inline std::optional<std::string> optional_text(const csv::Table& t, std::optional<std::size_t> col, std::size_t row) {
    if (!col) return std::nullopt;
    auto text = clean_text(t.cell(row, *col));
    if (text.empty()) return std::nullopt;
    return text;
}

} // namespace detail

inline ScreeningManifest parse_manifest(const csv::Table& table, const std::filesystem::path& origin) {
    const auto name_col = detail::require_column(table, "Dataset Name", origin);
    const auto inc_col = detail::require_column(table, "Inclusion Criteria", origin);
    auto exc_col = table.column("Exclusion Criteria");
    if (!exc_col) exc_col = table.column("Excusion Criteria");
    if (!exc_col) throw error(errc::missing_column, "'Exclusion Criteria' in " + origin.string());

    ScreeningManifest manifest;
    std::set<std::string> seen;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        ManifestEntry entry{clean_text(table.cell(r, name_col)),
                            {clean_text(table.cell(r, inc_col)), clean_text(table.cell(r, *exc_col))}};
        const auto where = origin.string() + " row " + std::to_string(r + 1);
        if (entry.dataset_name.empty()) throw error(errc::config_invalid, "empty Dataset Name at " + where);
        if (!seen.insert(entry.dataset_name).second) throw error(errc::duplicate_dataset_name, entry.dataset_name);
        if (entry.criteria.inclusion.empty() || entry.criteria.exclusion.empty())
            throw error(errc::empty_criteria, "dataset " + entry.dataset_name + " at " + where);
        manifest.entries.push_back(std::move(entry));
    }
    if (manifest.entries.empty()) throw error(errc::empty_manifest, origin.string());
    return manifest;
}

inline ScreeningManifest load_manifest(const std::filesystem::path& path) {
    return parse_manifest(csv::read_file(path), path);
}

inline std::vector<ScreeningRecord> parse_dataset(const csv::Table& table, const std::filesystem::path& origin) {
    const auto title_col = detail::require_column(table, "title", origin);
    const auto abstract_col = detail::require_column(table, "abstract", origin);
    const auto human_col = table.column("human_decision");
    const auto decision_col = table.column("decision");
    const auto explanation_col = table.column("explanation");
    const auto reflection_col = table.column("reflection");

    std::vector<ScreeningRecord> records;
    records.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto where = origin.string() + " row " + std::to_string(r);
        ScreeningRecord rec;
        rec.row_index = r;
        rec.title = clean_text(table.cell(r, title_col));
        if (rec.title.empty()) throw error(errc::empty_title, where);
        rec.abstract = clean_text(table.cell(r, abstract_col));
        if (human_col) rec.human_decision = decision_from_cell(table.cell(r, *human_col), where);
        if (decision_col) rec.model_decision = decision_from_cell(table.cell(r, *decision_col), where);
        rec.explanation = detail::optional_text(table, explanation_col, r);
        rec.reflection = detail::optional_text(table, reflection_col, r);
        records.push_back(std::move(rec));
    }
    return records;
}

/// Loads the title/abstract table for `name`, which must be listed in `manifest`.
inline std::vector<ScreeningRecord> load_dataset(const std::filesystem::path& path, std::string_view name,
                                                 const ScreeningManifest& manifest) {
    if (!manifest.find(name)) throw error(errc::unknown_dataset, std::string(name));
    return parse_dataset(csv::read_file(path), path);
}

inline const std::vector<std::string>& results_header() {
    static const std::vector<std::string> header{"title", "abstract", "human_decision", "decision", "explanation",
                                                 "reflection"};
    return header;
}

/// Renders records in row_index order with all six result columns.
inline std::string format_results(const std::vector<ScreeningRecord>& records) {
    std::vector<const ScreeningRecord*> ordered;
    ordered.reserve(records.size());
    for (const auto& r : records) ordered.push_back(&r);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto* a, const auto* b) { return a->row_index < b->row_index; });

    auto dec = [](const std::optional<Decision>& d) { return d ? std::string(to_string(*d)) : std::string{}; };
    std::string out = csv::format_row(results_header());
    for (const auto* r : ordered) {
        out += csv::format_row({r->title, r->abstract, dec(r->human_decision), dec(r->model_decision),
                                r->explanation.value_or(""), r->reflection.value_or("")});
    }
    return out;
}

inline void write_results(const std::vector<ScreeningRecord>& records, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    csv::write_atomic(path, format_results(records));
}

} // namespace absieve
