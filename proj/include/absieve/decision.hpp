#pragma once

#include "absieve/error.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace absieve {

enum class Decision { Included, Excluded, Unparseable, Error };

inline std::string_view to_string(Decision d) noexcept {
    switch (d) {
        case Decision::Included: return "included";
        case Decision::Excluded: return "excluded";
        case Decision::Unparseable: return "unparseable";
        case Decision::Error: return "error";
    }
    return "error";
}

/// True for the two labels a screener can actually assign.
constexpr bool is_label(Decision d) noexcept {
    return d == Decision::Included || d == Decision::Excluded;
}

/// Parses the serialized (lowercase) form. Surrounding whitespace and letter
/// case are tolerated so hand-edited ground-truth files load; an empty cell
/// yields nullopt.
inline std::optional<Decision> decision_from_cell(std::string_view cell, std::string_view where) {
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
    if (cell.empty()) return std::nullopt;
    std::string lower(cell);
    for (auto& c : lower) c = static_cast<char>((c >= 'A' && c <= 'Z') ? c - 'A' + 'a' : c);
    if (lower == "included") return Decision::Included;
    if (lower == "excluded") return Decision::Excluded;
    if (lower == "unparseable") return Decision::Unparseable;
    if (lower == "error") return Decision::Error;
    throw error(errc::unparseable_decision_value, std::string(where) + ": '" + std::string(cell) + "'");
}

} // namespace absieve
