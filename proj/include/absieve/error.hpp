#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace absieve {

enum class errc {
    missing_column,
    duplicate_dataset_name,
    empty_manifest,
    empty_criteria,
    empty_title,
    unknown_dataset,
    unparseable_decision_value,
    io_failure,
    invalid_decision,
    not_a_disagreement,
    transient,
    fatal,
    auth_missing,
    config_invalid,
    length_mismatch,
    empty_matrix,
    zero_support,
    empty_input,
    no_eligible_rows,
    no_comparable_rows,
};

inline std::string_view to_string(errc code) noexcept {
    switch (code) {
        case errc::missing_column: return "MissingColumn";
        case errc::duplicate_dataset_name: return "DuplicateDatasetName";
        case errc::empty_manifest: return "EmptyManifest";
        case errc::empty_criteria: return "EmptyCriteria";
        case errc::empty_title: return "EmptyTitle";
        case errc::unknown_dataset: return "UnknownDataset";
        case errc::unparseable_decision_value: return "UnparseableDecisionValue";
        case errc::io_failure: return "IoFailure";
        case errc::invalid_decision: return "InvalidDecision";
        case errc::not_a_disagreement: return "NotADisagreement";
        case errc::transient: return "Transient";
        case errc::fatal: return "Fatal";
        case errc::auth_missing: return "AuthMissing";
        case errc::config_invalid: return "ConfigInvalid";
        case errc::length_mismatch: return "LengthMismatch";
        case errc::empty_matrix: return "EmptyMatrix";
        case errc::zero_support: return "ZeroSupport";
        case errc::empty_input: return "EmptyInput";
        case errc::no_eligible_rows: return "NoEligibleRows";
        case errc::no_comparable_rows: return "NoComparableRows";
    }
    return "Unknown";
}

/// Base exception for every failure raised by the library. `code()` identifies
/// the failure class; `what()` carries the human-readable detail.
class error : public std::runtime_error {
  public:
    error(errc code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

    [[nodiscard]] errc code() const noexcept { return code_; }

  private:
    errc code_;
};

} // namespace absieve
