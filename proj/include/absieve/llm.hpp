#pragma once

#include "absieve/decision.hpp"
#include "absieve/error.hpp"
#include "absieve/prompt.hpp"

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace absieve {

struct CompletionRequest {
    std::string model;
    PromptText prompt;
    double temperature = 0.0;
    int max_output_tokens = 8;
    // Routing context. Not sent over the wire; the mock keys its script on it
    // and the run log records it.
    std::string dataset;
    std::size_t row_index = 0;
};

struct CompletionResult {
    std::string text;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    std::chrono::milliseconds latency{0};
};

/// Failure raised by a backend. Transient failures (429, 5xx, timeouts,
/// connection resets) may be retried by the caller; fatal ones may not.
class backend_error : public error {
  public:
    backend_error(errc code, int status, const std::string& detail) : error(code, detail), status_(status) {}

    [[nodiscard]] int status() const noexcept { return status_; }
    [[nodiscard]] bool retryable() const noexcept { return code() == errc::transient; }

  private:
    int status_;
};

/// Maps an HTTP status to the retry classification. Status 0 stands for "no
/// response" (timeout or connection failure).
inline errc classify_status(int status) noexcept {
    if (status == 0 || status == 408 || status == 429 || status >= 500) return errc::transient;
    return errc::fatal;
}

/// Chat-completion backend. Implementations must tolerate concurrent calls and
/// must not retry internally.
class Backend {
  public:
    virtual ~Backend() = default;
    virtual CompletionResult complete(const CompletionRequest& request) = 0;
};

/// Rough token count, ceil(characters / 4), counting UTF-8 code points.
/// Only used when a backend does not report usage.
inline std::int64_t count_tokens_estimate(std::string_view text) noexcept {
    std::int64_t chars = 0;
    for (unsigned char c : text)
        if ((c & 0xC0) != 0x80) ++chars;
    return (chars + 3) / 4;
}

namespace detail {

inline bool is_word_char(char c) noexcept {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

inline bool contains_word(std::string_view haystack, std::string_view word) noexcept {
    for (auto pos = haystack.find(word); pos != std::string_view::npos; pos = haystack.find(word, pos + 1)) {
        const bool left = pos == 0 || !is_word_char(haystack[pos - 1]);
        const auto end = pos + word.size();
        const bool right = end == haystack.size() || !is_word_char(haystack[end]);
        if (left && right) return true;
    }
    return false;
}

} // namespace detail

/// Strict-then-lenient reading of a decision response. The normalized text
/// (trimmed, lowercased, outer quotes and trailing .,:;! removed) must equal a
/// label; failing that, a label counts only if it is the sole one appearing as
/// a whole word.
inline Decision parse_decision(std::string_view text) {
    std::string s(text);
    for (auto& c : s) c = static_cast<char>((c >= 'A' && c <= 'Z') ? c - 'A' + 'a' : c);

    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; };
    auto is_quote = [](char c) { return c == '"' || c == '\'' || c == '`'; };
    auto is_trailing = [](char c) { return c == '.' || c == ',' || c == ':' || c == ';' || c == '!'; };

    std::string_view v = s;
    for (bool changed = true; changed && !v.empty();) {
        changed = false;
        while (!v.empty() && is_space(v.front())) v.remove_prefix(1), changed = true;
        while (!v.empty() && (is_space(v.back()) || is_trailing(v.back()))) v.remove_suffix(1), changed = true;
        if (!v.empty() && is_quote(v.front())) v.remove_prefix(1), changed = true;
        if (!v.empty() && is_quote(v.back())) v.remove_suffix(1), changed = true;
    }
    if (v == "included") return Decision::Included;
    if (v == "excluded") return Decision::Excluded;

    const bool inc = detail::contains_word(s, "included");
    const bool exc = detail::contains_word(s, "excluded");
    if (inc != exc) return inc ? Decision::Included : Decision::Excluded;
    return Decision::Unparseable;
}

} // namespace absieve
