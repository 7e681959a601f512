#pragma once

#include "absieve/corpus.hpp"
#include "absieve/decision.hpp"
#include "absieve/error.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace absieve {

enum class PromptKind { Decision, Explain, Reflect };

inline std::string_view to_string(PromptKind k) noexcept {
    switch (k) {
        case PromptKind::Decision: return "decision";
        case PromptKind::Explain: return "explain";
        case PromptKind::Reflect: return "reflect";
    }
    return "decision";
}

struct PromptText {
    PromptKind kind = PromptKind::Decision;
    std::string body;
};

namespace templates {

// These must stay byte-identical to templates/*.txt; the golden tests diff them.
inline constexpr std::string_view instructions =
    "Instructions: You are a researcher rigorously screening titles and abstracts of scientific papers for "
    "inclusion or exclusion in a review paper. Use the criteria below to inform your decision. If any exclusion "
    "criteria are met or not all inclusion criteria are met, exclude the article. If all inclusion criteria are "
    "met, include the article. Only type \"included\" or \"excluded\" to indicate your decision. Do not type "
    "anything else.";

inline constexpr std::string_view record_block =
    "Title: {title}\n\nAbstract: {abstract}\n\nInclusion criteria: {inclusion_criteria}\n\n"
    "Exclusion criteria: {exclusion_criteria}";

inline constexpr std::string_view decision_terminator = "Decision:";

inline constexpr std::string_view explain_lead = "Explain your reasoning for the decision given with the information below.";
inline constexpr std::string_view reflect_lead =
    "Explain your reasoning for why the decision given was incorrect with the information below.";

inline constexpr std::string_view decisions_block = "Human decision: {human_decision}\n\nModel decision: {model_decision}";

inline std::string decision() {
    return std::string(instructions) + "\n\n" + std::string(record_block) + "\n\n" + std::string(decision_terminator);
}

inline std::string followup(std::string_view lead) {
    return std::string(lead) + "\n\n" + std::string(instructions) + "\n\n" + std::string(record_block) + "\n\n" +
           std::string(decisions_block);
}

inline std::string for_kind(PromptKind kind) {
    switch (kind) {
        case PromptKind::Decision: return decision();
        case PromptKind::Explain: return followup(explain_lead);
        case PromptKind::Reflect: return followup(reflect_lead);
    }
    return decision();
}

} // namespace templates

struct PromptSlots {
    std::string_view title;
    std::string_view abstract;
    std::string_view inclusion_criteria;
    std::string_view exclusion_criteria;
    std::string_view human_decision;
    std::string_view model_decision;
};

/// Single left-to-right pass over the template. Substituted values are copied
/// verbatim and never rescanned, so braces inside record text survive as-is.
inline std::string render_template(std::string_view tmpl, const PromptSlots& slots) {
    std::string out;
    out.reserve(tmpl.size() + slots.title.size() + slots.abstract.size() + slots.inclusion_criteria.size() +
                slots.exclusion_criteria.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i);
            if (close != std::string_view::npos) {
                const auto name = tmpl.substr(i + 1, close - i - 1);
                const std::string_view* value = nullptr;
                if (name == "title") value = &slots.title;
                else if (name == "abstract") value = &slots.abstract;
                else if (name == "inclusion_criteria") value = &slots.inclusion_criteria;
                else if (name == "exclusion_criteria") value = &slots.exclusion_criteria;
                else if (name == "human_decision") value = &slots.human_decision;
                else if (name == "model_decision") value = &slots.model_decision;
                if (value) {
                    out.append(*value);
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

inline PromptText build_decision_prompt(const ScreeningRecord& record, const CriteriaSet& criteria) {
    return {PromptKind::Decision,
            render_template(templates::decision(),
                            {record.title, record.abstract, criteria.inclusion, criteria.exclusion, {}, {}})};
}

namespace detail {

inline PromptText build_followup(PromptKind kind, const ScreeningRecord& record, const CriteriaSet& criteria,
                                 std::optional<Decision> human, Decision model) {
    if (!is_label(model))
        throw error(errc::invalid_decision, "model decision is '" + std::string(to_string(model)) + "'");
    const std::string_view human_text = human ? to_string(*human) : std::string_view{};
    return {kind, render_template(templates::for_kind(kind), {record.title, record.abstract, criteria.inclusion,
                                                              criteria.exclusion, human_text, to_string(model)})};
}

} // namespace detail

/// Follow-up asking the model to justify `model`. The human decision may be
/// absent, in which case its line is rendered empty.
inline PromptText build_explain_prompt(const ScreeningRecord& record, const CriteriaSet& criteria,
                                       std::optional<Decision> human, Decision model) {
    return detail::build_followup(PromptKind::Explain, record, criteria, human, model);
}

/// Follow-up asking the model why `model` was wrong; only defined for a
/// human/model disagreement.
inline PromptText build_reflect_prompt(const ScreeningRecord& record, const CriteriaSet& criteria, Decision human,
                                       Decision model) {
    if (!is_label(human))
        throw error(errc::invalid_decision, "human decision is '" + std::string(to_string(human)) + "'");
    if (!is_label(model))
        throw error(errc::invalid_decision, "model decision is '" + std::string(to_string(model)) + "'");
    if (human == model) throw error(errc::not_a_disagreement, "both decisions are " + std::string(to_string(model)));
    return detail::build_followup(PromptKind::Reflect, record, criteria, human, model);
}

} // namespace absieve
