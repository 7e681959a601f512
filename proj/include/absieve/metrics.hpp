#pragma once

#include "absieve/decision.hpp"
#include "absieve/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace absieve {

/// 2x2 agreement table with Included as the positive class. Rows where either
/// side is missing, Unparseable or Error are tallied in `dropped` only.
struct ConfusionMatrix {
    std::uint64_t tp = 0;  // truth Included, predicted Included
    std::uint64_t fn = 0;  // truth Included, predicted Excluded
    std::uint64_t fp = 0;  // truth Excluded, predicted Included
    std::uint64_t tn = 0;  // truth Excluded, predicted Excluded
    std::uint64_t dropped = 0;

    [[nodiscard]] std::uint64_t n() const noexcept { return tp + fn + fp + tn; }
    [[nodiscard]] std::uint64_t truth_included() const noexcept { return tp + fn; }
    [[nodiscard]] std::uint64_t truth_excluded() const noexcept { return fp + tn; }

    bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion_matrix(std::span<const std::optional<Decision>> truth,
                                        std::span<const std::optional<Decision>> predicted) {
    if (truth.size() != predicted.size())
        throw error(errc::length_mismatch,
                    std::to_string(truth.size()) + " truth vs " + std::to_string(predicted.size()) + " predicted");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto& t = truth[i];
        const auto& p = predicted[i];
        if (!t || !p || !is_label(*t) || !is_label(*p)) {
            ++cm.dropped;
            continue;
        }
        if (*t == Decision::Included) (*p == Decision::Included ? cm.tp : cm.fn)++;
        else (*p == Decision::Included ? cm.fp : cm.tn)++;
    }
    return cm;
}

inline ConfusionMatrix confusion_matrix(std::span<const Decision> truth, std::span<const Decision> predicted) {
    std::vector<std::optional<Decision>> t(truth.begin(), truth.end());
    std::vector<std::optional<Decision>> p(predicted.begin(), predicted.end());
    return confusion_matrix(std::span<const std::optional<Decision>>(t), std::span<const std::optional<Decision>>(p));
}

/// Absolute agreement, (tp + tn) / n.
inline double accuracy(const ConfusionMatrix& cm) {
    if (cm.n() == 0) throw error(errc::empty_matrix, "accuracy of an empty matrix");
    return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.n());
}

/// Recall of one true class: tp/(tp+fn) for Included, tn/(tn+fp) for Excluded.
inline double sensitivity(const ConfusionMatrix& cm, Decision cls) {
    if (cls == Decision::Included) {
        if (cm.truth_included() == 0) throw error(errc::zero_support, "no truly included rows");
        return static_cast<double>(cm.tp) / static_cast<double>(cm.truth_included());
    }
    if (cls == Decision::Excluded) {
        if (cm.truth_excluded() == 0) throw error(errc::zero_support, "no truly excluded rows");
        return static_cast<double>(cm.tn) / static_cast<double>(cm.truth_excluded());
    }
    throw error(errc::invalid_decision, "sensitivity is defined for included/excluded only");
}

/// Cohen's kappa. Returns nullopt when chance agreement is 1, which happens
/// exactly when both raters use one and the same class throughout. The
/// degenerate test is done on integer marginals so it is exact.
inline std::optional<double> cohens_kappa(const ConfusionMatrix& cm) {
    const auto n = cm.n();
    if (n == 0) throw error(errc::empty_matrix, "kappa of an empty matrix");
    const auto chance_num = cm.truth_included() * (cm.tp + cm.fp) + cm.truth_excluded() * (cm.fn + cm.tn);
    const auto n2 = n * n;
    if (chance_num == n2) return std::nullopt;
    const double nd = static_cast<double>(n);
    const double p_o = static_cast<double>(cm.tp + cm.tn) / nd;
    const double p_e = static_cast<double>(chance_num) / static_cast<double>(n2);
    return (p_o - p_e) / (1.0 - p_e);
}

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
    /// Set when any of the three ratios hit 0/0 and was reported as 0.
    bool zero_division = false;
};

struct ClassificationReport {
    ClassScores included;
    ClassScores excluded;
    ClassScores macro_avg;
    ClassScores weighted_avg;
    double accuracy = 0.0;
    [[nodiscard]] bool zero_division() const noexcept { return included.zero_division || excluded.zero_division; }
};

namespace detail {

inline double ratio_or_zero(std::uint64_t num, std::uint64_t den, bool& flag) {
    if (den == 0) {
        flag = true;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

inline ClassScores class_scores(std::uint64_t hits, std::uint64_t predicted, std::uint64_t support) {
    ClassScores s;
    s.support = support;
    s.precision = ratio_or_zero(hits, predicted, s.zero_division);
    s.recall = ratio_or_zero(hits, support, s.zero_division);
    if (s.precision + s.recall == 0.0) {
        s.f1 = 0.0;
    } else {
        s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    }
    return s;
}

} // namespace detail

/// Per-class precision/recall/F1/support with macro and support-weighted
/// averages over the two classes. 0/0 ratios are reported as 0 and flagged.
inline ClassificationReport classification_report(const ConfusionMatrix& cm) {
    if (cm.n() == 0) throw error(errc::empty_matrix, "classification report of an empty matrix");
    ClassificationReport r;
    r.included = detail::class_scores(cm.tp, cm.tp + cm.fp, cm.truth_included());
    r.excluded = detail::class_scores(cm.tn, cm.tn + cm.fn, cm.truth_excluded());
    r.accuracy = accuracy(cm);

    const double n = static_cast<double>(cm.n());
    const double wi = static_cast<double>(r.included.support) / n;
    const double we = static_cast<double>(r.excluded.support) / n;
    r.macro_avg = {(r.included.precision + r.excluded.precision) / 2.0, (r.included.recall + r.excluded.recall) / 2.0,
                   (r.included.f1 + r.excluded.f1) / 2.0, cm.n(), r.zero_division()};
    r.weighted_avg = {wi * r.included.precision + we * r.excluded.precision,
                      wi * r.included.recall + we * r.excluded.recall, wi * r.included.f1 + we * r.excluded.f1, cm.n(),
                      r.zero_division()};
    return r;
}

struct DatasetMetrics {
    std::string dataset_name;
    ConfusionMatrix confusion;
    std::uint64_t n = 0;
    std::uint64_t n_included = 0;
    double accuracy = 0.0;
    std::optional<double> sensitivity_included;
    std::optional<double> sensitivity_excluded;
    std::optional<double> kappa;
    /// Agreement between two other columns (typically the two human reviewers).
    std::optional<double> kappa_reference;
    ClassificationReport report;
};

inline DatasetMetrics evaluate(std::string name, const ConfusionMatrix& cm) {
    if (cm.n() == 0) throw error(errc::no_comparable_rows, name);
    DatasetMetrics m;
    m.dataset_name = std::move(name);
    m.confusion = cm;
    m.n = cm.n();
    m.n_included = cm.truth_included();
    m.accuracy = accuracy(cm);
    if (cm.truth_included() > 0) m.sensitivity_included = sensitivity(cm, Decision::Included);
    if (cm.truth_excluded() > 0) m.sensitivity_excluded = sensitivity(cm, Decision::Excluded);
    m.kappa = cohens_kappa(cm);
    m.report = classification_report(cm);
    return m;
}

inline constexpr std::string_view weighting_note =
    "each metric is averaged over datasets with weight n_dataset / sum(n), where n counts comparable rows; "
    "sensitivities average over the datasets where they are defined; kappa is not aggregated";

struct WeightedSummary {
    std::uint64_t n = 0;
    double accuracy = 0.0;
    std::optional<double> sensitivity_included;
    std::optional<double> sensitivity_excluded;
};

/// Size-weighted mean of the per-dataset metrics. Kappa is omitted.
inline WeightedSummary weighted_summary(std::span<const DatasetMetrics> rows) {
    if (rows.empty()) throw error(errc::empty_input, "weighted summary of no datasets");
    WeightedSummary s;
    double acc = 0.0, si = 0.0, se = 0.0;
    std::uint64_t wi = 0, we = 0;
    for (const auto& r : rows) {
        s.n += r.n;
        acc += static_cast<double>(r.n) * r.accuracy;
        if (r.sensitivity_included) {
            si += static_cast<double>(r.n) * *r.sensitivity_included;
            wi += r.n;
        }
        if (r.sensitivity_excluded) {
            se += static_cast<double>(r.n) * *r.sensitivity_excluded;
            we += r.n;
        }
    }
    if (s.n == 0) throw error(errc::empty_input, "weighted summary over zero rows");
    s.accuracy = acc / static_cast<double>(s.n);
    if (wi) s.sensitivity_included = si / static_cast<double>(wi);
    if (we) s.sensitivity_excluded = se / static_cast<double>(we);
    return s;
}

// ---- output formats -------------------------------------------------------

inline std::string format_ratio(std::optional<double> v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return buf;
}

inline nlohmann::json to_json(const ClassScores& s) {
    return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support},
            {"zero_division", s.zero_division}};
}

inline nlohmann::json to_json(const DatasetMetrics& m) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"dataset", m.dataset_name},
            {"n", m.n},
            {"n_included", m.n_included},
            {"accuracy", m.accuracy},
            {"sensitivity_included", opt(m.sensitivity_included)},
            {"sensitivity_excluded", opt(m.sensitivity_excluded)},
            {"kappa", opt(m.kappa)},
            {"kappa_reference", opt(m.kappa_reference)},
            {"confusion",
             {{"tp", m.confusion.tp}, {"fn", m.confusion.fn}, {"fp", m.confusion.fp}, {"tn", m.confusion.tn},
              {"dropped", m.confusion.dropped}}},
            {"classification_report",
             {{"included", to_json(m.report.included)},
              {"excluded", to_json(m.report.excluded)},
              {"macro_avg", to_json(m.report.macro_avg)},
              {"weighted_avg", to_json(m.report.weighted_avg)},
              {"accuracy", m.report.accuracy}}}};
}

inline nlohmann::json to_json(const WeightedSummary& s) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"n", s.n},
            {"accuracy", s.accuracy},
            {"sensitivity_included", opt(s.sensitivity_included)},
            {"sensitivity_excluded", opt(s.sensitivity_excluded)},
            {"weighting", weighting_note}};
}

/// Results table with the same column order as the published per-dataset
/// table, plus comparable-row and dropped-row counts.
inline std::string format_metrics_csv(std::span<const DatasetMetrics> rows, const std::optional<WeightedSummary>& total) {
    std::string out = "Dataset,Accuracy,Sensitivity (Included),Sensitivity (Excluded),Kappa (Human),Kappa (Screen),N,Dropped\n";
    for (const auto& r : rows) {
        out += r.dataset_name + "," + format_ratio(r.accuracy) + "," + format_ratio(r.sensitivity_included) + "," +
               format_ratio(r.sensitivity_excluded) + "," + format_ratio(r.kappa_reference) + "," +
               format_ratio(r.kappa) + "," + std::to_string(r.n) + "," + std::to_string(r.confusion.dropped) + "\n";
    }
    if (total) {
        out += "Total (Weighted Average)," + format_ratio(total->accuracy) + "," +
               format_ratio(total->sensitivity_included) + "," + format_ratio(total->sensitivity_excluded) + ",-,-," +
               std::to_string(total->n) + ",\n";
    }
    return out;
}

inline std::string format_confusion_csv(const ConfusionMatrix& cm) {
    return ",predicted included,predicted excluded\n"
           "truth included," + std::to_string(cm.tp) + "," + std::to_string(cm.fn) + "\n" +
           "truth excluded," + std::to_string(cm.fp) + "," + std::to_string(cm.tn) + "\n";
}

/// 2x2 heatmap: cell shade scales with count, each cell annotated.
inline std::string format_confusion_svg(const ConfusionMatrix& cm, std::string_view title) {
    const std::uint64_t cells[2][2] = {{cm.tp, cm.fn}, {cm.fp, cm.tn}};
    std::uint64_t peak = 1;
    for (const auto& row : cells)
        for (auto v : row) peak = std::max(peak, v);

    auto escape = [](std::string_view s) {
        std::string o;
        for (char c : s) {
            switch (c) {
                case '&': o += "&amp;"; break;
                case '<': o += "&lt;"; break;
                case '>': o += "&gt;"; break;
                case '"': o += "&quot;"; break;
                default: o.push_back(c);
            }
        }
        return o;
    };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"360\" height=\"330\" viewBox=\"0 0 360 330\" "
           "font-family=\"sans-serif\">\n";
    svg += "<text x=\"210\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) + "</text>\n";
    svg += "<text x=\"210\" y=\"48\" text-anchor=\"middle\" font-size=\"12\">Predicted</text>\n";
    svg += "<text x=\"150\" y=\"66\" text-anchor=\"middle\" font-size=\"12\">Included</text>\n";
    svg += "<text x=\"270\" y=\"66\" text-anchor=\"middle\" font-size=\"12\">Excluded</text>\n";
    svg += "<text x=\"20\" y=\"195\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 20 195)\">Truth</text>\n";
    svg += "<text x=\"82\" y=\"135\" text-anchor=\"end\" font-size=\"12\">Included</text>\n";
    svg += "<text x=\"82\" y=\"255\" text-anchor=\"end\" font-size=\"12\">Excluded</text>\n";
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
            const double share = static_cast<double>(cells[r][c]) / static_cast<double>(peak);
            const int shade = static_cast<int>(std::lround(245.0 - share * 200.0));
            char fill[16];
            std::snprintf(fill, sizeof fill, "#%02x%02xff", shade, shade);
            const int x = 90 + c * 120;
            const int y = 75 + r * 120;
            svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) +
                   "\" width=\"120\" height=\"120\" fill=\"" + fill + "\" stroke=\"#333\"/>\n";
            svg += "<text x=\"" + std::to_string(x + 60) + "\" y=\"" + std::to_string(y + 66) +
                   "\" text-anchor=\"middle\" font-size=\"20\" fill=\"" + (share > 0.6 ? "#fff" : "#000") + "\">" +
                   std::to_string(cells[r][c]) + "</text>\n";
        }
    }
    svg += "</svg>\n";
    return svg;
}

/// Plain-text report in the familiar precision/recall/f1/support layout.
inline std::string format_classification_report(const ClassificationReport& r) {
    auto line = [](std::string_view label, const ClassScores& s) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%14s %9.3f %9.3f %9.3f %9llu\n", std::string(label).c_str(), s.precision,
                      s.recall, s.f1, static_cast<unsigned long long>(s.support));
        return std::string(buf);
    };
    char head[128];
    std::snprintf(head, sizeof head, "%14s %9s %9s %9s %9s\n", "", "precision", "recall", "f1-score", "support");
    std::string out = head;
    out += line("included", r.included);
    out += line("excluded", r.excluded);
    char acc[128];
    std::snprintf(acc, sizeof acc, "%14s %9s %9s %9.3f %9llu\n", "accuracy", "", "", r.accuracy,
                  static_cast<unsigned long long>(r.macro_avg.support));
    out += acc;
    out += line("macro avg", r.macro_avg);
    out += line("weighted avg", r.weighted_avg);
    return out;
}

} // namespace absieve
