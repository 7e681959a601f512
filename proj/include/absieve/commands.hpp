#pragma once

// Command implementations behind the `absieve` CLI. Each returns the process
// exit status: 0 success, 1 completed with row errors, 2 usage/config/IO failure.

#include "absieve/config.hpp"
#include "absieve/corpus.hpp"
#include "absieve/csv.hpp"
#include "absieve/metrics.hpp"
#include "absieve/runner.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace absieve {

inline constexpr int exit_ok = 0;
inline constexpr int exit_row_errors = 1;
inline constexpr int exit_failure = 2;

struct ScreenArgs {
    std::optional<std::string> dataset;
    bool resume = false;
    std::optional<std::size_t> limit;
};

struct ExplainArgs {
    std::string dataset;
    std::optional<std::size_t> sample;
    std::vector<std::size_t> rows;
    FollowupMode mode = FollowupMode::Explain;
    std::uint64_t seed = 0;
};

struct EvaluateArgs {
    std::optional<std::string> dataset;  // nullopt: every manifest entry
    std::string truth = "human_decision";
    std::string pred = "decision";
    /// Optional pair of columns whose agreement fills the "Kappa (Human)" column.
    std::optional<std::pair<std::string, std::string>> reference;
};

namespace detail {

inline void write_text(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    csv::write_atomic(path, text);
}

inline std::string money(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "$%.3f", v);
    return buf;
}

inline std::vector<std::string> selected_datasets(const ScreeningManifest& manifest, const std::optional<std::string>& one) {
    if (one) return {manifest.at(*one).dataset_name};
    std::vector<std::string> names;
    for (const auto& e : manifest.entries) names.push_back(e.dataset_name);
    return names;
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const error& e) {
        err << "error: " << e.what() << '\n';
        return exit_failure;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: IoFailure: " << e.what() << '\n';
        return exit_failure;
    }
}

inline std::optional<Decision> column_decision(const csv::Table& t, std::size_t row, std::size_t col,
                                               const std::filesystem::path& path) {
    return decision_from_cell(t.cell(row, col), path.string() + " row " + std::to_string(row));
}

} // namespace detail

inline int cmd_screen(const AppConfig& config, const ScreenArgs& args, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        config.require_paths(true);
        const auto manifest = load_manifest(config.manifest);
        auto backend = config.make_backend();
        if (auto* http = dynamic_cast<HttpBackend*>(backend.get()); http && !http->has_credential())
            throw error(errc::auth_missing, "environment variable " + config.http.api_key_env + " is not set");

        std::vector<DatasetJob> jobs;
        for (const auto& name : detail::selected_datasets(manifest, args.dataset)) {
            DatasetJob job{name, {}, config.results_path(name)};
            if (args.resume && std::filesystem::exists(job.results_path)) {
                job.records = load_dataset(job.results_path, name, manifest);
            } else {
                job.records = load_dataset(config.dataset_path(name), name, manifest);
                for (auto& r : job.records) {
                    r.model_decision.reset();
                    r.explanation.reset();
                    r.reflection.reset();
                }
            }
            jobs.push_back(std::move(job));
        }

        std::filesystem::create_directories(config.output_dir);
        RunOptions options{args.limit, config.output_dir / "run_log.jsonl"};
        const auto report = run_screening(manifest, jobs, *backend, config.runner, options);
        detail::write_text(config.output_dir / "report.json", report.to_json().dump(2) + "\n");

        for (const auto& d : report.datasets) {
            out << d.name << ": total " << d.rows_total << ", screened " << d.rows_screened << ", resumed "
                << d.rows_skipped_resume << ", deferred " << d.rows_deferred << " | included " << d.included_count
                << ", excluded " << d.excluded_count << ", unparseable " << d.unparseable_count << ", error "
                << d.error_count << ", empty abstract " << d.empty_abstract_count << '\n';
        }
        out << "tokens in " << report.input_tokens << ", out " << report.output_tokens << ", cost "
            << detail::money(report.estimated_cost) << ", wall " << report.wall_time.count() << " ms\n";
        return report.error_count() == 0 ? exit_ok : exit_row_errors;
    });
}

inline int cmd_explain(const AppConfig& config, const ExplainArgs& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        config.require_paths(false);
        const auto manifest = load_manifest(config.manifest);
        const auto& entry = manifest.at(args.dataset);
        const auto path = config.results_path(args.dataset);
        if (!std::filesystem::exists(path)) throw error(errc::io_failure, "no results file " + path.string() + "; run screen first");
        auto records = load_dataset(path, args.dataset, manifest);

        std::vector<std::size_t> rows;
        if (!args.rows.empty()) {
            rows = args.rows;
        } else {
            std::vector<std::size_t> eligible;
            for (const auto& r : records)
                if (eligible_for(r, args.mode)) eligible.push_back(r.row_index);
            if (eligible.empty())
                throw error(errc::no_eligible_rows, args.dataset + " has no rows eligible for " +
                                                        (args.mode == FollowupMode::Explain ? "explain" : "reflect"));
            if (args.sample && *args.sample < eligible.size()) {
                std::mt19937_64 rng(args.seed);
                std::sample(eligible.begin(), eligible.end(), std::back_inserter(rows), *args.sample, rng);
            } else {
                rows = eligible;
            }
        }

        auto backend = config.make_backend();
        if (auto* http = dynamic_cast<HttpBackend*>(backend.get()); http && !http->has_credential())
            throw error(errc::auth_missing, "environment variable " + config.http.api_key_env + " is not set");
        RunOptions options{std::nullopt, config.output_dir / "run_log.jsonl"};
        const auto report = run_explanations(records, rows, entry.criteria, args.dataset, *backend, config.runner,
                                             args.mode, options);
        write_results(records, path);
        out << args.dataset << ": requested " << report.requested << ", annotated " << report.annotated
            << ", skipped " << report.skipped << ", errors " << report.errors << '\n';
        return report.errors == 0 ? exit_ok : exit_row_errors;
    });
}

/// Metrics for one results (or dataset) file comparing two named columns.
inline DatasetMetrics evaluate_file(const std::filesystem::path& path, const std::string& name, const EvaluateArgs& args) {
    const auto table = csv::read_file(path);
    auto need = [&](const std::string& col) {
        if (auto c = table.column(col)) return *c;
        throw error(errc::missing_column, "'" + col + "' in " + path.string());
    };
    auto column = [&](std::size_t col) {
        std::vector<std::optional<Decision>> v;
        v.reserve(table.rows.size());
        for (std::size_t r = 0; r < table.rows.size(); ++r) v.push_back(detail::column_decision(table, r, col, path));
        return v;
    };
    const auto truth = column(need(args.truth));
    const auto pred = column(need(args.pred));
    auto metrics = evaluate(name, confusion_matrix(truth, pred));
    if (args.reference) {
        const auto a = column(need(args.reference->first));
        const auto b = column(need(args.reference->second));
        const auto cm = confusion_matrix(a, b);
        if (cm.n() > 0) metrics.kappa_reference = cohens_kappa(cm);
    }
    return metrics;
}

inline int cmd_evaluate(const AppConfig& config, const EvaluateArgs& args, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        config.require_paths(false);
        const auto manifest = load_manifest(config.manifest);
        std::vector<DatasetMetrics> rows;
        for (const auto& name : detail::selected_datasets(manifest, args.dataset)) {
            auto path = config.results_path(name);
            if (!std::filesystem::exists(path)) path = config.dataset_path(name);
            if (!std::filesystem::exists(path)) throw error(errc::io_failure, "no results or dataset file for " + name);
            rows.push_back(evaluate_file(path, name, args));
        }
        const auto total = weighted_summary(rows);

        nlohmann::json doc;
        doc["truth_column"] = args.truth;
        doc["pred_column"] = args.pred;
        doc["datasets"] = nlohmann::json::array();
        for (const auto& m : rows) doc["datasets"].push_back(to_json(m));
        doc["total"] = to_json(total);

        std::filesystem::create_directories(config.output_dir);
        detail::write_text(config.output_dir / "metrics.json", doc.dump(2) + "\n");
        detail::write_text(config.output_dir / "metrics.csv", format_metrics_csv(rows, total));
        for (const auto& m : rows) {
            detail::write_text(config.output_dir / ("confusion_" + m.dataset_name + ".csv"), format_confusion_csv(m.confusion));
            detail::write_text(config.output_dir / ("confusion_" + m.dataset_name + ".svg"),
                               format_confusion_svg(m.confusion, m.dataset_name + ": " + args.truth + " vs " + args.pred));
        }

        for (const auto& m : rows) {
            out << m.dataset_name << ": n " << m.n << " (dropped " << m.confusion.dropped << "), accuracy "
                << format_ratio(m.accuracy) << ", sensitivity included " << format_ratio(m.sensitivity_included)
                << ", sensitivity excluded " << format_ratio(m.sensitivity_excluded) << ", kappa "
                << format_ratio(m.kappa) << '\n'
                << format_classification_report(m.report);
            if (m.report.zero_division()) out << "  warning: a 0/0 ratio was reported as 0\n";
        }
        out << "Total (Weighted Average): accuracy " << format_ratio(total.accuracy) << ", sensitivity included "
            << format_ratio(total.sensitivity_included) << ", sensitivity excluded "
            << format_ratio(total.sensitivity_excluded) << '\n'
            << "  weighting: " << weighting_note << '\n';
        return exit_ok;
    });
}

inline int cmd_estimate(const AppConfig& config, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        config.require_paths(true);
        const auto manifest = load_manifest(config.manifest);
        std::vector<DatasetJob> jobs;
        for (const auto& e : manifest.entries)
            jobs.push_back({e.dataset_name, load_dataset(config.dataset_path(e.dataset_name), e.dataset_name, manifest), {}});
        const auto est = estimate_cost(manifest, jobs, config.runner);

        for (const auto& l : est.datasets) {
            out << l.dataset << ": rows " << l.rows << ", input tokens " << l.input_tokens << ", output tokens "
                << l.output_tokens << ", cost " << detail::money(l.cost) << ", >= " << l.projected_wall_seconds << " s\n";
        }
        out << "total: input tokens " << est.total_input_tokens << ", output tokens " << est.total_output_tokens
            << ", cost " << detail::money(est.cost) << ", >= " << est.projected_wall_seconds << " s (estimate)\n";
        std::filesystem::create_directories(config.output_dir);
        detail::write_text(config.output_dir / "estimate.json", est.to_json().dump(2) + "\n");
        return exit_ok;
    });
}

} // namespace absieve
