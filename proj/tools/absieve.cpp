#include "absieve/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> sets;
    std::string manifest, data_dir, output_dir, mock_script, base_url, model;
    int max_in_flight = 0, rpm = 0, max_retries = -1;

    void attach(CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "Config file");
        cmd->add_option("--set", sets, "Override any config key: section.key=value");
        cmd->add_option("--manifest", manifest, "Manifest CSV (paths.manifest)");
        cmd->add_option("--data-dir", data_dir, "Directory of <dataset>.csv inputs (paths.data_dir)");
        cmd->add_option("--output-dir", output_dir, "Directory for results and reports (paths.output_dir)");
        cmd->add_option("--mock-script", mock_script, "Use the scripted mock backend (backend.mock_script)");
        cmd->add_option("--base-url", base_url, "Chat-completions server (backend.base_url)");
        cmd->add_option("--model", model, "Model name (backend.model)");
        cmd->add_option("--max-in-flight", max_in_flight, "Concurrent requests (runner.max_in_flight)");
        cmd->add_option("--rpm", rpm, "Requests per minute (runner.requests_per_minute)");
        cmd->add_option("--max-retries", max_retries, "Retries on transient failures (runner.max_retries)");
    }

    absieve::AppConfig load() const {
        absieve::ConfigMap overrides;
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw absieve::error(absieve::errc::config_invalid, "--set expects key=value, got '" + s + "'");
            overrides[s.substr(0, eq)] = s.substr(eq + 1);
        }
        auto put = [&](const char* key, const std::string& v) {
            if (!v.empty()) overrides[key] = v;
        };
        put("paths.manifest", manifest);
        put("paths.data_dir", data_dir);
        put("paths.output_dir", output_dir);
        put("backend.mock_script", mock_script);
        put("backend.base_url", base_url);
        put("backend.model", model);
        if (!mock_script.empty()) overrides["backend.kind"] = "mock";
        else if (!base_url.empty()) overrides["backend.kind"] = "http";
        if (max_in_flight) overrides["runner.max_in_flight"] = std::to_string(max_in_flight);
        if (rpm) overrides["runner.requests_per_minute"] = std::to_string(rpm);
        if (max_retries >= 0) overrides["runner.max_retries"] = std::to_string(max_retries);
        return absieve::AppConfig::load(config_path, overrides);
    }
};

std::vector<std::size_t> parse_rows(const std::string& list) {
    std::vector<std::size_t> rows;
    std::stringstream ss(list);
    for (std::string item; std::getline(ss, item, ',');) {
        if (item.empty()) continue;
        try {
            rows.push_back(static_cast<std::size_t>(std::stoull(item)));
        } catch (const std::exception&) {
            throw absieve::error(absieve::errc::config_invalid, "--rows: bad row index '" + item + "'");
        }
    }
    return rows;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Title/abstract screening with a chat-completion model, plus agreement metrics"};
    app.require_subcommand(1);

    CommonFlags flags;

    auto* screen = app.add_subcommand("screen", "Screen every undecided record");
    flags.attach(screen);
    absieve::ScreenArgs screen_args;
    std::string screen_dataset;
    screen->add_option("--dataset", screen_dataset, "Only this dataset");
    screen->add_flag("--resume", screen_args.resume, "Continue from existing results files");
    std::size_t limit = 0;
    screen->add_option("--limit", limit, "Stop after dispatching this many rows");

    absieve::ExplainArgs explain_args;
    std::string rows_list, mode = "explain";
    std::size_t sample = 0;
    auto add_followup = [&](const char* name, const char* help) {
        auto* cmd = app.add_subcommand(name, help);
        flags.attach(cmd);
        cmd->add_option("--dataset", explain_args.dataset, "Dataset name")->required();
        auto* s = cmd->add_option("--sample", sample, "Pick this many eligible rows at random");
        auto* r = cmd->add_option("--rows", rows_list, "Comma-separated row indices");
        s->excludes(r);
        cmd->add_option("--seed", explain_args.seed, "Sampling seed");
        return cmd;
    };
    auto* explain = add_followup("explain", "Ask the model to explain decisions");
    explain->add_option("--mode", mode, "explain or reflect")->check(CLI::IsMember({"explain", "reflect"}));
    auto* reflect = add_followup("reflect", "Ask the model to reflect on disagreements (explain --mode reflect)");

    auto* evaluate = app.add_subcommand("evaluate", "Agreement metrics between two decision columns");
    flags.attach(evaluate);
    absieve::EvaluateArgs eval_args;
    std::string eval_dataset, reference;
    auto* one = evaluate->add_option("--dataset", eval_dataset, "One dataset");
    auto* all = evaluate->add_flag("--all", "Every dataset in the manifest (default)");
    one->excludes(all);
    evaluate->add_option("--truth", eval_args.truth, "Reference column")->capture_default_str();
    evaluate->add_option("--pred", eval_args.pred, "Compared column")->capture_default_str();
    evaluate->add_option("--reference", reference, "Two columns A,B for the Kappa (Human) column");

    auto* estimate = app.add_subcommand("estimate-cost", "Estimate tokens, cost and time for a full pass");
    flags.attach(estimate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? absieve::exit_ok : absieve::exit_failure;
    }

    try {
        const auto config = flags.load();
        if (screen->parsed()) {
            if (!screen_dataset.empty()) screen_args.dataset = screen_dataset;
            if (limit) screen_args.limit = limit;
            return absieve::cmd_screen(config, screen_args);
        }
        if (explain->parsed() || reflect->parsed()) {
            explain_args.mode = (reflect->parsed() || mode == "reflect") ? absieve::FollowupMode::Reflect
                                                                       : absieve::FollowupMode::Explain;
            if (sample) explain_args.sample = sample;
            explain_args.rows = parse_rows(rows_list);
            return absieve::cmd_explain(config, explain_args);
        }
        if (evaluate->parsed()) {
            if (!eval_dataset.empty()) eval_args.dataset = eval_dataset;
            if (!reference.empty()) {
                const auto comma = reference.find(',');
                if (comma == std::string::npos) throw absieve::error(absieve::errc::config_invalid, "--reference expects A,B");
                eval_args.reference = std::make_pair(reference.substr(0, comma), reference.substr(comma + 1));
            }
            return absieve::cmd_evaluate(config, eval_args);
        }
        if (estimate->parsed()) return absieve::cmd_estimate(config);
    } catch (const absieve::error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return absieve::exit_failure;
    }
    return absieve::exit_failure;
}
