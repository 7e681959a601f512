#pragma once

#include "absieve/corpus.hpp"
#include "absieve/decision.hpp"
#include "absieve/error.hpp"
#include "absieve/llm.hpp"
#include "absieve/prompt.hpp"
#include "absieve/rate_limiter.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace absieve {

struct RunConfig {
    std::string model = "gpt-3.5-turbo";
    double temperature = 0.0;
    int max_in_flight = 4;
    int requests_per_minute = 60;
    int max_retries = 5;
    std::chrono::milliseconds backoff_base{1000};
    int checkpoint_every = 1;
    double price_per_1k_input = 0.0;
    double price_per_1k_output = 0.0;
    int decision_max_tokens = 8;
    int followup_max_tokens = 512;

    void validate() const {
        auto bad = [](const std::string& what) { throw error(errc::config_invalid, what); };
        if (model.empty()) bad("model must be non-empty");
        if (!(temperature >= 0.0)) bad("temperature must be >= 0");
        if (max_in_flight < 1) bad("max_in_flight must be positive");
        if (requests_per_minute < 1) bad("requests_per_minute must be positive");
        if (max_retries < 0) bad("max_retries must be >= 0");
        if (backoff_base.count() < 0) bad("backoff_base must be >= 0");
        if (checkpoint_every < 1) bad("checkpoint_every must be positive");
        if (!(price_per_1k_input >= 0.0) || !(price_per_1k_output >= 0.0)) bad("prices must be >= 0");
        if (decision_max_tokens < 1 || followup_max_tokens < 1) bad("max output tokens must be positive");
    }

    [[nodiscard]] double cost(std::int64_t input_tokens, std::int64_t output_tokens) const noexcept {
        return static_cast<double>(input_tokens) / 1000.0 * price_per_1k_input +
               static_cast<double>(output_tokens) / 1000.0 * price_per_1k_output;
    }
};

/// One dataset to screen. `records` is updated in place; when `results_path`
/// is set it doubles as the checkpoint file.
struct DatasetJob {
    std::string name;
    std::vector<ScreeningRecord> records;
    std::filesystem::path results_path;
};

struct RunOptions {
    /// Stop dispatching after this many rows (across all datasets).
    std::optional<std::size_t> row_limit;
    /// JSON-lines call log; appended to when set.
    std::filesystem::path run_log;
};

struct DatasetReport {
    std::string name;
    std::size_t rows_total = 0;
    std::size_t rows_screened = 0;
    std::size_t rows_skipped_resume = 0;
    std::size_t rows_deferred = 0;
    std::size_t included_count = 0;
    std::size_t excluded_count = 0;
    std::size_t unparseable_count = 0;
    std::size_t error_count = 0;
    std::size_t empty_abstract_count = 0;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
};

struct RunReport {
    std::vector<DatasetReport> datasets;
    std::chrono::milliseconds wall_time{0};
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    std::size_t backend_calls = 0;
    double estimated_cost = 0.0;

    [[nodiscard]] std::size_t error_count() const {
        std::size_t n = 0;
        for (const auto& d : datasets) n += d.error_count;
        return n;
    }

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json out;
        out["datasets"] = nlohmann::json::array();
        for (const auto& d : datasets) {
            out["datasets"].push_back({{"dataset", d.name},
                                       {"rows_total", d.rows_total},
                                       {"rows_screened", d.rows_screened},
                                       {"rows_skipped_resume", d.rows_skipped_resume},
                                       {"rows_deferred", d.rows_deferred},
                                       {"included_count", d.included_count},
                                       {"excluded_count", d.excluded_count},
                                       {"unparseable_count", d.unparseable_count},
                                       {"error_count", d.error_count},
                                       {"empty_abstract_count", d.empty_abstract_count},
                                       {"input_tokens", d.input_tokens},
                                       {"output_tokens", d.output_tokens}});
        }
        out["totals"] = {{"wall_time_ms", wall_time.count()},
                         {"input_tokens", input_tokens},
                         {"output_tokens", output_tokens},
                         {"backend_calls", backend_calls},
                         {"estimated_cost", estimated_cost}};
        return out;
    }
};

namespace detail {

struct CallTrace {
    int attempt = 0;
    std::int64_t latency_ms = 0;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    std::string outcome;
};

struct RowOutcome {
    Decision decision = Decision::Error;
    std::string text;
    std::vector<CallTrace> calls;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
};

/// Runs `work(i)` for i in [0, n) on up to `workers` threads and hands each
/// result to `done(i, outcome)` on the calling thread, in completion order.
/// If `done` throws, no new items are started, workers are joined and the
/// exception propagates.
template <class Outcome, class Work, class Done>
void dispatch(std::size_t n, int workers, Work&& work, Done&& done) {
    if (n == 0) return;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex mutex;
    std::condition_variable ready;
    std::deque<std::pair<std::size_t, Outcome>> finished;

    std::vector<std::thread> pool;
    const auto count = static_cast<std::size_t>(std::max(1, workers));
    pool.reserve(std::min(count, n));
    for (std::size_t t = 0; t < std::min(count, n); ++t) {
        pool.emplace_back([&] {
            for (;;) {
                if (stop.load()) return;
                const auto i = next.fetch_add(1);
                if (i >= n) return;
                Outcome out = work(i);
                {
                    std::lock_guard lock(mutex);
                    finished.emplace_back(i, std::move(out));
                }
                ready.notify_one();
            }
        });
    }

    std::exception_ptr failure;
    std::size_t received = 0;
    while (received < n && !failure) {
        std::deque<std::pair<std::size_t, Outcome>> batch;
        {
            std::unique_lock lock(mutex);
            ready.wait(lock, [&] { return !finished.empty(); });
            batch.swap(finished);
        }
        for (auto& [i, out] : batch) {
            ++received;
            try {
                done(i, std::move(out));
            } catch (...) {
                failure = std::current_exception();
                stop = true;
                break;
            }
        }
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

/// Calls the backend once through the limiter, retrying transient failures
/// with backoff while `retries_left` allows. Returns nullopt if the call
/// ultimately failed; the failure is recorded in `out.calls`.
inline std::optional<CompletionResult> call_with_retries(Backend& backend, const CompletionRequest& request,
                                                         const RunConfig& config, RateLimiter& limiter,
                                                         int& retries_left, RowOutcome& out) {
    for (;;) {
        limiter.acquire();
        CallTrace trace;
        trace.attempt = static_cast<int>(out.calls.size()) + 1;
        const auto started = std::chrono::steady_clock::now();
        try {
            auto result = backend.complete(request);
            trace.latency_ms = result.latency.count();
            trace.input_tokens = result.input_tokens;
            trace.output_tokens = result.output_tokens;
            out.input_tokens += result.input_tokens;
            out.output_tokens += result.output_tokens;
            trace.outcome = "ok";
            out.calls.push_back(std::move(trace));
            return result;
        } catch (const backend_error& e) {
            trace.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                   std::chrono::steady_clock::now() - started).count();
            trace.outcome = std::string(to_string(e.code())) + ":" + std::to_string(e.status());
            out.calls.push_back(std::move(trace));
            if (!e.retryable() || retries_left <= 0) return std::nullopt;
            const int retry = config.max_retries - retries_left;
            --retries_left;
            std::this_thread::sleep_for(backoff_delay(config.backoff_base, retry));
        } catch (const std::exception& e) {
            trace.outcome = std::string("fatal:") + e.what();
            out.calls.push_back(std::move(trace));
            return std::nullopt;
        }
    }
}

inline RowOutcome screen_row(Backend& backend, const ScreeningRecord& record, const CriteriaSet& criteria,
                             const std::string& dataset, const RunConfig& config, RateLimiter& limiter) {
    RowOutcome out;
    const CompletionRequest request{config.model, build_decision_prompt(record, criteria), config.temperature,
                                    config.decision_max_tokens, dataset, record.row_index};
    int retries_left = config.max_retries;
    int reasks_left = 1;
    for (;;) {
        auto result = call_with_retries(backend, request, config, limiter, retries_left, out);
        if (!result) {
            out.decision = Decision::Error;
            return out;
        }
        out.decision = parse_decision(result->text);
        out.calls.back().outcome = std::string(to_string(out.decision));
        if (out.decision != Decision::Unparseable || reasks_left == 0) return out;
        --reasks_left;
    }
}

class RunLog {
  public:
    explicit RunLog(const std::filesystem::path& path) {
        if (path.empty()) return;
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        out_.open(path, std::ios::app);
        if (!out_) throw error(errc::io_failure, "cannot open run log " + path.string());
    }

    void write(std::string_view dataset, std::size_t row, std::string_view kind, const std::vector<CallTrace>& calls) {
        if (!out_.is_open()) return;
        for (const auto& c : calls) {
            out_ << nlohmann::json{{"dataset", dataset},       {"row", row},
                                   {"kind", kind},             {"attempt", c.attempt},
                                   {"latency_ms", c.latency_ms}, {"input_tokens", c.input_tokens},
                                   {"output_tokens", c.output_tokens}, {"outcome", c.outcome}}
                        .dump()
                 << '\n';
        }
    }

    void flush() {
        if (out_.is_open()) out_.flush();
    }

  private:
    std::ofstream out_;
};

} // namespace detail

/// Screens every undecided record of every job. Rows whose decision is
/// Included, Excluded or Unparseable are kept (resume); rows marked Error are
/// screened again. Output order always follows row_index.
inline RunReport run_screening(const ScreeningManifest& manifest, std::vector<DatasetJob>& jobs, Backend& backend,
                               const RunConfig& config, const RunOptions& options = {}) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();

    std::vector<const CriteriaSet*> criteria;
    for (const auto& job : jobs) criteria.push_back(&manifest.at(job.name).criteria);

    RunReport report;
    struct Item {
        std::size_t job;
        std::size_t record;
    };
    std::vector<Item> pending;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        DatasetReport dr;
        dr.name = jobs[j].name;
        dr.rows_total = jobs[j].records.size();
        for (std::size_t r = 0; r < jobs[j].records.size(); ++r) {
            const auto& rec = jobs[j].records[r];
            if (rec.abstract.empty()) ++dr.empty_abstract_count;
            if (rec.model_decision && *rec.model_decision != Decision::Error) {
                ++dr.rows_skipped_resume;
            } else {
                pending.push_back({j, r});
            }
        }
        report.datasets.push_back(std::move(dr));
    }
    if (options.row_limit && pending.size() > *options.row_limit) {
        for (std::size_t k = *options.row_limit; k < pending.size(); ++k) ++report.datasets[pending[k].job].rows_deferred;
        pending.resize(*options.row_limit);
    }

    detail::RunLog log(options.run_log);
    RateLimiter limiter(config.requests_per_minute);
    std::vector<int> since_checkpoint(jobs.size(), 0);

    auto checkpoint = [&](std::size_t j) {
        if (!jobs[j].results_path.empty()) write_results(jobs[j].records, jobs[j].results_path);
        since_checkpoint[j] = 0;
        log.flush();
    };

    detail::dispatch<detail::RowOutcome>(
        pending.size(), config.max_in_flight,
        [&](std::size_t i) {
            const auto& item = pending[i];
            return detail::screen_row(backend, jobs[item.job].records[item.record], *criteria[item.job],
                                      jobs[item.job].name, config, limiter);
        },
        [&](std::size_t i, detail::RowOutcome out) {
            const auto& item = pending[i];
            auto& rec = jobs[item.job].records[item.record];
            auto& dr = report.datasets[item.job];
            rec.model_decision = out.decision;
            ++dr.rows_screened;
            switch (out.decision) {
                case Decision::Included: ++dr.included_count; break;
                case Decision::Excluded: ++dr.excluded_count; break;
                case Decision::Unparseable: ++dr.unparseable_count; break;
                case Decision::Error: ++dr.error_count; break;
            }
            dr.input_tokens += out.input_tokens;
            dr.output_tokens += out.output_tokens;
            report.backend_calls += out.calls.size();
            log.write(jobs[item.job].name, rec.row_index, "decision", out.calls);
            if (++since_checkpoint[item.job] >= config.checkpoint_every) checkpoint(item.job);
        });

    for (std::size_t j = 0; j < jobs.size(); ++j) checkpoint(j);

    for (const auto& d : report.datasets) {
        report.input_tokens += d.input_tokens;
        report.output_tokens += d.output_tokens;
    }
    report.estimated_cost = config.cost(report.input_tokens, report.output_tokens);
    report.wall_time =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    return report;
}

enum class FollowupMode { Explain, Reflect };

struct ExplainReport {
    std::size_t requested = 0;
    std::size_t annotated = 0;
    std::size_t skipped = 0;
    std::size_t errors = 0;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
};

/// True when `record` satisfies the precondition of `mode`: Explain needs a
/// model label, Reflect needs a human/model disagreement.
inline bool eligible_for(const ScreeningRecord& record, FollowupMode mode) {
    if (!record.model_decision || !is_label(*record.model_decision)) return false;
    if (mode == FollowupMode::Explain) return true;
    return record.human_decision && is_label(*record.human_decision) &&
           *record.human_decision != *record.model_decision;
}

/// Asks for an explanation or reflection on each selected row and stores the
/// cleaned response text. Rows failing the mode's precondition are skipped.
inline ExplainReport run_explanations(std::vector<ScreeningRecord>& records, const std::vector<std::size_t>& rows,
                                      const CriteriaSet& criteria, const std::string& dataset, Backend& backend,
                                      const RunConfig& config, FollowupMode mode, const RunOptions& options = {}) {
    config.validate();
    ExplainReport report;
    report.requested = rows.size();

    std::vector<std::size_t> targets;
    for (auto row : rows) {
        if (row >= records.size() || !eligible_for(records[row], mode)) {
            ++report.skipped;
            continue;
        }
        targets.push_back(row);
    }

    detail::RunLog log(options.run_log);
    RateLimiter limiter(config.requests_per_minute);
    const auto kind = mode == FollowupMode::Explain ? PromptKind::Explain : PromptKind::Reflect;

    detail::dispatch<detail::RowOutcome>(
        targets.size(), config.max_in_flight,
        [&](std::size_t i) {
            const auto& rec = records[targets[i]];
            const auto prompt = mode == FollowupMode::Explain
                                    ? build_explain_prompt(rec, criteria, rec.human_decision, *rec.model_decision)
                                    : build_reflect_prompt(rec, criteria, *rec.human_decision, *rec.model_decision);
            detail::RowOutcome out;
            int retries_left = config.max_retries;
            const CompletionRequest request{config.model,         prompt, config.temperature,
                                            config.followup_max_tokens, dataset, rec.row_index};
            if (auto result = detail::call_with_retries(backend, request, config, limiter, retries_left, out)) {
                out.decision = *rec.model_decision;
                out.text = clean_text(result->text);
            }
            return out;
        },
        [&](std::size_t i, detail::RowOutcome out) {
            auto& rec = records[targets[i]];
            report.input_tokens += out.input_tokens;
            report.output_tokens += out.output_tokens;
            log.write(dataset, rec.row_index, to_string(kind), out.calls);
            if (out.decision == Decision::Error) {
                ++report.errors;
                return;
            }
            (mode == FollowupMode::Explain ? rec.explanation : rec.reflection) = out.text;
            ++report.annotated;
        });
    log.flush();
    return report;
}

struct CostEstimate {
    struct Line {
        std::string dataset;
        std::size_t rows = 0;
        std::int64_t input_tokens = 0;
        std::int64_t output_tokens = 0;
        double cost = 0.0;
        double projected_wall_seconds = 0.0;
    };
    std::vector<Line> datasets;
    std::int64_t total_input_tokens = 0;
    std::int64_t total_output_tokens = 0;
    double cost = 0.0;
    /// Lower bound set by the request rate alone; backend latency is unknown.
    double projected_wall_seconds = 0.0;

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json out;
        out["datasets"] = nlohmann::json::array();
        for (const auto& l : datasets) {
            out["datasets"].push_back({{"dataset", l.dataset},
                                       {"rows", l.rows},
                                       {"input_tokens", l.input_tokens},
                                       {"output_tokens", l.output_tokens},
                                       {"cost", l.cost},
                                       {"projected_wall_seconds", l.projected_wall_seconds}});
        }
        out["totals"] = {{"input_tokens", total_input_tokens},
                         {"output_tokens", total_output_tokens},
                         {"cost", cost},
                         {"projected_wall_seconds", projected_wall_seconds},
                         {"note", "input tokens estimated as ceil(chars/4) per rendered decision prompt; one output "
                                  "token per row; wall time is a rate-limit lower bound"}};
        return out;
    }
};

/// Prices a full screening pass from rendered decision prompts. One output
/// token per row (the single-word answer).
inline CostEstimate estimate_cost(const ScreeningManifest& manifest, const std::vector<DatasetJob>& jobs,
                                  const RunConfig& config) {
    CostEstimate est;
    for (const auto& job : jobs) {
        const auto& criteria = manifest.at(job.name).criteria;
        CostEstimate::Line line;
        line.dataset = job.name;
        line.rows = job.records.size();
        for (const auto& rec : job.records) line.input_tokens += count_tokens_estimate(build_decision_prompt(rec, criteria).body);
        line.output_tokens = static_cast<std::int64_t>(line.rows);
        line.cost = config.cost(line.input_tokens, line.output_tokens);
        line.projected_wall_seconds = static_cast<double>(line.rows) * 60.0 / std::max(1, config.requests_per_minute);
        est.total_input_tokens += line.input_tokens;
        est.total_output_tokens += line.output_tokens;
        est.projected_wall_seconds += line.projected_wall_seconds;
        est.datasets.push_back(std::move(line));
    }
    est.cost = config.cost(est.total_input_tokens, est.total_output_tokens);
    return est;
}

} // namespace absieve
