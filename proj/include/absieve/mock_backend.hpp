#pragma once

// Scripted stand-in for a chat-completion endpoint. Script file layout:
//
//   {
//     "default": "excluded",
//     "IVM/0": "included",
//     "IVM/1": ["maybe", "excluded"],          // successive calls, last repeats
//     "explain": {"IVM/0": "...", "default": "..."},
//     "reflect": {"IVM/3": "..."},
//     "failures": {"IVM/2": {"status": 500, "count": 2}},   // count < 0: always
//     "latency_ms": 5
//   }
//
// Keys are "<dataset>/<row_index>". Failures apply to decision calls only.

#include "absieve/error.hpp"
#include "absieve/llm.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace absieve {

struct InjectedFailure {
    int status = 500;
    int count = -1;
};

struct MockScript {
    std::map<std::string, std::vector<std::string>> responses;
    std::string default_response;
    std::map<std::string, std::string> explain;
    std::string explain_default;
    std::map<std::string, std::string> reflect;
    std::string reflect_default;
    std::map<std::string, InjectedFailure> failures;
    std::chrono::milliseconds latency{0};

    static std::string key(std::string_view dataset, std::size_t row) {
        return std::string(dataset) + "/" + std::to_string(row);
    }

    static MockScript from_json(const nlohmann::json& j) {
        if (!j.is_object()) throw error(errc::config_invalid, "mock script must be a JSON object");
        MockScript s;
        auto text_section = [](const nlohmann::json& section, std::map<std::string, std::string>& into,
                               std::string& fallback) {
            for (const auto& [k, v] : section.items()) {
                if (k == "default") fallback = v.get<std::string>();
                else into[k] = v.get<std::string>();
            }
        };
        try {
            for (const auto& [k, v] : j.items()) {
                if (k == "default") {
                    s.default_response = v.get<std::string>();
                } else if (k == "explain") {
                    text_section(v, s.explain, s.explain_default);
                } else if (k == "reflect") {
                    text_section(v, s.reflect, s.reflect_default);
                } else if (k == "failures") {
                    for (const auto& [fk, fv] : v.items())
                        s.failures[fk] = {fv.value("status", 500), fv.value("count", -1)};
                } else if (k == "latency_ms") {
                    s.latency = std::chrono::milliseconds(v.get<int>());
                } else if (v.is_array()) {
                    s.responses[k] = v.get<std::vector<std::string>>();
                    if (s.responses[k].empty()) throw error(errc::config_invalid, "empty response list for " + k);
                } else {
                    s.responses[k] = {v.get<std::string>()};
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw error(errc::config_invalid, std::string("mock script: ") + e.what());
        }
        return s;
    }

    static MockScript load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw error(errc::io_failure, "cannot open mock script " + path.string());
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw error(errc::config_invalid, "mock script " + path.string() + ": " + e.what());
        }
    }
};

/// One observed call, for tests that check pacing and concurrency.
struct MockCall {
    std::string key;
    PromptKind kind;
    std::chrono::steady_clock::time_point started;
    std::chrono::steady_clock::time_point finished;
    bool failed = false;
};

class MockBackend final : public Backend {
  public:
    explicit MockBackend(MockScript script) : script_(std::move(script)) {}

    CompletionResult complete(const CompletionRequest& request) override {
        const auto key = MockScript::key(request.dataset, request.row_index);
        const auto started = std::chrono::steady_clock::now();
        std::size_t slot = 0;
        std::string text;
        int fail_status = 0;
        bool fail = false;
        {
            std::lock_guard lock(mutex_);
            ++in_flight_;
            max_in_flight_ = std::max(max_in_flight_, in_flight_);
            slot = calls_.size();
            calls_.push_back({key, request.prompt.kind, started, started, false});

            if (request.prompt.kind == PromptKind::Decision) {
                if (auto f = script_.failures.find(key); f != script_.failures.end() && f->second.count != 0) {
                    fail = true;
                    fail_status = f->second.status;
                    if (f->second.count > 0) --f->second.count;
                }
                if (!fail) text = next_response(key);
            } else {
                const auto& section = request.prompt.kind == PromptKind::Explain ? script_.explain : script_.reflect;
                const auto& fallback =
                    request.prompt.kind == PromptKind::Explain ? script_.explain_default : script_.reflect_default;
                auto it = section.find(key);
                text = it != section.end() ? it->second : fallback;
            }
        }

        if (script_.latency.count() > 0) std::this_thread::sleep_for(script_.latency);

        const auto finished = std::chrono::steady_clock::now();
        {
            std::lock_guard lock(mutex_);
            --in_flight_;
            calls_[slot].finished = finished;
            calls_[slot].failed = fail;
        }
        if (fail) {
            throw backend_error(classify_status(fail_status), fail_status,
                                "mock injected status " + std::to_string(fail_status) + " for " + key);
        }
        return {text, count_tokens_estimate(request.prompt.body), count_tokens_estimate(text),
                std::chrono::duration_cast<std::chrono::milliseconds>(finished - started)};
    }

    [[nodiscard]] std::vector<MockCall> calls() const {
        std::lock_guard lock(mutex_);
        return calls_;
    }

    [[nodiscard]] std::size_t call_count() const {
        std::lock_guard lock(mutex_);
        return calls_.size();
    }

    [[nodiscard]] int max_observed_in_flight() const {
        std::lock_guard lock(mutex_);
        return max_in_flight_;
    }

  private:
    // caller holds mutex_
    std::string next_response(const std::string& key) {
        auto it = script_.responses.find(key);
        if (it == script_.responses.end()) return script_.default_response;
        auto& cursor = cursors_[key];
        const auto& seq = it->second;
        const auto& out = seq[std::min(cursor, seq.size() - 1)];
        ++cursor;
        return out;
    }

    MockScript script_;
    mutable std::mutex mutex_;
    std::map<std::string, std::size_t> cursors_;
    std::vector<MockCall> calls_;
    int in_flight_ = 0;
    int max_in_flight_ = 0;
};

} // namespace absieve
