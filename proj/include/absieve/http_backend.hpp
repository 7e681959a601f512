#pragma once

// OpenAI-compatible chat-completions client:
//   POST {base_url}/v1/chat/completions
//   {"model", "messages": [{"role": "user", "content": prompt}], "temperature", "max_tokens"}
// Bearer credential comes from an environment variable, never from config.

#include "absieve/error.hpp"
#include "absieve/llm.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>

namespace absieve {

struct HttpBackendConfig {
    std::string base_url = "https://api.openai.com";
    std::string api_key_env = "ABSIEVE_API_KEY";
    std::chrono::seconds timeout{60};
};

class HttpBackend final : public Backend {
  public:
    explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) api_key_ = key;
        split_base_url();
    }

    [[nodiscard]] bool has_credential() const noexcept { return api_key_.has_value(); }

    /// Request body exactly as sent on the wire.
    static nlohmann::json request_body(const CompletionRequest& request) {
        return {{"model", request.model},
                {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt.body}}})},
                {"temperature", request.temperature},
                {"max_tokens", request.max_output_tokens}};
    }

    CompletionResult complete(const CompletionRequest& request) override {
        if (!api_key_) throw backend_error(errc::auth_missing, 0, "environment variable " + config_.api_key_env + " is not set");
        if (request.prompt.body.empty()) throw backend_error(errc::fatal, 0, "empty prompt");

        // One client per call; httplib clients are not meant for concurrent use.
        httplib::Client client(origin_);
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        client.set_write_timeout(config_.timeout);
        client.set_bearer_token_auth(*api_key_);

        const auto started = std::chrono::steady_clock::now();
        auto res = client.Post(path_prefix_ + "/v1/chat/completions", request_body(request).dump(), "application/json");
        const auto latency =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);

        if (!res) throw backend_error(errc::transient, 0, "request failed: " + httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300) {
            throw backend_error(classify_status(res->status), res->status,
                                "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300));
        }
        return parse_response(res->body, request, latency);
    }

    static CompletionResult parse_response(const std::string& body, const CompletionRequest& request,
                                           std::chrono::milliseconds latency) {
        CompletionResult out;
        out.latency = latency;
        try {
            const auto j = nlohmann::json::parse(body);
            const auto& content = j.at("choices").at(0).at("message").at("content");
            out.text = content.is_null() ? std::string{} : content.get<std::string>();
            if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
                out.input_tokens = u->value("prompt_tokens", count_tokens_estimate(request.prompt.body));
                out.output_tokens = u->value("completion_tokens", count_tokens_estimate(out.text));
            } else {
                out.input_tokens = count_tokens_estimate(request.prompt.body);
                out.output_tokens = count_tokens_estimate(out.text);
            }
        } catch (const nlohmann::json::exception& e) {
            throw backend_error(errc::fatal, 200, std::string("malformed response body: ") + e.what());
        }
        return out;
    }

  private:
    void split_base_url() {
        const auto scheme_end = config_.base_url.find("://");
        const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        const auto path_start = config_.base_url.find('/', host_start);
        origin_ = config_.base_url.substr(0, path_start);
        path_prefix_ = path_start == std::string::npos ? std::string{} : config_.base_url.substr(path_start);
        while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }

    HttpBackendConfig config_;
    std::optional<std::string> api_key_;
    std::string origin_;
    std::string path_prefix_;
};

} // namespace absieve
