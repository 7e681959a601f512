#pragma once

// Sectioned key/value config:
//
//   [backend]
//   kind = mock            # or http
//   mock_script = script.json
//   base_url = https://api.openai.com
//   model = gpt-3.5-turbo
//   [runner]
//   requests_per_minute = 60
//   [paths]
//   manifest = manifest.csv
//
// '#' and ';' start comments. Every key can also be given as
// "section.key=value" on the command line, which wins over the file.

#include "absieve/error.hpp"
#include "absieve/http_backend.hpp"
#include "absieve/mock_backend.hpp"
#include "absieve/runner.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>

namespace absieve {

using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return std::string(s);
}

} // namespace detail

inline ConfigMap parse_config(std::string_view text, std::string_view origin = "<config>") {
    ConfigMap out;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    for (int lineno = 1; std::getline(in, raw); ++lineno) {
        auto line = detail::trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw error(errc::config_invalid, std::string(origin) + ":" + std::to_string(lineno) + ": bad section header");
            section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw error(errc::config_invalid, std::string(origin) + ":" + std::to_string(lineno) + ": expected key = value");
        auto key = detail::trim(std::string_view(line).substr(0, eq));
        auto value = detail::trim(std::string_view(line).substr(eq + 1));
        if (const auto hash = value.find(" #"); hash != std::string::npos) value = detail::trim(value.substr(0, hash));
        out[section.empty() ? key : section + "." + key] = value;
    }
    return out;
}

enum class BackendKind { Mock, Http };

struct AppConfig {
    BackendKind backend_kind = BackendKind::Mock;
    std::filesystem::path mock_script;
    HttpBackendConfig http;
    RunConfig runner;
    std::filesystem::path manifest;
    std::filesystem::path data_dir;
    std::filesystem::path output_dir;

    [[nodiscard]] std::filesystem::path dataset_path(std::string_view name) const { return data_dir / (std::string(name) + ".csv"); }
    [[nodiscard]] std::filesystem::path results_path(std::string_view name) const { return output_dir / (std::string(name) + ".csv"); }

    [[nodiscard]] std::unique_ptr<Backend> make_backend() const {
        if (backend_kind == BackendKind::Mock) return std::make_unique<MockBackend>(MockScript::load(mock_script));
        return std::make_unique<HttpBackend>(http);
    }

    /// Builds a config from merged key/values. Relative paths resolve against `base_dir`.
    static AppConfig from_map(const ConfigMap& values, const std::filesystem::path& base_dir = {}) {
        static const std::set<std::string> known{
            "backend.kind", "backend.mock_script", "backend.base_url", "backend.model", "backend.temperature",
            "backend.api_key_env", "backend.timeout_seconds", "runner.max_in_flight", "runner.requests_per_minute",
            "runner.max_retries", "runner.backoff_base_ms", "runner.checkpoint_every", "runner.price_per_1k_input",
            "runner.price_per_1k_output", "runner.decision_max_tokens", "runner.followup_max_tokens", "paths.manifest",
            "paths.data_dir", "paths.output_dir"};
        for (const auto& [k, v] : values) {
            if (k.find("api_key") != std::string::npos && k != "backend.api_key_env")
                throw error(errc::config_invalid, k + ": credentials are read from the environment only");
            if (!known.count(k)) throw error(errc::config_invalid, "unknown key '" + k + "'");
        }

        auto get = [&](const std::string& k) -> std::optional<std::string> {
            if (auto it = values.find(k); it != values.end()) return it->second;
            return std::nullopt;
        };
        auto as_int = [&](const std::string& k, int& into) {
            if (auto v = get(k)) {
                auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), into);
                if (ec != std::errc{} || p != v->data() + v->size()) throw error(errc::config_invalid, k + ": not an integer: '" + *v + "'");
            }
        };
        auto as_double = [&](const std::string& k, double& into) {
            if (auto v = get(k)) {
                try {
                    std::size_t used = 0;
                    into = std::stod(*v, &used);
                    if (used != v->size()) throw std::invalid_argument(*v);
                } catch (const std::exception&) {
                    throw error(errc::config_invalid, k + ": not a number: '" + *v + "'");
                }
            }
        };
        auto as_path = [&](const std::string& k, std::filesystem::path& into) {
            if (auto v = get(k); v && !v->empty()) {
                std::filesystem::path p(*v);
                into = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
            }
        };

        AppConfig c;
        as_path("backend.mock_script", c.mock_script);
        const auto base_url = get("backend.base_url");
        if (base_url) c.http.base_url = *base_url;
        if (auto kind = get("backend.kind")) {
            if (*kind == "mock") c.backend_kind = BackendKind::Mock;
            else if (*kind == "http") c.backend_kind = BackendKind::Http;
            else throw error(errc::config_invalid, "backend.kind: expected 'mock' or 'http', got '" + *kind + "'");
        } else if (!c.mock_script.empty() && base_url) {
            throw error(errc::config_invalid, "backend: both mock_script and base_url are set; set backend.kind");
        } else {
            c.backend_kind = c.mock_script.empty() ? BackendKind::Http : BackendKind::Mock;
        }
        if (c.backend_kind == BackendKind::Mock && c.mock_script.empty())
            throw error(errc::config_invalid, "backend.mock_script is required for the mock backend");
        if (auto v = get("backend.model")) c.runner.model = *v;
        as_double("backend.temperature", c.runner.temperature);
        if (auto v = get("backend.api_key_env")) c.http.api_key_env = *v;
        int timeout = static_cast<int>(c.http.timeout.count());
        as_int("backend.timeout_seconds", timeout);
        c.http.timeout = std::chrono::seconds(timeout);

        as_int("runner.max_in_flight", c.runner.max_in_flight);
        as_int("runner.requests_per_minute", c.runner.requests_per_minute);
        as_int("runner.max_retries", c.runner.max_retries);
        int backoff = static_cast<int>(c.runner.backoff_base.count());
        as_int("runner.backoff_base_ms", backoff);
        c.runner.backoff_base = std::chrono::milliseconds(backoff);
        as_int("runner.checkpoint_every", c.runner.checkpoint_every);
        as_double("runner.price_per_1k_input", c.runner.price_per_1k_input);
        as_double("runner.price_per_1k_output", c.runner.price_per_1k_output);
        as_int("runner.decision_max_tokens", c.runner.decision_max_tokens);
        as_int("runner.followup_max_tokens", c.runner.followup_max_tokens);

        as_path("paths.manifest", c.manifest);
        as_path("paths.data_dir", c.data_dir);
        as_path("paths.output_dir", c.output_dir);
        c.runner.validate();
        return c;
    }

    /// Reads `path` (if non-empty) and applies `overrides` on top.
    static AppConfig load(const std::filesystem::path& path, const ConfigMap& overrides = {}) {
        ConfigMap values;
        std::filesystem::path base;
        if (!path.empty()) {
            std::ifstream in(path);
            if (!in) throw error(errc::config_invalid, "cannot read config file " + path.string());
            std::stringstream buf;
            buf << in.rdbuf();
            values = parse_config(buf.str(), path.string());
            base = path.parent_path();
        }
        // Command-line values are taken relative to the working directory.
        for (const auto& [k, v] : overrides) values[k] = v;
        auto config = from_map(values, base);
        for (const auto& [k, v] : overrides) {
            if (k == "paths.manifest") config.manifest = v;
            else if (k == "paths.data_dir") config.data_dir = v;
            else if (k == "paths.output_dir") config.output_dir = v;
            else if (k == "backend.mock_script") config.mock_script = v;
        }
        return config;
    }

    /// Checks that the paths a command needs exist.
    void require_paths(bool need_data_dir) const {
        if (manifest.empty()) throw error(errc::config_invalid, "paths.manifest is not set");
        if (!std::filesystem::exists(manifest)) throw error(errc::config_invalid, "paths.manifest: " + manifest.string() + " does not exist");
        if (need_data_dir) {
            if (data_dir.empty()) throw error(errc::config_invalid, "paths.data_dir is not set");
            if (!std::filesystem::is_directory(data_dir)) throw error(errc::config_invalid, "paths.data_dir: " + data_dir.string() + " is not a directory");
        }
        if (output_dir.empty()) throw error(errc::config_invalid, "paths.output_dir is not set");
        if (backend_kind == BackendKind::Mock && !std::filesystem::exists(mock_script))
            throw error(errc::config_invalid, "backend.mock_script: " + mock_script.string() + " does not exist");
    }
};

} // namespace absieve
