#pragma once

// HTTP completion client. Speaks the common completions shape:
// POST {model, prompt, max_tokens, temperature} -> {"choices":[{"text":...}]}.

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

// resolv.h, reached through httplib, defines a _res macro that breaks Eigen.
#include <Eigen/Dense>
#include <httplib.h>
#include <json.hpp>

#include "errslice/labeling.hpp"

namespace errslice {

struct RemoteClientConfig {
    std::string endpoint = "https://api.openai.com/v1/completions";
    std::string model = "gpt-3.5-turbo-instruct";
    std::string api_key_env = "ERRSLICE_API_KEY";
    double timeout_seconds = 30.0;
    std::size_t max_parallelism = 4;
    std::size_t retries = 3;
    std::chrono::milliseconds backoff{500};  // doubled after every failed attempt
    int completion_tokens = 32;
    double temperature = 0.0;
};

class RemoteClient final : public LabelingClient {
public:
    explicit RemoteClient(RemoteClientConfig config) : config_(std::move(config)) {
        const auto scheme_end = config_.endpoint.find("://");
        if (scheme_end == std::string::npos) throw InvalidArgument("endpoint must be an absolute URL");
        const auto path_begin = config_.endpoint.find('/', scheme_end + 3);
        base_ = config_.endpoint.substr(0, path_begin);
        path_ = path_begin == std::string::npos ? "/" : config_.endpoint.substr(path_begin);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
        if (config_.endpoint.rfind("https://", 0) == 0)
            throw InvalidArgument("this build has no TLS support; use an http:// endpoint");
#endif
    }

    std::string complete(const std::string& prompt) override {
        nlohmann::json body = {{"model", config_.model},
                               {"prompt", prompt},
                               {"max_tokens", config_.completion_tokens},
                               {"temperature", config_.temperature}};
        const std::string payload = body.dump();
        httplib::Headers headers;
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);

        std::string last_error;
        auto delay = config_.backoff;
        for (std::size_t attempt = 0; attempt <= config_.retries; ++attempt) {
            if (attempt) {
                std::this_thread::sleep_for(delay);
                delay *= 2;
            }
            httplib::Client cli(base_);
            const auto t = std::chrono::duration<double>(config_.timeout_seconds);
            cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
            cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
            auto res = cli.Post(path_, headers, payload, "application/json");
            if (!res) {
                last_error = "transport: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) throw ClientError("HTTP " + std::to_string(res->status) + ": " + res->body);
            return extract_text(res->body);
        }
        throw ClientError(last_error + " after " + std::to_string(config_.retries + 1) + " attempts");
    }

    std::string name() const override { return "remote:" + config_.model; }
    std::size_t max_parallelism() const override { return config_.max_parallelism; }

private:
    static std::string extract_text(const std::string& body) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw ClientError(std::string("unparseable response: ") + e.what());
        }
        if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
            const auto& c = j["choices"][0];
            if (c.contains("text") && c["text"].is_string()) return c["text"].get<std::string>();
            if (c.contains("message") && c["message"].contains("content")) return c["message"]["content"].get<std::string>();
        }
        if (j.contains("completion") && j["completion"].is_string()) return j["completion"].get<std::string>();
        throw ClientError("response has no completion text");
    }

    RemoteClientConfig config_;
    std::string base_;
    std::string path_;
};

} // namespace errslice
