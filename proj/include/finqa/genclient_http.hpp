#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "finqa/genclient.hpp"

namespace finqa {

struct HttpClientConfig {
    std::string base_url;                      // e.g. "http://localhost:8000"
    std::string api_key;                       // sent as a bearer token when set
    std::string path = "/v1/chat/completions";
    int timeout_seconds = 60;
    int max_retries = 3;
    int max_in_flight = 4;
    int backoff_ms = 250;  // doubles per retry

    static HttpClientConfig from_env() {
        HttpClientConfig cfg;
        if (const char* url = std::getenv("FINQA_GEN_BASE_URL")) cfg.base_url = url;
        if (const char* key = std::getenv("FINQA_GEN_API_KEY")) cfg.api_key = key;
        return cfg;
    }
};

// Live chat-completion client. Sends a single user message and reads
// choices[0].message.content. Transient failures (connection errors, 429,
// 5xx) are retried with exponential backoff; in-flight requests are bounded.
class HttpGenClient final : public GenClient {
public:
    explicit HttpGenClient(HttpClientConfig config) : config_(std::move(config)) {
        if (config_.base_url.empty())
            throw ConfigError("generation endpoint base URL is not set "
                              "(FINQA_GEN_BASE_URL)");
        if (config_.max_in_flight < 1) config_.max_in_flight = 1;
        slots_ = config_.max_in_flight;
    }

    std::string generate(const std::string& prompt, const GenParams& params) override {
        if (prompt.empty()) throw ConfigError("prompt must be non-empty");
        InFlightSlot slot(*this);

        nlohmann::json body;
        body["model"] = params.model_name;
        body["messages"] = nlohmann::json::array(
            {nlohmann::json{{"role", "user"}, {"content", prompt}}});
        body["temperature"] = params.temperature;
        body["max_tokens"] = params.max_output_tokens;
        body["stop"] = params.stop_sequences;
        const std::string payload = body.dump();

        int attempts = config_.max_retries + 1;
        bool rate_limited = false;
        int last_status = 0;
        bool timed_out = false;
        for (int attempt = 0; attempt < attempts; ++attempt) {
            if (attempt > 0) {
                auto delay = std::chrono::milliseconds(
                    static_cast<long>(config_.backoff_ms) * (1L << (attempt - 1)));
                std::this_thread::sleep_for(delay);
            }
            httplib::Client cli(config_.base_url);
            cli.set_connection_timeout(config_.timeout_seconds, 0);
            cli.set_read_timeout(config_.timeout_seconds, 0);
            httplib::Headers headers;
            if (!config_.api_key.empty())
                headers.emplace("Authorization", "Bearer " + config_.api_key);

            auto res = cli.Post(config_.path, headers, payload, "application/json");
            if (!res) {
                timed_out = true;  // connection error or timeout; retry
                continue;
            }
            last_status = res->status;
            if (res->status == 429) {
                rate_limited = true;
                continue;
            }
            if (res->status >= 500) continue;
            if (res->status != 200) throw HttpStatus(res->status);
            return extract_message(res->body);
        }
        if (rate_limited) throw RateLimited();
        if (last_status != 0) throw HttpStatus(last_status);
        if (timed_out) throw Timeout(config_.base_url + config_.path);
        throw GenerationError("request failed: " + config_.base_url);
    }

private:
    static std::string extract_message(const std::string& body) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw MalformedResponse(e.what());
        }
        if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
            throw MalformedResponse("no choices in response");
        const auto& first = j["choices"][0];
        if (!first.contains("message") || !first["message"].contains("content") ||
            !first["message"]["content"].is_string())
            throw MalformedResponse("choices[0].message.content missing");
        return first["message"]["content"].get<std::string>();
    }

    // Bounded concurrency without a fixed-capacity semaphore type.
    struct InFlightSlot {
        explicit InFlightSlot(HttpGenClient& c) : client(c) {
            std::unique_lock lock(client.mutex_);
            client.cv_.wait(lock, [&] { return client.slots_ > 0; });
            --client.slots_;
        }
        ~InFlightSlot() {
            {
                std::lock_guard lock(client.mutex_);
                ++client.slots_;
            }
            client.cv_.notify_one();
        }
        HttpGenClient& client;
    };

    HttpClientConfig config_;
    std::mutex mutex_;
    std::condition_variable cv_;
    int slots_ = 4;
};

}  // namespace finqa
