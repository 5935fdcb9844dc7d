#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "finqa/digest.hpp"
#include "finqa/errors.hpp"

namespace finqa {

struct GenParams {
    std::string model_name = "default";
    double temperature = 0.0;  // evaluation runs keep 0 unless overridden
    int max_output_tokens = 512;
    std::vector<std::string> stop_sequences;
};

inline nlohmann::json gen_params_to_json(const GenParams& p) {
    nlohmann::json j;
    j["model"] = p.model_name;
    j["temperature"] = p.temperature;
    j["max_tokens"] = p.max_output_tokens;
    j["stop"] = p.stop_sequences;
    return j;
}

inline GenParams gen_params_from_json(const nlohmann::json& j) {
    GenParams p;
    p.model_name = j.at("model").get<std::string>();
    p.temperature = j.at("temperature").get<double>();
    p.max_output_tokens = j.at("max_tokens").get<int>();
    p.stop_sequences = j.at("stop").get<std::vector<std::string>>();
    if (p.max_output_tokens < 1) throw ConfigError("max_tokens must be >= 1");
    if (p.temperature < 0.0) throw ConfigError("temperature must be >= 0");
    return p;
}

// Key for one (prompt, params) pair. Transcript lookups and stores go
// through this.
inline std::string transcript_key(const std::string& prompt, const GenParams& params) {
    return digest_hex({prompt, gen_params_to_json(params).dump()});
}

class GenClient {
public:
    virtual ~GenClient() = default;
    virtual std::string generate(const std::string& prompt, const GenParams& params) = 0;
};

// ---- transcript: the stored map from (prompt, params) keys to responses ----

struct TranscriptEntry {
    std::string key;
    std::string prompt_digest;
    nlohmann::json params;
    std::string response;
    std::string timestamp;
};

// Append-only store, one JSON record per line. A key maps to exactly one
// response; storing a different response under an existing key is an error.
class Transcript {
public:
    Transcript() = default;

    static Transcript load(const std::filesystem::path& path) {
        Transcript t;
        std::ifstream in(path);
        if (!in) return t;  // a missing transcript is an empty one
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw TranscriptError(path.string() + " line " + std::to_string(line_no) +
                                      ": " + e.what());
            }
            TranscriptEntry entry;
            entry.key = j.at("key").get<std::string>();
            entry.prompt_digest = j.value("prompt_digest", "");
            entry.params = j.value("params", nlohmann::json::object());
            entry.response = j.at("response").get<std::string>();
            entry.timestamp = j.value("ts", "");
            t.insert(std::move(entry));
        }
        return t;
    }

    const std::string* find(const std::string& key) const {
        auto it = entries_.find(key);
        return it == entries_.end() ? nullptr : &it->second.response;
    }

    bool contains(const std::string& key) const { return entries_.count(key) > 0; }

    std::size_t size() const { return entries_.size(); }

    void insert(TranscriptEntry entry) {
        auto it = entries_.find(entry.key);
        if (it != entries_.end()) {
            if (it->second.response != entry.response)
                throw TranscriptError("key collision: " + entry.key +
                                      " already stored with a different response");
            return;
        }
        entries_.emplace(entry.key, std::move(entry));
    }

    const std::map<std::string, TranscriptEntry>& entries() const { return entries_; }

private:
    std::map<std::string, TranscriptEntry> entries_;
};

inline nlohmann::json transcript_entry_to_json(const TranscriptEntry& entry) {
    nlohmann::json j;
    j["key"] = entry.key;
    j["prompt_digest"] = entry.prompt_digest;
    j["params"] = entry.params;
    j["response"] = entry.response;
    j["ts"] = entry.timestamp;
    return j;
}

// Replays stored responses. In strict mode an unrecorded key raises
// ReplayMiss; non-strict returns an empty string (the record downstream
// comes out as a failed parse).
class ReplayClient final : public GenClient {
public:
    explicit ReplayClient(Transcript transcript, bool strict = true)
        : transcript_(std::move(transcript)), strict_(strict) {}

    static ReplayClient from_file(const std::filesystem::path& path, bool strict = true) {
        return ReplayClient(Transcript::load(path), strict);
    }

    std::string generate(const std::string& prompt, const GenParams& params) override {
        std::string key = transcript_key(prompt, params);
        if (const std::string* response = transcript_.find(key)) return *response;
        if (strict_) throw ReplayMiss(key);
        return "";
    }

    const Transcript& transcript() const { return transcript_; }

private:
    Transcript transcript_;
    bool strict_;
};

inline std::string utc_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Wraps an inner (live) client and persists every new response to the
// transcript file. Idempotent: an existing key is served from the store
// without a network call. Appends are serialized through one writer lock.
class RecordingClient final : public GenClient {
public:
    RecordingClient(GenClient& inner, std::filesystem::path transcript_path,
                    std::string fixed_timestamp = "")
        : inner_(inner),
          path_(std::move(transcript_path)),
          fixed_timestamp_(std::move(fixed_timestamp)),
          transcript_(Transcript::load(path_)) {}

    std::string generate(const std::string& prompt, const GenParams& params) override {
        std::string key = transcript_key(prompt, params);
        {
            std::lock_guard lock(mutex_);
            if (const std::string* stored = transcript_.find(key)) return *stored;
        }
        std::string response = inner_.generate(prompt, params);

        TranscriptEntry entry;
        entry.key = key;
        entry.prompt_digest = digest_hex(prompt);
        entry.params = gen_params_to_json(params);
        entry.response = response;
        entry.timestamp = fixed_timestamp_.empty() ? utc_timestamp() : fixed_timestamp_;

        std::lock_guard lock(mutex_);
        if (const std::string* stored = transcript_.find(key)) return *stored;
        transcript_.insert(entry);
        std::ofstream out(path_, std::ios::app);
        if (!out) throw TranscriptError("cannot open transcript for append: " + path_.string());
        out << transcript_entry_to_json(entry).dump() << '\n';
        if (!out) throw TranscriptError("write failed: " + path_.string());
        return response;
    }

    const Transcript& transcript() const { return transcript_; }

private:
    GenClient& inner_;
    std::filesystem::path path_;
    std::string fixed_timestamp_;
    Transcript transcript_;
    std::mutex mutex_;
};

// Convenience form of the record operation.
inline std::string record(const std::string& prompt, const GenParams& params,
                          RecordingClient& client) {
    return client.generate(prompt, params);
}

}  // namespace finqa
