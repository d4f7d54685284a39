#pragma once

#include <atomic>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "debias/chat.hpp"
#include "debias/error.hpp"

namespace debias {

struct ChatRequest {
    std::string model;
    Messages messages;
    double temperature = 0.0;
    int max_tokens = 256;

    nlohmann::json to_json() const;  // wire payload
    static ChatRequest from_json(const nlohmann::json& j);
};

struct ClientConfig {
    std::string endpoint = "http://127.0.0.1:8000";
    std::string api_key;
    int parallelism = 4;
    std::string cache_dir;  // empty = in-memory cache only
    int max_retries = 3;
    double backoff_initial_s = 0.5;
    double backoff_factor = 2.0;
    double timeout_s = 120.0;

    void validate() const;
    // DEBIAS_ENDPOINT, DEBIAS_API_KEY (or OPENAI_API_KEY), DEBIAS_PARALLELISM, DEBIAS_CACHE_DIR
    static ClientConfig from_env(ClientConfig base);
    static ClientConfig from_env();
    static ClientConfig from_json(const nlohmann::json& j, ClientConfig base);
};

// SHA-256 over the canonical serialization of (endpoint, model, messages,
// temperature, max_tokens). JSON objects serialize with sorted keys, so
// field order and whitespace in the source never matter.
std::string cache_key(const std::string& endpoint, const ChatRequest& req);

// Content-addressed response store: one file per digest under dir, written
// once. Concurrent readers, serialized writers.
class ResponseCache {
public:
    explicit ResponseCache(std::string dir = {});

    std::optional<std::string> get(const std::string& key) const;
    void put(const std::string& key, const std::string& text);

private:
    std::string dir_;
    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, std::string> memory_;
};

struct BatchResult {
    std::optional<std::string> text;
    std::string error;
    bool from_cache = false;
    int attempts = 0;
};

class InferenceClient {
public:
    explicit InferenceClient(ClientConfig cfg);

    // One request with retries on transport failures, 429 and 5xx.
    // Throws TransportError once retries are exhausted, ProtocolError when
    // the body does not carry choices[0].message.content. Bypasses the cache.
    std::string complete_chat(const ChatRequest& req, int* attempts = nullptr);

    // Ordered results; at most `parallelism` requests in flight (0 = config
    // default). Cached and duplicate requests cost no network call.
    std::vector<BatchResult> run_batch(const std::vector<ChatRequest>& requests, int parallelism = 0);

    long network_calls() const { return network_calls_.load(); }
    const ClientConfig& config() const { return cfg_; }
    std::vector<std::string> attempt_log() const;

private:
    ClientConfig cfg_;
    std::string host_;
    std::string path_;
    ResponseCache cache_;
    std::atomic<long> network_calls_{0};
    mutable std::mutex log_mu_;
    std::vector<std::string> attempt_log_;
};

}  // namespace debias
