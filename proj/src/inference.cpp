#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "debias/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "debias/util.hpp"

namespace debias {

using nlohmann::json;

json ChatRequest::to_json() const {
    json msgs = json::array();
    for (const auto& m : messages) {
        msgs.push_back({{"role", m.role}, {"content", m.content}});
    }
    return {{"model", model}, {"messages", std::move(msgs)}, {"temperature", temperature}, {"max_tokens", max_tokens}};
}

ChatRequest ChatRequest::from_json(const json& j) {
    ChatRequest r;
    r.model = j.at("model").get<std::string>();
    for (const auto& m : j.at("messages")) {
        r.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    }
    r.temperature = j.value("temperature", 0.0);
    r.max_tokens = j.value("max_tokens", 256);
    return r;
}

void ClientConfig::validate() const {
    if (endpoint.empty()) throw ConfigError("endpoint", "must be set");
    if (parallelism < 1) throw ConfigError("parallelism", "must be at least 1");
    if (max_retries < 0) throw ConfigError("max_retries", "must be non-negative");
    if (!(timeout_s > 0.0)) throw ConfigError("timeout_s", "must be positive");
}

ClientConfig ClientConfig::from_env(ClientConfig c) {
    if (const char* v = std::getenv("DEBIAS_ENDPOINT")) c.endpoint = v;
    if (const char* v = std::getenv("OPENAI_API_KEY")) c.api_key = v;
    if (const char* v = std::getenv("DEBIAS_API_KEY")) c.api_key = v;
    if (const char* v = std::getenv("DEBIAS_PARALLELISM")) c.parallelism = std::atoi(v);
    if (const char* v = std::getenv("DEBIAS_CACHE_DIR")) c.cache_dir = v;
    return c;
}

ClientConfig ClientConfig::from_env() {
    return from_env(ClientConfig{});
}

ClientConfig ClientConfig::from_json(const json& j, ClientConfig c) {
    c.endpoint = j.value("endpoint", c.endpoint);
    c.api_key = j.value("api_key", c.api_key);
    c.parallelism = j.value("parallelism", c.parallelism);
    c.cache_dir = j.value("cache_dir", c.cache_dir);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_initial_s = j.value("backoff_initial_s", c.backoff_initial_s);
    c.backoff_factor = j.value("backoff_factor", c.backoff_factor);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    return c;
}

std::string cache_key(const std::string& endpoint, const ChatRequest& req) {
    json canonical = req.to_json();
    canonical["endpoint"] = endpoint;
    return sha256_hex(canonical.dump());
}

// ------------------------------------------------------------------ cache

ResponseCache::ResponseCache(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) {
        std::filesystem::create_directories(dir_);
    }
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
    {
        std::shared_lock lock(mu_);
        if (const auto it = memory_.find(key); it != memory_.end()) {
            return it->second;
        }
    }
    if (dir_.empty()) {
        return std::nullopt;
    }
    const auto path = std::filesystem::path(dir_) / key;
    if (!std::filesystem::exists(path)) {
        return std::nullopt;
    }
    return read_file(path.string());
}

void ResponseCache::put(const std::string& key, const std::string& text) {
    std::unique_lock lock(mu_);
    if (memory_.count(key)) {
        return;
    }
    memory_.emplace(key, text);
    if (!dir_.empty()) {
        const auto path = std::filesystem::path(dir_) / key;
        if (!std::filesystem::exists(path)) {
            write_file(path.string(), text);
        }
    }
}

// ----------------------------------------------------------------- client

InferenceClient::InferenceClient(ClientConfig cfg) : cfg_(std::move(cfg)), cache_(cfg_.cache_dir) {
    cfg_.validate();
    // Split "scheme://host:port/prefix" into the client origin and the route.
    const auto scheme_end = cfg_.endpoint.find("://");
    const auto path_start = cfg_.endpoint.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    host_ = cfg_.endpoint.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : cfg_.endpoint.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') {
        prefix.pop_back();
    }
    const bool has_v1 = prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0;
    path_ = prefix + (has_v1 ? "" : "/v1") + "/chat/completions";
}

std::vector<std::string> InferenceClient::attempt_log() const {
    std::lock_guard lock(log_mu_);
    return attempt_log_;
}

std::string InferenceClient::complete_chat(const ChatRequest& req, int* attempts_out) {
    httplib::Client cli(host_);
    const auto timeout = std::chrono::duration<double>(cfg_.timeout_s);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    }
    const std::string body = req.to_json().dump();

    double delay = cfg_.backoff_initial_s;
    std::string last_error;
    for (int attempt = 1; attempt <= cfg_.max_retries + 1; ++attempt) {
        if (attempts_out) {
            *attempts_out = attempt;
        }
        ++network_calls_;
        auto res = cli.Post(path_, headers, body, "application/json");
        bool retryable = false;
        if (!res) {
            last_error = "transport: " + httplib::to_string(res.error());
            retryable = true;
        } else if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            retryable = true;
        } else if (res->status != 200) {
            throw ProtocolError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
        } else {
            json parsed;
            try {
                parsed = json::parse(res->body);
                const auto& content = parsed.at("choices").at(0).at("message").at("content");
                if (!content.is_string()) {
                    throw ProtocolError("choices[0].message.content is not a string");
                }
                {
                    std::lock_guard lock(log_mu_);
                    attempt_log_.push_back("ok after " + std::to_string(attempt) + " attempt(s)");
                }
                return content.get<std::string>();
            } catch (const json::exception& e) {
                throw ProtocolError(std::string("non-conforming response body: ") + e.what());
            }
        }
        {
            std::lock_guard lock(log_mu_);
            attempt_log_.push_back("attempt " + std::to_string(attempt) + " failed: " + last_error);
        }
        if (retryable && attempt <= cfg_.max_retries) {
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            delay *= cfg_.backoff_factor;
        }
    }
    throw TransportError("giving up after " + std::to_string(cfg_.max_retries + 1) + " attempts: " + last_error);
}

std::vector<BatchResult> InferenceClient::run_batch(const std::vector<ChatRequest>& requests, int parallelism) {
    const int bound = parallelism > 0 ? parallelism : cfg_.parallelism;
    std::vector<BatchResult> results(requests.size());

    // Collapse duplicates so each distinct request is dispatched at most once.
    std::vector<std::string> keys(requests.size());
    std::unordered_map<std::string, std::size_t> leader;
    std::vector<std::size_t> work;
    for (std::size_t i = 0; i < requests.size(); ++i) {
        keys[i] = cache_key(cfg_.endpoint, requests[i]);
        if (auto hit = cache_.get(keys[i])) {
            results[i].text = std::move(*hit);
            results[i].from_cache = true;
            continue;
        }
        if (leader.try_emplace(keys[i], i).second) {
            work.push_back(i);
        }
    }

    // Once one request has exhausted its retries on transport errors the
    // endpoint is treated as down and the remaining work is not sent.
    std::atomic<std::size_t> next{0};
    std::atomic<bool> unreachable{false};
    auto worker = [&] {
        for (std::size_t w = next++; w < work.size(); w = next++) {
            const std::size_t i = work[w];
            auto& out = results[i];
            if (unreachable) {
                out.error = "not sent: endpoint unreachable";
                continue;
            }
            try {
                out.text = complete_chat(requests[i], &out.attempts);
                cache_.put(keys[i], *out.text);
            } catch (const TransportError& e) {
                out.error = e.what();
                unreachable = true;
            } catch (const Error& e) {
                out.error = e.what();
            }
        }
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(bound), work.size());
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < n_threads; ++t) {
        threads.emplace_back(worker);
    }
    if (n_threads > 0) {
        worker();
    }
    for (auto& t : threads) {
        t.join();
    }

    for (std::size_t i = 0; i < requests.size(); ++i) {
        if (results[i].from_cache || results[i].text || !results[i].error.empty()) {
            continue;
        }
        const auto& lead = results[leader.at(keys[i])];
        results[i].text = lead.text;
        results[i].error = lead.error;
        results[i].from_cache = lead.text.has_value();
    }
    return results;
}

}  // namespace debias
