#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "kairanban/error.hpp"

namespace kairanban {

struct Message {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;

    bool operator==(const Message&) const = default;
};

using Prompt = std::vector<Message>;

/// Routing metadata for a request. Ignored on the wire; scripted backends can
/// key replies by it.
struct RequestTag {
    std::string phase;  // kcs | ibc | judge | single
    int agent_index = 0;
    bool operator==(const RequestTag&) const = default;
};

struct CompletionRequest {
    std::string model;
    Prompt messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    RequestTag tag;
};

struct CompletionResponse {
    std::string text;
    std::int64_t latency_ms = 0;
    int attempt_count = 1;
};

/// Stable 64-bit FNV-1a over the message texts, rendered as 16 hex digits.
std::string request_fingerprint(const Prompt& messages);

class Backend {
public:
    virtual ~Backend() = default;
    virtual CompletionResponse complete(const CompletionRequest& req) = 0;
    /// How many requests may usefully be in flight at once. A backend whose
    /// answers depend on call order reports 1.
    virtual int max_concurrency() const { return 1; }
};

/// One scripted reply. Lookup order: fingerprint, then (phase, agent) tag,
/// then the ordered queue of untagged replies.
struct ScriptEntry {
    std::string reply;
    std::optional<std::string> fingerprint;
    std::optional<std::string> phase;
    std::optional<int> agent_index;
    bool malformed = false;  // marks a deliberately unparseable reply

    bool operator==(const ScriptEntry&) const = default;
};

struct Script {
    std::vector<ScriptEntry> entries;

    /// JSON-lines: {"reply": "...", "fingerprint"?, "phase"?, "agent"?, "malformed"?}
    static Script parse_jsonl(const std::string& content);
    static Script load(const std::string& path);
    std::string to_jsonl() const;

    bool operator==(const Script&) const = default;
};

/// Deterministic replay backend for tests and offline runs.
class ScriptedBackend final : public Backend {
public:
    explicit ScriptedBackend(Script script);

    CompletionResponse complete(const CompletionRequest& req) override;
    int max_concurrency() const override;

    /// Total number of complete() calls answered.
    std::size_t consumed() const;
    /// Every request received, in arrival order.
    std::vector<CompletionRequest> requests() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, std::string> by_fingerprint_;
    std::map<std::pair<std::string, int>, std::string> by_tag_;
    std::deque<std::string> queue_;
    std::vector<CompletionRequest> seen_;
    std::size_t consumed_ = 0;
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds base_delay{1000};  // doubles per retry: 1s, 2s, 4s
    double jitter = 0.2;                         // +-20%
};

struct HttpBackendConfig {
    std::string base_url;  // e.g. https://api.openai.com or http://localhost:8080/v1
    std::string api_key;
    RetryPolicy retry;
    int max_in_flight = 4;
    std::chrono::seconds timeout{120};

    /// Fills base_url / api_key from KAIRANBAN_BASE_URL / KAIRANBAN_API_KEY
    /// where they are still empty.
    void apply_environment();
};

/// OpenAI-compatible chat-completions client.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    ~HttpBackend() override;

    CompletionResponse complete(const CompletionRequest& req) override;
    int max_concurrency() const override { return config_.max_in_flight; }

    /// Request body as sent on the wire.
    static std::string request_body(const CompletionRequest& req);
    /// Extracts choices[0].message.content; TransportError when absent.
    static std::string response_text(const std::string& body);

    /// Replaces the sleep used between retries (tests).
    void set_sleep(std::function<void(std::chrono::milliseconds)> sleep) { sleep_ = std::move(sleep); }

private:
    HttpBackendConfig config_;
    std::string scheme_host_port_;
    std::string path_;
    std::counting_semaphore<1024> in_flight_;
    std::function<void(std::chrono::milliseconds)> sleep_;
};

}  // namespace kairanban
