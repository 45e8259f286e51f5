#include "kairanban/backend.hpp"

#include <random>
#include <thread>

#include <fmt/format.h>
#include "json.hpp"

#include "kairanban/text.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

namespace kairanban {

using nlohmann::json;

std::string request_fingerprint(const Prompt& messages) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto mix = [&h](unsigned char c) {
        h ^= c;
        h *= 0x100000001b3ULL;
    };
    for (const auto& m : messages) {
        for (char c : m.content) mix(static_cast<unsigned char>(c));
        mix(0x1f);  // unit separator between messages
    }
    return fmt::format("{:016x}", h);
}

// ---------------------------------------------------------------------------
// Script

Script Script::parse_jsonl(const std::string& content) {
    Script script;
    int line_no = 0;
    for (const auto& line : text::split_lines(content)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::MalformedRow,
                        fmt::format("script line {}: {}", line_no, e.what()));
        }
        if (!j.is_object() || !j.contains("reply") || !j["reply"].is_string()) {
            throw Error(ErrorCode::MalformedRow,
                        fmt::format("script line {}: expected an object with a string \"reply\"", line_no));
        }
        ScriptEntry e;
        e.reply = j["reply"].get<std::string>();
        if (j.contains("fingerprint")) e.fingerprint = j["fingerprint"].get<std::string>();
        if (j.contains("phase")) e.phase = j["phase"].get<std::string>();
        if (j.contains("agent")) e.agent_index = j["agent"].get<int>();
        if (j.contains("malformed")) e.malformed = j["malformed"].get<bool>();
        if (e.phase.has_value() != e.agent_index.has_value()) {
            throw Error(ErrorCode::MalformedRow,
                        fmt::format("script line {}: \"phase\" and \"agent\" go together", line_no));
        }
        script.entries.push_back(std::move(e));
    }
    return script;
}

Script Script::load(const std::string& path) { return parse_jsonl(text::read_file(path)); }

std::string Script::to_jsonl() const {
    std::string out;
    for (const auto& e : entries) {
        json j;
        if (e.fingerprint) j["fingerprint"] = *e.fingerprint;
        if (e.phase) j["phase"] = *e.phase;
        if (e.agent_index) j["agent"] = *e.agent_index;
        if (e.malformed) j["malformed"] = true;
        j["reply"] = e.reply;
        out += j.dump();
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// ScriptedBackend

ScriptedBackend::ScriptedBackend(Script script) {
    for (auto& e : script.entries) {
        if (e.fingerprint) {
            by_fingerprint_[*e.fingerprint] = std::move(e.reply);
        } else if (e.phase) {
            by_tag_[{*e.phase, *e.agent_index}] = std::move(e.reply);
        } else {
            queue_.push_back(std::move(e.reply));
        }
    }
}

CompletionResponse ScriptedBackend::complete(const CompletionRequest& req) {
    std::lock_guard lock(mu_);
    seen_.push_back(req);
    CompletionResponse resp;
    if (auto it = by_fingerprint_.find(request_fingerprint(req.messages)); it != by_fingerprint_.end()) {
        resp.text = it->second;
    } else if (auto jt = by_tag_.find({req.tag.phase, req.tag.agent_index}); jt != by_tag_.end()) {
        resp.text = jt->second;
    } else if (!queue_.empty()) {
        resp.text = std::move(queue_.front());
        queue_.pop_front();
    } else {
        throw Error(ErrorCode::ScriptExhausted,
                    fmt::format("no scripted reply for {} agent {} (fingerprint {})", req.tag.phase,
                                req.tag.agent_index, request_fingerprint(req.messages)));
    }
    ++consumed_;
    return resp;
}

int ScriptedBackend::max_concurrency() const {
    std::lock_guard lock(mu_);
    return queue_.empty() ? 64 : 1;
}

std::size_t ScriptedBackend::consumed() const {
    std::lock_guard lock(mu_);
    return consumed_;
}

std::vector<CompletionRequest> ScriptedBackend::requests() const {
    std::lock_guard lock(mu_);
    return seen_;
}

// ---------------------------------------------------------------------------
// HttpBackend

void HttpBackendConfig::apply_environment() {
    if (base_url.empty()) {
        if (const char* v = std::getenv("KAIRANBAN_BASE_URL")) base_url = v;
    }
    if (api_key.empty()) {
        if (const char* v = std::getenv("KAIRANBAN_API_KEY")) api_key = v;
    }
}

namespace {

// Splits "http://host:port/prefix" into ("http://host:port", "/prefix").
std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::InvalidConfig, "backend URL needs a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    std::string path = url.substr(path_start);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {url.substr(0, path_start), path};
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)),
      in_flight_(std::max(1, config_.max_in_flight)),
      sleep_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
    if (config_.base_url.empty()) throw Error(ErrorCode::InvalidConfig, "backend URL is empty");
    if (config_.max_in_flight < 1 || config_.max_in_flight > 1024) {
        throw Error(ErrorCode::InvalidConfig, "max_in_flight must be in [1, 1024]");
    }
    auto [base, prefix] = split_url(config_.base_url);
    scheme_host_port_ = std::move(base);
    const bool has_v1 = prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0;
    path_ = prefix + (has_v1 ? "/chat/completions" : "/v1/chat/completions");
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::request_body(const CompletionRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    json body = {{"model", req.model},
                 {"messages", std::move(messages)},
                 {"temperature", req.temperature},
                 {"max_tokens", req.max_tokens}};
    return body.dump();
}

std::string HttpBackend::response_text(const std::string& body) {
    try {
        const json j = json::parse(body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::TransportError, std::string("unexpected response body: ") + e.what());
    }
}

CompletionResponse HttpBackend::complete(const CompletionRequest& req) {
    if (req.max_tokens <= 0) throw Error(ErrorCode::InvalidConfig, "max_tokens must be positive");
    const std::string body = request_body(req);

    in_flight_.acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{in_flight_};

    thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
    const auto start = std::chrono::steady_clock::now();

    for (int attempt = 1;; ++attempt) {
        httplib::Client client(scheme_host_port_);
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        client.set_write_timeout(config_.timeout);
        httplib::Headers headers;
        if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

        auto res = client.Post(path_, headers, body, "application/json");

        ErrorCode failure;
        std::string detail;
        if (!res) {
            failure = ErrorCode::TransportError;
            detail = httplib::to_string(res.error());
        } else if (res->status == 200) {
            CompletionResponse out;
            out.text = response_text(res->body);
            out.attempt_count = attempt;
            out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
            return out;
        } else if (res->status == 401 || res->status == 403) {
            throw Error(ErrorCode::AuthError, fmt::format("HTTP {}", res->status));
        } else if (res->status == 429) {
            failure = ErrorCode::RateLimited;
            detail = "HTTP 429";
        } else if (res->status >= 500) {
            failure = ErrorCode::TransportError;
            detail = fmt::format("HTTP {}", res->status);
        } else {
            throw Error(ErrorCode::TransportError, fmt::format("HTTP {}: {}", res->status, res->body));
        }

        if (attempt > config_.retry.max_retries) {
            throw Error(failure, fmt::format("{} after {} attempts", detail, attempt));
        }
        std::uniform_real_distribution<double> jitter(1.0 - config_.retry.jitter, 1.0 + config_.retry.jitter);
        const double scale = static_cast<double>(1 << (attempt - 1)) * jitter(jitter_rng);
        sleep_(std::chrono::milliseconds(
            static_cast<std::int64_t>(static_cast<double>(config_.retry.base_delay.count()) * scale)));
    }
}

}  // namespace kairanban
