#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "activerag/cache.hpp"
#include "activerag/http.hpp"

namespace activerag {

/// One single-user-message chat call.
struct ChatRequest {
    std::string model;
    std::string prompt;
    double temperature = 0.2;
};

struct ChatResponse {
    std::string text;  // may be empty if the endpoint returned empty content
    bool from_cache = false;
    std::int64_t latency_ms = 0;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// Safe to call concurrently.
    virtual ChatResponse complete(const ChatRequest& req) = 0;
    /// Part of every cache key, so two backends never share entries.
    virtual std::string identity() const = 0;
};

/// POST {base_url}/chat/completions on any OpenAI-compatible server.
class OpenAiChatBackend final : public ChatBackend {
public:
    OpenAiChatBackend(std::shared_ptr<HttpTransport> transport, std::string base_url,
                      std::string api_key, RetryPolicy retry = {});

    ChatResponse complete(const ChatRequest& req) override;
    std::string identity() const override { return "openai:" + base_url_; }

private:
    std::shared_ptr<HttpTransport> transport_;
    std::string base_url_;
    std::string api_key_;
    RetryPolicy retry_;
};

struct MockRule {
    enum class Match { Contains, Equals, Sha256 };
    Match match = Match::Contains;
    std::string pattern;
    std::string reply;
};

/// Scripted backend: the first matching rule's reply, or the echo reply
/// "MOCK:<first 40 chars of the normalized prompt>" when nothing matches.
/// Counts calls and records the peak number of concurrent calls.
class MockChatBackend final : public ChatBackend {
public:
    explicit MockChatBackend(std::vector<MockRule> rules = {},
                             std::chrono::milliseconds delay = std::chrono::milliseconds(0));

    /// JSON document {"rules": [{"contains"|"equals"|"sha256": str, "reply": str}], "delay_ms": int}.
    static std::unique_ptr<MockChatBackend> from_file(const std::filesystem::path& path);

    ChatResponse complete(const ChatRequest& req) override;
    std::string identity() const override;

    std::size_t calls() const noexcept { return calls_.load(); }
    std::size_t max_in_flight() const noexcept { return max_in_flight_.load(); }
    /// Every prompt seen, in call order.
    std::vector<std::string> prompts() const;

    static std::string echo_reply(std::string_view prompt);

private:
    std::vector<MockRule> rules_;
    std::chrono::milliseconds delay_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> in_flight_{0};
    std::atomic<std::size_t> max_in_flight_{0};
    mutable std::mutex log_mutex_;
    std::vector<std::string> prompts_;
};

/// `mock_program(rules)` from the backend contract.
std::unique_ptr<MockChatBackend> mock_program(std::vector<MockRule> rules);

/// Decorates a backend with the persistent response cache. A hit returns
/// the stored text with from_cache=true and never reaches the inner backend.
/// Corrupt entries are logged, recomputed and overwritten.
class CachedChatBackend final : public ChatBackend {
public:
    CachedChatBackend(ChatBackend& inner, ResponseCache& cache);

    ChatResponse complete(const ChatRequest& req) override;
    std::string identity() const override { return inner_.identity(); }

    std::size_t cache_errors() const noexcept { return cache_errors_.load(); }

private:
    ChatBackend& inner_;
    ResponseCache& cache_;
    std::atomic<std::size_t> cache_errors_{0};
};

struct ScoreRequest {
    std::string context;
    std::string continuation;
};

class Scorer {
public:
    virtual ~Scorer() = default;
    /// Mean per-token negative log-likelihood of `continuation` given
    /// `context`. Perplexity is exp() of the result.
    virtual double score_mean_nll(const ScoreRequest& req) = 0;
};

/// Table-driven scorer. Exact (context, continuation) entries take
/// precedence, then substring rules over context + continuation in order,
/// then the default. With no match and no default it throws
/// UnsupportedBackend.
class MockScorer final : public Scorer {
public:
    struct Rule {
        std::string contains;
        double nll;
    };

    MockScorer() = default;
    MockScorer(std::map<std::pair<std::string, std::string>, double> table, std::vector<Rule> rules,
               std::optional<double> fallback);

    /// JSON document {"rules": [{"contains": str, "nll": num}], "default": num}.
    static std::unique_ptr<MockScorer> from_file(const std::filesystem::path& path);

    double score_mean_nll(const ScoreRequest& req) override;

private:
    std::map<std::pair<std::string, std::string>, double> table_;
    std::vector<Rule> rules_;
    std::optional<double> fallback_;
};

/// Echo + logprobs request against POST {base_url}/completions. Servers that
/// return no token log-probabilities raise UnsupportedBackend.
class OpenAiScorer final : public Scorer {
public:
    OpenAiScorer(std::shared_ptr<HttpTransport> transport, std::string base_url, std::string api_key,
                 std::string model, RetryPolicy retry = {});

    double score_mean_nll(const ScoreRequest& req) override;

private:
    std::shared_ptr<HttpTransport> transport_;
    std::string base_url_;
    std::string api_key_;
    std::string model_;
    RetryPolicy retry_;
};

}  // namespace activerag
