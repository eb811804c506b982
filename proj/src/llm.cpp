#include "activerag/llm.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "activerag/digest.hpp"
#include "activerag/errors.hpp"
#include "activerag/text.hpp"

namespace activerag {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::int64_t elapsed_ms(Clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
}

Headers auth_headers(const std::string& api_key) {
    Headers h;
    if (!api_key.empty()) h.emplace_back("Authorization", "Bearer " + api_key);
    return h;
}

// Code points in a UTF-8 string (continuation bytes are not counted).
std::size_t codepoint_length(std::string_view s) {
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

}  // namespace

OpenAiChatBackend::OpenAiChatBackend(std::shared_ptr<HttpTransport> transport, std::string base_url,
                                     std::string api_key, RetryPolicy retry)
    : transport_(std::move(transport)),
      base_url_(std::move(base_url)),
      api_key_(std::move(api_key)),
      retry_(retry) {}

ChatResponse OpenAiChatBackend::complete(const ChatRequest& req) {
    if (req.prompt.empty()) throw PreconditionError("chat request with empty prompt");
    json body = {{"model", req.model},
                 {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})},
                 {"temperature", req.temperature}};
    const auto url = join_url(base_url_, "chat/completions");
    const auto payload = body.dump(-1, ' ', false, json::error_handler_t::replace);
    auto start = Clock::now();
    auto res = send_with_retry(retry_, [&] { return transport_->post_json(url, payload, auth_headers(api_key_)); });

    json reply;
    try {
        reply = json::parse(res.body);
        const auto& content = reply.at("choices").at(0).at("message").at("content");
        return {content.is_null() ? std::string() : content.get<std::string>(), false, elapsed_ms(start)};
    } catch (const json::exception& e) {
        throw ApiError(res.status, std::string("malformed chat response: ") + e.what());
    }
}

MockChatBackend::MockChatBackend(std::vector<MockRule> rules, std::chrono::milliseconds delay)
    : rules_(std::move(rules)), delay_(delay) {}

std::unique_ptr<MockChatBackend> MockChatBackend::from_file(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ParseError(path.string(), e.what());
    }
    std::vector<MockRule> rules;
    try {
        for (const auto& r : j.at("rules")) {
            MockRule rule;
            if (r.contains("contains")) {
                rule.match = MockRule::Match::Contains;
                rule.pattern = r["contains"].get<std::string>();
            } else if (r.contains("equals")) {
                rule.match = MockRule::Match::Equals;
                rule.pattern = r["equals"].get<std::string>();
            } else if (r.contains("sha256")) {
                rule.match = MockRule::Match::Sha256;
                rule.pattern = r["sha256"].get<std::string>();
            } else {
                throw ParseError(path.string(), "rule needs one of contains, equals, sha256");
            }
            rule.reply = r.at("reply").get<std::string>();
            rules.push_back(std::move(rule));
        }
    } catch (const json::exception& e) {
        throw ParseError(path.string(), e.what());
    }
    auto delay = std::chrono::milliseconds(j.value("delay_ms", 0));
    return std::make_unique<MockChatBackend>(std::move(rules), delay);
}

std::string MockChatBackend::echo_reply(std::string_view prompt) {
    auto norm = normalize_text(prompt);
    std::size_t cut = 0, chars = 0;
    while (cut < norm.size() && chars < 40) {
        ++cut;
        while (cut < norm.size() && (static_cast<unsigned char>(norm[cut]) & 0xC0) == 0x80) ++cut;
        ++chars;
    }
    return "MOCK:" + norm.substr(0, cut);
}

ChatResponse MockChatBackend::complete(const ChatRequest& req) {
    if (req.prompt.empty()) throw PreconditionError("chat request with empty prompt");
    auto start = Clock::now();
    ++calls_;
    auto now = ++in_flight_;
    auto peak = max_in_flight_.load();
    while (now > peak && !max_in_flight_.compare_exchange_weak(peak, now)) {
    }
    {
        std::lock_guard lock(log_mutex_);
        prompts_.push_back(req.prompt);
    }
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);

    std::optional<std::string> reply;
    std::optional<std::string> prompt_digest;
    for (const auto& rule : rules_) {
        bool hit = false;
        switch (rule.match) {
            case MockRule::Match::Contains: hit = req.prompt.find(rule.pattern) != std::string::npos; break;
            case MockRule::Match::Equals: hit = req.prompt == rule.pattern; break;
            case MockRule::Match::Sha256:
                if (!prompt_digest) prompt_digest = sha256_hex(req.prompt);
                hit = *prompt_digest == rule.pattern;
                break;
        }
        if (hit) {
            reply = rule.reply;
            break;
        }
    }
    --in_flight_;
    return {reply ? *reply : echo_reply(req.prompt), false, elapsed_ms(start)};
}

std::string MockChatBackend::identity() const {
    json canon = json::array();
    for (const auto& r : rules_) canon.push_back({static_cast<int>(r.match), r.pattern, r.reply});
    return "mock:" + sha256_hex(canon.dump()).substr(0, 16);
}

std::vector<std::string> MockChatBackend::prompts() const {
    std::lock_guard lock(log_mutex_);
    return prompts_;
}

std::unique_ptr<MockChatBackend> mock_program(std::vector<MockRule> rules) {
    return std::make_unique<MockChatBackend>(std::move(rules));
}

CachedChatBackend::CachedChatBackend(ChatBackend& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}

ChatResponse CachedChatBackend::complete(const ChatRequest& req) {
    auto start = Clock::now();
    const auto key = CacheKey::make(inner_.identity(), req.model, req.prompt, req.temperature);
    bool corrupt = false;
    try {
        if (auto hit = cache_.lookup(key)) return {*hit, true, elapsed_ms(start)};
    } catch (const CacheError& e) {
        ++cache_errors_;
        corrupt = true;
        std::cerr << "warning: " << e.what() << "; recomputing\n";
    }
    auto res = inner_.complete(req);
    res.text = cache_.store(key, res.text, corrupt);
    return res;
}

MockScorer::MockScorer(std::map<std::pair<std::string, std::string>, double> table, std::vector<Rule> rules,
                       std::optional<double> fallback)
    : table_(std::move(table)), rules_(std::move(rules)), fallback_(fallback) {}

std::unique_ptr<MockScorer> MockScorer::from_file(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
        std::vector<Rule> rules;
        for (const auto& r : j.value("rules", json::array()))
            rules.push_back({r.at("contains").get<std::string>(), r.at("nll").get<double>()});
        std::optional<double> fallback;
        if (j.contains("default")) fallback = j["default"].get<double>();
        return std::make_unique<MockScorer>(std::map<std::pair<std::string, std::string>, double>{},
                                            std::move(rules), fallback);
    } catch (const json::exception& e) {
        throw ParseError(path.string(), e.what());
    }
}

double MockScorer::score_mean_nll(const ScoreRequest& req) {
    if (req.continuation.empty()) throw PreconditionError("score request with empty continuation");
    if (auto it = table_.find({req.context, req.continuation}); it != table_.end()) return it->second;
    const std::string joined = req.context + req.continuation;
    for (const auto& r : rules_)
        if (joined.find(r.contains) != std::string::npos) return r.nll;
    if (fallback_) return *fallback_;
    throw UnsupportedBackend("mock scorer has no entry for this request");
}

OpenAiScorer::OpenAiScorer(std::shared_ptr<HttpTransport> transport, std::string base_url, std::string api_key,
                           std::string model, RetryPolicy retry)
    : transport_(std::move(transport)),
      base_url_(std::move(base_url)),
      api_key_(std::move(api_key)),
      model_(std::move(model)),
      retry_(retry) {}

double OpenAiScorer::score_mean_nll(const ScoreRequest& req) {
    if (req.continuation.empty()) throw PreconditionError("score request with empty continuation");
    json body = {{"model", model_},     {"prompt", req.context + req.continuation},
                 {"max_tokens", 0},     {"echo", true},
                 {"logprobs", 1},       {"temperature", 0}};
    const auto url = join_url(base_url_, "completions");
    auto res = send_with_retry(retry_, [&] {
        return transport_->post_json(url, body.dump(-1, ' ', false, json::error_handler_t::replace),
                                     auth_headers(api_key_));
    });
    json reply;
    try {
        reply = json::parse(res.body);
    } catch (const json::exception& e) {
        throw ApiError(res.status, std::string("malformed completion response: ") + e.what());
    }
    const json* lp = nullptr;
    try {
        lp = &reply.at("choices").at(0).at("logprobs");
    } catch (const json::exception&) {
        throw UnsupportedBackend("endpoint returned no logprobs");
    }
    if (lp->is_null() || !lp->contains("token_logprobs") || !lp->contains("text_offset"))
        throw UnsupportedBackend("endpoint returned no token log-probabilities");
    const auto& logprobs = (*lp)["token_logprobs"];
    const auto& offsets = (*lp)["text_offset"];
    if (!logprobs.is_array() || !offsets.is_array() || logprobs.size() != offsets.size())
        throw UnsupportedBackend("inconsistent logprob arrays");

    const auto boundary = codepoint_length(req.context);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < logprobs.size(); ++i) {
        if (!offsets[i].is_number() || offsets[i].get<std::size_t>() < boundary) continue;
        if (!logprobs[i].is_number()) continue;
        sum -= logprobs[i].get<double>();
        ++n;
    }
    if (n == 0) throw UnsupportedBackend("endpoint echoed no continuation tokens");
    return sum / static_cast<double>(n);
}

}  // namespace activerag
