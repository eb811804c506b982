#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace activerag {

struct HttpResponse {
    int status = 0;
    std::string body;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

/// Minimal HTTP surface used by the chat, scoring and retriever clients.
/// Implementations throw TransportError on connection failure or timeout.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post_json(const std::string& url, const std::string& body,
                                   const Headers& headers) = 0;
    virtual HttpResponse get(const std::string& url, const Headers& headers) = 0;
    /// Number of requests attempted through this transport.
    virtual std::size_t transactions() const noexcept = 0;
};

/// cpp-httplib backed transport; handles http:// and https:// URLs.
class HttplibTransport final : public HttpTransport {
public:
    explicit HttplibTransport(std::chrono::milliseconds timeout = std::chrono::seconds(60));

    HttpResponse post_json(const std::string& url, const std::string& body,
                           const Headers& headers) override;
    HttpResponse get(const std::string& url, const Headers& headers) override;
    std::size_t transactions() const noexcept override { return count_.load(); }

private:
    std::chrono::milliseconds timeout_;
    std::atomic<std::size_t> count_{0};
};

struct ParsedUrl {
    std::string scheme_host_port;  // "https://api.example.com:443"
    std::string path;              // "/v1/chat/completions"
};

/// Splits an absolute http(s) URL; throws TransportError on anything else.
ParsedUrl parse_url(const std::string& url);

/// Joins a base URL and a path with exactly one '/'.
std::string join_url(const std::string& base, const std::string& path);

/// Retry schedule: delay_n = initial * factor^n, scaled by a jitter factor
/// drawn uniformly from [0.5, 1.0].
struct RetryPolicy {
    int retries = 4;
    std::chrono::milliseconds initial_backoff{500};
    double factor = 2.0;

    std::chrono::milliseconds delay(int attempt) const;
};

/// Sends `attempt` up to retries+1 times. Retries transport errors, 429 and
/// 5xx. Returns the first 2xx; throws ApiError for a final non-2xx and
/// TransportError when the last attempt failed at the transport level.
HttpResponse send_with_retry(const RetryPolicy& policy, const std::function<HttpResponse()>& attempt);

}  // namespace activerag
