#include "activerag/http.hpp"

#include <cmath>
#include <random>
#include <thread>

#include <httplib.h>

#include "activerag/errors.hpp"

namespace activerag {

ParsedUrl parse_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("not an absolute URL: " + url);
    auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw TransportError("unsupported scheme in " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string join_url(const std::string& base, const std::string& path) {
    std::string b = base;
    while (!b.empty() && b.back() == '/') b.pop_back();
    std::string p = path;
    while (!p.empty() && p.front() == '/') p.erase(p.begin());
    return b + "/" + p;
}

HttplibTransport::HttplibTransport(std::chrono::milliseconds timeout) : timeout_(timeout) {}

namespace {

httplib::Headers to_headers(const Headers& headers) {
    httplib::Headers out;
    for (const auto& [k, v] : headers) out.emplace(k, v);
    return out;
}

HttpResponse finish(const httplib::Result& res, const std::string& url) {
    if (!res) throw TransportError(url + ": " + httplib::to_string(res.error()));
    return {res->status, res->body};
}

}  // namespace

HttpResponse HttplibTransport::post_json(const std::string& url, const std::string& body,
                                         const Headers& headers) {
    ++count_;
    auto parts = parse_url(url);
    httplib::Client client(parts.scheme_host_port);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    auto res = client.Post(parts.path, to_headers(headers), body, "application/json");
    return finish(res, url);
}

HttpResponse HttplibTransport::get(const std::string& url, const Headers& headers) {
    ++count_;
    auto parts = parse_url(url);
    httplib::Client client(parts.scheme_host_port);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    auto res = client.Get(parts.path, to_headers(headers));
    return finish(res, url);
}

std::chrono::milliseconds RetryPolicy::delay(int attempt) const {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    std::uniform_real_distribution<double> jitter(0.5, 1.0);
    double base = static_cast<double>(initial_backoff.count()) * std::pow(factor, attempt);
    return std::chrono::milliseconds(static_cast<std::int64_t>(base * jitter(rng)));
}

HttpResponse send_with_retry(const RetryPolicy& policy, const std::function<HttpResponse()>& attempt) {
    for (int n = 0;; ++n) {
        const bool last = n >= policy.retries;
        try {
            auto res = attempt();
            if (res.status >= 200 && res.status < 300) return res;
            const bool retryable = res.status == 429 || res.status >= 500;
            if (!retryable || last) throw ApiError(res.status, res.body.substr(0, 512));
        } catch (const TransportError&) {
            if (last) throw;
        }
        std::this_thread::sleep_for(policy.delay(n));
    }
}

}  // namespace activerag
