#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace activerag {

/// Root of every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (empty continuation, k < 1, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Malformed serialized input. `field()` names the offending field or line.
class ParseError : public Error {
public:
    ParseError(std::string field, const std::string& detail)
        : Error(field + ": " + detail), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class MissingSlot : public Error {
public:
    explicit MissingSlot(std::string slot)
        : Error("missing binding for slot {" + slot + "}"), slot_(std::move(slot)) {}
    const std::string& slot() const noexcept { return slot_; }

private:
    std::string slot_;
};

class ExtraBinding : public Error {
public:
    explicit ExtraBinding(std::string key)
        : Error("binding '" + key + "' has no matching slot"), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

class TemplateError : public Error {
public:
    using Error::Error;
};

/// Network failure or timeout that survived every retry.
class TransportError : public Error {
public:
    using Error::Error;
};

/// Non-2xx reply from a remote endpoint.
class ApiError : public Error {
public:
    ApiError(int status, std::string body_excerpt)
        : Error("HTTP " + std::to_string(status) + ": " + body_excerpt),
          status_(status),
          body_excerpt_(std::move(body_excerpt)) {}
    int status() const noexcept { return status_; }
    const std::string& body_excerpt() const noexcept { return body_excerpt_; }

private:
    int status_;
    std::string body_excerpt_;
};

class CacheError : public Error {
public:
    using Error::Error;
};

class UnsupportedBackend : public Error {
public:
    using Error::Error;
};

class IngestError : public Error {
public:
    IngestError(const std::string& what, std::vector<std::string> ids = {})
        : Error(what), ids_(std::move(ids)) {}
    const std::vector<std::string>& ids() const noexcept { return ids_; }

private:
    std::vector<std::string> ids_;
};

class RetrievalError : public Error {
public:
    using Error::Error;
};

class ReportError : public Error {
public:
    ReportError(const std::string& what, std::vector<std::string> ids = {})
        : Error(what), ids_(std::move(ids)) {}
    const std::vector<std::string>& ids() const noexcept { return ids_; }

private:
    std::vector<std::string> ids_;
};

}  // namespace activerag
