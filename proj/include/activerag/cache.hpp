#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>

namespace activerag {

/// Content address of one chat request. The digest covers backend identity,
/// model, prompt and temperature and is identical on every platform.
struct CacheKey {
    std::string digest;
    std::string backend;
    std::string model;
    double temperature = 0.0;

    static CacheKey make(std::string_view backend, std::string_view model, std::string_view prompt,
                         double temperature);
};

/// Persistent first-writer-wins response store.
///
/// Layout: `<dir>/entries/<2 hex>/<digest>.json`, one file per key, plus
/// `<dir>/index.tsv` listing digest, backend and model per stored entry.
/// An empty `dir` keeps entries in memory only.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir = {});

    /// Cached text for `key`. Throws CacheError when the on-disk entry is
    /// unreadable or belongs to another key.
    std::optional<std::string> lookup(const CacheKey& key);

    /// Stores `text` unless a valid entry already exists, and returns the
    /// entry that is now stored. `replace_corrupt` lets a caller overwrite an
    /// entry that lookup() reported as corrupt.
    std::string store(const CacheKey& key, std::string_view text, bool replace_corrupt = false);

    const std::filesystem::path& dir() const noexcept { return dir_; }
    std::filesystem::path entry_path(const CacheKey& key) const;

private:
    std::optional<std::string> read_entry(const CacheKey& key) const;
    void write_entry(const CacheKey& key, std::string_view text);

    std::filesystem::path dir_;
    std::shared_mutex mutex_;
    std::unordered_map<std::string, std::string> memory_;
};

}  // namespace activerag
