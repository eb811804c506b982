#include "activerag/cache.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "activerag/digest.hpp"
#include "activerag/errors.hpp"

namespace activerag {

namespace fs = std::filesystem;

CacheKey CacheKey::make(std::string_view backend, std::string_view model, std::string_view prompt,
                        double temperature) {
    // nlohmann prints doubles in shortest round-trip form, so the canonical
    // text (and therefore the digest) does not depend on the platform.
    nlohmann::json canon = nlohmann::json::array(
        {"v1", std::string(backend), std::string(model), std::string(prompt), temperature});
    return {sha256_hex(canon.dump()), std::string(backend), std::string(model), temperature};
}

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) fs::create_directories(dir_ / "entries");
}

fs::path ResponseCache::entry_path(const CacheKey& key) const {
    return dir_ / "entries" / key.digest.substr(0, 2) / (key.digest + ".json");
}

std::optional<std::string> ResponseCache::read_entry(const CacheKey& key) const {
    if (dir_.empty()) return std::nullopt;
    auto path = entry_path(key);
    std::error_code ec;
    if (!fs::exists(path, ec)) return std::nullopt;
    std::string raw;
    try {
        raw = read_file(path);
    } catch (const Error& e) {
        throw CacheError(std::string("unreadable cache entry: ") + e.what());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        throw CacheError("corrupt cache entry " + path.string());
    }
    if (!j.is_object() || !j.contains("key") || !j.contains("text") || !j["text"].is_string() ||
        j["key"] != key.digest)
        throw CacheError("cache entry " + path.string() + " does not match its key");
    return j["text"].get<std::string>();
}

void ResponseCache::write_entry(const CacheKey& key, std::string_view text) {
    if (dir_.empty()) return;
    auto path = entry_path(key);
    fs::create_directories(path.parent_path());
    nlohmann::json j = {{"key", key.digest},
                        {"backend", key.backend},
                        {"model", key.model},
                        {"temperature", key.temperature},
                        {"text", std::string(text)}};
    std::ostringstream tid;
    tid << std::this_thread::get_id();
    auto tmp = path;
    tmp += ".tmp" + tid.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CacheError("cannot write " + tmp.string());
        out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    }
    fs::rename(tmp, path);
    std::ofstream index(dir_ / "index.tsv", std::ios::app);
    index << key.digest << '\t' << key.backend << '\t' << key.model << '\n';
}

std::optional<std::string> ResponseCache::lookup(const CacheKey& key) {
    {
        std::shared_lock lock(mutex_);
        if (auto it = memory_.find(key.digest); it != memory_.end()) return it->second;
    }
    auto text = read_entry(key);
    if (text) {
        std::unique_lock lock(mutex_);
        return memory_.try_emplace(key.digest, std::move(*text)).first->second;
    }
    return std::nullopt;
}

std::string ResponseCache::store(const CacheKey& key, std::string_view text, bool replace_corrupt) {
    std::unique_lock lock(mutex_);
    if (auto it = memory_.find(key.digest); it != memory_.end()) return it->second;
    try {
        if (auto existing = read_entry(key)) return memory_.try_emplace(key.digest, std::move(*existing)).first->second;
    } catch (const CacheError&) {
        if (!replace_corrupt) throw;
    }
    write_entry(key, text);
    return memory_.try_emplace(key.digest, std::string(text)).first->second;
}

}  // namespace activerag
