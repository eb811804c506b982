#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "activerag/core.hpp"
#include "activerag/http.hpp"

namespace activerag {

struct CorpusDoc {
    std::string id;
    std::optional<std::string> title;
    std::string text;
};

/// Validated passage collection: unique ids, at least one document, and
/// every document has at least one token.
class Corpus {
public:
    /// One JSON record per line with fields id, text and optional title.
    static Corpus from_file(const std::filesystem::path& path);
    static Corpus from_docs(std::vector<CorpusDoc> docs);

    const std::vector<CorpusDoc>& docs() const noexcept { return docs_; }
    std::size_t size() const noexcept { return docs_.size(); }
    /// Digest of the canonical document list.
    std::string checksum() const;

private:
    std::vector<CorpusDoc> docs_;
};

/// Text that gets indexed for a document: title (if any) then body.
std::string indexed_text(const CorpusDoc& doc);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
};

/// Okapi BM25 over an in-memory inverted index. Immutable once built, so
/// concurrent retrieve() calls are safe.
class Bm25Index {
public:
    static constexpr std::string_view kTokenizerVersion = "lower-alnum-v1";

    static Bm25Index build(const Corpus& corpus, Bm25Params params = {});

    /// Directory with manifest.json, docs.jsonl and postings.tsv.
    void save(const std::filesystem::path& dir) const;
    static Bm25Index load(const std::filesystem::path& dir);

    std::size_t doc_count() const noexcept { return docs_.size(); }
    double avgdl() const noexcept { return avgdl_; }
    std::size_t vocabulary_size() const noexcept { return postings_.size(); }
    const Bm25Params& params() const noexcept { return params_; }
    const std::string& corpus_checksum() const noexcept { return corpus_checksum_; }

    std::uint32_t document_length(std::uint32_t doc) const { return docs_.at(doc).length; }
    const std::string& document_id(std::uint32_t doc) const { return docs_.at(doc).id; }
    /// 0 for terms not in the vocabulary.
    std::uint32_t df(std::string_view term) const;
    const std::vector<Posting>* postings(std::string_view term) const;

    /// ln(1 + (N - df + 0.5) / (df + 0.5)).
    double idf(std::uint32_t df) const;

    /// Σ over query terms (duplicates included) of
    /// IDF(t) · tf·(k1+1) / (tf + k1·(1 − b + b·|d|/avgdl)).
    double score(const std::vector<std::string>& query_terms, std::uint32_t doc) const;

    /// Top-k by score, ties broken by ascending passage id. Throws
    /// RetrievalError for a query with no tokens.
    RetrievedSet retrieve(std::string_view query, int k, std::string question_id = {}) const;

private:
    struct Doc {
        std::string id;
        std::optional<std::string> title;
        std::string text;
        std::uint32_t length;
    };

    void finalize();
    double term_weight(double idf, std::uint32_t tf, std::uint32_t doc) const;

    Bm25Params params_;
    std::vector<Doc> docs_;
    std::unordered_map<std::string, std::uint32_t> vocab_;
    std::vector<std::vector<Posting>> postings_;
    std::vector<std::string> terms_;
    double avgdl_ = 0.0;
    std::string corpus_checksum_;
};

class Retriever {
public:
    virtual ~Retriever() = default;
    virtual RetrievedSet retrieve(const std::string& question_id, const std::string& query, int k) = 0;
};

class LocalRetriever final : public Retriever {
public:
    explicit LocalRetriever(std::shared_ptr<const Bm25Index> index) : index_(std::move(index)) {}
    RetrievedSet retrieve(const std::string& question_id, const std::string& query, int k) override {
        return index_->retrieve(query, k, question_id);
    }
    const Bm25Index& index() const noexcept { return *index_; }

private:
    std::shared_ptr<const Bm25Index> index_;
};

/// POST {endpoint}/retrieve with {query, k}; expects
/// {passages: [{id, title?, text, score}]} with non-increasing scores.
class RemoteRetriever final : public Retriever {
public:
    RemoteRetriever(std::shared_ptr<HttpTransport> transport, std::string endpoint, RetryPolicy retry = {0});
    RetrievedSet retrieve(const std::string& question_id, const std::string& query, int k) override;

private:
    std::shared_ptr<HttpTransport> transport_;
    std::string endpoint_;
    RetryPolicy retry_;
};

}  // namespace activerag
