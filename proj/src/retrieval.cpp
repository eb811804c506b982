#include "activerag/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "activerag/digest.hpp"
#include "activerag/errors.hpp"
#include "activerag/text.hpp"

namespace activerag {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string id_string(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

std::string indexed_text(const CorpusDoc& doc) {
    if (doc.title && !doc.title->empty()) return *doc.title + " " + doc.text;
    return doc.text;
}

Corpus Corpus::from_docs(std::vector<CorpusDoc> docs) {
    if (docs.empty()) throw IngestError("corpus is empty");
    std::set<std::string> seen;
    std::set<std::string> dups;
    std::vector<std::string> empty;
    for (const auto& d : docs) {
        if (!seen.insert(d.id).second) dups.insert(d.id);
        if (tokenize(indexed_text(d)).empty()) empty.push_back(d.id);
    }
    if (!dups.empty()) {
        std::vector<std::string> ids(dups.begin(), dups.end());
        std::string msg = "duplicate passage ids:";
        for (const auto& id : ids) msg += " " + id;
        throw IngestError(msg, std::move(ids));
    }
    if (!empty.empty()) {
        std::string msg = "passages with no tokens:";
        for (const auto& id : empty) msg += " " + id;
        throw IngestError(msg, std::move(empty));
    }
    Corpus c;
    c.docs_ = std::move(docs);
    return c;
}

Corpus Corpus::from_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open corpus file " + path.string());
    std::vector<CorpusDoc> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = path.filename().string() + ":" + std::to_string(lineno);
        try {
            auto j = json::parse(line);
            CorpusDoc d;
            if (!j.contains("id")) throw IngestError(where + ": missing field 'id'");
            d.id = id_string(j["id"]);
            if (!j.contains("text") || !j["text"].is_string())
                throw IngestError(where + ": missing or non-string field 'text'");
            d.text = j["text"].get<std::string>();
            if (j.contains("title") && j["title"].is_string()) d.title = j["title"].get<std::string>();
            docs.push_back(std::move(d));
        } catch (const json::exception& e) {
            throw IngestError(where + ": " + e.what());
        }
    }
    return from_docs(std::move(docs));
}

std::string Corpus::checksum() const {
    std::string canon;
    for (const auto& d : docs_) {
        canon += json::array({d.id, d.title ? json(*d.title) : json(nullptr), d.text}).dump();
        canon += '\n';
    }
    return sha256_hex(canon);
}

Bm25Index Bm25Index::build(const Corpus& corpus, Bm25Params params) {
    Bm25Index idx;
    idx.params_ = params;
    idx.corpus_checksum_ = corpus.checksum();
    for (const auto& d : corpus.docs()) {
        const auto doc = static_cast<std::uint32_t>(idx.docs_.size());
        auto tokens = tokenize(indexed_text(d));
        idx.docs_.push_back({d.id, d.title, d.text, static_cast<std::uint32_t>(tokens.size())});
        std::map<std::string, std::uint32_t> tf;
        for (auto& t : tokens) ++tf[t];
        for (auto& [term, count] : tf) {
            auto [it, inserted] = idx.vocab_.try_emplace(term, static_cast<std::uint32_t>(idx.postings_.size()));
            if (inserted) {
                idx.postings_.emplace_back();
                idx.terms_.push_back(term);
            }
            idx.postings_[it->second].push_back({doc, count});
        }
    }
    idx.finalize();
    return idx;
}

void Bm25Index::finalize() {
    if (docs_.empty()) throw IngestError("index has no documents");
    std::uint64_t total = 0;
    for (const auto& d : docs_) total += d.length;
    avgdl_ = static_cast<double>(total) / static_cast<double>(docs_.size());
}

std::uint32_t Bm25Index::df(std::string_view term) const {
    auto p = postings(term);
    return p ? static_cast<std::uint32_t>(p->size()) : 0;
}

const std::vector<Posting>* Bm25Index::postings(std::string_view term) const {
    auto it = vocab_.find(std::string(term));
    return it == vocab_.end() ? nullptr : &postings_[it->second];
}

double Bm25Index::idf(std::uint32_t df) const {
    const double n = static_cast<double>(docs_.size());
    const double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double Bm25Index::term_weight(double idf, std::uint32_t tf, std::uint32_t doc) const {
    const double f = static_cast<double>(tf);
    const double len = static_cast<double>(docs_[doc].length);
    return idf * (f * (params_.k1 + 1.0)) / (f + params_.k1 * (1.0 - params_.b + params_.b * (len / avgdl_)));
}

double Bm25Index::score(const std::vector<std::string>& query_terms, std::uint32_t doc) const {
    double s = 0.0;
    for (const auto& t : query_terms) {
        const auto* plist = postings(t);
        if (!plist) continue;
        auto it = std::lower_bound(plist->begin(), plist->end(), doc,
                                   [](const Posting& p, std::uint32_t d) { return p.doc < d; });
        if (it == plist->end() || it->doc != doc) continue;
        s += term_weight(idf(static_cast<std::uint32_t>(plist->size())), it->tf, doc);
    }
    return s;
}

RetrievedSet Bm25Index::retrieve(std::string_view query, int k, std::string question_id) const {
    if (k < 1) throw PreconditionError("retrieve: k must be >= 1");
    const auto terms = tokenize(query);
    if (terms.empty()) throw RetrievalError("empty query");

    // Term-at-a-time accumulation in query order; gives the same floating
    // point sums as score() for every document.
    std::vector<double> acc(docs_.size(), 0.0);
    for (const auto& t : terms) {
        const auto* plist = postings(t);
        if (!plist) continue;
        const double w = idf(static_cast<std::uint32_t>(plist->size()));
        for (const auto& p : *plist) acc[p.doc] += term_weight(w, p.tf, p.doc);
    }

    std::vector<std::uint32_t> order(docs_.size());
    std::iota(order.begin(), order.end(), 0u);
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    auto better = [&](std::uint32_t a, std::uint32_t b) {
        if (acc[a] != acc[b]) return acc[a] > acc[b];
        return docs_[a].id < docs_[b].id;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);

    std::vector<Passage> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const auto& d = docs_[order[i]];
        out.push_back({d.id, d.title, d.text, static_cast<int>(i + 1), acc[order[i]]});
    }
    return RetrievedSet(std::move(question_id), std::move(out), k);
}

void Bm25Index::save(const fs::path& dir) const {
    fs::create_directories(dir);
    {
        std::ofstream docs(dir / "docs.jsonl", std::ios::trunc);
        for (const auto& d : docs_) {
            json j = {{"id", d.id}, {"text", d.text}, {"length", d.length}};
            if (d.title) j["title"] = *d.title;
            docs << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
        }
    }
    {
        // Sorted by term so the file is byte-stable across builds.
        std::vector<std::uint32_t> ids(terms_.size());
        std::iota(ids.begin(), ids.end(), 0u);
        std::sort(ids.begin(), ids.end(), [&](auto a, auto b) { return terms_[a] < terms_[b]; });
        std::ofstream post(dir / "postings.tsv", std::ios::trunc);
        for (auto id : ids) {
            post << terms_[id] << '\t' << postings_[id].size();
            for (const auto& p : postings_[id]) post << '\t' << p.doc << ':' << p.tf;
            post << '\n';
        }
    }
    json manifest = {{"format_version", 1},
                     {"tokenizer", std::string(kTokenizerVersion)},
                     {"k1", params_.k1},
                     {"b", params_.b},
                     {"doc_count", docs_.size()},
                     {"avgdl", avgdl_},
                     {"vocabulary_size", postings_.size()},
                     {"corpus_sha256", corpus_checksum_}};
    std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
}

Bm25Index Bm25Index::load(const fs::path& dir) {
    Bm25Index idx;
    json manifest;
    try {
        manifest = json::parse(read_file(dir / "manifest.json"));
        if (manifest.at("tokenizer").get<std::string>() != kTokenizerVersion)
            throw IngestError("index built with tokenizer " + manifest["tokenizer"].get<std::string>());
        idx.params_.k1 = manifest.at("k1").get<double>();
        idx.params_.b = manifest.at("b").get<double>();
        idx.corpus_checksum_ = manifest.at("corpus_sha256").get<std::string>();
    } catch (const json::exception& e) {
        throw IngestError((dir / "manifest.json").string() + ": " + e.what());
    } catch (const IngestError&) {
        throw;
    } catch (const Error& e) {
        throw IngestError(e.what());
    }

    std::ifstream docs(dir / "docs.jsonl");
    if (!docs) throw IngestError("missing " + (dir / "docs.jsonl").string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(docs, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = json::parse(line);
            Doc d{j.at("id").get<std::string>(), std::nullopt, j.at("text").get<std::string>(),
                  j.at("length").get<std::uint32_t>()};
            if (j.contains("title")) d.title = j["title"].get<std::string>();
            idx.docs_.push_back(std::move(d));
        } catch (const json::exception& e) {
            throw IngestError("docs.jsonl:" + std::to_string(lineno) + ": " + e.what());
        }
    }

    std::ifstream post(dir / "postings.tsv");
    if (!post) throw IngestError("missing " + (dir / "postings.tsv").string());
    lineno = 0;
    while (std::getline(post, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string term, field;
        std::size_t count = 0;
        if (!std::getline(ss, term, '\t') || !std::getline(ss, field, '\t'))
            throw IngestError("postings.tsv:" + std::to_string(lineno) + ": malformed");
        count = std::stoul(field);
        std::vector<Posting> plist;
        plist.reserve(count);
        while (std::getline(ss, field, '\t')) {
            auto colon = field.find(':');
            if (colon == std::string::npos)
                throw IngestError("postings.tsv:" + std::to_string(lineno) + ": malformed posting");
            auto doc = static_cast<std::uint32_t>(std::stoul(field.substr(0, colon)));
            auto tf = static_cast<std::uint32_t>(std::stoul(field.substr(colon + 1)));
            if (doc >= idx.docs_.size() || (!plist.empty() && plist.back().doc >= doc))
                throw IngestError("postings.tsv:" + std::to_string(lineno) + ": postings out of order");
            plist.push_back({doc, tf});
        }
        if (plist.size() != count)
            throw IngestError("postings.tsv:" + std::to_string(lineno) + ": df does not match postings");
        idx.vocab_.emplace(term, static_cast<std::uint32_t>(idx.postings_.size()));
        idx.terms_.push_back(std::move(term));
        idx.postings_.push_back(std::move(plist));
    }
    idx.finalize();
    return idx;
}

RemoteRetriever::RemoteRetriever(std::shared_ptr<HttpTransport> transport, std::string endpoint, RetryPolicy retry)
    : transport_(std::move(transport)), endpoint_(std::move(endpoint)), retry_(retry) {}

RetrievedSet RemoteRetriever::retrieve(const std::string& question_id, const std::string& query, int k) {
    if (k < 1) throw PreconditionError("retrieve: k must be >= 1");
    const auto url = join_url(endpoint_, "retrieve");
    HttpResponse res;
    try {
        json body = {{"query", query}, {"k", k}};
        res = send_with_retry(retry_, [&] { return transport_->post_json(url, body.dump(), {}); });
    } catch (const Error& e) {
        throw RetrievalError(std::string("remote retriever: ") + e.what());
    }
    std::vector<Passage> passages;
    try {
        auto j = json::parse(res.body);
        int rank = 0;
        for (const auto& p : j.at("passages")) {
            if (rank == k) break;
            Passage out;
            out.id = id_string(p.at("id"));
            if (p.contains("title") && p["title"].is_string()) out.title = p["title"].get<std::string>();
            out.text = p.at("text").get<std::string>();
            out.score = p.at("score").get<double>();
            out.rank = ++rank;
            if (!passages.empty() && out.score > passages.back().score)
                throw RetrievalError("remote retriever: scores not non-increasing");
            passages.push_back(std::move(out));
        }
    } catch (const json::exception& e) {
        throw RetrievalError(std::string("remote retriever: malformed response: ") + e.what());
    }
    try {
        return RetrievedSet(question_id, std::move(passages), k);
    } catch (const PreconditionError& e) {
        throw RetrievalError(std::string("remote retriever: ") + e.what());
    }
}

}  // namespace activerag
