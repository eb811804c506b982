#include "activerag/core.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "activerag/errors.hpp"

namespace activerag {

RetrievedSet::RetrievedSet(std::string question_id, std::vector<Passage> passages, int k)
    : question_id_(std::move(question_id)), passages_(std::move(passages)), k_(k) {
    if (k_ < 1) throw PreconditionError("retrieved set: k must be >= 1");
    if (passages_.size() > static_cast<std::size_t>(k_))
        throw PreconditionError("retrieved set: " + std::to_string(passages_.size()) +
                                " passages exceed k=" + std::to_string(k_));
    for (std::size_t i = 0; i < passages_.size(); ++i) {
        const auto& p = passages_[i];
        if (p.text.empty()) throw PreconditionError("retrieved set: passage '" + p.id + "' has empty text");
        if (p.rank != static_cast<int>(i) + 1)
            throw PreconditionError("retrieved set: passage '" + p.id + "' has rank " +
                                    std::to_string(p.rank) + ", expected " + std::to_string(i + 1));
        if (i > 0 && p.score > passages_[i - 1].score)
            throw PreconditionError("retrieved set: scores not non-increasing at rank " +
                                    std::to_string(p.rank));
    }
}

std::string_view agent_id(AgentKind agent) {
    switch (agent) {
        case AgentKind::Associate: return "associate";
        case AgentKind::Anchoring: return "anchoring";
        case AgentKind::Logician: return "logician";
        case AgentKind::Cognition: return "cognition";
    }
    return "?";
}

std::string_view agent_title(AgentKind agent) {
    switch (agent) {
        case AgentKind::Associate: return "Associate";
        case AgentKind::Anchoring: return "Anchoring";
        case AgentKind::Logician: return "Logician";
        case AgentKind::Cognition: return "Cognition";
    }
    return "?";
}

std::optional<AgentKind> parse_agent(std::string_view id) {
    for (auto a : kAllAgents)
        if (agent_id(a) == id) return a;
    return std::nullopt;
}

namespace {

struct BaseInfo {
    MethodKind::Base base;
    std::string_view id;
    std::string_view label;
    bool retrieval;
    int calls;
};

constexpr std::array<BaseInfo, 10> kBases = {{
    {MethodKind::Base::VanillaLLM, "vanilla", "Vanilla LLM", false, 1},
    {MethodKind::Base::CoT, "cot", "Chain-of-Thought", false, 1},
    {MethodKind::Base::Guideline, "guideline", "Guideline", false, 3},
    {MethodKind::Base::VanillaRAG, "vanilla-rag", "Vanilla RAG", true, 1},
    {MethodKind::Base::ChainOfNote, "chain-of-note", "Chain-of-Note", true, 1},
    {MethodKind::Base::SelfRerank, "self-rerank", "Self-Rerank", true, 2},
    {MethodKind::Base::SelfRefine, "self-refine", "Self-Refine", true, 2},
    {MethodKind::Base::CoTWithPassage, "cot-with-passage", "CoT w. Passage", true, 2},
    {MethodKind::Base::CoTWithNote, "cot-with-note", "CoT w. Note", true, 3},
    {MethodKind::Base::ActiveRAG, "activerag", "ActiveRAG", true, 3},
}};

const BaseInfo& info(MethodKind::Base base) {
    return kBases[static_cast<std::size_t>(base)];
}

}  // namespace

MethodKind MethodKind::of(Base base) {
    if (base == Base::ActiveRAG) throw PreconditionError("ActiveRAG requires an agent");
    return MethodKind(base, std::nullopt);
}

MethodKind MethodKind::active_rag(AgentKind agent) {
    return MethodKind(Base::ActiveRAG, agent);
}

bool MethodKind::uses_retrieval() const noexcept { return info(base_).retrieval; }

int MethodKind::contracted_calls() const noexcept { return info(base_).calls; }

std::string MethodKind::id() const {
    std::string out(info(base_).id);
    if (agent_) {
        out += '-';
        out += agent_id(*agent_);
    }
    return out;
}

std::string MethodKind::label() const {
    std::string out(info(base_).label);
    if (agent_) {
        out += " w. ";
        out += agent_title(*agent_);
    }
    return out;
}

std::optional<MethodKind> MethodKind::parse(std::string_view id) {
    constexpr std::string_view prefix = "activerag-";
    if (id.starts_with(prefix)) {
        if (auto agent = parse_agent(id.substr(prefix.size()))) return active_rag(*agent);
        return std::nullopt;
    }
    for (const auto& b : kBases)
        if (b.base != Base::ActiveRAG && b.id == id) return MethodKind(b.base, std::nullopt);
    return std::nullopt;
}

std::vector<MethodKind> MethodKind::all() {
    std::vector<MethodKind> out;
    for (const auto& b : kBases)
        if (b.base != Base::ActiveRAG) out.push_back(MethodKind(b.base, std::nullopt));
    for (auto a : kAllAgents) out.push_back(active_rag(a));
    return out;
}

void RunConfig::validate() const {
    if (!(temperature >= 0.0)) throw PreconditionError("temperature must be >= 0");
    if (k < 1) throw PreconditionError("k must be >= 1");
    if (parallelism < 1) throw PreconditionError("parallelism must be >= 1");
    if (retries < 0) throw PreconditionError("retries must be >= 0");
    if (timeout_ms < 1) throw PreconditionError("timeout_ms must be >= 1");
}

std::string dataset_label_for(const std::filesystem::path& path) {
    auto name = path.filename().string();
    return name.substr(0, name.find('.'));
}

std::vector<Question> load_questions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path.string(), "cannot open dataset file");
    const auto label = dataset_label_for(path);
    std::vector<Question> out;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(lineno);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where, e.what());
        }
        Question q;
        try {
            q.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
        } catch (const nlohmann::json::exception&) {
            throw ParseError(where + " id", "missing");
        }
        if (!j.contains("question") || !j["question"].is_string())
            throw ParseError(where + " question", "missing or not a string");
        q.text = j["question"].get<std::string>();
        if (!j.contains("answers") || !j["answers"].is_array())
            throw ParseError(where + " answers", "missing or not a list");
        for (const auto& a : j["answers"]) {
            if (!a.is_string()) throw ParseError(where + " answers", "non-string answer");
            q.gold_answers.push_back(a.get<std::string>());
        }
        if (q.gold_answers.empty()) throw ParseError(where + " answers", "empty gold answer list");
        q.dataset = label;
        if (!seen.insert(q.id).second) throw ParseError(where + " id", "duplicate id '" + q.id + "'");
        out.push_back(std::move(q));
    }
    return out;
}

std::vector<Question> sample_questions(const std::vector<Question>& questions, std::size_t n,
                                       std::uint64_t seed) {
    if (n >= questions.size()) return questions;
    std::vector<std::size_t> idx(questions.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // mt19937_64 output is fully specified; the bounded draw below avoids the
    // implementation-defined std::uniform_int_distribution.
    std::mt19937_64 rng(seed);
    auto bounded = [&](std::uint64_t bound) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do {
            x = rng();
        } while (x >= limit);
        return x % bound;
    };
    for (std::size_t i = 0; i < n; ++i) {
        auto j = i + bounded(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    std::vector<Question> out;
    out.reserve(n);
    for (auto i : idx) out.push_back(questions[i]);
    return out;
}

}  // namespace activerag
