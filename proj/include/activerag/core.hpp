#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace activerag {

/// One QA item. `gold_answers` is never empty.
struct Question {
    std::string id;
    std::string text;
    std::vector<std::string> gold_answers;
    std::string dataset;

    bool operator==(const Question&) const = default;
};

struct Passage {
    std::string id;
    std::optional<std::string> title;
    std::string text;
    int rank = 0;  // 1 = best
    double score = 0.0;

    bool operator==(const Passage&) const = default;
};

/// Ranked retrieval result for one question. The constructor enforces
/// ranks 1..n, non-increasing scores and at most k passages.
class RetrievedSet {
public:
    RetrievedSet(std::string question_id, std::vector<Passage> passages, int k);

    const std::string& question_id() const noexcept { return question_id_; }
    const std::vector<Passage>& passages() const noexcept { return passages_; }
    int k() const noexcept { return k_; }
    bool empty() const noexcept { return passages_.empty(); }
    std::size_t size() const noexcept { return passages_.size(); }

private:
    std::string question_id_;
    std::vector<Passage> passages_;
    int k_;
};

/// Knowledge-construction perspective. Declaration order is the tie-break
/// order used by every reranker.
enum class AgentKind : int { Associate = 0, Anchoring = 1, Logician = 2, Cognition = 3 };

inline constexpr std::array<AgentKind, 4> kAllAgents = {
    AgentKind::Associate, AgentKind::Anchoring, AgentKind::Logician, AgentKind::Cognition};

/// Lowercase identifier: "associate", "anchoring", "logician", "cognition".
std::string_view agent_id(AgentKind agent);
/// Capitalized form used in template slot names: "Associate", ...
std::string_view agent_title(AgentKind agent);
std::optional<AgentKind> parse_agent(std::string_view id);

class MethodKind {
public:
    enum class Base {
        VanillaLLM,
        CoT,
        Guideline,
        VanillaRAG,
        ChainOfNote,
        SelfRerank,
        SelfRefine,
        CoTWithPassage,
        CoTWithNote,
        ActiveRAG,
    };

    /// Any base but ActiveRAG.
    static MethodKind of(Base base);
    static MethodKind active_rag(AgentKind agent);

    Base base() const noexcept { return base_; }
    /// Present iff base() == ActiveRAG.
    std::optional<AgentKind> agent() const noexcept { return agent_; }

    bool uses_retrieval() const noexcept;
    /// Number of chat calls the method's call graph issues.
    int contracted_calls() const noexcept;

    /// Stable identifier, e.g. "vanilla-rag" or "activerag-logician".
    std::string id() const;
    /// Human-readable row label for report tables.
    std::string label() const;
    static std::optional<MethodKind> parse(std::string_view id);

    /// Every non-ActiveRAG method followed by ActiveRAG for each agent.
    static std::vector<MethodKind> all();

    bool operator==(const MethodKind&) const = default;
    auto operator<=>(const MethodKind& o) const {
        if (base_ != o.base_) return base_ <=> o.base_;
        return agent_ <=> o.agent_;
    }

private:
    MethodKind(Base base, std::optional<AgentKind> agent) : base_(base), agent_(agent) {}
    Base base_;
    std::optional<AgentKind> agent_;
};

enum class CotSharing { Shared, PerAgent };

struct RunConfig {
    std::string model = "gpt-3.5-turbo-1106";
    double temperature = 0.2;
    int k = 5;
    std::uint64_t seed = 0;
    std::optional<std::size_t> sample_size;
    int parallelism = 1;
    std::filesystem::path cache_dir;
    std::string base_url = "https://api.openai.com/v1";
    int retries = 4;
    int timeout_ms = 60000;
    CotSharing cot_sharing = CotSharing::Shared;

    /// Throws PreconditionError when an invariant is violated.
    void validate() const;
};

/// Reads one-record-per-line dataset files with fields id, question, answers.
/// The dataset label is the file stem up to the first '.'.
std::vector<Question> load_questions(const std::filesystem::path& path);
std::string dataset_label_for(const std::filesystem::path& path);

/// Uniform sample without replacement, stable for a given seed on every
/// platform. Result keeps the input order.
std::vector<Question> sample_questions(const std::vector<Question>& questions, std::size_t n,
                                       std::uint64_t seed);

}  // namespace activerag
