#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "activerag/core.hpp"
#include "activerag/llm.hpp"
#include "activerag/trace.hpp"

namespace activerag {

struct EmResult {
    bool correct = false;
    std::optional<std::string> matched;  // first gold answer, in list order, that matched
};

/// Correct iff normalize_text(gold) is a substring of normalize_text(prediction)
/// for some gold answer.
EmResult string_em(std::string_view prediction, const std::vector<std::string>& gold_answers);

struct EvalRecord {
    std::string question_id;
    MethodKind method = MethodKind::of(MethodKind::Base::VanillaLLM);
    bool correct = false;
    std::optional<std::string> matched_answer;
};

/// Matches over the full final reply. Failed runs are incorrect.
EvalRecord evaluate_trace(const PipelineTrace& trace, const Question& question);

/// Fraction correct; throws PreconditionError on an empty list.
double accuracy(const std::vector<EvalRecord>& records);

/// Percentage with one decimal, e.g. 0.622 -> "62.2".
std::string format_percent(double fraction);

/// Per question, correctness of each agent indexed by AgentKind.
using AgentCorrectness = std::map<std::string, std::array<std::optional<bool>, 4>>;

/// A question counts as correct when any agent answered it correctly.
/// Throws ReportError naming the question and agent if a result is missing.
double oracle_rerank(const AgentCorrectness& per_question);

/// Accuracy of one agent column of the table.
double agent_accuracy(const AgentCorrectness& per_question, AgentKind agent);

enum class PplConditioning {
    AnswerGivenKnowledge,  // score the final answer given question + KC text
    KnowledgeGivenQuery,   // score the KC text given the question
};

struct PplCandidate {
    std::string kc_text;
    std::string final_answer;
};

struct PplChoice {
    AgentKind agent = AgentKind::Associate;
    std::string answer;
    std::array<double, 4> scores{};  // mean NLL per agent; +inf for empty continuations
};

/// Scoring frame for the default conditioning.
std::string ppl_context(const std::string& question, const std::string& kc_text);

/// Picks the agent whose continuation has the lowest mean NLL; ties go to
/// the earlier AgentKind. Requires all four candidates. Scorer errors
/// propagate.
PplChoice ppl_rerank(Scorer& scorer, const std::string& question,
                     const std::map<AgentKind, PplCandidate>& candidates,
                     PplConditioning conditioning = PplConditioning::AnswerGivenKnowledge);

/// Sentence-level BLEU over unigrams and bigrams: geometric mean of clipped
/// unigram precision and add-1 smoothed bigram precision, times the
/// brevity penalty. Tokens are normalize_text() split on whitespace.
/// An empty candidate scores 0.
double bleu2(std::string_view candidate, std::string_view reference);

/// The knowledge/note text a trace produced, if its method has one:
/// KC reply for ActiveRAG, the note for Chain-of-Note and CoT w. Note, the
/// Prompt1 reply for Self-Refine and Self-Rerank.
std::optional<std::string> knowledge_text(const PipelineTrace& trace);

/// Mean over shared questions of bleu2(Associate KC text, other text),
/// one entry per comparison method id. Throws ReportError when a method
/// shares no question with the Associate traces.
std::map<std::string, double> similarity_matrix(const std::vector<PipelineTrace>& associate,
                                                const std::map<std::string, std::vector<PipelineTrace>>& others);

}  // namespace activerag
