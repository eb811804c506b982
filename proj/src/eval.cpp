#include "activerag/eval.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "activerag/errors.hpp"
#include "activerag/text.hpp"

namespace activerag {

EmResult string_em(std::string_view prediction, const std::vector<std::string>& gold_answers) {
    if (gold_answers.empty()) throw PreconditionError("string_em: empty gold answer list");
    const auto pred = normalize_text(prediction);
    for (const auto& g : gold_answers) {
        if (pred.find(normalize_text(g)) != std::string::npos) return {true, g};
    }
    return {};
}

EvalRecord evaluate_trace(const PipelineTrace& trace, const Question& question) {
    EvalRecord r{trace.question_id, trace.method, false, std::nullopt};
    if (trace.error) return r;
    auto em = string_em(trace.final_text, question.gold_answers);
    r.correct = em.correct;
    r.matched_answer = em.matched;
    return r;
}

double accuracy(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw PreconditionError("accuracy of an empty record list");
    std::size_t correct = 0;
    for (const auto& r : records) correct += r.correct ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

std::string format_percent(double fraction) { return fmt::format("{:.1f}", fraction * 100.0); }

double oracle_rerank(const AgentCorrectness& per_question) {
    if (per_question.empty()) throw PreconditionError("oracle rerank over no questions");
    std::size_t correct = 0;
    for (const auto& [qid, row] : per_question) {
        bool any = false;
        for (auto agent : kAllAgents) {
            const auto& cell = row[static_cast<std::size_t>(agent)];
            if (!cell)
                throw ReportError("question " + qid + " has no result for agent " + std::string(agent_id(agent)),
                                  {qid});
            any = any || *cell;
        }
        correct += any ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(per_question.size());
}

double agent_accuracy(const AgentCorrectness& per_question, AgentKind agent) {
    if (per_question.empty()) throw PreconditionError("agent accuracy over no questions");
    std::size_t correct = 0;
    for (const auto& [qid, row] : per_question) {
        const auto& cell = row[static_cast<std::size_t>(agent)];
        if (!cell)
            throw ReportError("question " + qid + " has no result for agent " + std::string(agent_id(agent)), {qid});
        correct += *cell ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(per_question.size());
}

std::string ppl_context(const std::string& question, const std::string& kc_text) {
    return "Question: " + question + "\nKnowledge: " + kc_text + "\nAnswer: ";
}

PplChoice ppl_rerank(Scorer& scorer, const std::string& question,
                     const std::map<AgentKind, PplCandidate>& candidates, PplConditioning conditioning) {
    PplChoice choice;
    choice.scores.fill(std::numeric_limits<double>::infinity());
    for (auto agent : kAllAgents) {
        auto it = candidates.find(agent);
        if (it == candidates.end())
            throw PreconditionError("ppl rerank: no candidate for agent " + std::string(agent_id(agent)));
        ScoreRequest req = conditioning == PplConditioning::AnswerGivenKnowledge
                               ? ScoreRequest{ppl_context(question, it->second.kc_text), it->second.final_answer}
                               : ScoreRequest{"Question: " + question + "\n", it->second.kc_text};
        if (req.continuation.empty()) continue;  // nothing to score; stays at +inf
        choice.scores[static_cast<std::size_t>(agent)] = scorer.score_mean_nll(req);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < choice.scores.size(); ++i)
        if (choice.scores[i] < choice.scores[best]) best = i;
    choice.agent = kAllAgents[best];
    choice.answer = candidates.at(choice.agent).final_answer;
    return choice;
}

double bleu2(std::string_view candidate, std::string_view reference) {
    const auto cand = split_whitespace(normalize_text(candidate));
    const auto ref = split_whitespace(normalize_text(reference));
    if (cand.empty()) return 0.0;

    auto clipped = [](const std::vector<std::string>& c, const std::vector<std::string>& r, std::size_t n) {
        std::map<std::vector<std::string>, std::size_t> ref_counts, cand_counts;
        for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[{r.begin() + i, r.begin() + i + n}];
        for (std::size_t i = 0; i + n <= c.size(); ++i) ++cand_counts[{c.begin() + i, c.begin() + i + n}];
        std::size_t matches = 0;
        for (const auto& [gram, count] : cand_counts) {
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) matches += std::min(count, it->second);
        }
        return matches;
    };

    const double c = static_cast<double>(cand.size());
    const double r = static_cast<double>(ref.size());
    const double p1 = static_cast<double>(clipped(cand, ref, 1)) / c;
    if (p1 == 0.0) return 0.0;
    const double p2 = (static_cast<double>(clipped(cand, ref, 2)) + 1.0) / ((c - 1.0) + 1.0);
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    return bp * std::exp(0.5 * (std::log(p1) + std::log(p2)));
}

std::optional<std::string> knowledge_text(const PipelineTrace& trace) {
    using Base = MethodKind::Base;
    if (trace.error) return std::nullopt;
    std::size_t index = 0;
    switch (trace.method.base()) {
        case Base::ActiveRAG:
        case Base::CoTWithNote: index = 1; break;
        case Base::ChainOfNote:
        case Base::SelfRefine:
        case Base::SelfRerank: index = 0; break;
        default: return std::nullopt;
    }
    if (trace.replies.size() <= index) return std::nullopt;
    return trace.replies[index];
}

std::map<std::string, double> similarity_matrix(const std::vector<PipelineTrace>& associate,
                                                const std::map<std::string, std::vector<PipelineTrace>>& others) {
    std::map<std::string, std::string> assoc_text;
    for (const auto& t : associate)
        if (auto k = knowledge_text(t)) assoc_text[t.question_id] = *k;

    std::map<std::string, double> out;
    for (const auto& [method, traces] : others) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& t : traces) {
            auto other = knowledge_text(t);
            auto it = assoc_text.find(t.question_id);
            if (!other || it == assoc_text.end()) continue;
            sum += bleu2(it->second, *other);
            ++n;
        }
        if (n == 0) throw ReportError("similarity: no shared questions between associate and " + method);
        out[method] = sum / static_cast<double>(n);
    }
    return out;
}

}  // namespace activerag
