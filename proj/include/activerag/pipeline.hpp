#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "activerag/core.hpp"
#include "activerag/llm.hpp"
#include "activerag/prompts.hpp"
#include "activerag/retrieval.hpp"
#include "activerag/trace.hpp"

namespace activerag {

/// Sequential chat calls made on behalf of one method run, with the
/// prompt/reply record that ends up in the trace.
class ChatSession {
public:
    ChatSession(ChatBackend& backend, const TemplateRegistry& templates, const RunConfig& config);

    /// Renders `template_name` with `bindings`, sends it, records both sides.
    std::string call(std::string_view template_name, const Bindings& bindings);
    /// Sends already-composed text, recorded under `template_name`.
    std::string call_text(std::string_view template_name, std::string text);
    /// Records a call whose reply was produced earlier (shared CoT).
    void replay(PromptRecord prompt, std::string reply, bool from_cache);

    const TemplateRegistry& templates() const noexcept { return templates_; }
    const std::vector<PromptRecord>& prompts() const noexcept { return prompts_; }
    const std::vector<std::string>& replies() const noexcept { return replies_; }
    int cache_hits() const noexcept { return cache_hits_; }
    bool last_from_cache() const noexcept { return last_from_cache_; }

private:
    ChatBackend& backend_;
    const TemplateRegistry& templates_;
    const RunConfig& config_;
    std::vector<PromptRecord> prompts_;
    std::vector<std::string> replies_;
    int cache_hits_ = 0;
    bool last_from_cache_ = false;
};

/// Initial chain-of-thought: one call with the CoT baseline prompt.
std::string run_cot(ChatSession& session, const Question& question);

/// One call rendering kc.<agent> with the question and joined passages.
std::string run_knowledge_construction(ChatSession& session, AgentKind agent, const Question& question,
                                       const std::vector<Passage>& passages);

/// One call rendering nexus.<agent> with the question, the CoT reply and
/// the knowledge-construction reply.
std::string run_cognitive_nexus(ChatSession& session, AgentKind agent, const Question& question,
                                const std::string& cot_reply, const std::string& kc_text);

struct PipelineDeps {
    ChatBackend& backend;
    const TemplateRegistry& templates;
    Retriever* retriever = nullptr;  // required by RAG-family methods
    RunConfig config;
};

/// Per-question state shared by every method run on that question: the
/// retrieval result and (when CoT sharing is on) the first CoT call.
class QuestionScope {
public:
    const RetrievedSet& passages(const PipelineDeps& deps, const Question& q);

    struct Cot {
        PromptRecord prompt;
        std::string reply;
        bool from_cache = false;
    };
    std::optional<Cot> cot;

private:
    std::optional<RetrievedSet> retrieved_;
};

/// Executes one method's call graph. Runtime failures (retrieval, backend)
/// produce a trace with `error` set instead of throwing; a missing retriever
/// for a RAG method is a PreconditionError.
PipelineTrace run_method(const PipelineDeps& deps, MethodKind method, const Question& question,
                         QuestionScope* scope = nullptr);

struct MethodSummary {
    std::size_t total = 0;
    std::size_t failed = 0;
};

struct BatchSummary {
    std::vector<Question> questions;  // after sampling
    std::map<std::string, MethodSummary> per_method;
    std::vector<std::string> failures;  // "<method> <question id>: <error>"
    std::map<std::string, std::filesystem::path> trace_files;  // method id -> file
    std::filesystem::path manifest;
};

struct BatchOutput {
    std::filesystem::path out_dir;
    std::string dataset;
    /// Checksum of the corpus behind the retriever, recorded in the manifest.
    std::string corpus_checksum;
    std::function<void(std::size_t done, std::size_t total)> on_progress;
};

/// `<dataset>.<method>.k<k>.traces`
std::string trace_file_name(const std::string& dataset, const MethodKind& method, int k);
/// `<dataset>.k<k>.manifest.json`
std::string manifest_file_name(const std::string& dataset, int k);

/// Runs every method over (a seeded sample of) the questions with at most
/// config.parallelism questions in flight. Trace lines are written in
/// question order regardless of completion order.
BatchSummary run_batch(const PipelineDeps& deps, const std::vector<MethodKind>& methods,
                       const std::vector<Question>& questions, const BatchOutput& output);

}  // namespace activerag
