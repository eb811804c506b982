#include "activerag/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "activerag/digest.hpp"
#include "activerag/errors.hpp"

namespace activerag {

namespace fs = std::filesystem;

ChatSession::ChatSession(ChatBackend& backend, const TemplateRegistry& templates, const RunConfig& config)
    : backend_(backend), templates_(templates), config_(config) {}

std::string ChatSession::call(std::string_view template_name, const Bindings& bindings) {
    auto rendered = render(templates_.get(template_name), bindings);
    return call_text(template_name, std::move(rendered.text));
}

std::string ChatSession::call_text(std::string_view template_name, std::string text) {
    auto res = backend_.complete({config_.model, text, config_.temperature});
    prompts_.push_back({std::string(template_name), std::move(text)});
    replies_.push_back(res.text);
    last_from_cache_ = res.from_cache;
    if (res.from_cache) ++cache_hits_;
    return res.text;
}

void ChatSession::replay(PromptRecord prompt, std::string reply, bool from_cache) {
    prompts_.push_back(std::move(prompt));
    replies_.push_back(std::move(reply));
    last_from_cache_ = from_cache;
    if (from_cache) ++cache_hits_;
}

std::string run_cot(ChatSession& session, const Question& question) {
    return session.call(tmpl::kCot, {{"question", question.text}});
}

std::string run_knowledge_construction(ChatSession& session, AgentKind agent, const Question& question,
                                       const std::vector<Passage>& passages) {
    if (passages.empty()) throw PreconditionError("knowledge construction needs at least one passage");
    return session.call(tmpl::knowledge_construction(agent),
                        {{"question", question.text}, {"passages", join_passages(passages)}});
}

std::string run_cognitive_nexus(ChatSession& session, AgentKind agent, const Question& question,
                                const std::string& cot_reply, const std::string& kc_text) {
    return session.call(tmpl::nexus(agent), {{"question", question.text},
                                             {"chain_of_thought_reply", cot_reply},
                                             {tmpl::nexus_knowledge_slot(agent), kc_text}});
}

const RetrievedSet& QuestionScope::passages(const PipelineDeps& deps, const Question& q) {
    if (!retrieved_) retrieved_ = deps.retriever->retrieve(q.id, q.text, deps.config.k);
    return *retrieved_;
}

namespace {

using Base = MethodKind::Base;

std::string shared_cot(const PipelineDeps& deps, ChatSession& s, QuestionScope& scope, const Question& q) {
    const bool sharing = deps.config.cot_sharing == CotSharing::Shared;
    if (sharing && scope.cot) {
        s.replay(scope.cot->prompt, scope.cot->reply, scope.cot->from_cache);
        return scope.cot->reply;
    }
    auto reply = run_cot(s, q);
    if (sharing) scope.cot = QuestionScope::Cot{s.prompts().back(), reply, s.last_from_cache()};
    return reply;
}

void run_graph(const PipelineDeps& deps, MethodKind method, const Question& q, QuestionScope& scope,
               ChatSession& s, PipelineTrace& t) {
    std::string joined;
    if (method.uses_retrieval()) {
        const auto& rs = scope.passages(deps, q);
        if (rs.empty()) throw RetrievalError("retrieval returned no passages");
        t.k_used = static_cast<int>(rs.size());
        joined = join_passages(rs.passages());
    }
    const std::string& question = q.text;

    switch (method.base()) {
        case Base::VanillaLLM:
            s.call(tmpl::kVanilla, {{"question", question}});
            break;
        case Base::CoT:
            shared_cot(deps, s, scope, q);
            break;
        case Base::Guideline: {
            auto cot = shared_cot(deps, s, scope, q);
            auto analysis = s.call(tmpl::kGuideline, {{"question", question}});
            // Second turn is sent as a transcript of the first exchange plus
            // the follow-up prompt.
            auto followup =
                render(s.templates().get(tmpl::kGuidelineFollowup), {{"chain_of_thought_reply", cot}}).text;
            auto first_prompt = s.prompts().back().text;
            s.call_text(tmpl::kGuidelineFollowup, first_prompt + "\n\n" + analysis + "\n\n" + followup);
            break;
        }
        case Base::VanillaRAG:
            s.call(tmpl::kVanillaRag, {{"passages", joined}, {"question", question}});
            break;
        case Base::ChainOfNote:
            s.call(tmpl::kChainOfNote, {{"question", question}, {"passages", joined}});
            break;
        case Base::SelfRerank:
        case Base::SelfRefine: {
            auto first = method.base() == Base::SelfRerank ? tmpl::kSelfRerank : tmpl::kSelfRefine;
            auto filtered = s.call(first, {{"question", question}, {"passages", joined}});
            s.call(tmpl::kVanillaRag, {{"passages", filtered}, {"question", question}});
            break;
        }
        case Base::CoTWithPassage: {
            auto cot = shared_cot(deps, s, scope, q);
            s.call(tmpl::kNexusGeneric,
                   {{"question", question}, {"chain_of_thought_reply", cot}, {"knowledge", joined}});
            break;
        }
        case Base::CoTWithNote: {
            auto cot = shared_cot(deps, s, scope, q);
            auto note = s.call(tmpl::kChainOfNote, {{"question", question}, {"passages", joined}});
            s.call(tmpl::kNexusGeneric,
                   {{"question", question}, {"chain_of_thought_reply", cot}, {"knowledge", note}});
            break;
        }
        case Base::ActiveRAG: {
            const auto agent = *method.agent();
            auto cot = shared_cot(deps, s, scope, q);
            auto kc = run_knowledge_construction(s, agent, q, scope.passages(deps, q).passages());
            run_cognitive_nexus(s, agent, q, cot, kc);
            break;
        }
    }
}

}  // namespace

PipelineTrace run_method(const PipelineDeps& deps, MethodKind method, const Question& question,
                         QuestionScope* scope) {
    if (method.uses_retrieval() && deps.retriever == nullptr)
        throw PreconditionError("method " + method.id() + " needs a retriever");
    QuestionScope local;
    QuestionScope& sc = scope ? *scope : local;

    const auto start = std::chrono::steady_clock::now();
    ChatSession session(deps.backend, deps.templates, deps.config);
    PipelineTrace t;
    t.question_id = question.id;
    t.method = method;
    try {
        run_graph(deps, method, question, sc, session, t);
    } catch (const PreconditionError&) {
        throw;
    } catch (const Error& e) {
        t.error = e.what();
    }
    t.prompts = session.prompts();
    t.replies = session.replies();
    t.chat_call_count = static_cast<int>(t.replies.size());
    t.cache_hits = session.cache_hits();
    t.final_text = t.replies.empty() ? std::string() : t.replies.back();
    t.predicted_answer = t.error ? std::string() : extract_answer(t.final_text);
    t.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                         .count();
    return t;
}

std::string trace_file_name(const std::string& dataset, const MethodKind& method, int k) {
    return dataset + "." + method.id() + ".k" + std::to_string(k) + ".traces";
}

std::string manifest_file_name(const std::string& dataset, int k) {
    return dataset + ".k" + std::to_string(k) + ".manifest.json";
}

namespace {

/// Accepts lines tagged with their question position and writes them in
/// position order.
class OrderedWriter {
public:
    OrderedWriter(const fs::path& path, std::size_t n) : out_(path, std::ios::trunc), pending_(n) {
        if (!out_) throw Error("cannot write " + path.string());
    }

    void submit(std::size_t pos, std::string line) {
        std::lock_guard lock(mutex_);
        pending_[pos] = std::move(line);
        while (next_ < pending_.size() && pending_[next_]) {
            out_ << *pending_[next_] << '\n';
            pending_[next_].reset();
            ++next_;
        }
        out_.flush();
    }

private:
    std::mutex mutex_;
    std::ofstream out_;
    std::vector<std::optional<std::string>> pending_;
    std::size_t next_ = 0;
};

}  // namespace

BatchSummary run_batch(const PipelineDeps& deps, const std::vector<MethodKind>& methods,
                       const std::vector<Question>& questions, const BatchOutput& output) {
    deps.config.validate();
    for (const auto& m : methods)
        if (m.uses_retrieval() && deps.retriever == nullptr)
            throw PreconditionError("method " + m.id() + " needs a retriever");

    BatchSummary summary;
    summary.questions = deps.config.sample_size
                            ? sample_questions(questions, *deps.config.sample_size, deps.config.seed)
                            : questions;
    const auto& qs = summary.questions;
    fs::create_directories(output.out_dir);

    std::vector<std::unique_ptr<OrderedWriter>> writers;
    for (const auto& m : methods) {
        auto path = output.out_dir / trace_file_name(output.dataset, m, deps.config.k);
        writers.push_back(std::make_unique<OrderedWriter>(path, qs.size()));
        summary.trace_files[m.id()] = path;
        summary.per_method[m.id()].total = qs.size();
    }

    std::mutex summary_mutex;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    auto worker = [&] {
        for (;;) {
            const auto i = next.fetch_add(1);
            if (i >= qs.size()) return;
            QuestionScope scope;
            for (std::size_t m = 0; m < methods.size(); ++m) {
                PipelineTrace t;
                try {
                    t = run_method(deps, methods[m], qs[i], &scope);
                } catch (const std::exception& e) {
                    t = PipelineTrace{};
                    t.question_id = qs[i].id;
                    t.method = methods[m];
                    t.error = e.what();
                }
                if (t.error) {
                    std::lock_guard lock(summary_mutex);
                    ++summary.per_method[methods[m].id()].failed;
                    summary.failures.push_back(methods[m].id() + " " + qs[i].id + ": " + *t.error);
                }
                writers[m]->submit(i, serialize_trace(t));
            }
            auto d = ++done;
            if (output.on_progress) {
                std::lock_guard lock(summary_mutex);
                output.on_progress(d, qs.size());
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(deps.config.parallelism),
                                             std::max<std::size_t>(qs.size(), 1));
        for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    }
    writers.clear();
    std::sort(summary.failures.begin(), summary.failures.end());

    nlohmann::ordered_json manifest;
    const auto& c = deps.config;
    manifest["dataset"] = output.dataset;
    manifest["config"] = {
        {"model", c.model},
        {"temperature", c.temperature},
        {"k", c.k},
        {"seed", c.seed},
        {"sample_size", c.sample_size ? nlohmann::ordered_json(*c.sample_size) : nlohmann::ordered_json(nullptr)},
        {"parallelism", c.parallelism},
        {"base_url", c.base_url},
        {"retries", c.retries},
        {"timeout_ms", c.timeout_ms},
        {"cot_sharing", c.cot_sharing == CotSharing::Shared ? "shared" : "per_agent"},
    };
    manifest["backend"] = deps.backend.identity();
    std::vector<std::string> method_ids;
    for (const auto& m : methods) method_ids.push_back(m.id());
    manifest["methods"] = method_ids;
    std::string ids;
    for (const auto& q : qs) ids += q.id + "\n";
    manifest["question_ids_sha256"] = sha256_hex(ids);
    manifest["template_checksums"] = deps.templates.checksums();
    manifest["corpus_sha256"] = output.corpus_checksum;
    std::size_t failed = 0;
    for (const auto& [id, s] : summary.per_method) failed += s.failed;
    manifest["counts"] = {{"questions", qs.size()},
                          {"method_runs_started", qs.size() * methods.size()},
                          {"method_runs_completed", qs.size() * methods.size() - failed},
                          {"method_runs_failed", failed}};
    summary.manifest = output.out_dir / manifest_file_name(output.dataset, c.k);
    std::ofstream(summary.manifest, std::ios::trunc) << manifest.dump(2) << '\n';
    return summary;
}

}  // namespace activerag
