#include <gtest/gtest.h>

#include "activerag/errors.hpp"
#include "activerag/pipeline.hpp"
#include "activerag/prompts.hpp"
#include "activerag/retrieval.hpp"
#include "support.hpp"

using namespace activerag;
using testing_support::fixture;
using testing_support::TempDir;

namespace {

struct World {
    TemplateRegistry templates = TemplateRegistry::load(TemplateRegistry::default_dir());
    std::shared_ptr<const Bm25Index> index =
        std::make_shared<const Bm25Index>(Bm25Index::build(Corpus::from_file(fixture("toy_corpus.jsonl"))));
    LocalRetriever retriever{index};
    std::vector<Question> questions = load_questions(fixture("nq.jsonl"));
};

World& world() {
    static World w;
    return w;
}

class FailingBackend : public ChatBackend {
public:
    explicit FailingBackend(int fail_on) : fail_on_(fail_on) {}
    ChatResponse complete(const ChatRequest&) override {
        if (++calls_ == fail_on_) throw TransportError("connection reset");
        return {"Answer: x", false, 0};
    }
    std::string identity() const override { return "failing"; }

private:
    int fail_on_;
    int calls_ = 0;
};

}  // namespace

TEST(Pipeline, EveryMethodIssuesItsContractedCalls) {
    auto& w = world();
    for (const auto& m : MethodKind::all()) {
        MockChatBackend mock;
        PipelineDeps deps{mock, w.templates, &w.retriever, RunConfig{}};
        auto t = run_method(deps, m, w.questions[0]);
        EXPECT_FALSE(t.error) << m.id() << ": " << *t.error;
        EXPECT_EQ(static_cast<int>(mock.calls()), m.contracted_calls()) << m.id();
        EXPECT_EQ(t.chat_call_count, m.contracted_calls()) << m.id();
        EXPECT_NO_THROW(t.check_invariants());
        EXPECT_EQ(t.k_used, m.uses_retrieval() ? 5 : 0) << m.id();
    }
}

TEST(Pipeline, ActiveRagStagesAndTemplates) {
    auto& w = world();
    MockChatBackend mock;
    PipelineDeps deps{mock, w.templates, &w.retriever, RunConfig{}};
    auto t = run_method(deps, MethodKind::active_rag(AgentKind::Logician), w.questions[1]);
    ASSERT_EQ(t.prompts.size(), 3u);
    EXPECT_EQ(t.prompts[0].template_name, "baseline.cot");
    EXPECT_EQ(t.prompts[1].template_name, "kc.logician");
    EXPECT_EQ(t.prompts[2].template_name, "nexus.logician");
    EXPECT_NE(t.prompts[1].text.find("Passage 1:"), std::string::npos);
    EXPECT_NE(t.prompts[2].text.find(t.replies[0]), std::string::npos);
    EXPECT_NE(t.prompts[2].text.find(t.replies[1]), std::string::npos);
    EXPECT_EQ(t.final_text, t.replies[2]);
}

TEST(Pipeline, SharedCotCostsNineCallsForFourAgents) {
    auto& w = world();
    for (auto [sharing, expected] : {std::pair{CotSharing::Shared, 9u}, std::pair{CotSharing::PerAgent, 12u}}) {
        MockChatBackend mock;
        RunConfig cfg;
        cfg.cot_sharing = sharing;
        PipelineDeps deps{mock, w.templates, &w.retriever, cfg};
        QuestionScope scope;
        for (auto a : kAllAgents) {
            auto t = run_method(deps, MethodKind::active_rag(a), w.questions[2], &scope);
            EXPECT_EQ(t.chat_call_count, 3);
        }
        EXPECT_EQ(mock.calls(), expected);
    }
}

TEST(Pipeline, GuidelineFollowupCarriesTranscript) {
    auto& w = world();
    MockChatBackend mock;
    PipelineDeps deps{mock, w.templates, nullptr, RunConfig{}};
    auto t = run_method(deps, MethodKind::of(MethodKind::Base::Guideline), w.questions[0]);
    ASSERT_EQ(t.prompts.size(), 3u);
    EXPECT_EQ(t.prompts[2].text.rfind(t.prompts[1].text + "\n\n" + t.replies[1], 0), 0u);
}

TEST(Pipeline, PassageCountNeverExceedsK) {
    auto& w = world();
    for (int k : {1, 3, 5, 10, 50}) {
        MockChatBackend mock;
        RunConfig cfg;
        cfg.k = k;
        PipelineDeps deps{mock, w.templates, &w.retriever, cfg};
        auto t = run_method(deps, MethodKind::of(MethodKind::Base::VanillaRAG), w.questions[3]);
        EXPECT_LE(t.k_used, k);
        EXPECT_EQ(t.k_used, std::min(k, 12));
    }
}

TEST(Pipeline, MissingRetrieverIsPrecondition) {
    auto& w = world();
    MockChatBackend mock;
    PipelineDeps deps{mock, w.templates, nullptr, RunConfig{}};
    EXPECT_THROW(run_method(deps, MethodKind::of(MethodKind::Base::VanillaRAG), w.questions[0]), PreconditionError);
}

TEST(Pipeline, FailureKeepsCompletedCalls) {
    auto& w = world();
    FailingBackend backend(3);
    PipelineDeps deps{backend, w.templates, &w.retriever, RunConfig{}};
    auto t = run_method(deps, MethodKind::active_rag(AgentKind::Cognition), w.questions[0]);
    ASSERT_TRUE(t.error);
    EXPECT_EQ(t.chat_call_count, 2);
    EXPECT_EQ(t.predicted_answer, "");
    EXPECT_NO_THROW(t.check_invariants());
}

TEST(Batch, BoundedConcurrencyAndOrderedOutput) {
    auto& w = world();
    TempDir dir;
    MockChatBackend mock({}, std::chrono::milliseconds(3));
    RunConfig cfg;
    cfg.parallelism = 4;
    PipelineDeps deps{mock, w.templates, &w.retriever, cfg};
    std::vector<MethodKind> methods = {MethodKind::of(MethodKind::Base::VanillaRAG),
                                       MethodKind::active_rag(AgentKind::Associate)};
    BatchOutput out{dir.path(), "nq", "c", nullptr};
    auto summary = run_batch(deps, methods, w.questions, out);
    EXPECT_LE(mock.max_in_flight(), 4u);
    EXPECT_GE(mock.max_in_flight(), 2u);
    EXPECT_EQ(mock.calls(), 25u * 4u);
    for (const auto& m : methods) {
        auto traces = read_trace_file(summary.trace_files.at(m.id()).string());
        ASSERT_EQ(traces.size(), 25u);
        for (std::size_t i = 0; i < traces.size(); ++i) EXPECT_EQ(traces[i].question_id, w.questions[i].id);
    }
    EXPECT_EQ(summary.trace_files.at("vanilla-rag").filename(), "nq.vanilla-rag.k5.traces");
    EXPECT_TRUE(std::filesystem::exists(summary.manifest));
}

TEST(Batch, SeededSampleIsReproducible) {
    auto& w = world();
    TempDir a, b;
    RunConfig cfg;
    cfg.sample_size = 7;
    cfg.seed = 99;
    MockChatBackend m1, m2;
    PipelineDeps d1{m1, w.templates, nullptr, cfg}, d2{m2, w.templates, nullptr, cfg};
    std::vector<MethodKind> methods = {MethodKind::of(MethodKind::Base::CoT)};
    auto s1 = run_batch(d1, methods, w.questions, {a.path(), "nq", "", nullptr});
    auto s2 = run_batch(d2, methods, w.questions, {b.path(), "nq", "", nullptr});
    EXPECT_EQ(s1.questions.size(), 7u);
    EXPECT_EQ(s1.questions, s2.questions);
}
