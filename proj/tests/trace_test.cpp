#include <gtest/gtest.h>

#include <random>

#include "activerag/errors.hpp"
#include "activerag/trace.hpp"

using namespace activerag;

namespace {

std::string random_text(std::mt19937& rng) {
    static const std::vector<std::string> pieces = {"a", "Ω", "\"", "\\", "\n", "{slot}", " ", "é", "\t", "x y"};
    std::string s;
    const int n = static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) s += pieces[rng() % pieces.size()];
    return s;
}

PipelineTrace random_trace(std::mt19937& rng) {
    PipelineTrace t;
    const auto methods = MethodKind::all();
    t.question_id = "q" + std::to_string(rng() % 1000);
    t.method = methods[rng() % methods.size()];
    t.k_used = static_cast<int>(rng() % 11);
    const int calls = static_cast<int>(rng() % 4);
    for (int i = 0; i < calls; ++i) {
        t.prompts.push_back({"baseline.cot", random_text(rng)});
        t.replies.push_back(random_text(rng));
    }
    t.chat_call_count = calls;
    t.final_text = calls ? t.replies.back() : "";
    t.predicted_answer = random_text(rng);
    t.cache_hits = calls ? static_cast<int>(rng() % (calls + 1)) : 0;
    t.wall_time_ms = rng() % 5000;
    if (rng() % 3 == 0) t.error = random_text(rng);
    return t;
}

}  // namespace

TEST(Trace, RoundTripProperty) {
    std::mt19937 rng(11);
    for (int i = 0; i < 300; ++i) {
        auto t = random_trace(rng);
        auto line = serialize_trace(t);
        EXPECT_EQ(line.find('\n'), std::string::npos);
        EXPECT_EQ(deserialize_trace(line), t);
    }
}

TEST(Trace, SameOutcomeIgnoresWallTime) {
    std::mt19937 rng(3);
    auto a = random_trace(rng);
    auto b = a;
    b.wall_time_ms += 17;
    EXPECT_TRUE(a.same_outcome(b));
    EXPECT_NE(a, b);
    b.predicted_answer += "!";
    EXPECT_FALSE(a.same_outcome(b));
}

TEST(Trace, InvariantViolationsNameTheField) {
    PipelineTrace t;
    t.question_id = "q";
    t.prompts = {{"baseline.vanilla", "p"}};
    t.replies = {"r"};
    t.final_text = "r";
    t.chat_call_count = 2;
    try {
        t.check_invariants();
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.field(), "chat_call_count");
    }
    t.chat_call_count = 1;
    t.final_text = "other";
    try {
        t.check_invariants();
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.field(), "final_text");
    }
}

TEST(Trace, MalformedLinesNameTheField) {
    EXPECT_THROW(deserialize_trace("{nope"), ParseError);
    try {
        deserialize_trace(R"({"question_id":"q","method":"bogus"})");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.field(), "method");
    }
}
