#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "activerag/core.hpp"

namespace activerag {

struct PromptRecord {
    std::string template_name;
    std::string text;

    bool operator==(const PromptRecord&) const = default;
};

/// Everything one method run did for one question.
///
/// Invariants: chat_call_count == replies.size() == prompts.size(), and
/// final_text is the last reply (or empty when there are no replies).
/// A run that failed part-way keeps the completed calls and sets `error`.
struct PipelineTrace {
    std::string question_id;
    MethodKind method = MethodKind::of(MethodKind::Base::VanillaLLM);
    int k_used = 0;
    std::vector<PromptRecord> prompts;
    std::vector<std::string> replies;
    std::string final_text;
    std::string predicted_answer;
    int chat_call_count = 0;
    int cache_hits = 0;
    std::int64_t wall_time_ms = 0;
    std::optional<std::string> error;

    bool operator==(const PipelineTrace&) const = default;
    /// Equality ignoring wall_time_ms.
    bool same_outcome(const PipelineTrace& o) const;

    /// Throws ParseError naming the first violated field.
    void check_invariants() const;
};

/// One JSON object on a single line, no trailing newline.
std::string serialize_trace(const PipelineTrace& trace);
PipelineTrace deserialize_trace(std::string_view line);

std::vector<PipelineTrace> read_trace_file(const std::string& path);

}  // namespace activerag
