#include "activerag/trace.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "activerag/errors.hpp"

namespace activerag {

using ordered_json = nlohmann::ordered_json;

bool PipelineTrace::same_outcome(const PipelineTrace& o) const {
    PipelineTrace a = *this;
    a.wall_time_ms = o.wall_time_ms;
    return a == o;
}

void PipelineTrace::check_invariants() const {
    if (question_id.empty()) throw ParseError("question_id", "empty");
    if (chat_call_count < 0) throw ParseError("chat_call_count", "negative");
    if (static_cast<std::size_t>(chat_call_count) != replies.size())
        throw ParseError("chat_call_count", std::to_string(chat_call_count) +
                                                " does not match replies length " +
                                                std::to_string(replies.size()));
    if (prompts.size() != replies.size())
        throw ParseError("prompts", "length " + std::to_string(prompts.size()) +
                                        " does not match replies length " +
                                        std::to_string(replies.size()));
    const std::string expected_final = replies.empty() ? std::string() : replies.back();
    if (final_text != expected_final) throw ParseError("final_text", "differs from the last reply");
    if (cache_hits < 0 || cache_hits > chat_call_count)
        throw ParseError("cache_hits", "outside [0, chat_call_count]");
    if (k_used < 0) throw ParseError("k_used", "negative");
}

std::string serialize_trace(const PipelineTrace& t) {
    t.check_invariants();
    ordered_json j;
    j["question_id"] = t.question_id;
    j["method"] = t.method.id();
    j["k_used"] = t.k_used;
    auto prompts = ordered_json::array();
    for (const auto& p : t.prompts)
        prompts.push_back(ordered_json{{"template", p.template_name}, {"text", p.text}});
    j["prompts"] = std::move(prompts);
    j["replies"] = t.replies;
    j["final_text"] = t.final_text;
    j["predicted_answer"] = t.predicted_answer;
    j["chat_call_count"] = t.chat_call_count;
    j["cache_hits"] = t.cache_hits;
    j["wall_time_ms"] = t.wall_time_ms;
    j["error"] = t.error ? ordered_json(*t.error) : ordered_json(nullptr);
    // dump() escapes control characters, so the record stays on one line.
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

namespace {

const ordered_json& field(const ordered_json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end()) throw ParseError(name, "missing");
    return *it;
}

std::string string_field(const ordered_json& j, const char* name) {
    const auto& v = field(j, name);
    if (!v.is_string()) throw ParseError(name, "expected string");
    return v.get<std::string>();
}

std::int64_t int_field(const ordered_json& j, const char* name) {
    const auto& v = field(j, name);
    if (!v.is_number_integer()) throw ParseError(name, "expected integer");
    return v.get<std::int64_t>();
}

}  // namespace

PipelineTrace deserialize_trace(std::string_view line) {
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("record", e.what());
    }
    if (!j.is_object()) throw ParseError("record", "expected a JSON object");

    PipelineTrace t;
    t.question_id = string_field(j, "question_id");
    auto method = MethodKind::parse(string_field(j, "method"));
    if (!method) throw ParseError("method", "unknown method '" + j["method"].get<std::string>() + "'");
    t.method = *method;
    t.k_used = static_cast<int>(int_field(j, "k_used"));

    const auto& prompts = field(j, "prompts");
    if (!prompts.is_array()) throw ParseError("prompts", "expected list");
    for (const auto& p : prompts) {
        if (!p.is_object() || !p.contains("template") || !p.contains("text") ||
            !p["template"].is_string() || !p["text"].is_string())
            throw ParseError("prompts", "entry must have string fields template and text");
        t.prompts.push_back({p["template"].get<std::string>(), p["text"].get<std::string>()});
    }
    const auto& replies = field(j, "replies");
    if (!replies.is_array()) throw ParseError("replies", "expected list");
    for (const auto& r : replies) {
        if (!r.is_string()) throw ParseError("replies", "entry must be a string");
        t.replies.push_back(r.get<std::string>());
    }
    t.final_text = string_field(j, "final_text");
    t.predicted_answer = string_field(j, "predicted_answer");
    t.chat_call_count = static_cast<int>(int_field(j, "chat_call_count"));
    t.cache_hits = static_cast<int>(int_field(j, "cache_hits"));
    t.wall_time_ms = int_field(j, "wall_time_ms");
    const auto& err = field(j, "error");
    if (err.is_string())
        t.error = err.get<std::string>();
    else if (!err.is_null())
        throw ParseError("error", "expected string or null");

    t.check_invariants();
    return t;
}

std::vector<PipelineTrace> read_trace_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open trace file " + path);
    std::vector<PipelineTrace> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(deserialize_trace(line));
        } catch (const ParseError& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + " " + e.field(), e.what());
        }
    }
    return out;
}

}  // namespace activerag
