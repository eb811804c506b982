#include "activerag/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "activerag/digest.hpp"
#include "activerag/errors.hpp"
#include "activerag/text.hpp"

#ifndef ACTIVERAG_DEFAULT_TEMPLATE_DIR
#define ACTIVERAG_DEFAULT_TEMPLATE_DIR "assets/templates"
#endif

namespace activerag {
namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

PromptTemplate::PromptTemplate(std::string name, std::string body)
    : name_(std::move(name)), body_(std::move(body)) {
    std::string literal;
    const auto& b = body_;
    for (std::size_t i = 0; i < b.size();) {
        if (b.compare(i, 2, "{{") == 0 || b.compare(i, 2, "}}") == 0) {
            literal.push_back(b[i]);
            i += 2;
            continue;
        }
        if (b[i] == '{') {
            auto close = b.find('}', i + 1);
            if (close == std::string::npos)
                throw TemplateError(name_ + ": unterminated slot at offset " + std::to_string(i));
            std::string slot = b.substr(i + 1, close - i - 1);
            if (slot.empty() || !is_ident_start(slot[0]) ||
                !std::all_of(slot.begin(), slot.end(), is_ident))
                throw TemplateError(name_ + ": invalid slot name '{" + slot + "}'");
            if (!literal.empty()) segments_.push_back({false, std::move(literal)});
            literal.clear();
            slots_.insert(slot);
            segments_.push_back({true, std::move(slot)});
            i = close + 1;
            continue;
        }
        if (b[i] == '}') throw TemplateError(name_ + ": stray '}' at offset " + std::to_string(i));
        literal.push_back(b[i]);
        ++i;
    }
    if (!literal.empty()) segments_.push_back({false, std::move(literal)});
}

RenderedPrompt render(const PromptTemplate& tmpl, const Bindings& bindings) {
    for (const auto& slot : tmpl.slots_)
        if (!bindings.contains(slot)) throw MissingSlot(slot);
    for (const auto& [key, value] : bindings)
        if (!tmpl.slots_.contains(key)) throw ExtraBinding(key);

    RenderedPrompt out{tmpl.name(), {}, bindings};
    for (const auto& seg : tmpl.segments_) {
        if (seg.is_slot)
            out.text += bindings.find(seg.text)->second;
        else
            out.text += seg.text;
    }
    return out;
}

std::string join_passages(std::vector<Passage> passages) {
    if (passages.empty()) throw PreconditionError("join_passages: retrieval produced no passages");
    std::stable_sort(passages.begin(), passages.end(),
                     [](const Passage& a, const Passage& b) { return a.rank < b.rank; });
    std::string out;
    for (std::size_t i = 0; i < passages.size(); ++i) {
        if (i > 0) out += '\n';
        out += "Passage " + std::to_string(i + 1) + ":";
        if (passages[i].title && !passages[i].title->empty()) out += " " + *passages[i].title;
        out += " " + passages[i].text;
    }
    return out;
}

std::string extract_answer(std::string_view reply) {
    constexpr std::string_view marker = "answer:";
    std::optional<std::size_t> last;
    std::size_t line_start = 0;
    while (line_start <= reply.size()) {
        auto pos = line_start;
        while (pos < reply.size() && (reply[pos] == ' ' || reply[pos] == '\t')) ++pos;
        if (reply.size() - pos >= marker.size()) {
            bool match = true;
            for (std::size_t k = 0; k < marker.size(); ++k) {
                if (std::tolower(static_cast<unsigned char>(reply[pos + k])) != marker[k]) {
                    match = false;
                    break;
                }
            }
            if (match) last = pos + marker.size();
        }
        auto nl = reply.find('\n', line_start);
        if (nl == std::string_view::npos) break;
        line_start = nl + 1;
    }
    if (!last) return std::string(trim(reply));
    return std::string(trim(reply.substr(*last)));
}

namespace tmpl {

std::string knowledge_construction(AgentKind agent) { return "kc." + std::string(agent_id(agent)); }

std::string nexus(AgentKind agent) { return "nexus." + std::string(agent_id(agent)); }

std::string nexus_knowledge_slot(AgentKind agent) {
    return std::string(agent_title(agent)) + "_knowledge_constrcution_reply";
}

}  // namespace tmpl

const std::map<std::string, std::string>& signature_phrases() {
    static const std::map<std::string, std::string> phrases = {
        {"kc.associate", "expand its knowledge boundaries"},
        {"kc.anchoring", "unfamiliar to the model"},
        {"kc.logician", "causal reasoning and logical inference"},
        {"kc.cognition", "alleviating model illusions"},
        {"nexus.associate", "Please verify the above reasoning process for errors"},
        {"nexus.anchoring", "Please verify the above reasoning process for errors"},
        {"nexus.logician", "Please verify the above reasoning process for errors"},
        {"nexus.cognition", "Please verify the above reasoning process for errors"},
        {"nexus.generic", "I retrieved some knowledge:"},
        {"baseline.vanilla", "Please provide concise answers to the questions"},
        {"baseline.cot", "Please think and reason step by step"},
        {"baseline.guideline", "knowledgeable and patient professor"},
        {"baseline.guideline_followup", "Please combine this reasoning process"},
        {"baseline.vanilla_rag", "Based on these texts, answer these questions"},
        {"baseline.chain_of_note", "Write reading notes"},
        {"baseline.self_refine", "extract relevant and useful information"},
        {"baseline.self_rerank", "<useful><relevant>"},
    };
    return phrases;
}

std::filesystem::path TemplateRegistry::default_dir() {
    if (const char* env = std::getenv("ACTIVERAG_TEMPLATES"); env && *env) return env;
    return ACTIVERAG_DEFAULT_TEMPLATE_DIR;
}

TemplateRegistry TemplateRegistry::load(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw TemplateError(manifest_path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw TemplateError(e.what());
    }
    TemplateRegistry reg;
    try {
        for (const auto& e : j.at("templates")) {
            ManifestEntry m;
            m.name = e.at("name").get<std::string>();
            m.file = e.at("file").get<std::string>();
            m.sha256 = e.at("sha256").get<std::string>();
            for (const auto& s : e.at("slots")) m.slots.insert(s.get<std::string>());
            reg.manifest_.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw TemplateError(manifest_path.string() + ": " + e.what());
    }
    for (const auto& m : reg.manifest_) {
        std::string body;
        try {
            body = read_file(dir / m.file);
        } catch (const Error&) {
            throw TemplateError(m.name + ": missing template file " + m.file);
        }
        reg.templates_.emplace_back(m.name, std::move(body));
    }
    return reg;
}

bool TemplateRegistry::contains(std::string_view name) const {
    return std::any_of(templates_.begin(), templates_.end(),
                       [&](const PromptTemplate& t) { return t.name() == name; });
}

const PromptTemplate& TemplateRegistry::get(std::string_view name) const {
    for (const auto& t : templates_)
        if (t.name() == name) return t;
    throw TemplateError("unknown template '" + std::string(name) + "'");
}

std::map<std::string, std::string> TemplateRegistry::checksums() const {
    std::map<std::string, std::string> out;
    for (const auto& t : templates_) out[t.name()] = sha256_hex(t.body());
    return out;
}

std::vector<VerifyIssue> TemplateRegistry::verify() const {
    std::vector<VerifyIssue> issues;
    for (std::size_t i = 0; i < templates_.size(); ++i) {
        const auto& t = templates_[i];
        const auto& m = manifest_[i];
        if (sha256_hex(t.body()) != m.sha256) issues.push_back({t.name(), "checksum mismatch"});
        if (t.required_slots() != m.slots) issues.push_back({t.name(), "slot set differs from manifest"});
        auto sig = signature_phrases().find(t.name());
        if (sig != signature_phrases().end() && t.body().find(sig->second) == std::string::npos)
            issues.push_back({t.name(), "missing signature phrase \"" + sig->second + "\""});
    }
    for (const auto& [name, phrase] : signature_phrases())
        if (!contains(name)) issues.push_back({name, "template missing from registry"});
    return issues;
}

}  // namespace activerag
