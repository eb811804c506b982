#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "activerag/core.hpp"

namespace activerag {

using Bindings = std::map<std::string, std::string, std::less<>>;

struct RenderedPrompt;
class PromptTemplate;
RenderedPrompt render(const PromptTemplate& tmpl, const Bindings& bindings);

/// A named prompt body with `{slot}` placeholders. `{{` and `}}` in the body
/// are literal braces.
class PromptTemplate {
public:
    PromptTemplate(std::string name, std::string body);

    const std::string& name() const noexcept { return name_; }
    const std::string& body() const noexcept { return body_; }
    const std::set<std::string>& required_slots() const noexcept { return slots_; }

private:
    friend RenderedPrompt render(const PromptTemplate& tmpl, const Bindings& bindings);
    struct Segment {
        bool is_slot;
        std::string text;  // literal text or slot name
    };

    std::string name_;
    std::string body_;
    std::set<std::string> slots_;
    std::vector<Segment> segments_;
};

struct RenderedPrompt {
    std::string template_name;
    std::string text;
    Bindings bindings;
};

/// Substitutes every slot in one pass, so braces inside bound values are
/// never interpreted. Bindings must cover the slots exactly.
RenderedPrompt render(const PromptTemplate& tmpl, const Bindings& bindings);

/// "Passage 1: <title> <text>" blocks in rank order, one per line.
std::string join_passages(std::vector<Passage> passages);

/// Text after the last line-initial "Answer:" (case-insensitive), trimmed;
/// the whole reply trimmed when no marker is present.
std::string extract_answer(std::string_view reply);

/// Template names used by the pipeline.
namespace tmpl {
inline constexpr std::string_view kVanilla = "baseline.vanilla";
inline constexpr std::string_view kCot = "baseline.cot";
inline constexpr std::string_view kGuideline = "baseline.guideline";
inline constexpr std::string_view kGuidelineFollowup = "baseline.guideline_followup";
inline constexpr std::string_view kVanillaRag = "baseline.vanilla_rag";
inline constexpr std::string_view kChainOfNote = "baseline.chain_of_note";
inline constexpr std::string_view kSelfRefine = "baseline.self_refine";
inline constexpr std::string_view kSelfRerank = "baseline.self_rerank";
inline constexpr std::string_view kNexusGeneric = "nexus.generic";

std::string knowledge_construction(AgentKind agent);  // "kc.<agent>"
std::string nexus(AgentKind agent);                   // "nexus.<agent>"
/// Nexus slot carrying the knowledge-construction reply, spelled as in the
/// original prompt tables: "<Agent>_knowledge_constrcution_reply".
std::string nexus_knowledge_slot(AgentKind agent);
}  // namespace tmpl

struct ManifestEntry {
    std::string name;
    std::string file;
    std::string sha256;
    std::set<std::string> slots;
};

struct VerifyIssue {
    std::string template_name;
    std::string problem;
};

/// Immutable set of templates loaded from an asset directory holding one
/// text file per template plus `manifest.json`.
class TemplateRegistry {
public:
    static TemplateRegistry load(const std::filesystem::path& dir);
    /// $ACTIVERAG_TEMPLATES if set, otherwise the bundled asset directory.
    static std::filesystem::path default_dir();

    const PromptTemplate& get(std::string_view name) const;
    bool contains(std::string_view name) const;
    const std::vector<PromptTemplate>& templates() const noexcept { return templates_; }
    const std::vector<ManifestEntry>& manifest() const noexcept { return manifest_; }

    /// Checksums, declared slots, and signature phrases. Empty means clean.
    std::vector<VerifyIssue> verify() const;

    /// name -> sha256 of the body as loaded.
    std::map<std::string, std::string> checksums() const;

private:
    std::vector<PromptTemplate> templates_;
    std::vector<ManifestEntry> manifest_;
};

/// Phrases each verbatim template must contain.
const std::map<std::string, std::string>& signature_phrases();

}  // namespace activerag
