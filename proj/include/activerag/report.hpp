#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "activerag/core.hpp"
#include "activerag/eval.hpp"
#include "activerag/llm.hpp"
#include "activerag/trace.hpp"

namespace activerag {

/// Traces of one (dataset, method, k) combination, as stored in
/// `<dataset>.<method>.k<k>.traces`.
struct TraceSet {
    std::string dataset;
    MethodKind method = MethodKind::of(MethodKind::Base::VanillaLLM);
    int k = 0;
    std::vector<PipelineTrace> traces;
    std::filesystem::path file;

    std::string column() const;  // "<dataset>@k<k>"
};

/// Parses the file name and loads every record.
TraceSet load_trace_set(const std::filesystem::path& file);

/// Expands a simple glob (`*` and `?` in the final path component).
std::vector<std::filesystem::path> expand_glob(const std::string& pattern);

struct AccuracyCell {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

struct EvalReport {
    std::vector<std::string> columns;  // sorted "<dataset>@k<k>"
    std::map<MethodKind, std::map<std::string, AccuracyCell>> accuracy;
    std::map<std::string, AccuracyCell> oracle;  // column -> upper bound
    std::map<std::string, AccuracyCell> ppl;     // column -> reranked
    std::map<std::string, std::map<std::string, double>> similarity;  // column -> method -> BLEU-2
    std::vector<std::string> footnotes;
    std::map<std::string, std::string> manifests;  // manifest file name -> sha256

    nlohmann::ordered_json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
    /// Rows per method, one column per dataset/k, best value per column
    /// marked with '*'. Analysis rows follow the method rows.
    std::string render_tables() const;
};

using DatasetMap = std::map<std::string, std::vector<Question>>;

/// Accuracy table over the given trace sets. Throws ReportError listing
/// trace question ids absent from their dataset.
EvalReport build_report(const std::vector<TraceSet>& sets, const DatasetMap& datasets);

/// Records the sha256 of every `*.manifest.json` next to the trace files.
void attach_manifests(EvalReport& report, const std::vector<TraceSet>& sets);

/// Four-agent correctness table for one column; throws ReportError naming
/// the missing agent trace set.
AgentCorrectness agent_correctness(const std::vector<TraceSet>& sets, const DatasetMap& datasets,
                                   const std::string& column);

void add_oracle_analysis(EvalReport& report, const std::vector<TraceSet>& sets, const DatasetMap& datasets);
/// Falls back to the Associate answer for any question the scorer fails on
/// and notes that in the footnotes.
void add_ppl_analysis(EvalReport& report, const std::vector<TraceSet>& sets, const DatasetMap& datasets,
                      Scorer& scorer, PplConditioning conditioning = PplConditioning::AnswerGivenKnowledge);
void add_similarity_analysis(EvalReport& report, const std::vector<TraceSet>& sets);

}  // namespace activerag
