#include "activerag/report.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include <fmt/format.h>

#include "activerag/digest.hpp"
#include "activerag/errors.hpp"

namespace activerag {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string TraceSet::column() const { return dataset + "@k" + std::to_string(k); }

TraceSet load_trace_set(const fs::path& file) {
    static const std::regex name_re(R"(^([^.]+)\.([a-z-]+)\.k([0-9]+)\.traces$)");
    std::smatch m;
    const auto name = file.filename().string();
    if (!std::regex_match(name, m, name_re))
        throw ReportError("trace file name '" + name + "' is not <dataset>.<method>.k<k>.traces");
    auto method = MethodKind::parse(m[2].str());
    if (!method) throw ReportError("trace file '" + name + "' names unknown method '" + m[2].str() + "'");
    TraceSet set;
    set.dataset = m[1].str();
    set.method = *method;
    set.k = std::stoi(m[3].str());
    set.file = file;
    set.traces = read_trace_file(file.string());
    for (const auto& t : set.traces)
        if (t.method != set.method)
            throw ReportError(name + ": record for " + t.question_id + " has method " + t.method.id());
    return set;
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
    fs::path p(pattern);
    auto dir = p.parent_path();
    if (dir.empty()) dir = ".";
    const auto leaf = p.filename().string();
    if (leaf.find_first_of("*?") == std::string::npos) {
        if (fs::exists(p)) return {p};
        return {};
    }
    std::string re;
    for (char c : leaf) {
        if (c == '*')
            re += "[^/]*";
        else if (c == '?')
            re += ".";
        else if (std::string_view(".^$|()[]{}+\\").find(c) != std::string_view::npos)
            re += std::string("\\") + c;
        else
            re += c;
    }
    const std::regex leaf_re(re);
    std::vector<fs::path> out;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        if (!entry.is_regular_file()) continue;
        if (std::regex_match(entry.path().filename().string(), leaf_re)) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

const Question& find_question(const DatasetMap& datasets, const std::string& dataset, const std::string& id) {
    const auto& qs = datasets.at(dataset);
    auto it = std::find_if(qs.begin(), qs.end(), [&](const Question& q) { return q.id == id; });
    return *it;
}

void check_consistency(const std::vector<TraceSet>& sets, const DatasetMap& datasets) {
    std::vector<std::string> unknown;
    for (const auto& s : sets) {
        auto ds = datasets.find(s.dataset);
        if (ds == datasets.end()) throw ReportError("no dataset file loaded for '" + s.dataset + "'");
        std::set<std::string> ids;
        for (const auto& q : ds->second) ids.insert(q.id);
        for (const auto& t : s.traces)
            if (!ids.contains(t.question_id)) unknown.push_back(s.dataset + ":" + t.question_id);
    }
    if (!unknown.empty()) {
        std::sort(unknown.begin(), unknown.end());
        unknown.erase(std::unique(unknown.begin(), unknown.end()), unknown.end());
        std::string msg = "trace question ids missing from dataset:";
        for (const auto& id : unknown) msg += " " + id;
        throw ReportError(msg, unknown);
    }
}

ordered_json cell_json(const AccuracyCell& c) {
    return {{"correct", c.correct}, {"total", c.total}, {"accuracy", c.accuracy()},
            {"percent", format_percent(c.accuracy())}};
}

AccuracyCell cell_from_json(const nlohmann::json& j) {
    return {j.at("correct").get<std::size_t>(), j.at("total").get<std::size_t>()};
}

void add_footnote(EvalReport& r, std::string note) {
    if (std::find(r.footnotes.begin(), r.footnotes.end(), note) == r.footnotes.end())
        r.footnotes.push_back(std::move(note));
}

void add_column(EvalReport& r, const std::string& col) {
    if (std::find(r.columns.begin(), r.columns.end(), col) == r.columns.end()) {
        r.columns.push_back(col);
        std::sort(r.columns.begin(), r.columns.end());
    }
}

}  // namespace

EvalReport build_report(const std::vector<TraceSet>& sets, const DatasetMap& datasets) {
    if (sets.empty()) throw ReportError("no trace sets to evaluate");
    check_consistency(sets, datasets);
    EvalReport r;
    for (const auto& s : sets) {
        add_column(r, s.column());
        auto& cell = r.accuracy[s.method][s.column()];
        for (const auto& t : s.traces) {
            auto rec = evaluate_trace(t, find_question(datasets, s.dataset, t.question_id));
            cell.correct += rec.correct ? 1 : 0;
            ++cell.total;
        }
        using Base = MethodKind::Base;
        if (s.method.base() == Base::Guideline)
            add_footnote(r, "Guideline: Prompt2's {chain_of_thought_reply} is bound to a separate chain-of-thought "
                            "reply, so the method issues 3 calls per question.");
        if (s.method.base() == Base::SelfRefine || s.method.base() == Base::SelfRerank)
            add_footnote(r, "Self-Refine / Self-Rerank: Prompt2 is the Vanilla RAG prompt with the Prompt1 reply "
                            "bound to {passages}.");
    }
    add_footnote(r, "Accuracy is StringEM: a gold answer, lowercased with whitespace collapsed, must occur in the "
                    "full final reply. Failed runs count as incorrect.");
    return r;
}

void attach_manifests(EvalReport& report, const std::vector<TraceSet>& sets) {
    std::set<fs::path> dirs;
    for (const auto& s : sets) dirs.insert(s.file.has_parent_path() ? s.file.parent_path() : fs::path("."));
    for (const auto& dir : dirs) {
        for (const auto& m : expand_glob((dir / "*.manifest.json").string()))
            report.manifests[m.filename().string()] = sha256_file(m);
    }
}

AgentCorrectness agent_correctness(const std::vector<TraceSet>& sets, const DatasetMap& datasets,
                                   const std::string& column) {
    check_consistency(sets, datasets);
    AgentCorrectness table;
    std::array<bool, 4> present{};
    for (const auto& s : sets) {
        if (s.column() != column || !s.method.agent()) continue;
        const auto a = static_cast<std::size_t>(*s.method.agent());
        present[a] = true;
        for (const auto& t : s.traces)
            table[t.question_id][a] = evaluate_trace(t, find_question(datasets, s.dataset, t.question_id)).correct;
    }
    for (auto agent : kAllAgents)
        if (!present[static_cast<std::size_t>(agent)])
            throw ReportError(column + ": missing trace set for activerag-" + std::string(agent_id(agent)));
    return table;
}

namespace {

std::vector<std::string> activerag_columns(const std::vector<TraceSet>& sets) {
    std::set<std::string> cols;
    for (const auto& s : sets)
        if (s.method.agent()) cols.insert(s.column());
    if (cols.empty()) throw ReportError("no activerag-<agent> trace sets found");
    return {cols.begin(), cols.end()};
}

}  // namespace

void add_oracle_analysis(EvalReport& report, const std::vector<TraceSet>& sets, const DatasetMap& datasets) {
    for (const auto& col : activerag_columns(sets)) {
        auto table = agent_correctness(sets, datasets, col);
        oracle_rerank(table);  // validates completeness
        AccuracyCell cell;
        for (const auto& [qid, row] : table) {
            cell.correct += std::any_of(row.begin(), row.end(), [](const auto& c) { return c.value_or(false); }) ? 1 : 0;
            ++cell.total;
        }
        report.oracle[col] = cell;
        add_column(report, col);
    }
    add_footnote(report, "Oracle Rerank: a question counts as correct when any of the four knowledge construction "
                         "agents answered it correctly (upper bound).");
}

void add_ppl_analysis(EvalReport& report, const std::vector<TraceSet>& sets, const DatasetMap& datasets,
                      Scorer& scorer, PplConditioning conditioning) {
    for (const auto& col : activerag_columns(sets)) {
        agent_correctness(sets, datasets, col);  // validates presence of all four agents
        std::map<std::string, std::map<AgentKind, const PipelineTrace*>> by_question;
        std::string dataset;
        for (const auto& s : sets) {
            if (s.column() != col || !s.method.agent()) continue;
            dataset = s.dataset;
            for (const auto& t : s.traces) by_question[t.question_id][*s.method.agent()] = &t;
        }
        AccuracyCell cell;
        std::size_t fallbacks = 0;
        for (const auto& [qid, traces] : by_question) {
            if (traces.size() != kAllAgents.size())
                throw ReportError(col + ": question " + qid + " lacks results for some agents", {qid});
            const auto& q = find_question(datasets, dataset, qid);
            std::map<AgentKind, PplCandidate> cands;
            for (const auto& [agent, t] : traces)
                cands[agent] = {knowledge_text(*t).value_or(""), t->predicted_answer};
            AgentKind chosen = AgentKind::Associate;
            try {
                chosen = ppl_rerank(scorer, q.text, cands, conditioning).agent;
            } catch (const Error&) {
                ++fallbacks;
            }
            cell.correct += evaluate_trace(*traces.at(chosen), q).correct ? 1 : 0;
            ++cell.total;
        }
        report.ppl[col] = cell;
        add_column(report, col);
        if (fallbacks > 0)
            add_footnote(report, fmt::format("PPL-Rerank {}: scorer failed on {} question(s); the Associate answer "
                                             "was used for those.",
                                             col, fallbacks));
    }
    add_footnote(report, conditioning == PplConditioning::AnswerGivenKnowledge
                             ? "PPL-Rerank: picks the agent whose final answer has the lowest mean per-token NLL "
                               "given the question and that agent's knowledge construction text."
                             : "PPL-Rerank: picks the agent whose knowledge construction text has the lowest mean "
                               "per-token NLL given the question.");
}

void add_similarity_analysis(EvalReport& report, const std::vector<TraceSet>& sets) {
    std::set<std::string> cols;
    for (const auto& s : sets)
        if (s.method == MethodKind::active_rag(AgentKind::Associate)) cols.insert(s.column());
    if (cols.empty()) throw ReportError("similarity: missing trace set for activerag-associate");
    for (const auto& col : cols) {
        const TraceSet* assoc = nullptr;
        std::map<std::string, std::vector<PipelineTrace>> others;
        for (const auto& s : sets) {
            if (s.column() != col) continue;
            if (s.method == MethodKind::active_rag(AgentKind::Associate)) assoc = &s;
            // Compare against every method that yields a knowledge/note text,
            // including Associate itself as the self-similarity row.
            bool has_text = std::any_of(s.traces.begin(), s.traces.end(),
                                        [](const PipelineTrace& t) { return knowledge_text(t).has_value(); });
            if (has_text) others[s.method.id()] = s.traces;
        }
        report.similarity[col] = similarity_matrix(assoc->traces, others);
        add_column(report, col);
    }
    add_footnote(report, "Similarity: sentence-level BLEU-2 (clipped unigram precision, add-1 smoothed bigram "
                         "precision, brevity penalty; tokens are lowercased whitespace-split), averaged per "
                         "question between the Associate knowledge text and each method's knowledge/note text.");
}

ordered_json EvalReport::to_json() const {
    ordered_json j;
    j["columns"] = columns;
    auto rows = ordered_json::array();
    for (const auto& [method, cells] : accuracy) {
        ordered_json row;
        row["method"] = method.id();
        row["label"] = method.label();
        ordered_json c = ordered_json::object();
        for (const auto& [col, cell] : cells) c[col] = cell_json(cell);
        row["cells"] = std::move(c);
        rows.push_back(std::move(row));
    }
    j["accuracy"] = std::move(rows);
    if (!oracle.empty()) {
        ordered_json o = ordered_json::object();
        for (const auto& [col, cell] : oracle) o[col] = cell_json(cell);
        j["oracle_rerank"] = std::move(o);
    }
    if (!ppl.empty()) {
        ordered_json o = ordered_json::object();
        for (const auto& [col, cell] : ppl) o[col] = cell_json(cell);
        j["ppl_rerank"] = std::move(o);
    }
    if (!similarity.empty()) j["similarity_bleu2"] = similarity;
    j["footnotes"] = footnotes;
    j["manifests"] = manifests;
    return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    try {
        r.columns = j.at("columns").get<std::vector<std::string>>();
        for (const auto& row : j.at("accuracy")) {
            auto method = MethodKind::parse(row.at("method").get<std::string>());
            if (!method) throw ReportError("report names unknown method " + row.at("method").dump());
            for (const auto& [col, cell] : row.at("cells").items()) r.accuracy[*method][col] = cell_from_json(cell);
        }
        if (j.contains("oracle_rerank"))
            for (const auto& [col, cell] : j["oracle_rerank"].items()) r.oracle[col] = cell_from_json(cell);
        if (j.contains("ppl_rerank"))
            for (const auto& [col, cell] : j["ppl_rerank"].items()) r.ppl[col] = cell_from_json(cell);
        if (j.contains("similarity_bleu2"))
            r.similarity = j["similarity_bleu2"].get<std::map<std::string, std::map<std::string, double>>>();
        r.footnotes = j.at("footnotes").get<std::vector<std::string>>();
        r.manifests = j.at("manifests").get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ReportError(std::string("malformed report: ") + e.what());
    }
    return r;
}

std::string EvalReport::render_tables() const {
    std::string out;
    if (!accuracy.empty() || !oracle.empty() || !ppl.empty()) {
        std::vector<std::pair<std::string, std::map<std::string, AccuracyCell>>> rows;
        for (const auto& [method, cells] : accuracy) rows.emplace_back(method.label(), cells);
        const std::size_t method_rows = rows.size();
        if (!oracle.empty()) rows.emplace_back("Oracle Rerank", oracle);
        if (!ppl.empty()) rows.emplace_back("PPL-Rerank", ppl);

        std::size_t label_w = 6;
        for (const auto& [label, cells] : rows) label_w = std::max(label_w, label.size());
        std::vector<std::size_t> col_w;
        for (const auto& c : columns) col_w.push_back(std::max<std::size_t>(c.size(), 6));

        out += fmt::format("{:<{}}", "Method", label_w);
        for (std::size_t i = 0; i < columns.size(); ++i) out += fmt::format(" | {:>{}}", columns[i], col_w[i]);
        out += '\n';
        out += std::string(label_w, '-');
        for (auto w : col_w) out += "-+-" + std::string(w, '-');
        out += '\n';

        std::map<std::string, double> best;
        for (std::size_t r = 0; r < method_rows; ++r)
            for (const auto& [col, cell] : rows[r].second)
                best[col] = std::max(best.count(col) ? best[col] : -1.0, cell.accuracy());

        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (r == method_rows && r > 0) {
                out += std::string(label_w, '-');
                for (auto w : col_w) out += "-+-" + std::string(w, '-');
                out += '\n';
            }
            out += fmt::format("{:<{}}", rows[r].first, label_w);
            for (std::size_t i = 0; i < columns.size(); ++i) {
                auto it = rows[r].second.find(columns[i]);
                std::string v = "-";
                if (it != rows[r].second.end()) {
                    v = format_percent(it->second.accuracy());
                    v += (r < method_rows && it->second.accuracy() == best[columns[i]]) ? "*" : " ";
                }
                out += fmt::format(" | {:>{}}", v, col_w[i]);
            }
            out += '\n';
        }
    }
    for (const auto& [col, sims] : similarity) {
        out += fmt::format("\nBLEU-2 similarity to ActiveRAG w. Associate ({})\n", col);
        for (const auto& [method, value] : sims) {
            auto m = MethodKind::parse(method);
            out += fmt::format("  {:<28} {:.4f}\n", m ? m->label() : method, value);
        }
    }
    if (!footnotes.empty()) {
        out += '\n';
        for (std::size_t i = 0; i < footnotes.size(); ++i) out += fmt::format("[{}] {}\n", i + 1, footnotes[i]);
    }
    for (const auto& [name, sha] : manifests) out += fmt::format("manifest {} sha256 {}\n", name, sha);
    return out;
}

}  // namespace activerag
