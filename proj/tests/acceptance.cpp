// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "activerag/cli.hpp"
#include "activerag/digest.hpp"
#include "activerag/eval.hpp"
#include "activerag/pipeline.hpp"
#include "activerag/prompts.hpp"
#include "activerag/report.hpp"
#include "activerag/retrieval.hpp"
#include "activerag/text.hpp"
#include "support.hpp"

using namespace activerag;
using nlohmann::json;
using testing_support::fixture;
using testing_support::StubServer;
using testing_support::TempDir;

namespace {

struct Outcome {
    enum class Status { Pass, Fail, Skip } status;
    std::string detail;
};

Outcome pass(std::string d) { return {Outcome::Status::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::Status::Fail, std::move(d)}; }
Outcome skip(std::string d) { return {Outcome::Status::Skip, std::move(d)}; }

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult cli_run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::optional<std::size_t> transactions_in(const std::string& out) {
    const std::string marker = "network transactions: ";
    auto pos = out.rfind(marker);
    if (pos == std::string::npos) return std::nullopt;
    return std::stoul(out.substr(pos + marker.size()));
}

// 1 -------------------------------------------------------------------------
Outcome metric_fidelity() {
    std::ifstream in(fixture("stringem_labeled.jsonl"));
    std::string line;
    int total = 0, agree = 0;
    std::string mismatches;
    while (std::getline(in, line)) {
        auto j = json::parse(line);
        ++total;
        bool got = string_em(j["prediction"].get<std::string>(), j["gold"].get<std::vector<std::string>>()).correct;
        if (got == j["label"].get<bool>())
            ++agree;
        else
            mismatches += " #" + std::to_string(total);
    }
    auto detail = fmt::format("{}/{} hand labels matched{}", agree, total, mismatches);
    return total == 20 && agree == 20 ? pass(detail) : fail(detail);
}

// 2 -------------------------------------------------------------------------
Outcome call_counts() {
    auto templates = TemplateRegistry::load(TemplateRegistry::default_dir());
    auto index = std::make_shared<const Bm25Index>(Bm25Index::build(Corpus::from_file(fixture("toy_corpus.jsonl"))));
    LocalRetriever retriever(index);
    auto questions = load_questions(fixture("nq.jsonl"));
    std::string bad;
    std::size_t checked = 0;
    for (const auto& q : questions) {
        for (const auto& m : MethodKind::all()) {
            MockChatBackend mock;
            PipelineDeps deps{mock, templates, &retriever, RunConfig{}};
            auto t = run_method(deps, m, q);
            ++checked;
            if (t.error || static_cast<int>(mock.calls()) != m.contracted_calls() ||
                t.chat_call_count != m.contracted_calls())
                bad += fmt::format(" {}:{}={}", m.id(), q.id, mock.calls());
            if (m.agent() && mock.calls() != 3) bad += " activerag!=3";
        }
    }
    auto detail = fmt::format("{} method runs checked", checked);
    return bad.empty() ? pass(detail) : fail(detail + ";" + bad);
}

// 3 -------------------------------------------------------------------------
Outcome template_fidelity() {
    auto reg = TemplateRegistry::load(TemplateRegistry::default_dir());
    auto issues = reg.verify();
    std::string bad;
    for (const auto& i : issues) bad += " " + i.template_name + ": " + i.problem;
    const std::vector<std::pair<std::string, std::string>> required = {
        {"kc.associate", "expand its knowledge boundaries"},
        {"kc.cognition", "alleviating model illusions"},
        {"baseline.chain_of_note", "Write reading notes"},
        {"baseline.self_rerank", "<useful><relevant>"},
    };
    for (const auto& [name, phrase] : required)
        if (reg.get(name).body().find(phrase) == std::string::npos) bad += " " + name + " lacks '" + phrase + "'";
    auto detail = fmt::format("{} templates verified", reg.templates().size());
    return bad.empty() ? pass(detail) : fail(detail + ";" + bad);
}

// 4 -------------------------------------------------------------------------
// Brute-force scorer with no inverted index.
std::vector<std::pair<std::string, double>> brute_force(const std::vector<CorpusDoc>& docs,
                                                        const std::vector<std::string>& query, int k) {
    std::vector<std::vector<std::string>> toks;
    double total = 0;
    for (const auto& d : docs) {
        toks.push_back(tokenize(indexed_text(d)));
        total += static_cast<double>(toks.back().size());
    }
    const double n = static_cast<double>(docs.size());
    const double avgdl = total / n;
    std::vector<std::pair<std::string, double>> scored;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        double s = 0;
        for (const auto& term : query) {
            double df = 0;
            for (const auto& t : toks) df += std::find(t.begin(), t.end(), term) != t.end() ? 1 : 0;
            const double tf = static_cast<double>(std::count(toks[i].begin(), toks[i].end(), term));
            if (tf == 0) continue;
            const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
            const double len = static_cast<double>(toks[i].size());
            s += idf * (tf * (1.2 + 1.0)) / (tf + 1.2 * (1.0 - 0.75 + 0.75 * (len / avgdl)));
        }
        scored.emplace_back(docs[i].id, s);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    scored.resize(std::min<std::size_t>(scored.size(), static_cast<std::size_t>(k)));
    return scored;
}

Outcome bm25_oracle() {
    static const std::vector<std::string> vocab = {"river", "city", "golf", "ocean", "tower", "wall",
                                                   "iron",  "year", "king", "lung",  "film",  "peak"};
    std::mt19937 rng(20240601);
    std::size_t queries = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 100);
        std::vector<CorpusDoc> docs;
        for (int i = 0; i < n; ++i) {
            std::string text;
            const int len = 1 + static_cast<int>(rng() % 15);
            for (int j = 0; j < len; ++j) text += vocab[rng() % vocab.size()] + (rng() % 4 ? " " : ", ");
            std::optional<std::string> title;
            if (rng() % 3 == 0) title = vocab[rng() % vocab.size()];
            docs.push_back({fmt::format("d{:03d}", rng() % 1000) + "-" + std::to_string(i), title, text});
        }
        auto index = Bm25Index::build(Corpus::from_docs(docs));
        for (int qn = 0; qn < 3; ++qn) {
            std::string query;
            const int qlen = 1 + static_cast<int>(rng() % 4);
            for (int j = 0; j < qlen; ++j) query += vocab[rng() % vocab.size()] + " ";
            const int k = 1 + static_cast<int>(rng() % 12);
            auto got = index.retrieve(query, k);
            auto want = brute_force(docs, tokenize(query), k);
            ++queries;
            if (got.size() != want.size()) return fail(fmt::format("corpus {} size mismatch", trial));
            for (std::size_t i = 0; i < want.size(); ++i) {
                const auto& p = got.passages()[i];
                if (p.id != want[i].first || p.score != want[i].second)
                    return fail(fmt::format("corpus {} query '{}' rank {}: got {} ({}) want {} ({})", trial, query,
                                            i + 1, p.id, p.score, want[i].first, want[i].second));
            }
        }
    }
    return pass(fmt::format("200 corpora, {} queries identical to brute force", queries));
}

// 5 -------------------------------------------------------------------------
Outcome oracle_dominance() {
    std::mt19937 rng(5);
    int equal_cases = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        AgentCorrectness table;
        const int n = 1 + static_cast<int>(rng() % 30);
        const int bias = static_cast<int>(rng() % 4);  // skew some tables toward domination
        for (int q = 0; q < n; ++q)
            for (int a = 0; a < 4; ++a)
                table[fmt::format("q{}", q)][a] = a == bias ? rng() % 5 != 0 : rng() % 3 == 0;
        const double oracle = oracle_rerank(table);
        bool dominated = false;
        for (auto a : kAllAgents) {
            const double acc = agent_accuracy(table, a);
            if (oracle < acc) return fail(fmt::format("table {}: oracle {} < {} {}", trial, oracle, agent_id(a), acc));
            bool dominates = true;
            for (const auto& [qid, row] : table) {
                bool any = false;
                for (const auto& c : row) any = any || *c;
                if (any && !*row[static_cast<std::size_t>(a)]) dominates = false;
            }
            if (dominates) dominated = true;
            if ((oracle == acc) != dominates)
                return fail(fmt::format("table {}: equality for {} without per-question dominance", trial, agent_id(a)));
        }
        equal_cases += dominated ? 1 : 0;
    }
    return pass(fmt::format("1000 tables, {} with a dominating agent", equal_cases));
}

// 6 -------------------------------------------------------------------------
Outcome ppl_argmin() {
    std::mt19937 rng(6);
    for (int trial = 0; trial < 1000; ++trial) {
        std::map<AgentKind, PplCandidate> cands;
        std::map<std::pair<std::string, std::string>, double> table;
        std::array<double, 4> nll{};
        for (auto a : kAllAgents) {
            PplCandidate c{fmt::format("kc {} {}", agent_id(a), trial), fmt::format("answer {}", agent_id(a))};
            nll[static_cast<std::size_t>(a)] = static_cast<double>(rng() % 6) / 2.0;  // frequent ties
            table[{ppl_context("q", c.kc_text), c.final_answer}] = nll[static_cast<std::size_t>(a)];
            cands[a] = c;
        }
        MockScorer scorer(table, {}, std::nullopt);
        auto choice = ppl_rerank(scorer, "q", cands);
        std::size_t want = 0;
        for (std::size_t i = 1; i < 4; ++i)
            if (nll[i] < nll[want]) want = i;
        if (choice.agent != kAllAgents[want])
            return fail(fmt::format("trial {}: chose {} want {}", trial, agent_id(choice.agent), agent_id(kAllAgents[want])));
    }
    std::map<AgentKind, PplCandidate> cands;
    for (auto a : kAllAgents) cands[a] = {"kc", std::string(agent_id(a))};
    MockScorer flat({}, {}, 1.25);
    if (ppl_rerank(flat, "q", cands).agent != AgentKind::Associate) return fail("full tie did not pick Associate");
    return pass("1000 random tables pick the argmin; full tie picks Associate");
}

// 7 -------------------------------------------------------------------------
// Independent BLEU-2 with explicit n-gram lists and counting.
double bleu2_oracle(const std::string& cand, const std::string& ref) {
    auto c = split_whitespace(normalize_text(cand));
    auto r = split_whitespace(normalize_text(ref));
    if (c.empty()) return 0.0;
    auto grams = [](const std::vector<std::string>& t, std::size_t n) {
        std::vector<std::string> g;
        for (std::size_t i = 0; i + n <= t.size(); ++i) {
            std::string s;
            for (std::size_t j = 0; j < n; ++j) s += t[i + j] + '\x1f';
            g.push_back(s);
        }
        return g;
    };
    auto clipped = [&](std::size_t n) {
        auto cg = grams(c, n), rg = grams(r, n);
        double m = 0;
        std::vector<bool> used(rg.size(), false);
        for (const auto& g : cg)
            for (std::size_t i = 0; i < rg.size(); ++i)
                if (!used[i] && rg[i] == g) {
                    used[i] = true;
                    m += 1;
                    break;
                }
        return m;
    };
    const double len = static_cast<double>(c.size());
    const double p1 = clipped(1) / len;
    if (p1 == 0) return 0.0;
    const double p2 = (clipped(2) + 1) / len;
    const double bp = c.size() < r.size() ? std::exp(1.0 - static_cast<double>(r.size()) / len) : 1.0;
    return bp * std::sqrt(p1 * p2);
}

Outcome bleu_correctness() {
    const std::string s = "The Edict of Nantes was signed in 1598 by Henry IV";
    if (std::abs(bleu2(s, s) - 1.0) > 1e-9) return fail("identity != 1");
    if (bleu2("alpha beta gamma", "delta epsilon") != 0.0) return fail("disjoint != 0");
    std::mt19937 rng(7);
    const std::vector<std::string> words = {"the", "cat", "sat", "on", "mat", "a", "dog", "The", "ran"};
    double worst = 0;
    for (int i = 0; i < 10; ++i) {
        std::string a, b;
        for (int j = 0, n = 1 + static_cast<int>(rng() % 9); j < n; ++j) a += words[rng() % words.size()] + " ";
        for (int j = 0, n = 1 + static_cast<int>(rng() % 9); j < n; ++j) b += words[rng() % words.size()] + " ";
        worst = std::max(worst, std::abs(bleu2(a, b) - bleu2_oracle(a, b)));
    }
    auto detail = fmt::format("max deviation from counting oracle {:.3g}", worst);
    return worst <= 1e-9 ? pass(detail) : fail(detail);
}

// 8 -------------------------------------------------------------------------
std::string strip_wall_time(const std::filesystem::path& file) {
    std::ifstream in(file);
    std::string line, out;
    while (std::getline(in, line)) {
        auto j = nlohmann::ordered_json::parse(line);
        j.erase("wall_time_ms");
        out += j.dump() + "\n";
    }
    return out;
}

Outcome determinism() {
    TempDir dir;
    auto idx = (dir / "idx").string();
    if (cli_run({"index", "--corpus", fixture("toy_corpus.jsonl").string(), "--out", idx}).code != 0)
        return fail("index failed");
    std::vector<std::string> reports;
    std::vector<std::map<std::string, std::string>> outputs;
    for (int run = 0; run < 2; ++run) {
        auto out = dir / ("run" + std::to_string(run));
        auto r = cli_run({"run", "--dataset", fixture("nq.jsonl").string(), "--index", idx, "--method", "vanilla-rag",
                          "--method", "chain-of-note", "--method", "activerag", "--agent", "associate", "--seed", "13",
                          "--parallel", "4", "--mock", fixture("mock_rules.json").string(),
                          "--cache-dir", (out / "cache").string(), "--out", out.string()});
        if (r.code != 0) return fail("run failed: " + r.err);
        std::map<std::string, std::string> files;
        for (const auto& f : expand_glob((out / "*.traces").string()))
            files[f.filename().string()] = strip_wall_time(f);
        files["manifest"] = read_file(out / "nq.k5.manifest.json");
        auto e = cli_run({"eval", "--traces", (out / "*.traces").string(), "--dataset", fixture("nq.jsonl").string(),
                          "--out", (out / "report.json").string()});
        if (e.code != 0) return fail("eval failed: " + e.err);
        files["report.json"] = read_file(out / "report.json");
        files["report.txt"] = read_file(out / "report.txt");
        outputs.push_back(std::move(files));
    }
    if (outputs[0].size() != 6) return fail(fmt::format("expected 3 trace files plus 3 outputs, got {}", outputs[0].size()));
    for (const auto& [name, text] : outputs[0])
        if (outputs[1].at(name) != text) return fail(name + " differs between runs");
    return pass("3 methods x 25 questions: traces, manifest and reports byte-identical (wall_time_ms excluded)");
}

// 9 -------------------------------------------------------------------------
Outcome cache_completeness() {
    std::atomic<int> hits{0};
    StubServer server([&](httplib::Server& s) {
        s.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            auto prompt = json::parse(req.body)["messages"][0]["content"].get<std::string>();
            json reply = {{"choices", {{{"message", {{"role", "assistant"},
                                                     {"content", "Answer: " + sha256_hex(prompt).substr(0, 8)}}}}}}};
            res.set_content(reply.dump(), "application/json");
        });
    });
    TempDir dir;
    ::setenv("ACTIVERAG_API_KEY", "stub-key", 0);
    auto idx = (dir / "idx").string();
    cli_run({"index", "--corpus", fixture("toy_corpus.jsonl").string(), "--out", idx});
    std::vector<std::size_t> counters;
    for (int run = 0; run < 2; ++run) {
        auto r = cli_run({"run", "--dataset", fixture("nq.jsonl").string(), "--index", idx, "--method", "all",
                          "--base-url", server.url() + "/v1", "--parallel", "4", "--cache-dir",
                          (dir / "cache").string(), "--out", (dir / ("run" + std::to_string(run))).string()});
        if (r.code != 0) return fail("run failed: " + r.err);
        auto n = transactions_in(r.out);
        if (!n) return fail("no transaction counter in output");
        counters.push_back(*n);
    }
    auto detail = fmt::format("cold run {} transactions, warm run {}", counters[0], counters[1]);
    if (counters[0] == 0 || counters[1] != 0) return fail(detail);
    for (const auto& f : expand_glob((dir / "run0" / "*.traces").string()))
        if (strip_wall_time(f) != strip_wall_time(dir / "run1" / f.filename())) {
            auto a = read_trace_file(f.string());
            auto b = read_trace_file((dir / "run1" / f.filename()).string());
            for (std::size_t i = 0; i < a.size(); ++i)
                if (a[i].replies != b[i].replies || a[i].final_text != b[i].final_text)
                    return fail(detail + "; replies differ in " + f.filename().string());
        }
    return pass(detail);
}

// 10 ------------------------------------------------------------------------
Outcome live_smoke() {
    const char* dataset = std::getenv("ACTIVERAG_SMOKE_DATASET");
    const char* corpus = std::getenv("ACTIVERAG_SMOKE_CORPUS");
    const char* key = std::getenv("ACTIVERAG_API_KEY");
    if (!dataset || !corpus || !key || !*dataset || !*corpus || !*key)
        return skip("set ACTIVERAG_SMOKE_DATASET, ACTIVERAG_SMOKE_CORPUS and ACTIVERAG_API_KEY to run");
    const std::filesystem::path out =
        std::getenv("ACTIVERAG_SMOKE_OUT") ? std::getenv("ACTIVERAG_SMOKE_OUT") : "activerag-smoke";
    auto r = cli_run({"index", "--corpus", corpus, "--out", (out / "index").string()});
    if (r.code != 0) return fail("index: " + r.err);
    r = cli_run({"run", "--dataset", dataset, "--index", (out / "index").string(), "--method", "all", "--sample", "50",
                 "--seed", "0", "--parallel", "4", "--cache-dir", (out / "cache").string(), "--out",
                 (out / "runs").string()});
    if (r.code != 0) return fail("run: " + r.err);
    auto sets = std::vector<TraceSet>{};
    for (const auto& f : expand_glob((out / "runs" / "*.traces").string())) sets.push_back(load_trace_set(f));
    if (sets.size() != 13) return fail(fmt::format("expected 13 trace files, found {}", sets.size()));
    DatasetMap ds{{dataset_label_for(dataset), load_questions(dataset)}};
    auto report = build_report(sets, ds);
    attach_manifests(report, sets);
    const auto col = report.columns.at(0);
    const double assoc = report.accuracy.at(MethodKind::active_rag(AgentKind::Associate)).at(col).accuracy();
    const double rag = report.accuracy.at(MethodKind::of(MethodKind::Base::VanillaRAG)).at(col).accuracy();
    const bool holds = assoc >= rag;
    report.footnotes.push_back(fmt::format(
        "Smoke run over a 50-question sample: ActiveRAG w. Associate {} vanilla RAG ({} vs {}). Full-scale "
        "benchmark claims are outside the scope of a desk-scale run.",
        holds ? ">=" : "<", format_percent(assoc), format_percent(rag)));
    std::ofstream(out / "smoke_report.json") << report.to_json().dump(2) << "\n";
    std::ofstream(out / "smoke_report.txt") << report.render_tables();
    return pass(fmt::format("all methods completed; associate>=vanilla-rag recorded as {}", holds ? "true" : "false"));
}

}  // namespace

int main() {
    struct Criterion {
        int number;
        const char* name;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "metric fidelity", 1, metric_fidelity},
        {2, "call-count contract", 1, call_counts},
        {3, "template fidelity", 1, template_fidelity},
        {4, "bm25 oracle equivalence", 30, bm25_oracle},
        {5, "oracle-rerank dominance", 5, oracle_dominance},
        {6, "ppl-rerank argmin", 5, ppl_argmin},
        {7, "bleu-2 correctness", 5, bleu_correctness},
        {8, "end-to-end determinism", 30, determinism},
        {9, "cache completeness", 0, cache_completeness},
        {10, "live smoke", 0, live_smoke},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = fail(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (o.status == Outcome::Status::Pass && c.budget_s > 0 && secs > c.budget_s) {
            o.status = Outcome::Status::Fail;
            o.detail += fmt::format("; over the {}s budget", c.budget_s);
        }
        const char* tag = o.status == Outcome::Status::Pass ? "PASS" : o.status == Outcome::Status::Fail ? "FAIL" : "SKIP";
        std::cout << fmt::format("{} criterion {:>2} {} ({:.2f}s): {}\n", tag, c.number, c.name, secs, o.detail);
        failures += o.status == Outcome::Status::Fail ? 1 : 0;
    }
    std::cout << (failures == 0 ? "acceptance: all required criteria passed\n"
                                : fmt::format("acceptance: {} criterion(s) failed\n", failures));
    return failures == 0 ? 0 : 1;
}
