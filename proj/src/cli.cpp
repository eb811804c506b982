#include "activerag/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "activerag/digest.hpp"
#include "activerag/errors.hpp"
#include "activerag/llm.hpp"
#include "activerag/pipeline.hpp"
#include "activerag/prompts.hpp"
#include "activerag/report.hpp"
#include "activerag/retrieval.hpp"

namespace activerag::cli {

namespace fs = std::filesystem;

namespace {

std::string env_or(const char* name, std::string fallback) {
    if (const char* v = std::getenv(name); v && *v) return v;
    return fallback;
}

struct UsageError : Error {
    using Error::Error;
};

struct IntegrityError : Error {
    using Error::Error;
};

std::string valid_method_names() {
    return "vanilla, cot, guideline, vanilla-rag, chain-of-note, self-rerank, self-refine, cot-with-passage, "
           "cot-with-note, activerag, all";
}

std::vector<MethodKind> resolve_methods(const std::vector<std::string>& names, const std::vector<std::string>& agents) {
    std::vector<AgentKind> chosen_agents;
    for (const auto& a : agents) {
        auto agent = parse_agent(a);
        if (!agent)
            throw UsageError("unknown agent '" + a + "'; valid agents: associate, anchoring, logician, cognition");
        if (std::find(chosen_agents.begin(), chosen_agents.end(), *agent) == chosen_agents.end())
            chosen_agents.push_back(*agent);
    }
    if (chosen_agents.empty()) chosen_agents.assign(kAllAgents.begin(), kAllAgents.end());
    std::sort(chosen_agents.begin(), chosen_agents.end());

    std::vector<MethodKind> out;
    auto add = [&](MethodKind m) {
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    };
    bool wants_activerag = false;
    for (const auto& n : names) {
        if (n == "all") {
            for (const auto& m : MethodKind::all())
                if (!m.agent()) add(m);
            wants_activerag = true;
        } else if (n == "activerag") {
            wants_activerag = true;
        } else if (auto m = MethodKind::parse(n)) {
            add(*m);
        } else {
            throw UsageError("unknown method '" + n + "'; valid methods: " + valid_method_names());
        }
    }
    if (!agents.empty() && !wants_activerag) throw UsageError("--agent only applies to --method activerag");
    if (wants_activerag)
        for (auto a : chosen_agents) add(MethodKind::active_rag(a));
    std::sort(out.begin(), out.end());
    return out;
}

void require_clean_templates(const TemplateRegistry& reg) {
    auto issues = reg.verify();
    if (issues.empty()) return;
    std::string msg = "template integrity check failed:";
    for (const auto& i : issues) msg += "\n  " + i.template_name + ": " + i.problem;
    throw IntegrityError(msg);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

fs::path tables_path_for(const fs::path& report) {
    auto p = report;
    p.replace_extension(".txt");
    return p;
}

std::vector<TraceSet> load_sets(const std::vector<std::string>& globs) {
    std::vector<fs::path> files;
    for (const auto& g : globs)
        for (auto& f : expand_glob(g)) files.push_back(std::move(f));
    std::sort(files.begin(), files.end());
    files.erase(std::unique(files.begin(), files.end()), files.end());
    if (files.empty()) throw UsageError("no trace files match the --traces pattern");
    std::vector<TraceSet> sets;
    for (const auto& f : files) sets.push_back(load_trace_set(f));
    return sets;
}

DatasetMap load_datasets(const std::vector<std::string>& paths) {
    DatasetMap out;
    for (const auto& p : paths) {
        try {
            out[dataset_label_for(p)] = load_questions(p);
        } catch (const ParseError& e) {
            throw UsageError(e.what());
        }
    }
    return out;
}

void save_report(const EvalReport& report, const std::optional<fs::path>& out_path, std::ostream& out) {
    const auto tables = report.render_tables();
    out << tables;
    if (out_path) {
        write_text(*out_path, report.to_json().dump(2) + "\n");
        write_text(tables_path_for(*out_path), tables);
    }
}

// ---- handlers -------------------------------------------------------------

struct IndexArgs {
    std::string corpus;
    std::string out;
};

int cmd_index(const IndexArgs& a, std::ostream& out) {
    auto corpus = Corpus::from_file(a.corpus);
    auto index = Bm25Index::build(corpus);
    index.save(a.out);
    out << fmt::format("indexed N={} avgdl={:.4f} vocabulary={}\n", index.doc_count(), index.avgdl(),
                       index.vocabulary_size());
    return kOk;
}

struct RunArgs {
    std::string dataset;
    std::string index;
    std::string retriever_url;
    std::vector<std::string> methods;
    std::vector<std::string> agents;
    int k = 5;
    std::string model = "gpt-3.5-turbo-1106";
    double temperature = 0.2;
    std::uint64_t seed = 0;
    std::optional<std::size_t> sample;
    int parallel = 1;
    std::string cache_dir = ".activerag-cache";
    bool no_cache = false;
    std::string base_url;
    std::string mock;
    std::string out_dir = "runs";
    std::string cot_sharing = "shared";
    int retries = 4;
    int timeout_ms = 60000;
    std::string templates_dir;
};

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
    auto methods = resolve_methods(a.methods, a.agents);
    bool needs_retrieval =
        std::any_of(methods.begin(), methods.end(), [](const MethodKind& m) { return m.uses_retrieval(); });
    if (needs_retrieval && a.index.empty() == a.retriever_url.empty())
        throw UsageError("RAG methods need exactly one of --index or --retriever-url");

    RunConfig config;
    config.model = a.model;
    config.temperature = a.temperature;
    config.k = a.k;
    config.seed = a.seed;
    config.sample_size = a.sample;
    config.parallelism = a.parallel;
    config.cache_dir = a.no_cache ? fs::path() : fs::path(a.cache_dir);
    config.base_url = a.base_url.empty() ? env_or("ACTIVERAG_BASE_URL", config.base_url) : a.base_url;
    config.retries = a.retries;
    config.timeout_ms = a.timeout_ms;
    if (a.cot_sharing == "shared")
        config.cot_sharing = CotSharing::Shared;
    else if (a.cot_sharing == "per_agent")
        config.cot_sharing = CotSharing::PerAgent;
    else
        throw UsageError("--cot-sharing must be shared or per_agent");
    try {
        config.validate();
    } catch (const PreconditionError& e) {
        throw UsageError(e.what());
    }

    auto templates = TemplateRegistry::load(a.templates_dir.empty() ? TemplateRegistry::default_dir()
                                                                    : fs::path(a.templates_dir));
    require_clean_templates(templates);

    std::vector<Question> questions;
    try {
        questions = load_questions(a.dataset);
    } catch (const ParseError& e) {
        throw UsageError(e.what());
    }

    auto transport = std::make_shared<HttplibTransport>(std::chrono::milliseconds(config.timeout_ms));
    RetryPolicy retry{config.retries};

    std::unique_ptr<ChatBackend> inner;
    if (!a.mock.empty()) {
        inner = MockChatBackend::from_file(a.mock);
    } else {
        auto key = env_or("ACTIVERAG_API_KEY", "");
        if (key.empty()) throw UsageError("ACTIVERAG_API_KEY is not set (or pass --mock)");
        inner = std::make_unique<OpenAiChatBackend>(transport, config.base_url, key, retry);
    }
    std::optional<ResponseCache> cache;
    std::unique_ptr<CachedChatBackend> cached;
    ChatBackend* backend = inner.get();
    if (!a.no_cache) {
        cache.emplace(config.cache_dir);
        cached = std::make_unique<CachedChatBackend>(*inner, *cache);
        backend = cached.get();
    }

    std::unique_ptr<Retriever> retriever;
    std::string corpus_checksum;
    if (!a.index.empty()) {
        auto index = std::make_shared<const Bm25Index>(Bm25Index::load(a.index));
        corpus_checksum = index->corpus_checksum();
        retriever = std::make_unique<LocalRetriever>(index);
    } else if (!a.retriever_url.empty()) {
        retriever = std::make_unique<RemoteRetriever>(transport, a.retriever_url, retry);
        corpus_checksum = "remote:" + a.retriever_url;
    }

    PipelineDeps deps{*backend, templates, retriever.get(), config};
    BatchOutput output;
    output.out_dir = a.out_dir;
    output.dataset = dataset_label_for(a.dataset);
    output.corpus_checksum = corpus_checksum;
    output.on_progress = [&](std::size_t done, std::size_t total) {
        if (done == total || done % 10 == 0) err << fmt::format("progress {}/{}\n", done, total);
    };
    auto summary = run_batch(deps, methods, questions, output);

    out << fmt::format("{} questions, k={}, backend {}\n", summary.questions.size(), config.k, backend->identity());
    for (const auto& m : methods) {
        const auto& s = summary.per_method.at(m.id());
        out << fmt::format("  {:<24} {} ok, {} failed -> {}\n", m.id(), s.total - s.failed, s.failed,
                           summary.trace_files.at(m.id()).string());
    }
    for (const auto& f : summary.failures) err << "failed: " << f << "\n";
    out << "manifest " << summary.manifest.string() << "\n";
    out << "network transactions: " << transport->transactions() << "\n";
    return kOk;
}

struct EvalArgs {
    std::vector<std::string> traces;
    std::vector<std::string> datasets;
    std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    auto sets = load_sets(a.traces);
    auto datasets = load_datasets(a.datasets);
    auto report = build_report(sets, datasets);
    attach_manifests(report, sets);
    save_report(report, a.out.empty() ? std::nullopt : std::optional<fs::path>(a.out), out);
    return kOk;
}

struct AnalyzeArgs {
    std::vector<std::string> traces;
    std::vector<std::string> datasets;
    std::string mode;
    std::string out;
    std::string scorer_mock;
    std::string scorer_model;
    std::string base_url;
    std::string conditioning = "answer";
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
    auto sets = load_sets(a.traces);
    auto datasets = load_datasets(a.datasets);

    EvalReport report;
    if (!a.out.empty() && fs::exists(a.out)) {
        try {
            report = EvalReport::from_json(nlohmann::json::parse(read_file(a.out)));
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(a.out + ": " + e.what());
        }
    } else {
        report = build_report(sets, datasets);
        attach_manifests(report, sets);
    }

    if (a.mode == "oracle") {
        add_oracle_analysis(report, sets, datasets);
    } else if (a.mode == "ppl") {
        std::unique_ptr<Scorer> scorer;
        if (!a.scorer_mock.empty()) {
            scorer = MockScorer::from_file(a.scorer_mock);
        } else if (!a.scorer_model.empty()) {
            auto base = a.base_url.empty() ? env_or("ACTIVERAG_BASE_URL", "https://api.openai.com/v1") : a.base_url;
            scorer = std::make_unique<OpenAiScorer>(std::make_shared<HttplibTransport>(), base,
                                                    env_or("ACTIVERAG_API_KEY", ""), a.scorer_model);
        } else {
            throw UsageError("--mode ppl needs --scorer-mock or --scorer-model");
        }
        PplConditioning cond;
        if (a.conditioning == "answer")
            cond = PplConditioning::AnswerGivenKnowledge;
        else if (a.conditioning == "knowledge")
            cond = PplConditioning::KnowledgeGivenQuery;
        else
            throw UsageError("--ppl-conditioning must be answer or knowledge");
        add_ppl_analysis(report, sets, datasets, *scorer, cond);
    } else if (a.mode == "similarity") {
        add_similarity_analysis(report, sets);
    } else {
        throw UsageError("--mode must be oracle, ppl or similarity");
    }
    save_report(report, a.out.empty() ? std::nullopt : std::optional<fs::path>(a.out), out);
    return kOk;
}

struct TemplatesArgs {
    bool verify = false;
    std::string dir;
};

int cmd_templates(const TemplatesArgs& a, std::ostream& out, std::ostream& err) {
    const auto dir = a.dir.empty() ? TemplateRegistry::default_dir() : fs::path(a.dir);
    TemplateRegistry reg;
    try {
        reg = TemplateRegistry::load(dir);
    } catch (const TemplateError& e) {
        throw IntegrityError(e.what());
    }
    if (!a.verify) {
        for (const auto& t : reg.templates()) {
            std::string slots;
            for (const auto& s : t.required_slots()) slots += (slots.empty() ? "" : ", ") + s;
            out << fmt::format("{:<30} slots: {}\n", t.name(), slots);
        }
        return kOk;
    }
    auto issues = reg.verify();
    if (issues.empty()) {
        out << reg.templates().size() << " templates OK\n";
        return kOk;
    }
    for (const auto& i : issues) err << i.template_name << ": " << i.problem << "\n";
    return kIntegrityError;
}

struct DoctorArgs {
    std::string base_url;
    std::string cache_dir = ".activerag-cache";
    bool offline = false;
};

int cmd_doctor(const DoctorArgs& a, std::ostream& out) {
    bool ok = true;
    auto report = [&](const std::string& check, bool pass, const std::string& detail) {
        out << fmt::format("{:<22} {}  {}\n", check, pass ? "OK  " : "FAIL", detail);
        ok = ok && pass;
    };

    try {
        auto reg = TemplateRegistry::load(TemplateRegistry::default_dir());
        auto issues = reg.verify();
        report("templates", issues.empty(), fmt::format("{} templates, {} issue(s)", reg.templates().size(), issues.size()));
    } catch (const Error& e) {
        report("templates", false, e.what());
    }

    try {
        fs::create_directories(a.cache_dir);
        auto probe = fs::path(a.cache_dir) / ".doctor-probe";
        { std::ofstream(probe) << "ok"; }
        bool writable = fs::exists(probe);
        fs::remove(probe);
        report("cache writable", writable, a.cache_dir);
    } catch (const std::exception& e) {
        report("cache writable", false, e.what());
    }

    const auto key = env_or("ACTIVERAG_API_KEY", "");
    const auto base = a.base_url.empty() ? env_or("ACTIVERAG_BASE_URL", "https://api.openai.com/v1") : a.base_url;
    HttplibTransport transport(std::chrono::seconds(10));
    if (a.offline) {
        out << "credential / endpoint checks skipped (--offline)\n";
    } else {
        report("credential", !key.empty(), key.empty() ? "ACTIVERAG_API_KEY not set" : "ACTIVERAG_API_KEY set");
        try {
            Headers h;
            if (!key.empty()) h.emplace_back("Authorization", "Bearer " + key);
            auto res = transport.get(join_url(base, "models"), h);
            report("endpoint reachable", res.status > 0 && res.status < 500, fmt::format("{} -> HTTP {}", base, res.status));
        } catch (const Error& e) {
            report("endpoint reachable", false, e.what());
        }
    }
    out << "network transactions: " << transport.transactions() << "\n";
    return ok ? kOk : kRuntimeFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"ActiveRAG pipeline runner and evaluation harness", "activerag"};
    app.require_subcommand(1);

    IndexArgs index_args;
    auto* index = app.add_subcommand("index", "Build a BM25 index from a passage file");
    index->add_option("--corpus", index_args.corpus, "One JSON passage per line (id, text, title?)")->required();
    index->add_option("--out", index_args.out, "Index directory")->required();

    RunArgs run_args;
    auto* run_cmd = app.add_subcommand("run", "Run methods over a dataset and write trace files");
    run_cmd->add_option("--dataset", run_args.dataset, "One JSON question per line (id, question, answers)")->required();
    run_cmd->add_option("--index", run_args.index, "BM25 index directory");
    run_cmd->add_option("--retriever-url", run_args.retriever_url, "Remote retriever base URL");
    run_cmd->add_option("--method", run_args.methods, valid_method_names())->required();
    run_cmd->add_option("--agent", run_args.agents, "associate, anchoring, logician, cognition");
    run_cmd->add_option("--k", run_args.k, "Passages per question")->capture_default_str();
    run_cmd->add_option("--model", run_args.model)->capture_default_str();
    run_cmd->add_option("--temperature", run_args.temperature)->capture_default_str();
    run_cmd->add_option("--seed", run_args.seed)->capture_default_str();
    run_cmd->add_option("--sample", run_args.sample, "Uniformly sample this many questions");
    run_cmd->add_option("--parallel", run_args.parallel, "Questions in flight")->capture_default_str();
    run_cmd->add_option("--cache-dir", run_args.cache_dir)->capture_default_str();
    run_cmd->add_flag("--no-cache", run_args.no_cache, "Disable the response cache");
    run_cmd->add_option("--base-url", run_args.base_url, "Chat endpoint (default $ACTIVERAG_BASE_URL)");
    run_cmd->add_option("--mock", run_args.mock, "Mock rule file; no network calls");
    run_cmd->add_option("--out", run_args.out_dir, "Output directory for traces and manifest")->capture_default_str();
    run_cmd->add_option("--cot-sharing", run_args.cot_sharing, "shared or per_agent")->capture_default_str();
    run_cmd->add_option("--retries", run_args.retries)->capture_default_str();
    run_cmd->add_option("--timeout-ms", run_args.timeout_ms)->capture_default_str();
    run_cmd->add_option("--templates-dir", run_args.templates_dir);

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Score trace files and print the accuracy table");
    eval->add_option("--traces", eval_args.traces, "Trace file glob(s)")->required();
    eval->add_option("--dataset", eval_args.datasets, "Dataset file(s)")->required();
    eval->add_option("--out", eval_args.out, "Report JSON path (tables go next to it as .txt)");

    AnalyzeArgs analyze_args;
    auto* analyze = app.add_subcommand("analyze", "Oracle rerank, PPL rerank or BLEU-2 similarity");
    analyze->add_option("--traces", analyze_args.traces, "Trace file glob(s)")->required();
    analyze->add_option("--dataset", analyze_args.datasets, "Dataset file(s)");
    analyze->add_option("--mode", analyze_args.mode, "oracle | ppl | similarity")->required();
    analyze->add_option("--out", analyze_args.out, "Report JSON to extend (created if missing)");
    analyze->add_option("--scorer-mock", analyze_args.scorer_mock, "Mock NLL table for --mode ppl");
    analyze->add_option("--scorer-model", analyze_args.scorer_model, "Model for remote log-prob scoring");
    analyze->add_option("--base-url", analyze_args.base_url);
    analyze->add_option("--ppl-conditioning", analyze_args.conditioning, "answer | knowledge")->capture_default_str();

    TemplatesArgs templates_args;
    auto* templates = app.add_subcommand("templates", "List templates or verify their integrity");
    templates->add_flag("--verify", templates_args.verify, "Check checksums, slots and signature phrases");
    templates->add_option("--dir", templates_args.dir, "Template asset directory");

    DoctorArgs doctor_args;
    auto* doctor = app.add_subcommand("doctor", "Check credential, endpoint and cache before a run");
    doctor->add_option("--base-url", doctor_args.base_url);
    doctor->add_option("--cache-dir", doctor_args.cache_dir)->capture_default_str();
    doctor->add_flag("--offline", doctor_args.offline, "Skip credential and endpoint checks");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        for (auto* sub : app.get_subcommands()) err << sub->help();
        return kInputError;
    }

    try {
        if (index->parsed()) return cmd_index(index_args, out);
        if (run_cmd->parsed()) return cmd_run(run_args, out, err);
        if (eval->parsed()) return cmd_eval(eval_args, out);
        if (analyze->parsed()) {
            if (analyze_args.mode != "similarity" && analyze_args.datasets.empty())
                throw UsageError("--dataset is required for --mode " + analyze_args.mode);
            return cmd_analyze(analyze_args, out);
        }
        if (templates->parsed()) return cmd_templates(templates_args, out, err);
        if (doctor->parsed()) return cmd_doctor(doctor_args, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const IngestError& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const ReportError& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const IntegrityError& e) {
        err << "error: " << e.what() << "\n";
        return kIntegrityError;
    } catch (const TemplateError& e) {
        err << "error: " << e.what() << "\n";
        return kIntegrityError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    }
    return kInputError;
}

}  // namespace activerag::cli
