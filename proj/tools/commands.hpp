#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "inter/inter.hpp"

namespace inter::cli {

// ---- option bundles filled by CLI11 ----------------------------------------

struct IndexBuildArgs {
    std::string corpus;
    std::string format = "beir-jsonl";
    std::string out;
    double k1 = 0.9;
    double b = 0.4;
    std::string stopwords;
    bool stem = false;
    bool strict = false;
    unsigned threads = 0;
    bool no_text = false;
};

struct EmbedderArgs {
    std::string kind;  // mock-hash | file | http; empty: none
    std::size_t dim = 0;
    std::string vectors;
    std::string url;
};

struct DenseBuildArgs {
    std::string corpus;
    std::string format = "beir-jsonl";
    std::string out;
    bool strict = false;
    std::size_t batch = 64;
    EmbedderArgs embedder;
};

struct SearchArgs {
    std::string queries;
    std::string sparse_index;
    std::string dense_index;
    EmbedderArgs embedder;
    std::string rm = "sparse";
    std::size_t k = 1000;
    std::string out;
    std::string tag = "inter";
};

struct RunArgs {
    std::string queries;
    std::string sparse_index;
    std::string dense_index;
    EmbedderArgs embedder;
    std::string config;
    std::string out;
    std::string trace;
    std::string manifest;
    std::string tag = "inter";
    bool mock_llm = false;
    std::string mock_knowledge;
    std::optional<std::int64_t> seed;
    std::optional<std::size_t> M, h, k, final_k, workers;
    std::string intermediate_rm, final_rm;
    std::string llm_cache;
    bool offline = false;
    bool strict = false;
};

struct EvalArgs {
    std::string run;
    std::string qrels;
    std::string compare;
    bool json = false;
    int map_binarize = 1;
    std::size_t ndcg_k = 10;
    std::size_t recall_k = 1000;
};

// ---- helpers ------------------------------------------------------------

inline void require_file(const std::string& path, const std::string& what) {
    if (!std::filesystem::is_regular_file(path)) throw ValidationError(what + " not found: " + path);
}

inline std::string utc_now() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

inline nlohmann::json file_record(const std::string& path) {
    if (path.empty()) return nullptr;
    return {{"path", path}, {"sha256", sha256_file_hex(path)}};
}

inline void print_warnings(const LoadReport& report) {
    for (const auto& w : report.warnings) std::cerr << "warning: skipped " << w << '\n';
}

inline std::unique_ptr<Embedder> make_embedder(const EmbedderArgs& a) {
    if (a.kind.empty()) return nullptr;
    if (a.kind == "mock-hash") {
        if (a.dim == 0) throw ValidationError("--embedder mock-hash needs --dim");
        return std::make_unique<MockHashEmbedder>(a.dim);
    }
    if (a.kind == "file") {
        if (a.vectors.empty()) throw ValidationError("--embedder file needs --vectors <path>");
        require_file(a.vectors, "vector file");
        return std::make_unique<FileEmbedder>(FileEmbedder::from_file(a.vectors));
    }
    if (a.kind == "http") {
        if (a.dim == 0) throw ValidationError("--embedder http needs --dim");
        auto cfg = HttpEmbedderConfig::from_env(a.dim);
        if (!a.url.empty()) cfg.url = a.url;
        if (cfg.url.empty()) throw ValidationError("--embedder http needs --embed-url or INTER_EMBED_URL");
        return std::make_unique<HttpEmbedder>(std::move(cfg));
    }
    throw ValidationError("unknown embedder '" + a.kind + "' (expected mock-hash, file or http)");
}

inline nlohmann::json embedder_record(const EmbedderArgs& a) {
    if (a.kind.empty()) return nullptr;
    nlohmann::json j{{"mode", a.kind}, {"dim", a.dim}};
    if (!a.vectors.empty()) j["vectors"] = file_record(a.vectors);
    if (!a.url.empty()) j["url"] = a.url;
    return j;
}

// Builds the LLM provider stack: backend, retries, rate limit, cache.
inline std::shared_ptr<const LlmProvider> make_llm(const LlmConfig& cfg, std::shared_ptr<RateLimiter> limiter) {
    std::shared_ptr<const LlmProvider> p;
    if (cfg.provider == "mock") {
        MockLlmOptions opts;
        if (!cfg.mock_knowledge.empty()) opts = MockLlmOptions::from_knowledge_file(cfg.mock_knowledge);
        p = std::make_shared<MockLlmProvider>(std::move(opts));
    } else {
        OpenAiConfig oc;
        oc.apply_env();
        oc.model = cfg.model;
        if (auto env_model = http::env("INTER_LLM_MODEL")) oc.model = *env_model;
        if (!cfg.url.empty()) oc.url = cfg.url;
        oc.supports_n = cfg.supports_n;
        oc.timeout = std::chrono::milliseconds(cfg.timeout_ms);
        p = std::make_shared<OpenAiChatProvider>(std::move(oc));
        RetryPolicy rp;
        rp.max_retries = cfg.max_retries;
        rp.initial_backoff = std::chrono::milliseconds(cfg.initial_backoff_ms);
        p = std::make_shared<RetryingProvider>(p, rp);
        if (limiter) p = std::make_shared<RateLimitedProvider>(p, limiter);
    }
    if (!cfg.cache.empty()) {
        p = std::make_shared<CachingProvider>(p, cfg.cache, cfg.offline);
    } else if (cfg.offline) {
        throw ValidationError("--offline needs an LLM cache (--llm-cache)");
    }
    return p;
}

// ---- subcommands ------------------------------------------------------------

inline int cmd_index_build(const IndexBuildArgs& a) {
    require_file(a.corpus, "corpus file");
    IndexOptions opts;
    opts.bm25 = {a.k1, a.b};
    opts.bm25.validate();
    opts.analyzer.stem = a.stem;
    if (!a.stopwords.empty()) {
        require_file(a.stopwords, "stopword file");
        opts.analyzer.stopwords = load_stopwords(a.stopwords);
    }
    opts.threads = a.threads;
    opts.store_text = !a.no_text;
    LoadReport report;
    Corpus corpus = load_corpus(a.corpus, parse_corpus_format(a.format), LoadOptions{a.strict}, &report);
    print_warnings(report);
    InvertedIndex idx = InvertedIndex::build(corpus, opts);
    idx.save(a.out);
    std::cerr << "indexed " << idx.num_docs() << " documents, " << idx.num_terms() << " terms -> " << a.out << '\n';
    return 0;
}

inline int cmd_index_build_dense(const DenseBuildArgs& a) {
    require_file(a.corpus, "corpus file");
    auto embedder = make_embedder(a.embedder);
    if (!embedder) throw ValidationError("--embedder is required");
    LoadReport report;
    Corpus corpus = load_corpus(a.corpus, parse_corpus_format(a.format), LoadOptions{a.strict}, &report);
    print_warnings(report);
    std::vector<std::string> zero;
    VectorIndex vi = VectorIndex::build(corpus, *embedder, a.batch, &zero);
    for (const auto& id : zero) std::cerr << "warning: document " << id << " has empty text; zero vector stored\n";
    vi.save(a.out);
    std::cerr << "encoded " << vi.num_docs() << " documents (dim " << vi.dim() << ") -> " << a.out << '\n';
    return 0;
}

struct LoadedIndexes {
    std::optional<InvertedIndex> sparse;
    std::optional<VectorIndex> dense;
    std::unique_ptr<Embedder> embedder;
};

inline LoadedIndexes load_indexes(const std::string& sparse_path, const std::string& dense_path,
                                  const EmbedderArgs& emb) {
    LoadedIndexes li;
    if (!sparse_path.empty()) {
        require_file(sparse_path, "sparse index");
        li.sparse = InvertedIndex::load(sparse_path);
    }
    if (!dense_path.empty()) {
        require_file(dense_path, "dense index");
        li.dense = VectorIndex::load(dense_path);
        li.embedder = make_embedder(emb);
        if (!li.embedder) throw ValidationError("--dense-index needs --embedder");
    }
    return li;
}

inline int cmd_search(const SearchArgs& a) {
    require_file(a.queries, "query file");
    if (a.k == 0) throw ValidationError("--k must be >= 1");
    LoadedIndexes li = load_indexes(a.sparse_index, a.dense_index, a.embedder);
    RetrieverSet rs(li.sparse ? &*li.sparse : nullptr, li.dense ? &*li.dense : nullptr, li.embedder.get());
    const Retriever& rm = rs.get(parse_rm_kind(a.rm));
    LoadReport report;
    auto queries = load_queries(a.queries, {}, &report);
    print_warnings(report);
    RunFile run;
    run.tag = a.tag;
    for (const auto& q : queries) {
        RankedList list = rm.retrieve(ExpandedQuery::bare(q.text), a.k);
        list.query_id = q.id;
        run.queries.push_back(std::move(list));
    }
    write_run(a.out, run);
    return 0;
}

inline InterConfig resolve_config(const RunArgs& a) {
    InterConfig cfg;
    if (!a.config.empty()) {
        require_file(a.config, "config file");
        cfg = InterConfig::from_file(a.config);
    }
    if (a.M) cfg.M = *a.M;
    if (a.h) cfg.h = *a.h;
    if (a.k) cfg.k = *a.k;
    if (a.final_k) cfg.final_k = *a.final_k;
    if (a.workers) cfg.workers = *a.workers;
    if (!a.intermediate_rm.empty()) cfg.intermediate_rm = parse_rm_kind(a.intermediate_rm);
    if (!a.final_rm.empty()) cfg.final_rm = parse_rm_kind(a.final_rm);
    if (a.seed) cfg.seed = a.seed;
    if (a.mock_llm) cfg.llm.provider = "mock";
    if (!a.mock_knowledge.empty()) cfg.llm.mock_knowledge = a.mock_knowledge;
    if (!a.llm_cache.empty()) cfg.llm.cache = a.llm_cache;
    if (a.offline) cfg.llm.offline = true;
    if (a.strict) cfg.strict = true;
    cfg.validate();
    return cfg;
}

inline int cmd_run(const RunArgs& a) {
    const std::string started = utc_now();
    require_file(a.queries, "query file");
    InterConfig cfg = resolve_config(a);
    if (!cfg.llm.mock_knowledge.empty()) require_file(cfg.llm.mock_knowledge, "mock knowledge file");

    LoadedIndexes li = load_indexes(a.sparse_index, a.dense_index, a.embedder);
    RetrieverSet rs(li.sparse ? &*li.sparse : nullptr, li.dense ? &*li.dense : nullptr, li.embedder.get(),
                    cfg.dense_policy);
    const Retriever& final_rm = rs.get(cfg.final_rm);
    const Retriever& inter_rm = cfg.M > 0 ? rs.get(cfg.intermediate_rm) : final_rm;
    if (cfg.M > 0 && !(li.sparse && li.sparse->has_text()))
        throw ValidationError("refinement prompts need document text: pass a --sparse-index built with stored text");

    auto limiter = cfg.llm.requests_per_minute > 0 ? std::make_shared<RateLimiter>(cfg.llm.requests_per_minute) : nullptr;
    auto llm = make_llm(cfg.llm, limiter);

    PromptTemplate initial = cfg.initial_template.empty() ? PromptTemplate::initial()
                                                          : PromptTemplate::from_file(PromptKind::Initial, cfg.initial_template);
    PromptTemplate refine = cfg.refine_template.empty() ? PromptTemplate::refine()
                                                        : PromptTemplate::from_file(PromptKind::Refine, cfg.refine_template);
    const InvertedIndex* sparse = li.sparse ? &*li.sparse : nullptr;
    DocTextFn text_of = [sparse](const std::string& id) -> std::string {
        if (sparse == nullptr) throw NotFoundError("no document text available");
        return sparse->document_text(id);
    };
    InterPipeline pipeline(cfg, inter_rm, final_rm, *llm, text_of, initial, refine);

    LoadReport report;
    auto queries = load_queries(a.queries, LoadOptions{cfg.strict}, &report);
    print_warnings(report);

    std::ofstream trace;
    if (!a.trace.empty()) {
        trace.open(a.trace, std::ios::trunc);
        if (!trace) throw IoError("cannot write trace file " + a.trace);
    }
    RunFile run;
    run.tag = a.tag;
    std::vector<std::string> failed;
    auto emit = [&](const QueryOutcome& o) {
        const IterationTrace& iters = o.result ? o.result->trace : o.partial_trace;
        if (trace.is_open()) {
            for (const auto& rec : iters) trace << trace_json(o.query.id, rec).dump() << '\n';
            if (!o.result) {
                trace << nlohmann::json{{"query_id", o.query.id}, {"iteration", o.failed_iteration}, {"error", o.error}}.dump()
                      << '\n';
            }
            trace.flush();
        }
        if (o.result) {
            run.queries.push_back(o.result->ranking);
        } else {
            failed.push_back(o.query.id);
            std::cerr << "error: " << o.error << '\n';
        }
    };
    run_batch(pipeline, queries, cfg.workers, emit, cfg.strict);
    write_run(a.out, run);

    nlohmann::json manifest{
        {"tool_version", INTER_VERSION_STRING},
        {"index_format_version", kIndexFormatVersion},
        {"config_schema_version", kConfigSchemaVersion},
        {"config", cfg.to_json()},
        {"inputs",
         {{"queries", file_record(a.queries)},
          {"sparse_index", file_record(a.sparse_index)},
          {"dense_index", file_record(a.dense_index)},
          {"config", file_record(a.config)},
          {"mock_knowledge", file_record(cfg.llm.mock_knowledge)}}},
        {"providers", {{"llm", llm->tag()}, {"embedder", embedder_record(a.embedder)}}},
        {"started_at", started},
        {"finished_at", utc_now()},
        {"outputs", {{"run", a.out}, {"trace", a.trace.empty() ? nlohmann::json(nullptr) : nlohmann::json(a.trace)}}},
        {"queries", queries.size()},
        {"failed_queries", failed}};
    const std::string manifest_path = a.manifest.empty() ? a.out + ".manifest.json" : a.manifest;
    binio::write_file_atomic(manifest_path, manifest.dump(2) + "\n");
    if (!failed.empty()) std::cerr << failed.size() << " of " << queries.size() << " queries failed\n";
    return 0;
}

inline std::string fixed4(double v) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(4) << v;
    return ss.str();
}

inline nlohmann::json slice_json(const MetricSlice& s) {
    return {{"mean", s.mean}, {"queries", s.per_query.size()}, {"per_query", s.per_query}};
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
    require_file(a.run, "run file");
    require_file(a.qrels, "qrels file");
    if (!a.compare.empty()) require_file(a.compare, "comparison run file");
    const Qrels qrels = load_qrels(a.qrels);
    const EvalOptions opts{a.map_binarize, a.ndcg_k, a.recall_k};
    const MetricReport rep = evaluate(load_run(a.run), qrels, opts);
    std::optional<MetricReport> other;
    if (!a.compare.empty()) other = evaluate(load_run(a.compare), qrels, opts);

    auto tests = [&](const MetricSlice& mine, const MetricSlice& theirs) {
        auto [x, y] = paired_values(mine, theirs);
        return x.size() >= 2 ? std::optional<TTestResult>(paired_t_test(x, y)) : std::nullopt;
    };

    if (a.json) {
        nlohmann::json j{{"run", a.run},
                         {"qrels", a.qrels},
                         {"map_binarize", a.map_binarize},
                         {"unjudged_queries", rep.map.unjudged},
                         {"metrics", {{rep.map.name, slice_json(rep.map)}, {rep.ndcg.name, slice_json(rep.ndcg)}, {rep.recall.name, slice_json(rep.recall)}}}};
        if (other) {
            nlohmann::json cmp{{"run", a.compare}};
            auto mine = rep.slices();
            auto theirs = other->slices();
            for (std::size_t i = 0; i < mine.size(); ++i) {
                nlohmann::json m{{"mean", theirs[i]->mean}, {"delta", mine[i]->mean - theirs[i]->mean}};
                if (auto t = tests(*mine[i], *theirs[i])) {
                    m["t"] = std::isfinite(t->t) ? nlohmann::json(t->t) : nlohmann::json(t->t > 0 ? "inf" : "-inf");
                    m["p"] = t->p;
                    m["dof"] = t->dof;
                    m["degenerate"] = t->degenerate;
                    m["significant"] = t->p < 0.05;
                } else {
                    m["t"] = nullptr;
                    m["p"] = nullptr;
                }
                cmp["metrics"][mine[i]->name] = m;
            }
            j["compare"] = cmp;
        }
        out << j.dump(2) << '\n';
        return 0;
    }

    out << std::left << std::setw(14) << "metric" << std::setw(10) << "mean" << std::setw(9) << "queries";
    if (other) out << std::setw(10) << "compare" << std::setw(10) << "delta" << std::setw(10) << "t" << "p";
    out << '\n';
    auto mine = rep.slices();
    for (std::size_t i = 0; i < mine.size(); ++i) {
        out << std::left << std::setw(14) << mine[i]->name << std::setw(10) << fixed4(mine[i]->mean) << std::setw(9)
            << mine[i]->per_query.size();
        if (other) {
            const MetricSlice& theirs = *other->slices()[i];
            out << std::setw(10) << fixed4(theirs.mean) << std::setw(10) << fixed4(mine[i]->mean - theirs.mean);
            if (auto t = tests(*mine[i], theirs)) {
                std::string ts = std::isfinite(t->t) ? fixed4(t->t) : (t->t > 0 ? "inf" : "-inf");
                out << std::setw(10) << ts << fixed4(t->p) << (t->p < 0.05 ? " *" : "") << (t->degenerate ? " (degenerate)" : "");
            } else {
                out << std::setw(10) << "-" << "-";
            }
        }
        out << '\n';
    }
    if (!rep.map.unjudged.empty()) {
        out << "queries absent from qrels:";
        for (const auto& q : rep.map.unjudged) out << ' ' << q;
        out << '\n';
    }
    return 0;
}

}  // namespace inter::cli
