// inter: index, search, run and evaluate from the command line.
//
// Exit status: 0 success, 1 runtime failure, 2 usage or validation error.

#include <iostream>

#include "CLI11.hpp"

#include "commands.hpp"

namespace {

void add_embedder_options(CLI::App* app, inter::cli::EmbedderArgs& e) {
    app->add_option("--embedder", e.kind, "Query/document encoder: mock-hash, file or http");
    app->add_option("--dim", e.dim, "Embedding dimension (mock-hash, http)");
    app->add_option("--vectors", e.vectors, "Pre-encoded vectors, INTERVEC or .jsonl (file embedder)");
    app->add_option("--embed-url", e.url, "Embedding service URL (default: INTER_EMBED_URL)");
}

}  // namespace

int main(int argc, char** argv) {
    using namespace inter::cli;

    CLI::App app{"inter: iterative LLM/retrieval refinement for zero-shot search"};
    app.require_subcommand(0, 1);
    bool version = false;
    app.add_flag("--version", version, "Print tool, index-format and config-schema versions");

    auto* index = app.add_subcommand("index", "Build indexes");
    index->require_subcommand(1);

    IndexBuildArgs ib;
    auto* build = index->add_subcommand("build", "Build a BM25 inverted index");
    build->add_option("--corpus", ib.corpus, "Corpus file")->required();
    build->add_option("--format", ib.format, "beir-jsonl or tsv")->capture_default_str();
    build->add_option("--out", ib.out, "Output index path")->required();
    build->add_option("--k1", ib.k1, "BM25 k1")->capture_default_str();
    build->add_option("--b", ib.b, "BM25 b")->capture_default_str();
    build->add_option("--stopwords", ib.stopwords, "Stopword list file");
    build->add_flag("--stem", ib.stem, "Apply the S-stemmer");
    build->add_flag("--strict", ib.strict, "Fail on malformed corpus lines");
    build->add_option("--threads", ib.threads, "Build threads (0 = all cores)");
    build->add_flag("--no-text", ib.no_text, "Do not store document text");

    DenseBuildArgs db;
    auto* build_dense = index->add_subcommand("build-dense", "Encode a corpus into a vector index");
    build_dense->add_option("--corpus", db.corpus, "Corpus file")->required();
    build_dense->add_option("--format", db.format, "beir-jsonl or tsv")->capture_default_str();
    build_dense->add_option("--out", db.out, "Output vector file (.jsonl for the text form)")->required();
    build_dense->add_option("--batch", db.batch, "Documents per encode request")->capture_default_str();
    build_dense->add_flag("--strict", db.strict, "Fail on malformed corpus lines");
    add_embedder_options(build_dense, db.embedder);

    SearchArgs sa;
    auto* search = app.add_subcommand("search", "Retrieve for every query with a single retrieval model");
    search->add_option("--queries", sa.queries, "Query TSV")->required();
    search->add_option("--sparse-index", sa.sparse_index, "BM25 index");
    search->add_option("--dense-index", sa.dense_index, "Vector index");
    search->add_option("--rm", sa.rm, "sparse, dense or hybrid")->capture_default_str();
    search->add_option("--k", sa.k, "Results per query")->capture_default_str();
    search->add_option("--out", sa.out, "Output TREC run file")->required();
    search->add_option("--tag", sa.tag, "Run tag")->capture_default_str();
    search->add_flag("--sparse", [&sa](std::int64_t) { sa.rm = "sparse"; }, "Shorthand for --rm sparse");
    add_embedder_options(search, sa.embedder);

    RunArgs ra;
    auto* run = app.add_subcommand("run", "Run iterative refinement for every query");
    run->set_help_flag("--help", "Print this help message and exit");  // frees -h for --h
    run->add_option("--queries", ra.queries, "Query TSV")->required();
    run->add_option("--sparse-index", ra.sparse_index, "BM25 index (also supplies document text)");
    run->add_option("--dense-index", ra.dense_index, "Vector index");
    run->add_option("--config", ra.config, "Config JSON; flags override it");
    run->add_option("--out", ra.out, "Output TREC run file")->required();
    run->add_option("--trace", ra.trace, "Per-iteration trace JSONL");
    run->add_option("--manifest", ra.manifest, "Manifest path (default: <out>.manifest.json)");
    run->add_option("--tag", ra.tag, "Run tag")->capture_default_str();
    run->add_flag("--mock-llm", ra.mock_llm, "Use the deterministic offline generator");
    run->add_option("--mock-knowledge", ra.mock_knowledge, "Mock generator knowledge JSON");
    run->add_option("--seed", ra.seed, "Seed for all randomness");
    run->add_option("--M", ra.M, "Refinement iterations");
    run->add_option("--h", ra.h, "Knowledge passages per iteration");
    run->add_option("--k", ra.k, "Documents fed back per iteration");
    run->add_option("--final-k", ra.final_k, "Results per query in the final ranking");
    run->add_option("--intermediate-rm", ra.intermediate_rm, "sparse, dense or hybrid");
    run->add_option("--final-rm", ra.final_rm, "sparse, dense or hybrid");
    run->add_option("--workers", ra.workers, "Concurrent queries (0 = all cores)");
    run->add_option("--llm-cache", ra.llm_cache, "Generation cache JSONL");
    run->add_flag("--offline", ra.offline, "Serve generations from the cache only");
    run->add_flag("--strict", ra.strict, "Abort on the first failing query");
    add_embedder_options(run, ra.embedder);

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Evaluate a TREC run against qrels");
    eval->add_option("--run", ea.run, "TREC run file")->required();
    eval->add_option("--qrels", ea.qrels, "Qrels file")->required();
    eval->add_option("--compare", ea.compare, "Second run for paired t-tests");
    eval->add_flag("--json", ea.json, "Machine-readable report");
    eval->add_option("--map-binarize", ea.map_binarize, "Minimum grade counted relevant for MAP and recall")->capture_default_str();
    eval->add_option("--ndcg-k", ea.ndcg_k, "nDCG cutoff")->capture_default_str();
    eval->add_option("--recall-k", ea.recall_k, "Recall cutoff")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (version) {
            std::cout << "inter " << INTER_VERSION_STRING << "\nindex-format " << inter::kIndexFormatVersion
                      << "\nvector-format " << inter::kVectorFormatVersion << "\nconfig-schema "
                      << inter::kConfigSchemaVersion << '\n';
            return 0;
        }
        if (*build) return cmd_index_build(ib);
        if (*build_dense) return cmd_index_build_dense(db);
        if (*search) return cmd_search(sa);
        if (*run) return cmd_run(ra);
        if (*eval) return cmd_eval(ea, std::cout);
        std::cerr << app.help();
        return 2;
    } catch (const inter::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
