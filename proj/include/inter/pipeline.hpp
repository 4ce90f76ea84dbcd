#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "inter/config.hpp"
#include "inter/corpus.hpp"
#include "inter/dense_index.hpp"
#include "inter/hash.hpp"
#include "inter/llm_gateway.hpp"
#include "inter/prompts.hpp"
#include "inter/ranking.hpp"
#include "inter/sparse_index.hpp"

namespace inter {

// ---------------------------------------------------------------------------
// Query expansion
// ---------------------------------------------------------------------------

// The RM input for one retrieval: the raw query, the knowledge passages it
// was expanded with (empty for a bare query), and the flattened text.
struct ExpandedQuery {
    std::string query;
    std::vector<std::string> passages;
    std::string separator = " ";
    std::string text;

    static ExpandedQuery bare(std::string query) {
        ExpandedQuery e;
        e.text = query;
        e.query = std::move(query);
        return e;
    }
};

// q sep s1 sep q sep s2 ... q sep sh: the query is repeated before every
// passage.
inline std::string expand_query(std::string_view query, const std::vector<std::string>& passages,
                                std::string_view sep = " ") {
    if (passages.empty()) throw ValidationError("expand_query: knowledge collection is empty");
    std::string out;
    for (std::size_t i = 0; i < passages.size(); ++i) {
        if (i) out.append(sep);
        out.append(query);
        out.append(sep);
        out.append(passages[i]);
    }
    return out;
}

inline ExpandedQuery make_expanded_query(std::string query, const KnowledgeCollection& s,
                                         std::string sep = " ") {
    ExpandedQuery e;
    e.text = expand_query(query, s.passages, sep);
    e.query = std::move(query);
    e.passages = s.passages;
    e.separator = std::move(sep);
    return e;
}

// ---------------------------------------------------------------------------
// Retrieval models
// ---------------------------------------------------------------------------

class Retriever {
public:
    virtual ~Retriever() = default;
    virtual RankedList retrieve(const ExpandedQuery& query, std::size_t k) const = 0;
    virtual std::string name() const = 0;
};

class SparseRetriever final : public Retriever {
public:
    explicit SparseRetriever(const InvertedIndex& index) : index_(index) {}
    RankedList retrieve(const ExpandedQuery& q, std::size_t k) const override { return index_.search(q.text, k); }
    std::string name() const override { return "sparse"; }

private:
    const InvertedIndex& index_;
};

// Inner-product retrieval. Under chunk-mean, an expanded query is encoded as
// the mean of the encodings of each `q sep s_i` pair; bare queries and the
// `whole` policy encode the flattened text once.
class DenseRetriever final : public Retriever {
public:
    DenseRetriever(const VectorIndex& index, const Embedder& embedder, DensePolicy policy = DensePolicy::ChunkMean)
        : index_(index), embedder_(embedder), policy_(policy) {
        if (index.num_docs() > 0 && index.dim() != embedder.dim())
            throw ValidationError("embedder dim " + std::to_string(embedder.dim()) + " does not match vector index dim " +
                                  std::to_string(index.dim()));
    }

    EmbeddingVector encode(const ExpandedQuery& q) const {
        if (policy_ == DensePolicy::Whole || q.passages.empty())
            return embedder_.encode(q.text, EmbedRole::Query);
        std::vector<EncodeItem> chunks;
        for (const auto& s : q.passages) chunks.push_back({"", q.query + q.separator + s, EmbedRole::Query});
        auto vecs = embedder_.encode_batch(chunks);
        std::vector<double> mean(embedder_.dim(), 0.0);
        for (const auto& v : vecs)
            for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i];
        EmbeddingVector out(mean.size());
        for (std::size_t i = 0; i < mean.size(); ++i) out[i] = static_cast<float>(mean[i] / static_cast<double>(vecs.size()));
        return out;
    }

    RankedList retrieve(const ExpandedQuery& q, std::size_t k) const override { return index_.search(encode(q), k); }
    std::string name() const override { return "dense"; }

private:
    const VectorIndex& index_;
    const Embedder& embedder_;
    DensePolicy policy_;
};

// Rank-based merge of a sparse and a dense ranking: the top ceil(k/2) sparse
// and top floor(k/2) dense results are interleaved sparse-first; duplicates
// keep their earlier position; the remainders of both lists, interleaved the
// same way, backfill until k unique docs or both lists run out. Scores of
// the merged list are 1/rank.
inline RankedList hybrid_merge(const RankedList& sparse, const RankedList& dense, std::size_t k) {
    if (k < 2) throw ValidationError("hybrid retrieval needs k >= 2");
    RankedList out;
    out.query_id = !sparse.query_id.empty() ? sparse.query_id : dense.query_id;
    std::unordered_set<std::string> seen;
    auto take = [&](const ScoredDoc& d) {
        if (out.entries.size() < k && seen.insert(d.doc_id).second)
            out.entries.push_back({d.doc_id, 1.0 / static_cast<double>(out.entries.size() + 1)});
    };
    auto interleave = [&](std::size_t s_lo, std::size_t s_hi, std::size_t d_lo, std::size_t d_hi) {
        s_hi = std::min(s_hi, sparse.size());
        d_hi = std::min(d_hi, dense.size());
        for (std::size_t i = 0; s_lo + i < s_hi || d_lo + i < d_hi; ++i) {
            if (s_lo + i < s_hi) take(sparse.entries[s_lo + i]);
            if (d_lo + i < d_hi) take(dense.entries[d_lo + i]);
        }
    };
    const std::size_t s_half = (k + 1) / 2, d_half = k / 2;
    interleave(0, s_half, 0, d_half);
    interleave(s_half, sparse.size(), d_half, dense.size());
    return out;
}

class HybridRetriever final : public Retriever {
public:
    HybridRetriever(const Retriever& sparse, const Retriever& dense) : sparse_(sparse), dense_(dense) {}
    RankedList retrieve(const ExpandedQuery& q, std::size_t k) const override {
        return hybrid_merge(sparse_.retrieve(q, k), dense_.retrieve(q, k), k);
    }
    std::string name() const override { return "hybrid"; }

private:
    const Retriever& sparse_;
    const Retriever& dense_;
};

inline RankedList hybrid_search(std::string_view query_text, std::size_t k, const InvertedIndex& sparse_idx,
                                const VectorIndex& dense_idx, const Embedder& embedder) {
    SparseRetriever s(sparse_idx);
    DenseRetriever d(dense_idx, embedder);
    return HybridRetriever(s, d).retrieve(ExpandedQuery::bare(std::string(query_text)), k);
}

// Owns the retrievers that can be built from the available indexes.
class RetrieverSet {
public:
    RetrieverSet(const InvertedIndex* sparse, const VectorIndex* dense, const Embedder* embedder,
                 DensePolicy policy = DensePolicy::ChunkMean) {
        if (sparse) sparse_ = std::make_unique<SparseRetriever>(*sparse);
        if (dense && embedder) dense_ = std::make_unique<DenseRetriever>(*dense, *embedder, policy);
        if (sparse_ && dense_) hybrid_ = std::make_unique<HybridRetriever>(*sparse_, *dense_);
    }

    const Retriever& get(RmKind kind) const {
        const Retriever* r = kind == RmKind::Sparse ? sparse_.get() : kind == RmKind::Dense ? dense_.get() : hybrid_.get();
        if (r == nullptr) {
            throw ValidationError(std::string(to_string(kind)) + " retrieval requested but " +
                                  (kind == RmKind::Sparse ? "no sparse index" :
                                   kind == RmKind::Dense  ? "no dense index/embedder" :
                                                            "both a sparse and a dense index are needed and one is") +
                                  " was provided");
        }
        return *r;
    }

private:
    std::unique_ptr<Retriever> sparse_, dense_, hybrid_;
};

// ---------------------------------------------------------------------------
// The refinement loop
// ---------------------------------------------------------------------------

struct IterationRecord {
    std::size_t iteration = 0;  // 1-based
    std::string prompt;
    KnowledgeCollection knowledge;
    std::string expanded_query;
    RankedList retrieved;
};

using IterationTrace = std::vector<IterationRecord>;

struct InterResult {
    RankedList ranking;
    IterationTrace trace;
};

// A failure inside the loop; carries the iterations that completed.
class PipelineError : public Error {
public:
    PipelineError(std::string query_id, std::size_t iteration, const std::string& what, IterationTrace partial)
        : Error("query " + query_id + ", iteration " + std::to_string(iteration) + ": " + what),
          query_id_(std::move(query_id)), iteration_(iteration), partial_(std::move(partial)) {}

    const std::string& query_id() const noexcept { return query_id_; }
    std::size_t iteration() const noexcept { return iteration_; }
    const IterationTrace& partial_trace() const noexcept { return partial_; }

private:
    std::string query_id_;
    std::size_t iteration_;
    IterationTrace partial_;
};

using DocTextFn = std::function<std::string(const std::string&)>;

class InterPipeline {
public:
    InterPipeline(InterConfig config, const Retriever& intermediate, const Retriever& final_rm, const LlmProvider& llm,
                  DocTextFn doc_text, PromptTemplate initial = PromptTemplate::initial(),
                  PromptTemplate refine = PromptTemplate::refine())
        : config_(std::move(config)), intermediate_(intermediate), final_(final_rm), llm_(llm),
          doc_text_(std::move(doc_text)), initial_(std::move(initial)), refine_(std::move(refine)) {
        config_.validate();
        if (initial_.kind() != PromptKind::Initial || refine_.kind() != PromptKind::Refine)
            throw ValidationError("prompt templates passed in the wrong order");
    }

    const InterConfig& config() const noexcept { return config_; }

    GenerationRequest request_for(std::string prompt) const {
        GenerationRequest r;
        r.prompt = std::move(prompt);
        r.num_samples = config_.h;
        r.temperature = config_.temperature;
        r.frequency_penalty = config_.frequency_penalty;
        r.max_tokens = config_.max_tokens;
        r.seed = config_.seed;
        return r;
    }

    // One LLM step followed by one RM step. Without previous documents the
    // initial prompt is used; otherwise the refinement prompt built from
    // them.
    IterationRecord run_iteration(const Query& q, const RankedList* previous, std::size_t iteration) const {
        IterationRecord rec;
        rec.iteration = iteration;
        rec.prompt = previous == nullptr
                         ? initial_prompt(q, initial_)
                         : refine_prompt(q, *previous, doc_text_, config_.k, config_.passage_words, refine_);
        rec.knowledge = generate(llm_, request_for(rec.prompt));
        ExpandedQuery eq = make_expanded_query(trim(q.text), rec.knowledge, config_.separator);
        rec.expanded_query = eq.text;
        rec.retrieved = intermediate_.retrieve(eq, config_.k);
        rec.retrieved.query_id = q.id;
        return rec;
    }

    // M iterations, then the final retrieval with the last expanded query.
    // M = 0 skips the LLM and ranks the bare query.
    InterResult run(const Query& q) const {
        InterResult result;
        std::optional<ExpandedQuery> last;
        for (std::size_t it = 1; it <= config_.M; ++it) {
            const RankedList* prev = result.trace.empty() ? nullptr : &result.trace.back().retrieved;
            try {
                if (prev != nullptr && prev->empty())
                    throw Error("no documents retrieved in iteration " + std::to_string(it - 1) + " to refine the prompt");
                result.trace.push_back(run_iteration(q, prev, it));
            } catch (const std::exception& e) {
                throw PipelineError(q.id, it, e.what(), std::move(result.trace));
            }
            const auto& rec = result.trace.back();
            last = make_expanded_query(trim(q.text), rec.knowledge, config_.separator);
        }
        try {
            result.ranking = final_.retrieve(last ? *last : ExpandedQuery::bare(q.text), config_.final_k);
        } catch (const std::exception& e) {
            throw PipelineError(q.id, config_.M + 1, std::string("final retrieval: ") + e.what(), std::move(result.trace));
        }
        result.ranking.query_id = q.id;
        return result;
    }

private:
    InterConfig config_;
    const Retriever& intermediate_;
    const Retriever& final_;
    const LlmProvider& llm_;
    DocTextFn doc_text_;
    PromptTemplate initial_;
    PromptTemplate refine_;
};

inline IterationRecord run_iteration(const Query& q, const RankedList* previous, const InterConfig& config,
                                     const RetrieverSet& indexes, const LlmProvider& llm, DocTextFn doc_text,
                                     std::size_t iteration = 1) {
    InterPipeline p(config, indexes.get(config.intermediate_rm), indexes.get(config.final_rm), llm, std::move(doc_text));
    return p.run_iteration(q, previous, iteration);
}

inline InterResult run_inter(const Query& q, const InterConfig& config, const RetrieverSet& indexes,
                             const LlmProvider& llm, DocTextFn doc_text) {
    const Retriever& inter_rm = config.M > 0 ? indexes.get(config.intermediate_rm) : indexes.get(config.final_rm);
    InterPipeline p(config, inter_rm, indexes.get(config.final_rm), llm, std::move(doc_text));
    return p.run(q);
}

// ---------------------------------------------------------------------------
// Batch execution
// ---------------------------------------------------------------------------

struct QueryOutcome {
    Query query;
    std::optional<InterResult> result;
    std::string error;           // set when result is empty
    std::size_t failed_iteration = 0;
    IterationTrace partial_trace;  // iterations completed before the failure
};

// Runs every query, up to `workers` at a time, and hands outcomes to `emit`
// in input order as soon as each prefix is complete. In strict mode the first
// failure stops the batch (after emitting everything before it) and is
// rethrown.
inline void run_batch(const InterPipeline& pipeline, const std::vector<Query>& queries, std::size_t workers,
                      const std::function<void(const QueryOutcome&)>& emit, bool strict = false) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, std::max<std::size_t>(queries.size(), 1));

    std::vector<std::optional<QueryOutcome>> slots(queries.size());
    std::mutex mu;
    std::condition_variable cv;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};

    auto work = [&] {
        for (;;) {
            if (stop.load()) return;
            const std::size_t i = next.fetch_add(1);
            if (i >= queries.size()) return;
            QueryOutcome o;
            o.query = queries[i];
            try {
                o.result = pipeline.run(queries[i]);
            } catch (const PipelineError& e) {
                o.error = e.what();
                o.failed_iteration = e.iteration();
                o.partial_trace = e.partial_trace();
            } catch (const std::exception& e) {
                o.error = std::string("query ") + queries[i].id + ": " + e.what();
            }
            if (strict && !o.result) stop.store(true);
            {
                std::lock_guard lock(mu);
                slots[i] = std::move(o);
            }
            cv.notify_all();
        }
    };

    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);

    for (std::size_t i = 0; i < queries.size(); ++i) {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return slots[i].has_value() || (stop.load() && next.load() <= i); });
        if (!slots[i]) break;  // never started because of a strict-mode stop
        QueryOutcome o = std::move(*slots[i]);
        lock.unlock();
        emit(o);
        if (strict && !o.result) {
            stop.store(true);
            cv.notify_all();
            pool.clear();
            throw Error(o.error);
        }
    }
}

// One trace JSONL object for an iteration.
inline nlohmann::json trace_json(const std::string& query_id, const IterationRecord& rec) {
    nlohmann::json retrieved = nlohmann::json::array();
    for (const auto& e : rec.retrieved.entries) retrieved.push_back({{"doc_id", e.doc_id}, {"score", e.score}});
    return nlohmann::json{{"query_id", query_id},
                          {"iteration", rec.iteration},
                          {"prompt", rec.prompt},
                          {"provider", rec.knowledge.provider_tag},
                          {"passages", rec.knowledge.passages},
                          {"expanded_query_sha256", sha256_hex(rec.expanded_query)},
                          {"retrieved", retrieved}};
}

}  // namespace inter
