#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "inter/binary_io.hpp"
#include "inter/corpus.hpp"
#include "inter/error.hpp"
#include "inter/ranking.hpp"

namespace inter {

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;

    void validate() const {
        if (!(k1 >= 0.0) || !std::isfinite(k1))
            throw ValidationError("bm25 k1 must be a finite value >= 0, got " + std::to_string(k1));
        if (!(b >= 0.0 && b <= 1.0))
            throw ValidationError("bm25 b must lie in [0, 1], got " + std::to_string(b));
    }

    bool operator==(const Bm25Params&) const = default;
};

struct IndexOptions {
    Bm25Params bm25;
    AnalyzerOptions analyzer;
    unsigned threads = 0;     // 0: one shard per hardware thread
    bool store_text = true;   // keep document text for prompt assembly
};

struct SparseSearchOptions {
    bool include_zero = false;  // fill with zero-score documents up to k
};

struct Posting {
    std::uint32_t doc;  // position in the doc-id-sorted document table
    std::uint32_t tf;

    bool operator==(const Posting&) const = default;
};

inline constexpr char kIndexMagic[8] = {'I', 'N', 'T', 'E', 'R', 'I', 'D', 'X'};
inline constexpr std::uint32_t kIndexFormatVersion = 1;

// BM25 inverted index. Documents are kept in ascending id order and
// addressed internally by their position in that order.
class InvertedIndex {
public:
    InvertedIndex() = default;

    static InvertedIndex build(const Corpus& corpus, const IndexOptions& options = {}) {
        options.bm25.validate();
        InvertedIndex idx;
        idx.params_ = options.bm25;
        idx.analyzer_ = Analyzer(options.analyzer);

        const std::size_t n = corpus.size();
        idx.doc_ids_.reserve(n);
        idx.doc_lengths_.assign(n, 0);
        for (const auto& d : corpus) idx.doc_ids_.push_back(d.id);
        if (options.store_text) {
            idx.doc_texts_.reserve(n);
            for (const auto& d : corpus) idx.doc_texts_.push_back(d.full_text());
        }

        unsigned shards = options.threads ? options.threads : std::thread::hardware_concurrency();
        shards = std::max(1u, std::min<unsigned>(shards, static_cast<unsigned>(std::max<std::size_t>(n / 256, 1))));

        using ShardPostings = std::unordered_map<std::string, std::vector<Posting>>;
        std::vector<ShardPostings> shard_postings(shards);
        auto work = [&](unsigned s) {
            const std::size_t lo = n * s / shards, hi = n * (s + 1) / shards;
            auto& local = shard_postings[s];
            std::map<std::string, std::uint32_t> tf;
            for (std::size_t i = lo; i < hi; ++i) {
                tf.clear();
                TokenStream tokens = idx.analyzer_.analyze(corpus[i].full_text());
                idx.doc_lengths_[i] = static_cast<std::uint32_t>(tokens.size());
                for (auto& t : tokens) ++tf[std::move(t)];
                for (const auto& [term, count] : tf) {
                    local[term].push_back(Posting{static_cast<std::uint32_t>(i), count});
                }
            }
        };
        if (shards == 1) {
            work(0);
        } else {
            std::vector<std::jthread> pool;
            for (unsigned s = 0; s < shards; ++s) pool.emplace_back(work, s);
        }

        // Deterministic merge: sorted term order, shard order within a term.
        std::vector<std::string> terms;
        for (const auto& sp : shard_postings)
            for (const auto& kv : sp) terms.push_back(kv.first);
        std::sort(terms.begin(), terms.end());
        terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
        idx.postings_.resize(terms.size());
        for (std::size_t t = 0; t < terms.size(); ++t) {
            for (auto& sp : shard_postings) {
                auto it = sp.find(terms[t]);
                if (it == sp.end()) continue;
                auto& dst = idx.postings_[t];
                dst.insert(dst.end(), it->second.begin(), it->second.end());
            }
        }
        idx.terms_ = std::move(terms);
        idx.finish();
        return idx;
    }

    std::size_t num_docs() const noexcept { return doc_ids_.size(); }
    std::size_t num_terms() const noexcept { return terms_.size(); }
    double avg_doc_length() const noexcept { return avg_len_; }
    const Bm25Params& params() const noexcept { return params_; }
    const Analyzer& analyzer() const noexcept { return analyzer_; }
    const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
    const std::vector<std::string>& terms() const noexcept { return terms_; }
    bool has_text() const noexcept { return !doc_texts_.empty() || doc_ids_.empty(); }

    bool contains(std::string_view doc_id) const { return position(doc_id).has_value(); }

    std::uint32_t doc_length(std::string_view doc_id) const { return doc_lengths_[require(doc_id)]; }

    // Indexed text (title and body) of a document.
    const std::string& document_text(std::string_view doc_id) const {
        if (doc_texts_.empty()) throw NotFoundError("index was built without stored text");
        return doc_texts_[require(doc_id)];
    }

    std::span<const Posting> postings(std::string_view term) const {
        auto t = term_id(term);
        if (!t) return {};
        return postings_[*t];
    }

    std::size_t document_frequency(std::string_view term) const { return postings(term).size(); }

    double idf(std::size_t df) const {
        const double n = static_cast<double>(num_docs());
        const double d = static_cast<double>(df);
        return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
    }

    double term_weight(double idf_value, std::uint32_t tf, std::uint32_t doc_len) const {
        const double tfd = tf;
        const double norm = params_.k1 * (1.0 - params_.b + params_.b * doc_len / avg_len_);
        return idf_value * tfd * (params_.k1 + 1.0) / (tfd + norm);
    }

    // BM25 of an analyzed query against one document. Repeated query terms
    // count once per occurrence.
    double bm25_score(const TokenStream& query_tokens, std::string_view doc_id) const {
        const std::uint32_t doc = require(doc_id);
        long double score = 0.0L;
        for (const auto& [term, qtf] : count_terms(query_tokens)) {
            auto t = term_id(term);
            if (!t) continue;
            const auto& plist = postings_[*t];
            auto it = std::lower_bound(plist.begin(), plist.end(), doc,
                                       [](const Posting& p, std::uint32_t d) { return p.doc < d; });
            if (it == plist.end() || it->doc != doc) continue;
            score += static_cast<long double>(qtf) * term_weight(idf(plist.size()), it->tf, doc_lengths_[doc]);
        }
        return static_cast<double>(score);
    }

    RankedList search(std::string_view query_text, std::size_t k,
                      const SparseSearchOptions& options = {}) const {
        return search_tokens(analyzer_.analyze(query_text), k, options);
    }

    // Term-at-a-time over unique query terms weighted by query term
    // frequency; cost grows with distinct terms, not query length.
    RankedList search_tokens(const TokenStream& query_tokens, std::size_t k,
                             const SparseSearchOptions& options = {}) const {
        if (k == 0) throw ValidationError("sparse_search: k must be >= 1");
        RankedList out;
        const std::size_t n = num_docs();
        if (n == 0) return out;

        // Extended-precision accumulation makes a document's score independent
        // of the order its terms are added, so mathematically tied documents
        // compare equal and fall back to the id tie-break.
        std::vector<long double> acc(n, 0.0L);
        std::vector<char> hit(n, 0);
        for (const auto& [term, qtf] : count_terms(query_tokens)) {
            auto t = term_id(term);
            if (!t) continue;
            const auto& plist = postings_[*t];
            const double w = idf(plist.size());
            for (const auto& p : plist) {
                acc[p.doc] += static_cast<long double>(qtf) * term_weight(w, p.tf, doc_lengths_[p.doc]);
                hit[p.doc] = 1;
            }
        }

        std::vector<detail::Candidate> cands;
        for (std::size_t i = 0; i < n; ++i) {
            const double score = static_cast<double>(acc[i]);
            if (hit[i] && score > 0.0) {
                cands.push_back({score, static_cast<std::uint32_t>(i)});
            } else if (options.include_zero) {
                cands.push_back({0.0, static_cast<std::uint32_t>(i)});
            }
        }
        detail::select_top_k(cands, k);
        out.entries.reserve(cands.size());
        for (const auto& c : cands) out.entries.push_back({doc_ids_[c.doc], c.score});
        return out;
    }

    // ---- persistence ------------------------------------------------------
    // Layout: magic "INTERIDX", u32 version, u32 section count, then sections
    // of (4-byte ASCII tag, u64 payload bytes, payload). See docs/index_format.md.

    std::string serialize() const {
        binio::Writer w;
        w.raw(std::string_view(kIndexMagic, sizeof(kIndexMagic)));
        w.u32(kIndexFormatVersion);
        w.u32(doc_texts_.empty() ? 3 : 4);

        auto section = [&w](std::string_view tag, const binio::Writer& body) {
            w.raw(tag);
            w.u64(body.bytes().size());
            w.raw(body.bytes());
        };

        binio::Writer prms;
        prms.f64(params_.k1);
        prms.f64(params_.b);
        prms.u8(analyzer_.options().stem ? 1 : 0);
        prms.u32(static_cast<std::uint32_t>(analyzer_.options().stopwords.size()));
        for (const auto& s : analyzer_.options().stopwords) prms.str(s);
        section("PRMS", prms);

        binio::Writer docs;
        docs.u64(doc_ids_.size());
        for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
            docs.str(doc_ids_[i]);
            docs.u32(doc_lengths_[i]);
        }
        section("DOCS", docs);

        if (!doc_texts_.empty()) {
            binio::Writer text;
            text.u64(doc_texts_.size());
            for (const auto& t : doc_texts_) text.str(t);
            section("TEXT", text);
        }

        binio::Writer term;
        term.u64(terms_.size());
        for (std::size_t t = 0; t < terms_.size(); ++t) {
            term.str(terms_[t]);
            term.u64(postings_[t].size());
            for (const auto& p : postings_[t]) {
                term.u32(p.doc);
                term.u32(p.tf);
            }
        }
        section("TERM", term);
        return w.take();
    }

    static InvertedIndex deserialize(std::string_view bytes, const std::string& what = "index") {
        binio::Reader r(bytes, what);
        if (r.raw(sizeof(kIndexMagic)) != std::string_view(kIndexMagic, sizeof(kIndexMagic)))
            r.fail("bad magic (not an INTERIDX file)");
        const std::uint32_t version = r.u32();
        if (version != kIndexFormatVersion)
            r.fail("unsupported index format version " + std::to_string(version));

        InvertedIndex idx;
        bool seen_docs = false, seen_terms = false;
        AnalyzerOptions aopts;
        const std::uint32_t sections = r.u32();
        for (std::uint32_t s = 0; s < sections; ++s) {
            const std::string tag(r.raw(4));
            const std::uint64_t len = r.u64();
            if (len > r.remaining()) r.fail("section " + tag + " overruns file");
            binio::Reader body(r.raw(static_cast<std::size_t>(len)), what + " section " + tag);
            if (tag == "PRMS") {
                idx.params_.k1 = body.f64();
                idx.params_.b = body.f64();
                aopts.stem = body.u8() != 0;
                const std::uint32_t nstop = body.u32();
                for (std::uint32_t i = 0; i < nstop; ++i) aopts.stopwords.push_back(body.str());
            } else if (tag == "DOCS") {
                const std::uint64_t n = body.u64();
                for (std::uint64_t i = 0; i < n; ++i) {
                    idx.doc_ids_.push_back(body.str());
                    idx.doc_lengths_.push_back(body.u32());
                }
                seen_docs = true;
            } else if (tag == "TEXT") {
                const std::uint64_t n = body.u64();
                for (std::uint64_t i = 0; i < n; ++i) idx.doc_texts_.push_back(body.str());
            } else if (tag == "TERM") {
                const std::uint64_t n = body.u64();
                idx.terms_.reserve(n);
                idx.postings_.reserve(n);
                for (std::uint64_t t = 0; t < n; ++t) {
                    idx.terms_.push_back(body.str());
                    const std::uint64_t np = body.u64();
                    std::vector<Posting> plist;
                    plist.reserve(np);
                    for (std::uint64_t p = 0; p < np; ++p) {
                        const std::uint32_t doc = body.u32();
                        const std::uint32_t tf = body.u32();
                        plist.push_back({doc, tf});
                    }
                    idx.postings_.push_back(std::move(plist));
                }
                seen_terms = true;
            }
            // Unknown sections are skipped.
            if (!body.done() && (tag == "PRMS" || tag == "DOCS" || tag == "TEXT" || tag == "TERM"))
                body.fail("trailing bytes");
        }
        if (!seen_docs || !seen_terms) r.fail("missing DOCS or TERM section");
        idx.params_.validate();
        idx.analyzer_ = Analyzer(std::move(aopts));
        idx.check_invariants(what);
        idx.finish();
        return idx;
    }

    void save(const std::string& path) const { binio::write_file_atomic(path, serialize()); }

    static InvertedIndex load(const std::string& path) {
        return deserialize(binio::read_file(path), path);
    }

private:
    static std::map<std::string, std::uint32_t> count_terms(const TokenStream& tokens) {
        std::map<std::string, std::uint32_t> counts;
        for (const auto& t : tokens) ++counts[t];
        return counts;
    }

    std::optional<std::uint32_t> position(std::string_view doc_id) const {
        auto it = std::lower_bound(doc_ids_.begin(), doc_ids_.end(), doc_id);
        if (it == doc_ids_.end() || *it != doc_id) return std::nullopt;
        return static_cast<std::uint32_t>(it - doc_ids_.begin());
    }

    std::uint32_t require(std::string_view doc_id) const {
        auto p = position(doc_id);
        if (!p) throw NotFoundError("unknown document id: " + std::string(doc_id));
        return *p;
    }

    std::optional<std::uint32_t> term_id(std::string_view term) const {
        auto it = lookup_.find(std::string(term));
        if (it == lookup_.end()) return std::nullopt;
        return it->second;
    }

    void check_invariants(const std::string& what) const {
        auto fail = [&](const std::string& why) { throw FormatError(what + ": " + why); };
        if (!std::is_sorted(doc_ids_.begin(), doc_ids_.end())) fail("document ids not sorted");
        if (std::adjacent_find(doc_ids_.begin(), doc_ids_.end()) != doc_ids_.end())
            fail("duplicate document id");
        if (!doc_texts_.empty() && doc_texts_.size() != doc_ids_.size()) fail("text count mismatch");
        if (!std::is_sorted(terms_.begin(), terms_.end())) fail("terms not sorted");
        for (const auto& plist : postings_) {
            for (std::size_t i = 0; i < plist.size(); ++i) {
                if (plist[i].doc >= doc_ids_.size()) fail("posting references unknown document");
                if (plist[i].tf == 0) fail("zero term frequency");
                if (i && plist[i].doc <= plist[i - 1].doc) fail("postings not sorted");
            }
        }
    }

    void finish() {
        lookup_.clear();
        lookup_.reserve(terms_.size());
        for (std::size_t t = 0; t < terms_.size(); ++t)
            lookup_.emplace(terms_[t], static_cast<std::uint32_t>(t));
        double total = 0.0;
        for (auto len : doc_lengths_) total += len;
        avg_len_ = doc_lengths_.empty() ? 0.0 : total / static_cast<double>(doc_lengths_.size());
    }

    Bm25Params params_;
    Analyzer analyzer_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    std::vector<std::string> doc_texts_;
    std::vector<std::string> terms_;
    std::vector<std::vector<Posting>> postings_;
    std::unordered_map<std::string, std::uint32_t> lookup_;
    double avg_len_ = 0.0;
};

}  // namespace inter
