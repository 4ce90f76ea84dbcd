#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "inter/binary_io.hpp"
#include "inter/corpus.hpp"
#include "inter/error.hpp"
#include "inter/hash.hpp"
#include "inter/ranking.hpp"

namespace inter {

using EmbeddingVector = std::vector<float>;

enum class EmbedRole { Query, Document };

inline std::string_view role_name(EmbedRole r) noexcept {
    return r == EmbedRole::Query ? "query" : "document";
}

// A text to encode. `id` is optional; file-backed embedders key on it.
struct EncodeItem {
    std::string id;
    std::string text;
    EmbedRole role = EmbedRole::Query;
};

// Query/document encoder. Implementations must be deterministic for a fixed
// configuration and always return vectors of dim() components.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dim() const = 0;
    virtual std::string mode() const = 0;

    // Items with empty text map to the zero vector without reaching the
    // provider.
    std::vector<EmbeddingVector> encode_batch(std::span<const EncodeItem> items) const {
        std::vector<EmbeddingVector> out(items.size());
        std::vector<EncodeItem> pending;
        std::vector<std::size_t> where;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (trim(items[i].text).empty()) {
                out[i].assign(dim(), 0.0f);
            } else {
                pending.push_back(items[i]);
                where.push_back(i);
            }
        }
        if (!pending.empty()) {
            auto vecs = encode_nonempty(pending);
            if (vecs.size() != pending.size())
                throw TransportError("embedder returned " + std::to_string(vecs.size()) +
                                     " vectors for " + std::to_string(pending.size()) + " texts");
            for (std::size_t j = 0; j < vecs.size(); ++j) {
                if (vecs[j].size() != dim())
                    throw TransportError("embedder returned a vector of dim " +
                                         std::to_string(vecs[j].size()) + ", expected " +
                                         std::to_string(dim()));
                for (float v : vecs[j]) {
                    if (!std::isfinite(v)) throw TransportError("embedder returned a non-finite component");
                }
                out[where[j]] = std::move(vecs[j]);
            }
        }
        return out;
    }

    EmbeddingVector encode(std::string_view text, EmbedRole role, std::string_view id = {}) const {
        EncodeItem item{std::string(id), std::string(text), role};
        return encode_batch(std::span<const EncodeItem>(&item, 1)).front();
    }

protected:
    virtual std::vector<EmbeddingVector> encode_nonempty(std::span<const EncodeItem> items) const = 0;
};

// Feature-hashed unigram counts, L2-normalized. Each token from tokenize()
// adds 1 to bucket fnv1a64(utf8 bytes) mod dim. Role is ignored. The result
// is a pure function of the input bytes.
class MockHashEmbedder final : public Embedder {
public:
    explicit MockHashEmbedder(std::size_t dim) : dim_(dim) {
        if (dim == 0) throw ValidationError("mock-hash embedder: dim must be >= 1");
    }

    std::size_t dim() const override { return dim_; }
    std::string mode() const override { return "mock-hash"; }

    EmbeddingVector embed(std::string_view text) const {
        std::vector<double> acc(dim_, 0.0);
        for (const auto& t : tokenize(text)) acc[fnv1a64(t) % dim_] += 1.0;
        double norm = 0.0;
        for (double v : acc) norm += v * v;
        norm = std::sqrt(norm);
        EmbeddingVector out(dim_, 0.0f);
        if (norm > 0.0) {
            for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(acc[i] / norm);
        }
        return out;
    }

protected:
    std::vector<EmbeddingVector> encode_nonempty(std::span<const EncodeItem> items) const override {
        std::vector<EmbeddingVector> out;
        out.reserve(items.size());
        for (const auto& it : items) out.push_back(embed(it.text));
        return out;
    }

private:
    std::size_t dim_;
};

// ---------------------------------------------------------------------------
// Vector files
// ---------------------------------------------------------------------------

inline constexpr char kVectorMagic[8] = {'I', 'N', 'T', 'E', 'R', 'V', 'E', 'C'};
inline constexpr std::uint32_t kVectorFormatVersion = 1;

// Ids with their vectors, stored row-major.
struct VectorTable {
    std::size_t dim = 0;
    std::vector<std::string> ids;
    std::vector<float> values;  // ids.size() * dim

    std::size_t size() const noexcept { return ids.size(); }
    std::span<const float> row(std::size_t i) const {
        return std::span<const float>(values).subspan(i * dim, dim);
    }

    // Layout: magic "INTERVEC", u32 version, u32 dim, u64 count, count
    // length-prefixed ids, then count*dim little-endian f32 values.
    std::string serialize() const {
        binio::Writer w;
        w.raw(std::string_view(kVectorMagic, sizeof(kVectorMagic)));
        w.u32(kVectorFormatVersion);
        w.u32(static_cast<std::uint32_t>(dim));
        w.u64(ids.size());
        for (const auto& id : ids) w.str(id);
        for (float v : values) w.f32(v);
        return w.take();
    }

    static VectorTable deserialize(std::string_view bytes, const std::string& what = "vectors") {
        binio::Reader r(bytes, what);
        if (r.raw(sizeof(kVectorMagic)) != std::string_view(kVectorMagic, sizeof(kVectorMagic)))
            r.fail("bad magic (not an INTERVEC file)");
        const std::uint32_t version = r.u32();
        if (version != kVectorFormatVersion)
            r.fail("unsupported vector format version " + std::to_string(version));
        VectorTable t;
        t.dim = r.u32();
        const std::uint64_t count = r.u64();
        if (t.dim == 0 && count > 0) r.fail("zero dimension");
        for (std::uint64_t i = 0; i < count; ++i) t.ids.push_back(r.str());
        if (r.remaining() != count * t.dim * 4) r.fail("matrix size does not match header");
        t.values.reserve(count * t.dim);
        for (std::uint64_t i = 0; i < count * t.dim; ++i) {
            float v = r.f32();
            if (!std::isfinite(v)) r.fail("non-finite component in row " + std::to_string(i / t.dim));
            t.values.push_back(v);
        }
        return t;
    }

    // One `{"id": str, "vector": [...]}` object per line.
    std::string to_jsonl() const {
        std::string out;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            nlohmann::json j;
            j["id"] = ids[i];
            auto r = row(i);
            j["vector"] = std::vector<float>(r.begin(), r.end());
            out += j.dump();
            out += '\n';
        }
        return out;
    }

    static VectorTable from_jsonl(std::string_view text, const std::string& what = "vectors") {
        VectorTable t;
        std::size_t lineno = 0, pos = 0;
        while (pos < text.size()) {
            auto nl = text.find('\n', pos);
            std::string line(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
            pos = nl == std::string_view::npos ? text.size() : nl + 1;
            ++lineno;
            detail::strip_cr(line);
            if (detail::blank(line)) continue;
            auto where = what + ":" + std::to_string(lineno);
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("vector") ||
                !j["id"].is_string() || !j["vector"].is_array())
                throw FormatError(where + ": expected {\"id\": str, \"vector\": [...]}");
            const auto& vec = j["vector"];
            if (t.ids.empty() && t.dim == 0) t.dim = vec.size();
            if (vec.size() != t.dim || t.dim == 0)
                throw FormatError(where + ": vector dim " + std::to_string(vec.size()) +
                                  " differs from " + std::to_string(t.dim));
            for (const auto& v : vec) {
                if (!v.is_number()) throw FormatError(where + ": non-numeric component");
                float f = v.get<float>();
                if (!std::isfinite(f)) throw FormatError(where + ": non-finite component");
                t.values.push_back(f);
            }
            t.ids.push_back(j["id"].get<std::string>());
        }
        return t;
    }

    // Binary INTERVEC unless the path ends in .jsonl.
    static VectorTable load(const std::string& path) {
        std::string data = binio::read_file(path);
        if (path.size() >= 6 && path.ends_with(".jsonl")) return from_jsonl(data, path);
        return deserialize(data, path);
    }

    void save(const std::string& path) const {
        if (path.size() >= 6 && path.ends_with(".jsonl")) {
            binio::write_file_atomic(path, to_jsonl());
        } else {
            binio::write_file_atomic(path, serialize());
        }
    }
};

// Pre-encoded vectors keyed by id. Texts without an id entry are looked up
// under "sha256:<hex of text>".
class FileEmbedder final : public Embedder {
public:
    explicit FileEmbedder(VectorTable table) : table_(std::move(table)) {
        for (std::size_t i = 0; i < table_.ids.size(); ++i) {
            if (!by_id_.emplace(table_.ids[i], i).second) throw DuplicateIdError(table_.ids[i]);
        }
    }

    static FileEmbedder from_file(const std::string& path) { return FileEmbedder(VectorTable::load(path)); }

    std::size_t dim() const override { return table_.dim; }
    std::string mode() const override { return "file-backed"; }

protected:
    std::vector<EmbeddingVector> encode_nonempty(std::span<const EncodeItem> items) const override {
        std::vector<EmbeddingVector> out;
        out.reserve(items.size());
        for (const auto& it : items) {
            auto found = it.id.empty() ? by_id_.end() : by_id_.find(it.id);
            if (found == by_id_.end()) found = by_id_.find("sha256:" + sha256_hex(it.text));
            if (found == by_id_.end())
                throw NotFoundError("no stored vector for id '" + it.id + "'");
            auto r = table_.row(found->second);
            out.emplace_back(r.begin(), r.end());
        }
        return out;
    }

private:
    VectorTable table_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

// ---------------------------------------------------------------------------
// Vector index
// ---------------------------------------------------------------------------

inline double inner_product(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

// Exact inner-product search over a doc-id-sorted matrix.
class VectorIndex {
public:
    VectorIndex() = default;

    explicit VectorIndex(VectorTable table) : table_(std::move(table)) {
        std::vector<std::size_t> order(table_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return table_.ids[a] < table_.ids[b]; });
        VectorTable sorted;
        sorted.dim = table_.dim;
        for (std::size_t i : order) {
            if (!sorted.ids.empty() && sorted.ids.back() == table_.ids[i])
                throw DuplicateIdError(table_.ids[i]);
            sorted.ids.push_back(table_.ids[i]);
            auto r = table_.row(i);
            sorted.values.insert(sorted.values.end(), r.begin(), r.end());
        }
        table_ = std::move(sorted);
    }

    // One row per document in doc-id order; documents are encoded in
    // batches of `batch` and reassembled by position. Encode failures name
    // the first document of the failing batch.
    static VectorIndex build(const Corpus& corpus, const Embedder& embedder, std::size_t batch = 64,
                             std::vector<std::string>* zero_vector_ids = nullptr) {
        VectorTable t;
        t.dim = embedder.dim();
        t.ids.reserve(corpus.size());
        t.values.reserve(corpus.size() * t.dim);
        batch = std::max<std::size_t>(batch, 1);
        for (std::size_t lo = 0; lo < corpus.size(); lo += batch) {
            const std::size_t hi = std::min(corpus.size(), lo + batch);
            std::vector<EncodeItem> items;
            for (std::size_t i = lo; i < hi; ++i) {
                items.push_back({corpus[i].id, corpus[i].full_text(), EmbedRole::Document});
            }
            std::vector<EmbeddingVector> vecs;
            try {
                vecs = embedder.encode_batch(items);
            } catch (const Error& e) {
                std::string which = items.size() == 1 ? items[0].id : items[0].id + ".." + items.back().id;
                throw Error("encoding document(s) " + which + " failed: " + e.what());
            }
            for (std::size_t j = 0; j < items.size(); ++j) {
                if (zero_vector_ids && trim(items[j].text).empty()) zero_vector_ids->push_back(items[j].id);
                t.ids.push_back(std::move(items[j].id));
                t.values.insert(t.values.end(), vecs[j].begin(), vecs[j].end());
            }
        }
        VectorIndex idx;
        idx.table_ = std::move(t);
        return idx;
    }

    std::size_t num_docs() const noexcept { return table_.size(); }
    std::size_t dim() const noexcept { return table_.dim; }
    const std::vector<std::string>& doc_ids() const noexcept { return table_.ids; }
    std::span<const float> row(std::size_t i) const { return table_.row(i); }
    const VectorTable& table() const noexcept { return table_; }

    RankedList search(std::span<const float> query, std::size_t k) const {
        if (k == 0) throw ValidationError("dense_search: k must be >= 1");
        if (query.size() != dim() && num_docs() > 0)
            throw ValidationError("dense_search: query dim " + std::to_string(query.size()) +
                                  " does not match index dim " + std::to_string(dim()));
        std::vector<detail::Candidate> cands(num_docs());
        for (std::size_t i = 0; i < num_docs(); ++i)
            cands[i] = {inner_product(query, row(i)), static_cast<std::uint32_t>(i)};
        detail::select_top_k(cands, k);
        RankedList out;
        out.entries.reserve(cands.size());
        for (const auto& c : cands) out.entries.push_back({table_.ids[c.doc], c.score});
        return out;
    }

    void save(const std::string& path) const { table_.save(path); }
    static VectorIndex load(const std::string& path) { return VectorIndex(VectorTable::load(path)); }

private:
    VectorTable table_;
};

inline RankedList dense_search(const VectorIndex& index, const Embedder& embedder,
                               std::string_view query_text, std::size_t k) {
    return index.search(embedder.encode(query_text, EmbedRole::Query), k);
}

}  // namespace inter
