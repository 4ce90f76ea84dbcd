#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace inter {

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;

    bool operator==(const ScoredDoc&) const = default;
};

// Ranked retrieval output for one query: descending score, ties broken by
// ascending doc id, no duplicate ids.
struct RankedList {
    std::string query_id;
    std::vector<ScoredDoc> entries;

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(entries.size());
        for (const auto& e : entries) out.push_back(e.doc_id);
        return out;
    }

    bool operator==(const RankedList&) const = default;
};

namespace detail {

struct Candidate {
    double score;
    std::uint32_t doc;  // position in a doc-id-sorted table
};

// Score descending, then position ascending. Positions index tables sorted by
// doc id, so the second key is the ascending-doc-id tie-break.
inline bool ranks_before(const Candidate& a, const Candidate& b) noexcept {
    if (a.score != b.score) return a.score > b.score;
    return a.doc < b.doc;
}

// Sorts the best `k` candidates to the front and drops the rest.
inline void select_top_k(std::vector<Candidate>& cands, std::size_t k) {
    if (k < cands.size()) {
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k),
                          cands.end(), ranks_before);
        cands.resize(k);
    } else {
        std::sort(cands.begin(), cands.end(), ranks_before);
    }
}

}  // namespace detail

}  // namespace inter
