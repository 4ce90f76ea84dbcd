#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "json.hpp"

#include "inter/binary_io.hpp"
#include "inter/corpus.hpp"
#include "inter/error.hpp"
#include "inter/ranking.hpp"

namespace inter {

// ---------------------------------------------------------------------------
// Qrels
// ---------------------------------------------------------------------------

class Qrels {
public:
    using Judgments = std::map<std::string, int>;  // doc id -> grade

    void add(const std::string& query_id, const std::string& doc_id, int grade) {
        if (grade < 0) throw FormatError("negative relevance grade for (" + query_id + ", " + doc_id + ")");
        if (!judgments_[query_id].emplace(doc_id, grade).second)
            throw FormatError("duplicate judgment for (" + query_id + ", " + doc_id + ")");
    }

    bool has_query(const std::string& query_id) const { return judgments_.contains(query_id); }

    const Judgments* find(const std::string& query_id) const {
        auto it = judgments_.find(query_id);
        return it == judgments_.end() ? nullptr : &it->second;
    }

    int grade(const std::string& query_id, const std::string& doc_id) const {
        const Judgments* j = find(query_id);
        if (j == nullptr) return 0;
        auto it = j->find(doc_id);
        return it == j->end() ? 0 : it->second;
    }

    std::size_t num_relevant(const std::string& query_id, int binarize_at) const {
        const Judgments* j = find(query_id);
        if (j == nullptr) return 0;
        return static_cast<std::size_t>(
            std::count_if(j->begin(), j->end(), [&](const auto& kv) { return kv.second >= binarize_at; }));
    }

    const std::map<std::string, Judgments>& all() const noexcept { return judgments_; }
    std::size_t num_queries() const noexcept { return judgments_.size(); }

private:
    std::map<std::string, Judgments> judgments_;
};

// `query-id 0 doc-id grade` per line, whitespace separated; the second
// column is ignored.
inline Qrels parse_qrels(std::istream& in, const std::string& what = "qrels") {
    Qrels q;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (detail::blank(line)) continue;
        std::istringstream ss(line);
        std::string qid, iter, docid, grade_s, extra;
        if (!(ss >> qid >> iter >> docid >> grade_s) || (ss >> extra))
            throw FormatError(what + ":" + std::to_string(lineno) + ": expected 4 columns");
        int grade = 0;
        auto [ptr, ec] = std::from_chars(grade_s.data(), grade_s.data() + grade_s.size(), grade);
        if (ec != std::errc() || ptr != grade_s.data() + grade_s.size())
            throw FormatError(what + ":" + std::to_string(lineno) + ": grade '" + grade_s + "' is not an integer");
        try {
            q.add(qid, docid, grade);
        } catch (const FormatError& e) {
            throw FormatError(what + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return q;
}

inline Qrels load_qrels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open qrels file: " + path);
    return parse_qrels(in, path);
}

// ---------------------------------------------------------------------------
// TREC run files
// ---------------------------------------------------------------------------

// Shortest decimal form that reads back to the same double.
inline std::string format_score(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Error("cannot format score");
    return std::string(buf, ptr);
}

struct RunFile {
    std::string tag = "inter";
    std::vector<RankedList> queries;  // in emission order

    const RankedList* find(const std::string& query_id) const {
        for (const auto& q : queries)
            if (q.query_id == query_id) return &q;
        return nullptr;
    }
};

// `qid Q0 docid rank score tag`, single spaces, ranks from 1.
inline void write_run_lines(std::ostream& out, const RankedList& list, const std::string& tag) {
    for (std::size_t r = 0; r < list.entries.size(); ++r) {
        out << list.query_id << " Q0 " << list.entries[r].doc_id << ' ' << (r + 1) << ' '
            << format_score(list.entries[r].score) << ' ' << tag << '\n';
    }
}

inline std::string format_run(const RunFile& run) {
    std::ostringstream out;
    for (const auto& q : run.queries) write_run_lines(out, q, run.tag);
    return out.str();
}

inline void write_run(const std::string& path, const RunFile& run) {
    binio::write_file_atomic(path, format_run(run));
}

// Reads a six-column run file. Per query, ranks must be 1..n without gaps,
// scores non-increasing with rank, and doc ids unique.
inline RunFile parse_run(std::istream& in, const std::string& what = "run") {
    struct Row {
        long rank;
        ScoredDoc doc;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<Row>> rows;
    RunFile run;
    bool have_tag = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (detail::blank(line)) continue;
        const std::string where = what + ":" + std::to_string(lineno);
        std::istringstream ss(line);
        std::string qid, q0, docid, rank_s, score_s, tag, extra;
        if (!(ss >> qid >> q0 >> docid >> rank_s >> score_s >> tag) || (ss >> extra))
            throw FormatError(where + ": expected 6 columns");
        long rank = 0;
        double score = 0;
        auto r1 = std::from_chars(rank_s.data(), rank_s.data() + rank_s.size(), rank);
        auto r2 = std::from_chars(score_s.data(), score_s.data() + score_s.size(), score);
        if (r1.ec != std::errc() || r1.ptr != rank_s.data() + rank_s.size())
            throw FormatError(where + ": bad rank '" + rank_s + "'");
        if (r2.ec != std::errc() || r2.ptr != score_s.data() + score_s.size())
            throw FormatError(where + ": bad score '" + score_s + "'");
        if (!have_tag) {
            run.tag = tag;
            have_tag = true;
        }
        auto [it, fresh] = rows.try_emplace(qid);
        if (fresh) order.push_back(qid);
        it->second.push_back({rank, {docid, score}});
    }
    for (const auto& qid : order) {
        auto& v = rows[qid];
        std::stable_sort(v.begin(), v.end(), [](const Row& a, const Row& b) { return a.rank < b.rank; });
        RankedList list;
        list.query_id = qid;
        std::unordered_set<std::string> seen;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i].rank != static_cast<long>(i + 1))
                throw FormatError(what + ": query " + qid + ": ranks are not 1..n");
            if (i && v[i].doc.score > v[i - 1].doc.score)
                throw FormatError(what + ": query " + qid + ": score increases at rank " + std::to_string(i + 1));
            if (!seen.insert(v[i].doc.doc_id).second)
                throw FormatError(what + ": query " + qid + ": duplicate document " + v[i].doc.doc_id);
            list.entries.push_back(std::move(v[i].doc));
        }
        run.queries.push_back(std::move(list));
    }
    return run;
}

inline RunFile load_run(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open run file: " + path);
    return parse_run(in, path);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

// Per-query values of one measure and their mean over evaluated queries.
struct MetricSlice {
    std::string name;
    std::map<std::string, double> per_query;
    double mean = 0.0;
    std::vector<std::string> unjudged;     // run queries absent from qrels
    std::vector<std::string> no_relevant;  // judged, but nothing to find
};

namespace detail {

// Shared driver: `fn` returns nullopt for queries that must be skipped.
inline MetricSlice evaluate_slice(const RunFile& run, const Qrels& qrels, std::string name,
                                  const std::function<std::optional<double>(const RankedList&)>& fn) {
    MetricSlice s;
    s.name = std::move(name);
    bool any_judged = false;
    for (const auto& list : run.queries) {
        if (!qrels.has_query(list.query_id)) {
            s.unjudged.push_back(list.query_id);
            continue;
        }
        any_judged = true;
        auto v = fn(list);
        if (!v) {
            s.no_relevant.push_back(list.query_id);
            continue;
        }
        s.per_query[list.query_id] = *v;
    }
    if (!any_judged) throw ValidationError("no query of the run appears in the qrels");
    double total = 0.0;
    for (const auto& [q, v] : s.per_query) total += v;
    s.mean = s.per_query.empty() ? 0.0 : total / static_cast<double>(s.per_query.size());
    return s;
}

}  // namespace detail

// AP = (1/R) * sum of precision@r over ranks r holding a relevant document,
// relevant meaning grade >= binarize_at and R counted over the qrels.
inline MetricSlice mean_average_precision(const RunFile& run, const Qrels& qrels, int binarize_at = 1) {
    return detail::evaluate_slice(run, qrels, "map", [&](const RankedList& list) -> std::optional<double> {
        const std::size_t R = qrels.num_relevant(list.query_id, binarize_at);
        if (R == 0) return std::nullopt;
        double sum = 0.0;
        std::size_t hits = 0;
        for (std::size_t r = 0; r < list.entries.size(); ++r) {
            if (qrels.grade(list.query_id, list.entries[r].doc_id) >= binarize_at) {
                ++hits;
                sum += static_cast<double>(hits) / static_cast<double>(r + 1);
            }
        }
        return sum / static_cast<double>(R);
    });
}

// Exponential gain 2^g - 1, log2(rank + 1) discount; ideal ordering from all
// judged grades of the query.
inline MetricSlice ndcg_at_k(const RunFile& run, const Qrels& qrels, std::size_t k = 10) {
    return detail::evaluate_slice(run, qrels, "ndcg@" + std::to_string(k), [&](const RankedList& list) -> std::optional<double> {
        auto gain = [](int g) { return std::exp2(static_cast<double>(g)) - 1.0; };
        std::vector<int> ideal;
        for (const auto& [doc, g] : *qrels.find(list.query_id)) ideal.push_back(g);
        std::sort(ideal.begin(), ideal.end(), std::greater<>());
        double idcg = 0.0;
        for (std::size_t r = 0; r < std::min(k, ideal.size()); ++r) idcg += gain(ideal[r]) / std::log2(static_cast<double>(r + 2));
        if (idcg <= 0.0) return std::nullopt;
        double dcg = 0.0;
        for (std::size_t r = 0; r < std::min(k, list.entries.size()); ++r)
            dcg += gain(qrels.grade(list.query_id, list.entries[r].doc_id)) / std::log2(static_cast<double>(r + 2));
        return dcg / idcg;
    });
}

inline MetricSlice recall_at_k(const RunFile& run, const Qrels& qrels, std::size_t k = 1000, int binarize_at = 1) {
    return detail::evaluate_slice(run, qrels, "recall@" + std::to_string(k), [&](const RankedList& list) -> std::optional<double> {
        const std::size_t R = qrels.num_relevant(list.query_id, binarize_at);
        if (R == 0) return std::nullopt;
        std::size_t hits = 0;
        for (std::size_t r = 0; r < std::min(k, list.entries.size()); ++r)
            if (qrels.grade(list.query_id, list.entries[r].doc_id) >= binarize_at) ++hits;
        return static_cast<double>(hits) / static_cast<double>(R);
    });
}

struct EvalOptions {
    int map_binarize = 1;
    std::size_t ndcg_k = 10;
    std::size_t recall_k = 1000;
};

struct MetricReport {
    MetricSlice map;
    MetricSlice ndcg;
    MetricSlice recall;

    std::vector<const MetricSlice*> slices() const { return {&map, &ndcg, &recall}; }
};

inline MetricReport evaluate(const RunFile& run, const Qrels& qrels, const EvalOptions& opts = {}) {
    return MetricReport{mean_average_precision(run, qrels, opts.map_binarize), ndcg_at_k(run, qrels, opts.ndcg_k),
                        recall_at_k(run, qrels, opts.recall_k, opts.map_binarize)};
}

// ---------------------------------------------------------------------------
// Significance
// ---------------------------------------------------------------------------

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    std::size_t dof = 0;
    bool degenerate = false;  // differences have zero variance
};

// Two-sided paired Student's t-test on matched observations.
inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ValidationError("paired t-test: lengths differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    const std::size_t n = a.size();
    if (n < 2) throw ValidationError("paired t-test needs at least 2 pairs");
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i] - mean;
        ss += d * d;
    }
    TTestResult res;
    res.dof = n - 1;
    const double var = ss / static_cast<double>(n - 1);
    if (var <= 0.0) {
        res.degenerate = true;
        if (mean == 0.0) {
            res.t = 0.0;
            res.p = 1.0;
        } else {
            res.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
            res.p = 0.0;
        }
        return res;
    }
    res.t = mean / std::sqrt(var / static_cast<double>(n));
    boost::math::students_t dist(static_cast<double>(res.dof));
    res.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(res.t)));
    return res;
}

// Per-query values of two systems on the queries both evaluated, in query id
// order.
inline std::pair<std::vector<double>, std::vector<double>> paired_values(const MetricSlice& a, const MetricSlice& b) {
    std::pair<std::vector<double>, std::vector<double>> out;
    for (const auto& [q, v] : a.per_query) {
        auto it = b.per_query.find(q);
        if (it == b.per_query.end()) continue;
        out.first.push_back(v);
        out.second.push_back(it->second);
    }
    return out;
}

}  // namespace inter
