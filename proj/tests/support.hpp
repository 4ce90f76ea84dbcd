#pragma once

// Test-only helpers: independent oracles, fixtures and a fake chat server.
// Nothing here calls into the code paths it is used to check.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "httplib.h"
#include "json.hpp"

#include "inter/corpus.hpp"

namespace testing_support {

// ---- files --------------------------------------------------------------

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("inter_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Runs a shell command and returns its exit status.
inline int run_command(const std::string& cmd) {
    int rc = std::system(cmd.c_str());
    if (rc == -1) return -1;
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : 128;
}

// ---- random corpora -----------------------------------------------------

inline std::string random_text(std::mt19937_64& rng, std::size_t vocab, std::size_t max_words,
                               const std::string& prefix = "w") {
    std::uniform_int_distribution<std::size_t> len(0, max_words);
    std::uniform_int_distribution<std::size_t> word(0, vocab - 1);
    std::string out;
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += prefix + std::to_string(word(rng));
    }
    return out;
}

inline std::vector<inter::Document> random_documents(std::mt19937_64& rng, std::size_t n_docs, std::size_t vocab,
                                                     std::size_t max_words) {
    std::vector<inter::Document> docs;
    for (std::size_t i = 0; i < n_docs; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "doc%04zu", i);
        docs.push_back({id, std::nullopt, random_text(rng, vocab, max_words)});
    }
    return docs;
}

// ---- BM25 oracle ----------------------------------------------------------

// Scores every document by walking its tokens directly: no postings, one
// term lookup per query-token occurrence.
struct NaiveBm25 {
    double k1 = 0.9;
    double b = 0.4;
    std::vector<std::string> ids;
    std::vector<std::vector<std::string>> docs;
    double avg_len = 0.0;

    NaiveBm25(const std::vector<inter::Document>& documents, double k1_ = 0.9, double b_ = 0.4) : k1(k1_), b(b_) {
        double total = 0;
        for (const auto& d : documents) {
            ids.push_back(d.id);
            docs.push_back(inter::tokenize(d.full_text()));
            total += static_cast<double>(docs.back().size());
        }
        avg_len = docs.empty() ? 0.0 : total / static_cast<double>(docs.size());
    }

    double document_frequency(const std::string& t) const {
        double df = 0;
        for (const auto& d : docs)
            if (std::find(d.begin(), d.end(), t) != d.end()) df += 1;
        return df;
    }

    double score_with(const std::vector<std::string>& query, const std::vector<double>& dfs, std::size_t doc) const {
        const double n = static_cast<double>(docs.size());
        long double s = 0.0L;
        for (std::size_t i = 0; i < query.size(); ++i) {
            const double tf = static_cast<double>(std::count(docs[doc].begin(), docs[doc].end(), query[i]));
            if (tf == 0) continue;
            const double idf = std::log(1.0 + (n - dfs[i] + 0.5) / (dfs[i] + 0.5));
            const double len = static_cast<double>(docs[doc].size());
            s += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len / avg_len));
        }
        return static_cast<double>(s);
    }

    std::vector<double> dfs(const std::vector<std::string>& query) const {
        std::vector<double> out;
        for (const auto& t : query) out.push_back(document_frequency(t));
        return out;
    }

    double score(const std::vector<std::string>& query, std::size_t doc) const { return score_with(query, dfs(query), doc); }

    // All documents with positive score, sorted by score then id.
    std::vector<std::pair<std::string, double>> rank(const std::vector<std::string>& query) const {
        const auto df = dfs(query);
        std::vector<std::pair<std::string, double>> out;
        for (std::size_t i = 0; i < docs.size(); ++i) {
            double s = score_with(query, df, i);
            if (s > 0) out.emplace_back(ids[i], s);
        }
        std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
            if (x.second != y.second) return x.second > y.second;
            return x.first < y.first;
        });
        return out;
    }
};

// ---- trec_eval-style reference evaluator ----------------------------------

// Ranks each query's documents by score descending with trec_eval's
// tie-break (doc id descending); MAP/recall binarize at grade >= 1; nDCG
// with exponential gain.
struct ReferenceEvaluator {
    struct Row {
        std::string doc;
        double score;
    };
    std::map<std::string, std::vector<Row>> run;
    std::map<std::string, std::map<std::string, int>> qrels;

    std::vector<std::string> ordered(const std::string& q) const {
        auto rows = run.at(q);
        std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.doc > b.doc;
        });
        std::vector<std::string> ids;
        for (const auto& r : rows) ids.push_back(r.doc);
        return ids;
    }

    int grade(const std::string& q, const std::string& d) const {
        auto it = qrels.find(q);
        if (it == qrels.end()) return 0;
        auto jt = it->second.find(d);
        return jt == it->second.end() ? 0 : jt->second;
    }

    double ap(const std::string& q) const {
        double relevant = 0;
        for (const auto& [d, g] : qrels.at(q)) relevant += g >= 1;
        double hits = 0, sum = 0;
        auto ids = ordered(q);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (grade(q, ids[i]) >= 1) {
                hits += 1;
                sum += hits / static_cast<double>(i + 1);
            }
        }
        return relevant > 0 ? sum / relevant : 0.0;
    }

    double ndcg(const std::string& q, std::size_t k) const {
        auto ids = ordered(q);
        double dcg = 0;
        for (std::size_t i = 0; i < ids.size() && i < k; ++i)
            dcg += (std::pow(2.0, grade(q, ids[i])) - 1.0) / (std::log(static_cast<double>(i) + 2.0) / std::log(2.0));
        std::vector<int> g;
        for (const auto& [d, v] : qrels.at(q)) g.push_back(v);
        std::sort(g.rbegin(), g.rend());
        double idcg = 0;
        for (std::size_t i = 0; i < g.size() && i < k; ++i)
            idcg += (std::pow(2.0, g[i]) - 1.0) / (std::log(static_cast<double>(i) + 2.0) / std::log(2.0));
        return idcg > 0 ? dcg / idcg : 0.0;
    }

    double recall(const std::string& q, std::size_t k) const {
        double relevant = 0, hits = 0;
        for (const auto& [d, v] : qrels.at(q)) relevant += v >= 1;
        auto ids = ordered(q);
        for (std::size_t i = 0; i < ids.size() && i < k; ++i) hits += grade(q, ids[i]) >= 1;
        return relevant > 0 ? hits / relevant : 0.0;
    }
};

// ---- Student t oracle -------------------------------------------------------

// Two-sided p-value by composite Simpson integration of the t density over
// [0, |t|].
inline double t_two_sided_p_quadrature(double t, double dof) {
    const double c = std::exp(std::lgamma((dof + 1) / 2) - std::lgamma(dof / 2)) / std::sqrt(dof * M_PI);
    auto pdf = [&](double x) { return c * std::pow(1 + x * x / dof, -(dof + 1) / 2); };
    const int n = 200000;
    const double a = 0, b = std::fabs(t), h = (b - a) / n;
    double s = pdf(a) + pdf(b);
    for (int i = 1; i < n; ++i) s += pdf(a + i * h) * (i % 2 ? 4 : 2);
    const double half = s * h / 3;
    return 1.0 - 2.0 * half;
}

// ---- synthetic lift fixture -------------------------------------------------

// Queries whose relevant documents share no word with the query text; the
// mock generator's knowledge map links each query word to the vocabulary of
// its relevant documents. Distractors contain one query word each.
struct LiftFixture {
    std::vector<inter::Document> docs;
    std::vector<inter::Query> queries;
    std::map<std::string, std::vector<std::string>> knowledge;
    std::vector<std::tuple<std::string, std::string, int>> qrels;  // (qid, doc, grade)

    std::string corpus_jsonl() const {
        std::string out;
        for (const auto& d : docs) out += nlohmann::json{{"_id", d.id}, {"title", ""}, {"text", d.text}}.dump() + "\n";
        return out;
    }
    std::string queries_tsv() const {
        std::string out;
        for (const auto& q : queries) out += q.id + "\t" + q.text + "\n";
        return out;
    }
    std::string qrels_txt() const {
        std::string out;
        for (const auto& [q, d, g] : qrels) out += q + " 0 " + d + " " + std::to_string(g) + "\n";
        return out;
    }
    std::string knowledge_json() const { return nlohmann::json(knowledge).dump(); }
};

inline LiftFixture make_lift_fixture(std::size_t n_queries = 25, std::size_t n_docs = 500, std::uint64_t seed = 7) {
    LiftFixture f;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> filler(0, 299);
    auto filler_words = [&](int n) {
        std::string s;
        for (int i = 0; i < n; ++i) s += " f" + std::to_string(filler(rng));
        return s;
    };
    std::size_t next_id = 0;
    auto new_id = [&] {
        char id[16];
        std::snprintf(id, sizeof(id), "d%04zu", next_id++);
        return std::string(id);
    };
    for (std::size_t q = 0; q < n_queries; ++q) {
        const std::string qs = std::to_string(q);
        const std::string qa = "qa" + qs, qb = "qb" + qs;
        f.queries.push_back({"q" + qs, "tell me about " + qa + " " + qb});
        std::vector<std::string> kw;
        for (const char* suffix : {"ka", "kb", "kc", "kd", "ke"}) kw.push_back(std::string(suffix) + qs);
        f.knowledge[qa] = {kw[0], kw[1], kw[2]};
        f.knowledge[qb] = {kw[3], kw[4]};
        for (int r = 0; r < 4; ++r) {
            std::string text;
            for (int j = 0; j < 4; ++j) text += (j ? " " : "") + kw[(r + j) % 5];
            text += filler_words(12);
            auto id = new_id();
            f.docs.push_back({id, std::nullopt, text});
            f.qrels.emplace_back("q" + qs, id, r == 0 ? 2 : 1);
        }
        for (int r = 0; r < 4; ++r) {
            std::string text = (r % 2 ? qb : qa) + filler_words(15);
            f.docs.push_back({new_id(), std::nullopt, text});
        }
    }
    while (f.docs.size() < n_docs) f.docs.push_back({new_id(), std::nullopt, filler_words(16).substr(1)});
    return f;
}

// ---- fake OpenAI-compatible server --------------------------------------------

// Serves POST /v1/chat/completions. Each reply contains the prompt's words
// plus a per-request counter, so two calls with one prompt differ. The
// first `fail_first` requests answer `fail_status`.
class FakeChatServer {
public:
    FakeChatServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu_);
            bodies_.push_back(req.body);
            if (auth_header_.empty()) auth_header_ = req.get_header_value("Authorization");
            if (served_ < fail_first) {
                ++served_;
                res.status = fail_status;
                res.set_content("{\"error\":\"nope\"}", "application/json");
                return;
            }
            ++served_;
            auto body = nlohmann::json::parse(req.body);
            const std::size_t n = body.value("n", 1);
            std::string prompt = body["messages"][0]["content"];
            auto words = inter::tokenize(prompt);
            std::string base;
            for (std::size_t i = 0; i < words.size() && i < 20; ++i) base += words[i] + " ";
            nlohmann::json choices = nlohmann::json::array();
            for (std::size_t i = 0; i < n; ++i) {
                choices.push_back({{"index", i},
                                   {"message", {{"role", "assistant"}, {"content", base + "reply" + std::to_string(counter_++)}}},
                                   {"finish_reason", "stop"}});
            }
            res.set_content(nlohmann::json{{"choices", choices}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeChatServer() { stop(); }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
    void fail(std::size_t first, int status) {
        std::lock_guard lock(mu_);
        fail_first = first;
        fail_status = status;
    }
    std::size_t requests() const {
        std::lock_guard lock(mu_);
        return bodies_.size();
    }
    std::vector<std::string> bodies() const {
        std::lock_guard lock(mu_);
        return bodies_;
    }
    std::string auth_header() const {
        std::lock_guard lock(mu_);
        return auth_header_;
    }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    mutable std::mutex mu_;
    std::vector<std::string> bodies_;
    std::string auth_header_;
    std::size_t served_ = 0;
    std::size_t fail_first = 0;
    int fail_status = 500;
    std::size_t counter_ = 0;
};

}  // namespace testing_support
