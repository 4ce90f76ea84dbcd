#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "json.hpp"

#include "inter/error.hpp"

namespace inter {

struct Document {
    std::string id;
    std::optional<std::string> title;
    std::string text;

    // Title and body joined by one space; what gets indexed and what is
    // inserted into prompts.
    std::string full_text() const {
        if (title && !title->empty()) {
            if (text.empty()) return *title;
            return *title + " " + text;
        }
        return text;
    }

    bool operator==(const Document&) const = default;
};

struct Query {
    std::string id;
    std::string text;
};

using TokenStream = std::vector<std::string>;

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

// Lowercases and splits on every codepoint that is not a Unicode letter or
// digit. Ill-formed UTF-8 bytes act as separators.
inline TokenStream tokenize(std::string_view text) {
    TokenStream tokens;
    std::string current;
    const auto* s = reinterpret_cast<const uint8_t*>(text.data());
    const auto length = static_cast<int32_t>(text.size());
    int32_t i = 0;
    while (i < length) {
        UChar32 c;
        U8_NEXT(s, i, length, c);
        if (c >= 0 && u_isalnum(c)) {
            UChar32 lower = u_tolower(c);
            char buf[U8_MAX_LENGTH];
            int32_t n = 0;
            U8_APPEND_UNSAFE(buf, n, lower);
            current.append(buf, static_cast<std::size_t>(n));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep = " ") {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out.append(sep);
        out.append(parts[i]);
    }
    return out;
}

inline bool is_ascii_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_ascii_space(s[b])) ++b;
    while (e > b && is_ascii_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

inline std::size_t count_words(std::string_view text) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : text) {
        if (is_ascii_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

inline constexpr std::size_t kDefaultTruncationWords = 256;

// Prefix of `text` that ends with its `limit`-th whitespace-delimited word.
// Text with at most `limit` words is returned unchanged.
inline std::string truncate_tokens(std::string_view text,
                                   std::size_t limit = kDefaultTruncationWords) {
    if (limit == 0) throw ValidationError("truncate_tokens: limit must be >= 1");
    std::size_t words = 0;
    bool in_word = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (is_ascii_space(text[i])) {
            if (in_word && words == limit) return std::string(text.substr(0, i));
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++words;
        }
    }
    return std::string(text);
}

// Harman's S-stemmer: plural stripping only.
inline std::string s_stem(std::string word) {
    auto ends_with = [&](std::string_view suffix) {
        return word.size() >= suffix.size() &&
               word.compare(word.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (word.size() <= 3) return word;
    if (ends_with("ies") && !ends_with("eies") && !ends_with("aies")) {
        word.replace(word.size() - 3, 3, "y");
    } else if (ends_with("es") && !ends_with("aes") && !ends_with("ees") && !ends_with("oes")) {
        word.pop_back();
    } else if (ends_with("s") && !ends_with("us") && !ends_with("ss")) {
        word.pop_back();
    }
    return word;
}

// Index-time and query-time text analysis. Both sides of a sparse index must
// use the same options; the index file records them.
struct AnalyzerOptions {
    bool stem = false;
    std::vector<std::string> stopwords;  // normalized through tokenize()

    bool operator==(const AnalyzerOptions&) const = default;
};

class Analyzer {
public:
    Analyzer() = default;
    explicit Analyzer(AnalyzerOptions options) : options_(std::move(options)) {
        for (const auto& w : options_.stopwords) stop_.insert(w);
    }

    TokenStream analyze(std::string_view text) const {
        TokenStream tokens = tokenize(text);
        if (!options_.stem && stop_.empty()) return tokens;
        TokenStream out;
        out.reserve(tokens.size());
        for (auto& t : tokens) {
            if (stop_.contains(t)) continue;
            out.push_back(options_.stem ? s_stem(std::move(t)) : std::move(t));
        }
        return out;
    }

    const AnalyzerOptions& options() const noexcept { return options_; }

private:
    AnalyzerOptions options_;
    std::unordered_set<std::string> stop_;
};

// One stopword per line (or several per line); tokenized like any other text
// and returned sorted and deduplicated.
inline std::vector<std::string> load_stopwords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open stopword file: " + path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        for (auto& t : tokenize(line)) words.push_back(std::move(t));
    }
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    return words;
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

enum class CorpusFormat { BeirJsonl, Tsv };

inline CorpusFormat parse_corpus_format(std::string_view name) {
    if (name == "beir-jsonl") return CorpusFormat::BeirJsonl;
    if (name == "tsv") return CorpusFormat::Tsv;
    throw ValidationError("unknown corpus format: " + std::string(name));
}

struct LoadOptions {
    bool strict = false;  // malformed lines are fatal instead of skipped
};

struct LoadReport {
    std::size_t records = 0;
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
};

// Documents sorted by id. Immutable once built.
class Corpus {
public:
    Corpus() = default;

    // Throws DuplicateIdError if two documents share an id.
    explicit Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
        std::sort(docs_.begin(), docs_.end(),
                  [](const Document& a, const Document& b) { return a.id < b.id; });
        for (std::size_t i = 1; i < docs_.size(); ++i) {
            if (docs_[i].id == docs_[i - 1].id) throw DuplicateIdError(docs_[i].id);
        }
        for (const auto& d : docs_) {
            if (d.id.empty()) throw ValidationError("document with empty id");
        }
    }

    std::size_t size() const noexcept { return docs_.size(); }
    bool empty() const noexcept { return docs_.empty(); }
    const Document& operator[](std::size_t i) const { return docs_[i]; }
    auto begin() const noexcept { return docs_.begin(); }
    auto end() const noexcept { return docs_.end(); }
    const std::vector<Document>& documents() const noexcept { return docs_; }

    const Document* find(std::string_view id) const {
        auto it = std::lower_bound(docs_.begin(), docs_.end(), id,
                                   [](const Document& d, std::string_view v) { return d.id < v; });
        if (it == docs_.end() || it->id != id) return nullptr;
        return &*it;
    }

    const Document& at(std::string_view id) const {
        const Document* d = find(id);
        if (d == nullptr) throw NotFoundError("unknown document id: " + std::string(id));
        return *d;
    }

private:
    std::vector<Document> docs_;
};

namespace detail {

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline bool blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(), is_ascii_space);
}

inline std::optional<std::string> json_id(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return v.dump();
    return std::nullopt;
}

// Handles a bad line per the strictness policy.
inline void reject_line(const std::string& path, std::size_t lineno, const std::string& why,
                        const LoadOptions& options, LoadReport& report) {
    std::string msg = path + ":" + std::to_string(lineno) + ": " + why;
    if (options.strict) throw FormatError(msg);
    ++report.skipped;
    report.warnings.push_back(std::move(msg));
}

inline std::optional<Document> parse_beir_line(const std::string& line, std::string& why) {
    auto obj = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
        why = "not a JSON object";
        return std::nullopt;
    }
    auto id_it = obj.find("_id");
    if (id_it == obj.end()) {
        why = "missing _id";
        return std::nullopt;
    }
    auto id = json_id(*id_it);
    if (!id || id->empty()) {
        why = "_id must be a non-empty string";
        return std::nullopt;
    }
    Document doc;
    doc.id = std::move(*id);
    if (auto t = obj.find("title"); t != obj.end() && !t->is_null()) {
        if (!t->is_string()) {
            why = "title must be a string";
            return std::nullopt;
        }
        doc.title = t->get<std::string>();
    }
    auto text = obj.find("text");
    if (text == obj.end() || !text->is_string()) {
        why = "missing or non-string text";
        return std::nullopt;
    }
    doc.text = text->get<std::string>();
    return doc;
}

}  // namespace detail

// Reads a BEIR-style JSONL corpus (`_id`, `title`, `text` per line) or an
// MS-MARCO-style TSV (`id<TAB>text`). Blank lines are ignored. Malformed
// lines are skipped with a warning unless `options.strict`; duplicate ids are
// always fatal.
inline Corpus load_corpus(const std::string& path, CorpusFormat format,
                          const LoadOptions& options = {}, LoadReport* report = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);

    LoadReport local;
    LoadReport& rep = report ? *report : local;
    std::vector<Document> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (detail::blank(line)) continue;
        std::string why;
        std::optional<Document> doc;
        if (format == CorpusFormat::BeirJsonl) {
            doc = detail::parse_beir_line(line, why);
        } else {
            auto tab = line.find('\t');
            if (tab == std::string::npos) {
                why = "expected id<TAB>text";
            } else if (tab == 0) {
                why = "empty document id";
            } else {
                doc = Document{line.substr(0, tab), std::nullopt, line.substr(tab + 1)};
            }
        }
        if (!doc) {
            detail::reject_line(path, lineno, why, options, rep);
            continue;
        }
        docs.push_back(std::move(*doc));
    }
    if (in.bad()) throw IoError("read error: " + path);
    Corpus corpus(std::move(docs));
    rep.records = corpus.size();
    return corpus;
}

// Query file: `query-id<TAB>query-text`, kept in file order.
inline std::vector<Query> load_queries(const std::string& path, const LoadOptions& options = {},
                                       LoadReport* report = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open query file: " + path);
    LoadReport local;
    LoadReport& rep = report ? *report : local;
    std::vector<Query> queries;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (detail::blank(line)) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) {
            detail::reject_line(path, lineno, "expected query-id<TAB>query-text", options, rep);
            continue;
        }
        Query q{line.substr(0, tab), trim(std::string_view(line).substr(tab + 1))};
        if (q.text.empty()) {
            detail::reject_line(path, lineno, "empty query text", options, rep);
            continue;
        }
        if (!seen.insert(q.id).second) throw DuplicateIdError(q.id);
        queries.push_back(std::move(q));
    }
    rep.records = queries.size();
    return queries;
}

}  // namespace inter
