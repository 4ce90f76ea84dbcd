#pragma once

#include <algorithm>
#include <concepts>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "inter/corpus.hpp"
#include "inter/error.hpp"
#include "inter/ranking.hpp"

namespace inter {

enum class PromptKind { Initial, Refine };

inline constexpr std::string_view kQueryPlaceholder = "{query}";
inline constexpr std::string_view kPassagesPlaceholder = "{passages}";

inline constexpr std::string_view kInitialPromptText =
    "Please write a passage to answer the question.\nQuestion: {query}\nPassage:";
inline constexpr std::string_view kRefinePromptText =
    "Give a question {query} and its possible answering passages {passages}\n"
    "Please write a correct answering passage:";

namespace detail {

inline std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
    return n;
}

}  // namespace detail

class PromptTemplate {
public:
    // Initial templates carry `{query}` once and no `{passages}`; refine
    // templates carry each placeholder exactly once.
    PromptTemplate(PromptKind kind, std::string body) : kind_(kind), body_(std::move(body)) {
        const auto q = detail::count_occurrences(body_, kQueryPlaceholder);
        const auto p = detail::count_occurrences(body_, kPassagesPlaceholder);
        if (q != 1) throw ValidationError("prompt template must contain {query} exactly once");
        if (kind_ == PromptKind::Initial && p != 0)
            throw ValidationError("initial prompt template must not contain {passages}");
        if (kind_ == PromptKind::Refine && p != 1)
            throw ValidationError("refine prompt template must contain {passages} exactly once");
    }

    static PromptTemplate initial() { return {PromptKind::Initial, std::string(kInitialPromptText)}; }
    static PromptTemplate refine() { return {PromptKind::Refine, std::string(kRefinePromptText)}; }

    // The file content is used verbatim, minus one trailing newline.
    static PromptTemplate from_file(PromptKind kind, const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ValidationError("cannot open prompt template: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        std::string body = ss.str();
        if (body.ends_with("\r\n")) {
            body.resize(body.size() - 2);
        } else if (body.ends_with('\n')) {
            body.pop_back();
        }
        return {kind, std::move(body)};
    }

    PromptKind kind() const noexcept { return kind_; }
    const std::string& body() const noexcept { return body_; }

    // Single pass, so placeholder-like text inside substituted values is left
    // alone.
    std::string render(std::string_view query, std::string_view passages = {}) const {
        std::string out;
        out.reserve(body_.size() + query.size() + passages.size());
        std::string_view rest = body_;
        while (!rest.empty()) {
            auto qp = rest.find(kQueryPlaceholder);
            auto pp = kind_ == PromptKind::Refine ? rest.find(kPassagesPlaceholder) : std::string_view::npos;
            auto next = std::min(qp, pp);
            if (next == std::string_view::npos) {
                out.append(rest);
                break;
            }
            out.append(rest.substr(0, next));
            if (next == qp) {
                out.append(query);
                rest.remove_prefix(next + kQueryPlaceholder.size());
            } else {
                out.append(passages);
                rest.remove_prefix(next + kPassagesPlaceholder.size());
            }
        }
        return out;
    }

private:
    PromptKind kind_;
    std::string body_;
};

inline std::string initial_prompt(const Query& q, const PromptTemplate& tmpl = PromptTemplate::initial()) {
    std::string text = trim(q.text);
    if (text.empty()) throw ValidationError("query " + q.id + " has empty text");
    return tmpl.render(text);
}

// "1. <text>\n2. <text>..." over the first `k_used` entries, each cut to
// `passage_words` whitespace words.
template <typename TextLookup>
    requires std::invocable<TextLookup, const std::string&>
std::string numbered_passages(const RankedList& docs, TextLookup&& text_of, std::size_t k_used,
                              std::size_t passage_words = kDefaultTruncationWords) {
    std::string out;
    const std::size_t n = std::min(k_used, docs.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out.push_back('\n');
        out += std::to_string(i + 1);
        out += ". ";
        out += trim(truncate_tokens(text_of(docs.entries[i].doc_id), passage_words));
    }
    return out;
}

template <typename TextLookup>
    requires std::invocable<TextLookup, const std::string&>
std::string refine_prompt(const Query& q, const RankedList& docs, TextLookup&& text_of, std::size_t k_used,
                          std::size_t passage_words = kDefaultTruncationWords,
                          const PromptTemplate& tmpl = PromptTemplate::refine()) {
    if (docs.empty()) throw ValidationError("refine_prompt: no retrieved documents for query " + q.id);
    if (k_used == 0) throw ValidationError("refine_prompt: k_used must be >= 1");
    std::string text = trim(q.text);
    if (text.empty()) throw ValidationError("query " + q.id + " has empty text");
    return tmpl.render(text, numbered_passages(docs, text_of, k_used, passage_words));
}

inline std::string refine_prompt(const Query& q, const RankedList& docs, const Corpus& corpus, std::size_t k_used,
                                 std::size_t passage_words = kDefaultTruncationWords,
                                 const PromptTemplate& tmpl = PromptTemplate::refine()) {
    return refine_prompt(
        q, docs, [&](const std::string& id) { return corpus.at(id).full_text(); }, k_used, passage_words, tmpl);
}

}  // namespace inter
