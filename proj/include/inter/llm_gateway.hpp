#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "inter/corpus.hpp"
#include "inter/error.hpp"
#include "inter/hash.hpp"

namespace inter {

struct GenerationRequest {
    std::string prompt;
    std::size_t num_samples = 10;  // h
    double temperature = 1.0;
    double frequency_penalty = 0.0;
    std::size_t max_tokens = 256;
    std::optional<std::int64_t> seed;  // honoured by the mock only

    void validate() const {
        if (trim(prompt).empty()) throw ValidationError("generation prompt must be non-empty");
        if (num_samples == 0) throw ValidationError("num_samples must be >= 1");
        if (max_tokens == 0) throw ValidationError("max_tokens must be >= 1");
        if (!(temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
    }

    nlohmann::json params_json() const {
        nlohmann::json j{{"n", num_samples},
                         {"temperature", temperature},
                         {"frequency_penalty", frequency_penalty},
                         {"max_tokens", max_tokens}};
        j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
        return j;
    }
};

// The h passages produced for one prompt, in receipt order.
struct KnowledgeCollection {
    std::vector<std::string> passages;
    std::string provider_tag;

    std::size_t size() const noexcept { return passages.size(); }
    bool empty() const noexcept { return passages.empty(); }
};

// Raw text generator. complete() returns one sample per requested sample
// (fewer only if the backend returns fewer) and must be safe to call from
// several threads.
class LlmProvider {
public:
    virtual ~LlmProvider() = default;
    virtual std::string tag() const = 0;
    virtual std::vector<std::string> complete(const GenerationRequest& request) const = 0;
};

// Samples are trimmed, cut to max_tokens whitespace words, and dropped if
// empty.
inline KnowledgeCollection generate(const LlmProvider& provider, const GenerationRequest& request) {
    request.validate();
    KnowledgeCollection out;
    out.provider_tag = provider.tag();
    for (const auto& raw : provider.complete(request)) {
        std::string s = trim(truncate_tokens(trim(raw), request.max_tokens));
        if (!s.empty()) out.passages.push_back(std::move(s));
    }
    if (out.passages.empty())
        throw EmptyGenerationError("all " + std::to_string(request.num_samples) +
                                   " generated samples were empty (" + out.provider_tag + ")");
    return out;
}

// ---------------------------------------------------------------------------
// Mock generator
// ---------------------------------------------------------------------------

struct MockLlmOptions {
    // Word -> related words appended after it whenever it is a content word
    // of the prompt. Lets tests plant vocabulary that the raw query lacks.
    std::map<std::string, std::vector<std::string>> knowledge;
    std::size_t max_content_words = 32;
    std::size_t filler_words = 16;

    static MockLlmOptions from_knowledge_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open mock knowledge file: " + path);
        auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw ValidationError(path + ": expected a JSON object of word -> [related words]");
        MockLlmOptions o;
        for (const auto& [word, rel] : j.items()) {
            if (!rel.is_array()) throw ValidationError(path + ": value for '" + word + "' is not an array");
            auto& dst = o.knowledge[word];
            for (const auto& r : rel) {
                if (!r.is_string()) throw ValidationError(path + ": non-string entry for '" + word + "'");
                dst.push_back(r.get<std::string>());
            }
        }
        return o;
    }
};

namespace detail {

// Words of the two prompt templates plus common function words; never
// treated as prompt content.
inline const std::unordered_set<std::string>& mock_ignored_words() {
    static const std::unordered_set<std::string> words = {
        "please", "write", "passage", "passages", "answer", "answering", "question", "give",
        "its", "possible", "correct", "a", "an", "the", "of", "to", "and", "or", "is", "are",
        "was", "were", "be", "in", "on", "for", "with", "by", "as", "at", "it", "this", "that",
        "what", "how", "why", "who", "when", "where", "which", "do", "does", "did"};
    return words;
}

inline std::string pseudo_word(std::uint64_t bits) {
    std::string w = "zq";
    for (int i = 0; i < 6; ++i) {
        w.push_back(static_cast<char>('a' + bits % 26));
        bits /= 26;
    }
    return w;
}

}  // namespace detail

// Content words of a prompt: tokens that are not template or function words,
// deduplicated in order of first appearance.
inline std::vector<std::string> prompt_content_words(std::string_view prompt, std::size_t cap) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (auto& t : tokenize(prompt)) {
        if (out.size() >= cap) break;
        if (detail::mock_ignored_words().contains(t)) continue;
        if (seen.insert(t).second) out.push_back(std::move(t));
    }
    return out;
}

// Passage `index` for a request: every content word of the prompt (each
// followed by its planted related words), then filler pseudo-words drawn
// from fnv1a64(prompt), the seed and the index. Pure function.
inline std::string mock_passage(const GenerationRequest& request, std::size_t index,
                                const MockLlmOptions& options = {}) {
    std::vector<std::string> words;
    for (const auto& w : prompt_content_words(request.prompt, options.max_content_words)) {
        words.push_back(w);
        if (auto it = options.knowledge.find(w); it != options.knowledge.end()) {
            words.insert(words.end(), it->second.begin(), it->second.end());
        }
    }
    const std::uint64_t seed = static_cast<std::uint64_t>(request.seed.value_or(0));
    std::uint64_t state = mix64(fnv1a64(request.prompt) ^ mix64(seed) ^ mix64(index + 0x51ed27ULL));
    for (std::size_t j = 0; j < options.filler_words; ++j) {
        state = mix64(state);
        words.push_back(detail::pseudo_word(state));
    }
    return join(words);
}

inline KnowledgeCollection mock_generate(const GenerationRequest& request,
                                         const MockLlmOptions& options = {}) {
    request.validate();
    KnowledgeCollection out;
    out.provider_tag = "mock";
    for (std::size_t i = 0; i < request.num_samples; ++i) {
        out.passages.push_back(trim(truncate_tokens(mock_passage(request, i, options), request.max_tokens)));
    }
    return out;
}

class MockLlmProvider final : public LlmProvider {
public:
    explicit MockLlmProvider(MockLlmOptions options = {}) : options_(std::move(options)) {}

    std::string tag() const override { return "mock"; }

    std::vector<std::string> complete(const GenerationRequest& request) const override {
        std::vector<std::string> out;
        out.reserve(request.num_samples);
        for (std::size_t i = 0; i < request.num_samples; ++i) out.push_back(mock_passage(request, i, options_));
        return out;
    }

private:
    MockLlmOptions options_;
};

// ---------------------------------------------------------------------------
// Decorators: retry, rate limit, cache
// ---------------------------------------------------------------------------

struct RetryPolicy {
    std::size_t max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    double multiplier = 2.0;
};

// Retries TransportError with exponential backoff. Authentication and other
// errors propagate immediately.
class RetryingProvider final : public LlmProvider {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    RetryingProvider(std::shared_ptr<const LlmProvider> inner, RetryPolicy policy = {},
                     Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
        : inner_(std::move(inner)), policy_(policy), sleep_(std::move(sleeper)) {}

    std::string tag() const override { return inner_->tag(); }

    std::vector<std::string> complete(const GenerationRequest& request) const override {
        auto delay = policy_.initial_backoff;
        for (std::size_t attempt = 0;; ++attempt) {
            try {
                return inner_->complete(request);
            } catch (const TransportError& e) {
                if (attempt >= policy_.max_retries) {
                    throw TransportError(std::string(e.what()) + " (after " +
                                         std::to_string(attempt + 1) + " attempts)");
                }
            }
            sleep_(delay);
            delay = std::chrono::milliseconds(
                static_cast<std::int64_t>(static_cast<double>(delay.count()) * policy_.multiplier));
        }
    }

private:
    std::shared_ptr<const LlmProvider> inner_;
    RetryPolicy policy_;
    Sleeper sleep_;
};

// Spaces calls at least 60s / requests_per_minute apart across all threads.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_minute)
        : interval_(requests_per_minute > 0
                        ? std::chrono::duration_cast<Clock::duration>(
                              std::chrono::duration<double>(60.0 / requests_per_minute))
                        : Clock::duration::zero()) {}

    void acquire() {
        if (interval_ == Clock::duration::zero()) return;
        Clock::time_point slot;
        {
            std::lock_guard lock(mu_);
            const auto now = Clock::now();
            slot = std::max(now, next_);
            next_ = slot + interval_;
        }
        std::this_thread::sleep_until(slot);
    }

private:
    using Clock = std::chrono::steady_clock;
    Clock::duration interval_;
    Clock::time_point next_{};
    std::mutex mu_;
};

class RateLimitedProvider final : public LlmProvider {
public:
    RateLimitedProvider(std::shared_ptr<const LlmProvider> inner, std::shared_ptr<RateLimiter> limiter)
        : inner_(std::move(inner)), limiter_(std::move(limiter)) {}

    std::string tag() const override { return inner_->tag(); }

    std::vector<std::string> complete(const GenerationRequest& request) const override {
        limiter_->acquire();
        return inner_->complete(request);
    }

private:
    std::shared_ptr<const LlmProvider> inner_;
    std::shared_ptr<RateLimiter> limiter_;
};

// sha256 over the provider tag, prompt and sampling parameters.
inline std::string generation_cache_key(const std::string& provider_tag, const GenerationRequest& r) {
    nlohmann::json j{{"provider", provider_tag}, {"prompt", r.prompt}, {"params", r.params_json()}};
    return sha256_hex(j.dump());
}

// Append-only JSONL store of raw completions, one
// {"key", "provider", "prompt", "params", "samples"} object per line. In
// offline mode a miss is an error and the inner provider is never called.
class CachingProvider final : public LlmProvider {
public:
    CachingProvider(std::shared_ptr<const LlmProvider> inner, std::string path, bool offline = false)
        : inner_(std::move(inner)), path_(std::move(path)), offline_(offline) {
        std::ifstream in(path_);
        std::string line;
        std::size_t lineno = 0;
        while (in && std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("key") || !j.contains("samples"))
                throw FormatError(path_ + ":" + std::to_string(lineno) + ": malformed cache entry");
            entries_.emplace(j["key"].get<std::string>(), j["samples"].get<std::vector<std::string>>());
        }
    }

    std::string tag() const override { return inner_->tag(); }

    std::size_t hits() const {
        std::lock_guard lock(mu_);
        return hits_;
    }
    std::size_t misses() const {
        std::lock_guard lock(mu_);
        return misses_;
    }

    std::vector<std::string> complete(const GenerationRequest& request) const override {
        const std::string key = generation_cache_key(inner_->tag(), request);
        {
            std::lock_guard lock(mu_);
            if (auto it = entries_.find(key); it != entries_.end()) {
                ++hits_;
                return it->second;
            }
            ++misses_;
        }
        if (offline_) throw Error("LLM cache miss in offline mode (key " + key + ")");
        auto samples = inner_->complete(request);
        nlohmann::json j{{"key", key},
                         {"provider", inner_->tag()},
                         {"prompt", request.prompt},
                         {"params", request.params_json()},
                         {"samples", samples}};
        std::lock_guard lock(mu_);
        if (entries_.emplace(key, samples).second) {
            std::ofstream out(path_, std::ios::app);
            if (!out) throw IoError("cannot append to LLM cache " + path_);
            out << j.dump() << '\n';
            out.flush();
        }
        return samples;
    }

private:
    std::shared_ptr<const LlmProvider> inner_;
    std::string path_;
    bool offline_;
    mutable std::mutex mu_;
    mutable std::unordered_map<std::string, std::vector<std::string>> entries_;
    mutable std::size_t hits_ = 0;
    mutable std::size_t misses_ = 0;
};

}  // namespace inter
