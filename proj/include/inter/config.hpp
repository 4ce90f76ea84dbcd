#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "json.hpp"

#include "inter/error.hpp"

namespace inter {

inline constexpr std::uint32_t kConfigSchemaVersion = 1;

enum class RmKind { Sparse, Dense, Hybrid };
enum class DensePolicy { ChunkMean, Whole };

inline std::string_view to_string(RmKind k) noexcept {
    switch (k) {
        case RmKind::Sparse: return "sparse";
        case RmKind::Dense: return "dense";
        case RmKind::Hybrid: return "hybrid";
    }
    return "?";
}

inline RmKind parse_rm_kind(std::string_view s) {
    if (s == "sparse") return RmKind::Sparse;
    if (s == "dense") return RmKind::Dense;
    if (s == "hybrid") return RmKind::Hybrid;
    throw ValidationError("unknown retrieval model '" + std::string(s) + "' (expected sparse, dense or hybrid)");
}

inline std::string_view to_string(DensePolicy p) noexcept {
    return p == DensePolicy::ChunkMean ? "chunk-mean" : "whole";
}

inline DensePolicy parse_dense_policy(std::string_view s) {
    if (s == "chunk-mean") return DensePolicy::ChunkMean;
    if (s == "whole") return DensePolicy::Whole;
    throw ValidationError("unknown dense query policy '" + std::string(s) + "' (expected chunk-mean or whole)");
}

struct LlmConfig {
    std::string provider = "mock";  // mock | openai
    std::string model = "gpt-3.5-turbo";
    std::string url;                // empty: INTER_LLM_URL or the OpenAI default
    bool supports_n = true;
    double requests_per_minute = 0.0;  // 0: unlimited
    std::string cache;              // JSONL cache path, empty for none
    bool offline = false;           // cache misses are errors
    std::string mock_knowledge;     // JSON word -> related words, mock only
    std::size_t max_retries = 3;
    std::int64_t initial_backoff_ms = 500;
    std::int64_t timeout_ms = 120000;
};

// Configuration of one InteR run.
struct InterConfig {
    std::size_t M = 2;
    std::size_t h = 10;
    std::size_t k = 15;
    RmKind intermediate_rm = RmKind::Dense;
    RmKind final_rm = RmKind::Sparse;
    std::size_t final_k = 1000;
    std::string expansion = "interleaved";
    std::string separator = " ";
    double temperature = 1.0;
    double frequency_penalty = 0.0;
    std::size_t max_tokens = 256;
    std::size_t passage_words = 256;
    DensePolicy dense_policy = DensePolicy::ChunkMean;
    std::optional<std::int64_t> seed;
    bool strict = false;
    std::size_t workers = 0;  // 0: hardware concurrency
    std::string initial_template;  // optional template file paths
    std::string refine_template;
    LlmConfig llm;

    void validate() const {
        if (h == 0) throw ValidationError("h must be >= 1");
        if (k == 0) throw ValidationError("k must be >= 1");
        if (final_k == 0) throw ValidationError("final_k must be >= 1");
        if (max_tokens == 0) throw ValidationError("max_tokens must be >= 1");
        if (passage_words == 0) throw ValidationError("passage_words must be >= 1");
        if (!(temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
        if (expansion != "interleaved") throw ValidationError("unknown expansion '" + expansion + "'");
        if (separator != " " && separator != "\n") throw ValidationError("separator must be \" \" or \"\\n\"");
        if (intermediate_rm == RmKind::Hybrid && k < 2) throw ValidationError("hybrid retrieval needs k >= 2");
        if (final_rm == RmKind::Hybrid && final_k < 2) throw ValidationError("hybrid retrieval needs final_k >= 2");
        if (llm.provider != "mock" && llm.provider != "openai")
            throw ValidationError("unknown llm provider '" + llm.provider + "' (expected mock or openai)");
        if (llm.requests_per_minute < 0) throw ValidationError("requests_per_minute must be >= 0");
    }

    nlohmann::json to_json() const {
        nlohmann::json llm_j{{"provider", llm.provider},
                             {"model", llm.model},
                             {"url", llm.url},
                             {"supports_n", llm.supports_n},
                             {"requests_per_minute", llm.requests_per_minute},
                             {"cache", llm.cache},
                             {"offline", llm.offline},
                             {"mock_knowledge", llm.mock_knowledge},
                             {"max_retries", llm.max_retries},
                             {"initial_backoff_ms", llm.initial_backoff_ms},
                             {"timeout_ms", llm.timeout_ms}};
        nlohmann::json j{{"M", M},
                         {"h", h},
                         {"k", k},
                         {"intermediate_rm", to_string(intermediate_rm)},
                         {"final_rm", to_string(final_rm)},
                         {"final_k", final_k},
                         {"expansion", expansion},
                         {"separator", separator},
                         {"temperature", temperature},
                         {"frequency_penalty", frequency_penalty},
                         {"max_tokens", max_tokens},
                         {"passage_words", passage_words},
                         {"dense_policy", to_string(dense_policy)},
                         {"strict", strict},
                         {"workers", workers},
                         {"initial_template", initial_template},
                         {"refine_template", refine_template},
                         {"llm", llm_j}};
        j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
        return j;
    }

    // Overlays the keys present in `j` onto this config. Unknown keys and
    // ill-typed values are errors.
    void merge_json(const nlohmann::json& j) {
        if (!j.is_object()) throw ValidationError("config must be a JSON object");
        for (const auto& [key, value] : j.items()) {
            try {
                if (key == "M") M = non_negative(value, key);
                else if (key == "h") h = non_negative(value, key);
                else if (key == "k") k = non_negative(value, key);
                else if (key == "intermediate_rm") intermediate_rm = parse_rm_kind(value.get<std::string>());
                else if (key == "final_rm") final_rm = parse_rm_kind(value.get<std::string>());
                else if (key == "final_k") final_k = non_negative(value, key);
                else if (key == "expansion") expansion = value.get<std::string>();
                else if (key == "separator") separator = value.get<std::string>();
                else if (key == "temperature") temperature = number(value, key);
                else if (key == "frequency_penalty") frequency_penalty = number(value, key);
                else if (key == "max_tokens") max_tokens = non_negative(value, key);
                else if (key == "passage_words") passage_words = non_negative(value, key);
                else if (key == "dense_policy") dense_policy = parse_dense_policy(value.get<std::string>());
                else if (key == "seed") seed = value.is_null() ? std::nullopt : std::optional<std::int64_t>(integer(value, key));
                else if (key == "strict") strict = value.get<bool>();
                else if (key == "workers") workers = non_negative(value, key);
                else if (key == "initial_template") initial_template = value.get<std::string>();
                else if (key == "refine_template") refine_template = value.get<std::string>();
                else if (key == "llm") merge_llm(value);
                else throw ValidationError("unknown config key '" + key + "'");
            } catch (const nlohmann::json::exception&) {
                throw ValidationError("config key '" + key + "' has the wrong type");
            }
        }
    }

    static InterConfig from_json(const nlohmann::json& j) {
        InterConfig c;
        c.merge_json(j);
        return c;
    }

    static InterConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open config file: " + path);
        auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) throw ValidationError(path + ": not valid JSON");
        return from_json(j);
    }

private:
    static std::int64_t integer(const nlohmann::json& v, const std::string& key) {
        if (!v.is_number_integer()) throw ValidationError("config key '" + key + "' must be an integer");
        return v.get<std::int64_t>();
    }
    static std::size_t non_negative(const nlohmann::json& v, const std::string& key) {
        auto i = integer(v, key);
        if (i < 0) throw ValidationError("config key '" + key + "' must be >= 0");
        return static_cast<std::size_t>(i);
    }
    static double number(const nlohmann::json& v, const std::string& key) {
        if (!v.is_number()) throw ValidationError("config key '" + key + "' must be a number");
        return v.get<double>();
    }

    void merge_llm(const nlohmann::json& j) {
        if (!j.is_object()) throw ValidationError("config key 'llm' must be an object");
        for (const auto& [key, value] : j.items()) {
            const std::string path = "llm." + key;
            if (key == "provider") llm.provider = value.get<std::string>();
            else if (key == "model") llm.model = value.get<std::string>();
            else if (key == "url") llm.url = value.get<std::string>();
            else if (key == "supports_n") llm.supports_n = value.get<bool>();
            else if (key == "requests_per_minute") llm.requests_per_minute = number(value, path);
            else if (key == "cache") llm.cache = value.get<std::string>();
            else if (key == "offline") llm.offline = value.get<bool>();
            else if (key == "mock_knowledge") llm.mock_knowledge = value.get<std::string>();
            else if (key == "max_retries") llm.max_retries = non_negative(value, path);
            else if (key == "initial_backoff_ms") llm.initial_backoff_ms = integer(value, path);
            else if (key == "timeout_ms") llm.timeout_ms = integer(value, path);
            else if (key == "api_key" || key == "key")
                throw ValidationError("API keys are read from INTER_LLM_KEY only, never from config files");
            else throw ValidationError("unknown config key '" + path + "'");
        }
    }
};

}  // namespace inter
