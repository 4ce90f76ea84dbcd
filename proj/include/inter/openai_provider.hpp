#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "inter/http.hpp"
#include "inter/llm_gateway.hpp"

namespace inter {

struct OpenAiConfig {
    std::string url = "https://api.openai.com/v1";  // INTER_LLM_URL
    std::string model = "gpt-3.5-turbo";            // INTER_LLM_MODEL
    std::optional<std::string> api_key;             // INTER_LLM_KEY, never from files
    bool supports_n = true;
    std::chrono::milliseconds timeout{120000};

    // Fills url/model/key from the environment where set.
    void apply_env() {
        if (auto v = http::env("INTER_LLM_URL")) url = *v;
        if (auto v = http::env("INTER_LLM_MODEL")) model = *v;
        api_key = http::env("INTER_LLM_KEY");
    }
};

// OpenAI-compatible chat completions. The prompt is sent as a single user
// message; h samples come from one call with `n` = h, or from h calls when
// the server does not support `n`.
class OpenAiChatProvider final : public LlmProvider {
public:
    explicit OpenAiChatProvider(OpenAiConfig config) : config_(std::move(config)) {
        std::string url = config_.url;
        while (!url.empty() && url.back() == '/') url.pop_back();
        if (!url.ends_with("/chat/completions")) url += "/chat/completions";
        endpoint_ = http::split_url(url);
    }

    std::string tag() const override { return "openai:" + config_.model; }

    std::vector<std::string> complete(const GenerationRequest& request) const override {
        if (config_.supports_n) return call(request, request.num_samples);
        std::vector<std::string> out;
        for (std::size_t i = 0; i < request.num_samples; ++i) {
            auto one = call(request, std::nullopt);
            out.insert(out.end(), one.begin(), one.end());
        }
        return out;
    }

    nlohmann::json payload(const GenerationRequest& request, std::optional<std::size_t> n) const {
        nlohmann::json body{{"model", config_.model},
                            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
                            {"temperature", request.temperature},
                            {"frequency_penalty", request.frequency_penalty},
                            {"max_tokens", request.max_tokens}};
        if (n) body["n"] = *n;
        return body;
    }

private:
    std::vector<std::string> call(const GenerationRequest& request, std::optional<std::size_t> n) const {
        auto res = http::post_json(endpoint_, payload(request, n).dump(), config_.api_key, config_.timeout);
        if (res.status == 401 || res.status == 403)
            throw AuthError("LLM service rejected credentials (HTTP " + std::to_string(res.status) + ")");
        if (res.status == 408 || res.status == 429 || res.status >= 500)
            throw TransportError("LLM service returned HTTP " + std::to_string(res.status));
        if (res.status != 200)
            throw Error("LLM service rejected the request (HTTP " + std::to_string(res.status) + "): " + res.body);

        auto body = nlohmann::json::parse(res.body, nullptr, false);
        if (body.is_discarded() || !body.contains("choices") || !body["choices"].is_array())
            throw TransportError("malformed chat completion response: missing \"choices\"");
        std::vector<std::string> out;
        for (const auto& choice : body["choices"]) {
            const auto msg = choice.find("message");
            if (msg == choice.end() || !msg->is_object()) {
                out.emplace_back();
                continue;
            }
            const auto content = msg->find("content");
            out.push_back(content != msg->end() && content->is_string() ? content->get<std::string>() : "");
        }
        return out;
    }

    OpenAiConfig config_;
    http::Endpoint endpoint_;
};

}  // namespace inter
