#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "inter/dense_index.hpp"
#include "inter/http.hpp"

namespace inter {

struct HttpEmbedderConfig {
    std::string url;                     // INTER_EMBED_URL
    std::optional<std::string> api_key;  // INTER_EMBED_KEY
    std::size_t dim = 0;
    std::chrono::milliseconds timeout{30000};

    static HttpEmbedderConfig from_env(std::size_t dim) {
        HttpEmbedderConfig c;
        c.url = http::env("INTER_EMBED_URL").value_or("");
        c.api_key = http::env("INTER_EMBED_KEY");
        c.dim = dim;
        return c;
    }
};

// Remote encoder speaking
//   POST {"texts": [...], "role": "query"|"document"} -> {"vectors": [[...], ...]}
// One request per role group, texts in input order.
class HttpEmbedder final : public Embedder {
public:
    explicit HttpEmbedder(HttpEmbedderConfig config)
        : config_(std::move(config)), endpoint_(http::split_url(config_.url)) {
        if (config_.dim == 0) throw ValidationError("http embedder: dim must be >= 1");
    }

    std::size_t dim() const override { return config_.dim; }
    std::string mode() const override { return "http-service"; }

protected:
    std::vector<EmbeddingVector> encode_nonempty(std::span<const EncodeItem> items) const override {
        std::vector<EmbeddingVector> out(items.size());
        for (EmbedRole role : {EmbedRole::Query, EmbedRole::Document}) {
            std::vector<std::size_t> where;
            nlohmann::json texts = nlohmann::json::array();
            for (std::size_t i = 0; i < items.size(); ++i) {
                if (items[i].role != role) continue;
                where.push_back(i);
                texts.push_back(items[i].text);
            }
            if (where.empty()) continue;
            nlohmann::json req{{"texts", texts}, {"role", role_name(role)}};
            auto res = http::post_json(endpoint_, req.dump(), config_.api_key, config_.timeout);
            if (res.status == 401 || res.status == 403)
                throw AuthError("embedding service rejected credentials (HTTP " + std::to_string(res.status) + ")");
            if (res.status != 200)
                throw TransportError("embedding service returned HTTP " + std::to_string(res.status));
            auto body = nlohmann::json::parse(res.body, nullptr, false);
            if (body.is_discarded() || !body.contains("vectors") || !body["vectors"].is_array())
                throw TransportError("malformed embedding response: missing \"vectors\"");
            const auto& vecs = body["vectors"];
            if (vecs.size() != where.size())
                throw TransportError("embedding response has " + std::to_string(vecs.size()) +
                                     " vectors for " + std::to_string(where.size()) + " texts");
            for (std::size_t j = 0; j < where.size(); ++j) {
                if (!vecs[j].is_array()) throw TransportError("malformed embedding response: vector is not an array");
                EmbeddingVector v;
                for (const auto& x : vecs[j]) {
                    if (!x.is_number()) throw TransportError("malformed embedding response: non-numeric component");
                    v.push_back(x.get<float>());
                }
                out[where[j]] = std::move(v);
            }
        }
        return out;
    }

private:
    HttpEmbedderConfig config_;
    http::Endpoint endpoint_;
};

}  // namespace inter
