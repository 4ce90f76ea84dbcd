#pragma once

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>

#include "httplib.h"

#include "inter/error.hpp"

namespace inter::http {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;    // always starts with '/'
};

// Splits "http://host:8080/v1/embed" into origin and path.
inline Endpoint split_url(std::string_view url) {
    auto scheme = url.find("://");
    if (scheme == std::string_view::npos)
        throw ValidationError("URL must include a scheme: " + std::string(url));
    auto slash = url.find('/', scheme + 3);
    Endpoint e;
    if (slash == std::string_view::npos) {
        e.origin = std::string(url);
        e.path = "/";
    } else {
        e.origin = std::string(url.substr(0, slash));
        e.path = std::string(url.substr(slash));
    }
    if (e.origin.size() <= scheme + 3) throw ValidationError("URL has no host: " + std::string(url));
    return e;
}

inline std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

struct Response {
    int status = 0;
    std::string body;
};

// One JSON POST. Throws TransportError when no HTTP response arrives.
inline Response post_json(const Endpoint& ep, const std::string& body,
                          const std::optional<std::string>& bearer,
                          std::chrono::milliseconds timeout) {
    httplib::Client cli(ep.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (bearer) headers.emplace("Authorization", "Bearer " + *bearer);
    auto res = cli.Post(ep.path, headers, body, "application/json");
    if (!res) {
        throw TransportError("POST " + ep.origin + ep.path + " failed: " +
                             httplib::to_string(res.error()));
    }
    return Response{res->status, res->body};
}

}  // namespace inter::http
