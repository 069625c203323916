#include <httplib.h>

#include <cstdlib>
#include <nlohmann/json.hpp>
#include <thread>

#include "ctikit/error.hpp"
#include "ctikit/modelio.hpp"

namespace ctikit::modelio {

using nlohmann::json;

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("endpoint URL needs a scheme: '" + url + "'");
    auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

json post_json(const HttpEndpoint& endpoint, const json& body) {
    const auto [origin, path] = split_url(endpoint.url);
    httplib::Client client(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!endpoint.auth_env.empty()) {
        const char* token = std::getenv(endpoint.auth_env.c_str());
        if (!token || !*token) throw BackendError("auth token variable '" + endpoint.auth_env + "' is not set");
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    const std::string payload = body.dump();
    const int attempts = std::max(1, endpoint.retry.attempts);
    auto backoff = std::chrono::duration<double, std::milli>(endpoint.retry.initial_backoff);
    std::string last_error;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
        } else if (res->status >= 200 && res->status < 300) {
            try {
                return json::parse(res->body);
            } catch (const json::parse_error& e) {
                throw ParseError("malformed response body: " + std::string(e.what()), e.byte);
            }
        } else if (res->status >= 500 || res->status == 429) {
            last_error = "status " + std::to_string(res->status);
        } else {
            throw BackendError(endpoint.url + ": status " + std::to_string(res->status));
        }
        if (attempt < attempts) {
            std::this_thread::sleep_for(backoff);
            backoff *= endpoint.retry.multiplier;
        }
    }
    throw TransportError(endpoint.url + ": " + last_error + " after " + std::to_string(attempts) + " attempts");
}

json HttpBackend::request_body(const HttpEndpoint& endpoint, const CompletionRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    json body = {{"model", endpoint.model.empty() ? request.backend_id : endpoint.model},
                 {"messages", messages},
                 {"temperature", request.params.temperature},
                 {"top_p", request.params.top_p},
                 {"seed", request.params.seed}};
    if (request.mode == OutputMode::Structured) body["response_format"] = request.schema;
    return body;
}

std::string HttpBackend::complete(const CompletionRequest& request) {
    json response = post_json(endpoint_, request_body(endpoint_, request));
    if (!response.is_object() || !response.contains("text") || !response["text"].is_string())
        throw BackendError(endpoint_.url + ": response lacks a 'text' field");
    return response["text"].get<std::string>();
}

}  // namespace ctikit::modelio
