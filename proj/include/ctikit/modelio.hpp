#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "ctikit/rng.hpp"

namespace ctikit::modelio {

inline constexpr double kMinSampling = 0.2;
inline constexpr double kMaxSampling = 1.0;

/// Decoding parameters for one generation call.
struct SamplingParams {
    double temperature = 0.7;
    double top_p = 0.9;
    std::uint64_t seed = 0;

    void validate() const;  // both values must lie in [0.2, 1.0]
    bool operator==(const SamplingParams&) const = default;
};

/// Temperature and top-p drawn independently and uniformly on [0.2, 1.0].
SamplingParams sample_params(Rng& rng);

nlohmann::json to_json(const SamplingParams& p);
SamplingParams sampling_from_json(const nlohmann::json& j);

enum class OutputMode { Text, Structured };

struct Message {
    std::string role;
    std::string content;
};

struct CompletionRequest {
    std::string backend_id;
    std::vector<Message> messages;
    SamplingParams params;
    OutputMode mode = OutputMode::Text;
    std::string schema;  // structured-output schema name
};

/// A text-generation endpoint. Implementations must be safe for concurrent use.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const CompletionRequest& request) = 0;
};

/// Deterministic stand-in: output is a SHA-256 digest of (backend id, prompt,
/// seed, temperature, top_p) behind a fixed marker.
class MockBackend final : public Backend {
public:
    static constexpr std::string_view kMarker = "[mock]";
    std::string complete(const CompletionRequest& request) override;

    static std::string digest(const CompletionRequest& request);
};

/// Wraps a callable; used for scripted backends in tests and demos.
class FunctionBackend final : public Backend {
public:
    using Fn = std::function<std::string(const CompletionRequest&)>;
    explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}
    std::string complete(const CompletionRequest& request) override { return fn_(request); }

private:
    Fn fn_;
};

/// Adds a per-call delay before delegating; used to randomize latencies.
class DelayedBackend final : public Backend {
public:
    using DelayFn = std::function<std::chrono::microseconds()>;
    DelayedBackend(std::shared_ptr<Backend> inner, DelayFn delay) : inner_(std::move(inner)), delay_(std::move(delay)) {}
    std::string complete(const CompletionRequest& request) override;

private:
    std::shared_ptr<Backend> inner_;
    DelayFn delay_;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{250};
    double multiplier = 2.0;
};

struct HttpEndpoint {
    std::string url;       // e.g. http://host:8080/v1/generate
    std::string model;
    std::string auth_env;  // env var holding a bearer token; empty for none
    std::chrono::milliseconds timeout{30000};
    RetryPolicy retry;
};

/// POSTs a JSON body with the endpoint's retry policy and returns the parsed
/// response. 5xx, 429 and transport failures are retried; the last failure is
/// raised as TransportError. Other non-2xx statuses raise BackendError.
nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body);

/// Remote backend speaking the wire contract:
///   request  {model, messages: [{role, content}], temperature, top_p, seed[, response_format]}
///   response {text}
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
    std::string complete(const CompletionRequest& request) override;

    static nlohmann::json request_body(const HttpEndpoint& endpoint, const CompletionRequest& request);

private:
    HttpEndpoint endpoint_;
};

/// Immutable-after-load set of named backends. Iteration order is by id.
class BackendRegistry {
public:
    void add(std::string id, std::shared_ptr<Backend> backend);
    bool contains(std::string_view id) const { return backends_.contains(std::string(id)); }
    Backend& get(std::string_view id) const;
    std::vector<std::string> ids() const;
    std::size_t size() const { return backends_.size(); }
    bool empty() const { return backends_.empty(); }

private:
    std::map<std::string, std::shared_ptr<Backend>> backends_;
};

struct GenerationResult {
    std::string text;
    std::string backend_id;
    SamplingParams params;
    std::chrono::nanoseconds latency{0};
};

/// Runs one completion. Throws BackendError("unregistered backend ...") for
/// unknown ids, BackendError for an empty completion, and lets transport
/// errors propagate. The request is passed through unmodified.
GenerationResult generate(const BackendRegistry& registry, const CompletionRequest& request);

GenerationResult generate(const BackendRegistry& registry, std::string_view backend_id, std::string_view prompt,
                          const SamplingParams& params);

/// Serialized prompt bytes of a request as recorded in transcripts.
std::string prompt_text(const CompletionRequest& request);

}  // namespace ctikit::modelio
