#include "ctikit/modelio.hpp"

#include <nlohmann/json.hpp>
#include <thread>

#include "ctikit/digest.hpp"
#include "ctikit/error.hpp"

namespace ctikit::modelio {

using nlohmann::json;

void SamplingParams::validate() const {
    auto in_range = [](double v) { return v >= kMinSampling && v <= kMaxSampling; };
    if (!in_range(temperature) || !in_range(top_p))
        throw ValidationError("sampling parameters must lie in [0.2, 1.0]");
}

SamplingParams sample_params(Rng& rng) {
    SamplingParams p;
    p.temperature = rng.uniform(kMinSampling, kMaxSampling);
    p.top_p = rng.uniform(kMinSampling, kMaxSampling);
    p.seed = rng.next_u64();
    return p;
}

json to_json(const SamplingParams& p) {
    return {{"temperature", p.temperature}, {"top_p", p.top_p}, {"seed", p.seed}};
}

SamplingParams sampling_from_json(const json& j) {
    SamplingParams p;
    p.temperature = j.at("temperature").get<double>();
    p.top_p = j.at("top_p").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
}

std::string prompt_text(const CompletionRequest& request) {
    if (request.messages.size() == 1 && request.messages[0].role == "user") return request.messages[0].content;
    std::string out;
    for (const auto& m : request.messages) {
        out += m.role;
        out += ": ";
        out += m.content;
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string MockBackend::digest(const CompletionRequest& request) {
    std::string buf;
    auto field = [&buf](std::string_view s) {
        buf.append(s);
        buf.push_back('\x1f');
    };
    field(request.backend_id);
    for (const auto& m : request.messages) {
        field(m.role);
        field(m.content);
    }
    field(std::to_string(request.params.seed));
    field(format_double(request.params.temperature));
    field(format_double(request.params.top_p));
    if (request.mode == OutputMode::Structured) field(request.schema);
    return sha256_hex(buf);
}

std::string MockBackend::complete(const CompletionRequest& request) {
    const std::string d = digest(request);
    if (request.mode == OutputMode::Structured) {
        json out = {{"mock_digest", d}};
        if (request.schema == "entities") out["entities"] = json::array();
        if (request.schema == "relations") out["relations"] = json::array();
        if (request.schema == "ranking") out["order"] = json::array();
        return out.dump();
    }
    // Marker, the digest, then a digest-dependent number of chained hex words
    // so downstream token counts vary.
    std::string out(kMarker);
    out += ' ';
    out += d;
    const int extra = std::stoi(d.substr(0, 2), nullptr, 16) % 24;
    std::string link = d;
    for (int i = 0; i < extra; ++i) {
        link = sha256_hex(link);
        out += ' ';
        out += link.substr(0, 8);
    }
    return out;
}

std::string DelayedBackend::complete(const CompletionRequest& request) {
    std::this_thread::sleep_for(delay_());
    return inner_->complete(request);
}

// ---------------------------------------------------------------------------

void BackendRegistry::add(std::string id, std::shared_ptr<Backend> backend) {
    if (id.empty() || !backend) throw ConfigError("backend registration needs an id and an implementation");
    if (!backends_.emplace(id, std::move(backend)).second) throw ConfigError("duplicate backend id '" + id + "'");
}

Backend& BackendRegistry::get(std::string_view id) const {
    auto it = backends_.find(std::string(id));
    if (it == backends_.end()) throw BackendError("unregistered backend '" + std::string(id) + "'");
    return *it->second;
}

std::vector<std::string> BackendRegistry::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, b] : backends_) out.push_back(id);
    return out;
}

GenerationResult generate(const BackendRegistry& registry, const CompletionRequest& request) {
    Backend& backend = registry.get(request.backend_id);
    if (request.messages.empty() || prompt_text(request).empty()) throw BackendError("empty prompt");
    const auto start = std::chrono::steady_clock::now();
    std::string text = backend.complete(request);
    const auto latency = std::chrono::steady_clock::now() - start;
    if (text.empty()) throw BackendError("empty completion from backend '" + request.backend_id + "'");
    return {std::move(text), request.backend_id, request.params,
            std::chrono::duration_cast<std::chrono::nanoseconds>(latency)};
}

GenerationResult generate(const BackendRegistry& registry, std::string_view backend_id, std::string_view prompt,
                          const SamplingParams& params) {
    CompletionRequest req;
    req.backend_id = std::string(backend_id);
    req.messages.push_back({"user", std::string(prompt)});
    req.params = params;
    return generate(registry, req);
}

}  // namespace ctikit::modelio
