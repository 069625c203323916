#include "ctikit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "ctikit/digest.hpp"
#include "ctikit/error.hpp"

namespace ctikit {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::string_view where, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.contains(k)) throw ConfigError("unknown key '" + k + "' in " + std::string(where));
}

template <typename T>
T get(const json& j, const char* key, std::string_view where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad or missing '" + std::string(key) + "' in " + std::string(where));
    }
}

modelio::HttpEndpoint endpoint_from(const json& j, std::string_view where) {
    check_keys(j, where, {"id", "kind", "url", "model", "auth_env", "timeout_ms", "retries", "backoff_ms"});
    modelio::HttpEndpoint e;
    e.url = get<std::string>(j, "url", where);
    if (j.contains("model")) e.model = get<std::string>(j, "model", where);
    if (j.contains("auth_env")) e.auth_env = get<std::string>(j, "auth_env", where);
    if (j.contains("timeout_ms")) e.timeout = std::chrono::milliseconds(get<long>(j, "timeout_ms", where));
    if (j.contains("retries")) e.retry.attempts = get<int>(j, "retries", where);
    if (j.contains("backoff_ms")) e.retry.initial_backoff = std::chrono::milliseconds(get<long>(j, "backoff_ms", where));
    if (e.retry.attempts < 1) throw ConfigError(std::string(where) + ": retries must be at least 1");
    return e;
}

}  // namespace

AppConfig AppConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    check_keys(j, "config", {"seed", "workers", "sources", "precedence", "backends", "demos", "templates", "pacing",
                             "cache", "inference", "metrics", "joiner"});
    AppConfig c;
    c.raw = j;
    c.base_dir = base_dir;
    if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed", "config");
    if (j.contains("workers")) c.workers = get<std::size_t>(j, "workers", "config");
    if (c.workers == 0) throw ConfigError("workers must be at least 1");
    if (j.contains("joiner")) c.joiner = get<std::string>(j, "joiner", "config");

    if (j.contains("sources")) {
        for (const auto& [source, fields] : j["sources"].items()) {
            ingest::Dialect d = ingest::Dialect::builtin(source);
            if (!fields.is_object()) throw ConfigError("source '" + source + "' must map fields to JSON pointers");
            for (const auto& [field, ptr] : fields.items()) d.fields[field] = ptr.get<std::string>();
            c.ingest.dialects[source] = std::move(d);
        }
    }
    if (j.contains("precedence")) c.ingest.precedence = get<std::vector<std::string>>(j, "precedence", "config");
    c.ingest.validate();

    if (j.contains("backends")) {
        std::set<std::string> ids;
        for (const auto& b : j["backends"]) {
            BackendSpec s;
            s.id = get<std::string>(b, "id", "backend");
            s.kind = b.value("kind", std::string("mock"));
            if (s.kind == "http") {
                s.endpoint = endpoint_from(b, "backend '" + s.id + "'");
            } else if (s.kind == "mock") {
                check_keys(b, "backend '" + s.id + "'", {"id", "kind"});
            } else {
                throw ConfigError("backend '" + s.id + "' has unknown kind '" + s.kind + "'");
            }
            if (!ids.insert(s.id).second) throw ConfigError("duplicate backend id '" + s.id + "'");
            c.backends.push_back(std::move(s));
        }
    } else {
        c.backends = {{"mock-a", "mock", {}}, {"mock-b", "mock", {}}};
    }

    if (j.contains("demos")) c.demos = get<std::string>(j, "demos", "config");
    if (j.contains("templates")) {
        const auto& t = j["templates"];
        check_keys(t, "templates", {"generation", "revision", "questions", "reasoning"});
        if (t.contains("generation")) c.generation_template = get<std::string>(t, "generation", "templates");
        if (t.contains("revision")) c.revision_template = get<std::string>(t, "revision", "templates");
        if (t.contains("questions")) c.question_templates = get<std::string>(t, "questions", "templates");
        if (t.contains("reasoning")) c.reasoning_templates = get<std::string>(t, "reasoning", "templates");
    }

    if (j.contains("pacing")) {
        const auto& p = j["pacing"];
        check_keys(p, "pacing", {"preset", "T", "T1", "T2", "beta"});
        c.pacing_name = get<std::string>(p, "preset", "pacing");
        if (c.pacing_name == "custom") {
            for (const char* k : {"T", "T1", "T2", "beta"})
                if (!p.contains(k)) throw ConfigError(std::string("custom pacing needs '") + k + "'");
            c.pacing = {get<int>(p, "T", "pacing"), get<int>(p, "T1", "pacing"), get<int>(p, "T2", "pacing"),
                        get<double>(p, "beta", "pacing")};
        } else {
            for (const char* k : {"T", "T1", "T2", "beta"})
                if (p.contains(k)) throw ConfigError(std::string("pacing preset does not take '") + k + "'");
            c.pacing = curriculum::PacingSchedule::preset(c.pacing_name);
        }
        try {
            c.pacing.validate();
        } catch (const ValidationError& e) {
            throw ConfigError(e.what());
        }
    }

    if (j.contains("cache")) {
        const auto& k = j["cache"];
        check_keys(k, "cache", {"capacity", "ttl_seconds", "path"});
        if (k.contains("capacity")) c.cache.capacity = get<std::size_t>(k, "capacity", "cache");
        if (k.contains("ttl_seconds")) c.cache.ttl_seconds = get<double>(k, "ttl_seconds", "cache");
        if (k.contains("path")) c.cache.path = get<std::string>(k, "path", "cache");
    }

    if (j.contains("inference")) {
        const auto& i = j["inference"];
        check_keys(i, "inference", {"backend", "stage_backends", "topic", "topic_backend", "topic_threshold",
                                    "retriever", "ranker", "ranker_backend", "temperature", "top_p"});
        auto& s = c.inference;
        if (i.contains("backend")) s.backend = get<std::string>(i, "backend", "inference");
        if (i.contains("stage_backends")) {
            for (const auto& [name, id] : i["stage_backends"].items()) {
                const auto m = module_from_name(name);
                if (!m) throw ConfigError("unknown module '" + name + "' in stage_backends");
                s.stage_backends[*m] = id.get<std::string>();
            }
        }
        if (i.contains("topic")) s.topic = get<std::string>(i, "topic", "inference");
        if (i.contains("topic_backend")) s.topic_backend = get<std::string>(i, "topic_backend", "inference");
        if (i.contains("topic_threshold")) s.topic_threshold = get<double>(i, "topic_threshold", "inference");
        if (i.contains("retriever")) {
            const auto& r = i["retriever"];
            if (r.is_string()) {
                s.retriever = r.get<std::string>();
            } else {
                s.retriever = get<std::string>(r, "kind", "retriever");
                s.retriever_endpoint = endpoint_from(r, "retriever");
            }
        }
        if (i.contains("ranker")) s.ranker = get<std::string>(i, "ranker", "inference");
        if (i.contains("ranker_backend")) s.ranker_backend = get<std::string>(i, "ranker_backend", "inference");
        if (i.contains("temperature")) s.temperature = get<double>(i, "temperature", "inference");
        if (i.contains("top_p")) s.top_p = get<double>(i, "top_p", "inference");
        if (s.topic != "keyword" && s.topic != "backend") throw ConfigError("topic must be keyword or backend");
        if (s.retriever != "mock" && s.retriever != "http") throw ConfigError("retriever must be mock or http");
        if (s.ranker != "fetch" && s.ranker != "backend") throw ConfigError("ranker must be fetch or backend");
        try {
            modelio::SamplingParams{s.temperature, s.top_p, 0}.validate();
        } catch (const ValidationError& e) {
            throw ConfigError(e.what());
        }
    }

    if (j.contains("metrics")) {
        const auto& m = j["metrics"];
        check_keys(m, "metrics", {"k", "similarity_threshold", "embedder"});
        if (m.contains("k")) c.metrics.k = get<std::size_t>(m, "k", "metrics");
        if (m.contains("similarity_threshold"))
            c.metrics.similarity_threshold = get<double>(m, "similarity_threshold", "metrics");
        if (m.contains("embedder")) c.metrics.embedder = get<std::string>(m, "embedder", "metrics");
        if (c.metrics.k < 1) throw ConfigError("metrics.k must be at least 1");
        if (c.metrics.embedder != "onehot" && c.metrics.embedder != "hashed")
            throw ConfigError("metrics.embedder must be onehot or hashed");
    }

    std::set<std::string> ids;
    for (const auto& b : c.backends) ids.insert(b.id);
    auto need = [&](const std::string& id, std::string_view what) {
        if (!id.empty() && !ids.contains(id))
            throw ConfigError(std::string(what) + " names unregistered backend '" + id + "'");
    };
    need(c.inference.backend, "inference.backend");
    need(c.inference.topic_backend, "inference.topic_backend");
    need(c.inference.ranker_backend, "inference.ranker_backend");
    for (const auto& [m, id] : c.inference.stage_backends) need(id, "inference.stage_backends");
    return c;
}

AppConfig AppConfig::load(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + file.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j, file.has_parent_path() ? file.parent_path() : std::filesystem::path("."));
}

std::string AppConfig::digest() const { return sha256_hex(raw.dump()); }

modelio::BackendRegistry AppConfig::make_registry() const {
    modelio::BackendRegistry r;
    for (const auto& b : backends) {
        if (b.kind == "http")
            r.add(b.id, std::make_shared<modelio::HttpBackend>(b.endpoint));
        else
            r.add(b.id, std::make_shared<modelio::MockBackend>());
    }
    return r;
}

std::filesystem::path AppConfig::resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
}

}  // namespace ctikit
