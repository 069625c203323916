#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "ctikit/curriculum.hpp"
#include "ctikit/ingest.hpp"
#include "ctikit/modelio.hpp"

namespace ctikit {

struct BackendSpec {
    std::string id;
    std::string kind = "mock";  // mock | http
    modelio::HttpEndpoint endpoint;
};

struct CacheSettings {
    std::size_t capacity = 1024;
    std::optional<double> ttl_seconds;
    std::optional<std::filesystem::path> path;
};

struct InferenceSettings {
    std::string backend;  // empty: first registered backend
    std::map<Module, std::string> stage_backends;
    std::string topic = "keyword";  // keyword | backend
    std::string topic_backend;
    double topic_threshold = 1.0;
    std::string retriever = "mock";  // mock | http
    modelio::HttpEndpoint retriever_endpoint;
    std::string ranker = "fetch";  // fetch | backend
    std::string ranker_backend;
    double temperature = 0.7;
    double top_p = 0.9;
};

struct MetricSettings {
    std::size_t k = 10;
    double similarity_threshold = 80.0;
    std::string embedder = "onehot";  // onehot | hashed
};

/// Application configuration read from one JSON document. Relative paths
/// resolve against the config file's directory.
struct AppConfig {
    nlohmann::json raw = nlohmann::json::object();
    std::filesystem::path base_dir = ".";

    std::uint64_t seed = 0;
    std::size_t workers = 1;
    ingest::IngestConfig ingest;
    std::vector<BackendSpec> backends;
    std::optional<std::filesystem::path> demos;
    std::optional<std::filesystem::path> generation_template;
    std::optional<std::filesystem::path> revision_template;
    std::optional<std::filesystem::path> question_templates;
    std::optional<std::filesystem::path> reasoning_templates;
    std::string pacing_name = "8B";
    curriculum::PacingSchedule pacing = curriculum::PacingSchedule::preset("8B");
    CacheSettings cache;
    InferenceSettings inference;
    MetricSettings metrics;
    std::string joiner = "\n\n";

    /// Throws ConfigError for unknown keys, bad values, or an incomplete custom pacing.
    static AppConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
    static AppConfig load(const std::filesystem::path& file);

    /// SHA-256 of the canonical dump of `raw`.
    std::string digest() const;

    modelio::BackendRegistry make_registry() const;
    std::filesystem::path resolve(const std::filesystem::path& p) const;
};

}  // namespace ctikit
