#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ctikit/infer/extraction.hpp"
#include "ctikit/infer/retrieval.hpp"
#include "ctikit/infer/topic.hpp"
#include "ctikit/modelio.hpp"

namespace ctikit::infer {

/// Prompt text for the reasoning and summary stages. Slots: {e0},
/// {question}, {focus}, {topic}, {entities}, {relations}, {evidence},
/// {prior} in `reasoning`; {analysis} in `summary`.
struct ReasoningTemplates {
    std::string reasoning;
    std::string summary;
    std::map<Task, std::string> focus;

    static const ReasoningTemplates& standard();
    static ReasoningTemplates from_json(const nlohmann::json& j);
};

struct SessionConfig {
    const modelio::BackendRegistry* registry = nullptr;
    std::string backend_id;                        // default for every stage
    std::map<Module, std::string> stage_backends;  // per-module overrides
    std::shared_ptr<TopicProvider> topic;
    std::shared_ptr<Retriever> retriever;
    std::shared_ptr<Ranker> ranker;
    RetrievalCache* cache = nullptr;
    ExtractionDemos demos = ExtractionDemos::builtin();
    ReasoningTemplates templates = ReasoningTemplates::standard();
    TaskGraph graph = TaskGraph::standard();
    modelio::SamplingParams params;
    std::uint64_t seed = 0;
    bool bypass_cache = false;
    double topic_threshold = 1.0;
    std::size_t entities_per_target = 3;

    const std::string& backend_for(Module m) const;
};

struct StageRecord {
    Task task = Task::Attribution;
    Module module = Module::TOM;
    std::vector<Target> targets;          // TOM
    std::vector<Entity> entities;         // NER
    std::vector<RelationTriple> relations;  // REL, indices into this task's NER entities
    std::vector<Document> evidence;       // RAG
    std::vector<std::string> cache_keys;  // RAG
    std::string text;                     // REA, SUM
    std::vector<std::string> warnings;
    int retries = 0;
};

/// Offsets from session start, in completion order.
struct StageTiming {
    Task task;
    Module module;
    std::chrono::nanoseconds start{0};
    std::chrono::nanoseconds end{0};
};

struct FinalResponse {
    std::string topic;
    std::string entities;
    std::string relations;
    std::string evidence;
    std::string reasoning;
    std::string summary;

    std::string render() const;
};

struct SessionTranscript {
    std::string e0;
    std::string question;
    std::optional<TaskPlan> plan;
    std::vector<StageRecord> stages;  // (task, module) order
    std::vector<StageTiming> timings;
    FinalResponse response;
    std::optional<std::string> error;
    std::optional<std::string> error_stage;

    const StageRecord* find(Task task, Module module) const;
    std::set<Module> modules(Task task) const;
};

/// Plans the question, then runs TOM/NER/REL/RAG for the task and its
/// prerequisites concurrently (REL waits for its task's NER; RAG for its
/// task's TOM and NER), then REA and SUM per task in dependency order. A
/// stage failure ends the session; the transcript keeps completed stages
/// and names the failing stage.
SessionTranscript run_session(std::string_view e0, std::string_view question, const SessionConfig& config);

/// Transcript without timings, so identical inputs give identical bytes.
nlohmann::json to_json(const SessionTranscript& t);
nlohmann::json timings_json(const SessionTranscript& t);

/// Interactive session: each turn sees the initial evidence plus the
/// summaries of earlier turns.
class Session {
public:
    Session(std::string e0, SessionConfig config) : e0_(std::move(e0)), config_(std::move(config)) {}
    const SessionTranscript& ask(std::string_view question);
    const std::vector<SessionTranscript>& turns() const { return turns_; }

private:
    std::string e0_;
    SessionConfig config_;
    std::vector<SessionTranscript> turns_;
};

}  // namespace ctikit::infer
