#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ctikit/modelio.hpp"
#include "ctikit/taskgraph.hpp"

namespace ctikit::infer {

struct TopicScore {
    Task task;
    double score = 0.0;
};

/// Two-step intent resolution: task first, then targets within that task.
class TopicProvider {
public:
    virtual ~TopicProvider() = default;
    /// Scores for each candidate task; tasks without support may be omitted.
    virtual std::vector<TopicScore> score_tasks(std::string_view question, std::string_view e0) = 0;
    /// Targets of `task` the question asks about; empty means all of them.
    virtual std::vector<Target> resolve_targets(std::string_view question, Task task) = 0;
};

/// Deterministic keyword classifier. A task scores one point per matched
/// keyword in the question; earlier tasks win ties.
class KeywordTopicProvider final : public TopicProvider {
public:
    KeywordTopicProvider();
    std::vector<TopicScore> score_tasks(std::string_view question, std::string_view e0) override;
    std::vector<Target> resolve_targets(std::string_view question, Task task) override;

    std::map<Task, std::vector<std::string>> task_keywords;
    std::map<Target, std::vector<std::string>> target_keywords;
};

/// Asks a backend for {"task": name, "targets": [names]} as structured output.
class BackendTopicProvider final : public TopicProvider {
public:
    BackendTopicProvider(const modelio::BackendRegistry& registry, std::string backend_id,
                         modelio::SamplingParams params = {});
    std::vector<TopicScore> score_tasks(std::string_view question, std::string_view e0) override;
    std::vector<Target> resolve_targets(std::string_view question, Task task) override;

private:
    const modelio::BackendRegistry& registry_;
    std::string backend_id_;
    modelio::SamplingParams params_;
};

struct TaskPlan {
    Task task = Task::Attribution;
    std::vector<Target> targets;
    std::vector<Task> prerequisites;           // canonical order
    std::map<Task, std::set<Module>> modules;  // for prerequisites and the task

    /// Prerequisites followed by the requested task.
    std::vector<Task> tasks() const;
};

/// Resolves the task (score must reach `threshold`) and its targets. Throws
/// StageError("TOM") when no task qualifies.
TaskPlan plan_tasks(std::string_view question, std::string_view e0, const TaskGraph& graph, TopicProvider& provider,
                    double threshold = 1.0);

}  // namespace ctikit::infer
