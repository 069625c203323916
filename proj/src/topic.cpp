#include "ctikit/infer/topic.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

#include "ctikit/error.hpp"
#include "ctikit/text.hpp"

namespace ctikit::infer {

using nlohmann::json;

KeywordTopicProvider::KeywordTopicProvider() {
    task_keywords = {
        {Task::Attribution, {"threat actor", "responsible", "attribut", "apt", "group"}},
        {Task::Contextualization, {"affected", "impact", "infrastructure", "system", "product", "context"}},
        {Task::Correlation, {"cve", "cwe", "vulnerabilit", "correlat", "weakness"}},
        {Task::Prioritization, {"cvss", "epss", "severity", "priorit", "score"}},
        {Task::Remediation, {"patch", "mitigat", "remediat", "fix", "advisory", "tool"}},
    };
    target_keywords = {
        {Target::ThreatActor, {"threat actor", "responsible", "actor", "group", "apt"}},
        {Target::Ttps, {"ttp", "technique", "tactic", "procedure"}},
        {Target::Campaign, {"campaign"}},
        {Target::AffectedSystem, {"affected", "system", "product"}},
        {Target::AttackInfra, {"infrastructure", "c2", "server", "domain"}},
        {Target::Impact, {"impact", "consequence"}},
        {Target::CveId, {"cve", "vulnerabilit"}},
        {Target::CweId, {"cwe", "weakness"}},
        {Target::Cvss, {"cvss", "severity"}},
        {Target::Epss, {"epss", "likelihood", "probability"}},
        {Target::ToolUse, {"tool"}},
        {Target::CodePatch, {"patch", "fix"}},
        {Target::Methodology, {"mitigat", "remediat", "methodolog", "defend"}},
        {Target::Advisory, {"advisory", "bulletin"}},
    };
}

std::vector<TopicScore> KeywordTopicProvider::score_tasks(std::string_view question, std::string_view) {
    const std::string q = text::to_lower(question);
    std::vector<TopicScore> out;
    for (const auto& [task, words] : task_keywords) {
        double s = 0.0;
        for (const auto& w : words)
            if (q.find(w) != std::string::npos) s += 1.0;
        if (s > 0.0) out.push_back({task, s});
    }
    return out;
}

std::vector<Target> KeywordTopicProvider::resolve_targets(std::string_view question, Task task) {
    const std::string q = text::to_lower(question);
    std::vector<Target> out;
    for (Target t : TaskGraph::standard().targets.at(task)) {
        auto it = target_keywords.find(t);
        if (it == target_keywords.end()) continue;
        if (std::any_of(it->second.begin(), it->second.end(),
                        [&](const std::string& w) { return q.find(w) != std::string::npos; }))
            out.push_back(t);
    }
    return out;
}

BackendTopicProvider::BackendTopicProvider(const modelio::BackendRegistry& registry, std::string backend_id,
                                           modelio::SamplingParams params)
    : registry_(registry), backend_id_(std::move(backend_id)), params_(params) {}

std::vector<TopicScore> BackendTopicProvider::score_tasks(std::string_view question, std::string_view e0) {
    std::string tasks;
    for (Task t : kAllTasks) tasks += "- " + std::string(task_name(t)) + "\n";
    modelio::CompletionRequest req{backend_id_,
                                   {{"system", "Classify the analyst's request into one task from this list:\n" +
                                                   tasks + "Reply with JSON {\"task\": <name>}."},
                                    {"user", "Evidence:\n" + std::string(e0) + "\n\nRequest: " + std::string(question)}},
                                   params_,
                                   modelio::OutputMode::Structured,
                                   "topic"};
    const auto result = modelio::generate(registry_, req);
    json j;
    try {
        j = json::parse(result.text);
    } catch (const json::parse_error&) {
        return {};
    }
    if (!j.is_object() || !j.contains("task") || !j["task"].is_string()) return {};
    const auto task = task_from_name(j["task"].get<std::string>());
    if (!task) return {};
    return {{*task, 1.0}};
}

std::vector<Target> BackendTopicProvider::resolve_targets(std::string_view question, Task task) {
    std::string targets;
    for (Target t : TaskGraph::standard().targets.at(task)) targets += "- " + std::string(target_name(t)) + "\n";
    modelio::CompletionRequest req{backend_id_,
                                   {{"system", "Pick the analytical targets the request asks about from:\n" + targets +
                                                   "Reply with JSON {\"targets\": [<name>, ...]}."},
                                    {"user", std::string(question)}},
                                   params_,
                                   modelio::OutputMode::Structured,
                                   "targets"};
    const auto result = modelio::generate(registry_, req);
    std::vector<Target> out;
    try {
        const json j = json::parse(result.text);
        if (j.is_object() && j.contains("targets") && j["targets"].is_array())
            for (const auto& n : j["targets"])
                if (n.is_string())
                    if (auto t = target_from_name(n.get<std::string>()); t && task_of(*t) == task) out.push_back(*t);
    } catch (const json::parse_error&) {
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<Task> TaskPlan::tasks() const {
    std::vector<Task> out = prerequisites;
    out.push_back(task);
    return out;
}

TaskPlan plan_tasks(std::string_view question, std::string_view e0, const TaskGraph& graph, TopicProvider& provider,
                    double threshold) {
    if (text::trim(question).empty()) throw ValidationError("question is empty");
    std::optional<TopicScore> best;
    for (const auto& s : provider.score_tasks(question, e0)) {
        if (s.score < threshold) continue;
        if (!best || s.score > best->score || (s.score == best->score && s.task < best->task)) best = s;
    }
    if (!best) throw StageError("TOM", "could not resolve a task for the question");

    TaskPlan plan;
    plan.task = best->task;
    plan.targets = provider.resolve_targets(question, plan.task);
    if (plan.targets.empty()) plan.targets = graph.targets.at(plan.task);
    plan.prerequisites = graph.dependency_closure(plan.task);
    for (Task t : plan.tasks()) plan.modules[t] = graph.modules.at(t);
    return plan;
}

}  // namespace ctikit::infer
