#include "ctikit/taskgraph.hpp"

#include <algorithm>
#include <functional>

#include "ctikit/text.hpp"

namespace ctikit {

namespace {

constexpr std::array<std::string_view, 5> kTaskNames{"Attribution", "Contextualization", "Correlation",
                                                     "Prioritization", "Remediation"};
constexpr std::array<std::string_view, 14> kTargetNames{
    "threat actor", "TTPs",     "campaign", "affected system", "attack infra", "impact",      "CVE identifier",
    "CWE identifier", "CVSS metrics", "EPSS records", "tool use", "code patch", "methodology", "advisory"};
constexpr std::array<std::string_view, 6> kModuleNames{"TOM", "NER", "REL", "RAG", "REA", "SUM"};

}  // namespace

int task_index(Task t) { return static_cast<int>(t); }
std::string_view task_name(Task t) { return kTaskNames[static_cast<std::size_t>(t) - 1]; }
std::string_view target_name(Target t) { return kTargetNames[static_cast<std::size_t>(t)]; }
std::string_view module_name(Module m) { return kModuleNames[static_cast<std::size_t>(m)]; }

std::optional<Task> task_from_name(std::string_view s) {
    for (Task t : kAllTasks)
        if (text::iequals(task_name(t), s)) return t;
    return std::nullopt;
}

std::optional<Target> target_from_name(std::string_view s) {
    std::string spaced(s);
    std::replace(spaced.begin(), spaced.end(), '_', ' ');
    for (Target t : kAllTargets)
        if (text::iequals(target_name(t), spaced)) return t;
    return std::nullopt;
}

std::optional<Module> module_from_name(std::string_view s) {
    for (Module m : kAllModules)
        if (text::iequals(module_name(m), s)) return m;
    return std::nullopt;
}

Task task_of(Target t) {
    switch (t) {
        case Target::ThreatActor:
        case Target::Ttps:
        case Target::Campaign: return Task::Attribution;
        case Target::AffectedSystem:
        case Target::AttackInfra:
        case Target::Impact: return Task::Contextualization;
        case Target::CveId:
        case Target::CweId: return Task::Correlation;
        case Target::Cvss:
        case Target::Epss: return Task::Prioritization;
        default: return Task::Remediation;
    }
}

const TaskGraph& TaskGraph::standard() {
    static const TaskGraph g = [] {
        using enum Module;
        TaskGraph g;
        g.targets = {
            {Task::Attribution, {Target::ThreatActor, Target::Ttps, Target::Campaign}},
            {Task::Contextualization, {Target::AffectedSystem, Target::AttackInfra, Target::Impact}},
            {Task::Correlation, {Target::CveId, Target::CweId}},
            {Task::Prioritization, {Target::Cvss, Target::Epss}},
            {Task::Remediation, {Target::ToolUse, Target::CodePatch, Target::Methodology, Target::Advisory}},
        };
        g.deps = {
            {Task::Attribution, {}},
            {Task::Contextualization, {}},
            {Task::Correlation, {Task::Attribution, Task::Contextualization}},
            {Task::Prioritization, {Task::Attribution, Task::Contextualization, Task::Correlation}},
            {Task::Remediation,
             {Task::Attribution, Task::Contextualization, Task::Correlation, Task::Prioritization}},
        };
        g.modules = {
            {Task::Attribution, {TOM, NER, REL, RAG, REA, SUM}},
            {Task::Contextualization, {TOM, NER, REL, REA, SUM}},
            {Task::Correlation, {TOM, RAG, REA, SUM}},
            {Task::Prioritization, {TOM, NER, RAG, REA, SUM}},
            {Task::Remediation, {TOM, NER, REL, RAG, REA, SUM}},
        };
        return g;
    }();
    return g;
}

std::vector<Task> TaskGraph::dependency_closure(Task t) const {
    std::set<Task> seen;
    std::function<void(Task)> visit = [&](Task x) {
        auto it = deps.find(x);
        if (it == deps.end()) return;
        for (Task d : it->second)
            if (seen.insert(d).second) visit(d);
    };
    visit(t);
    seen.erase(t);
    return {seen.begin(), seen.end()};
}

bool TaskGraph::enabled(Task t, Module m) const {
    auto it = modules.find(t);
    return it != modules.end() && it->second.contains(m);
}

bool TaskGraph::acyclic() const {
    // Kahn's algorithm over the prerequisite edges.
    std::map<Task, int> indegree;
    for (Task t : kAllTasks) indegree[t] = 0;
    for (const auto& [t, ds] : deps) indegree[t] = static_cast<int>(ds.size());
    std::vector<Task> ready;
    for (auto [t, n] : indegree)
        if (n == 0) ready.push_back(t);
    std::size_t done = 0;
    while (!ready.empty()) {
        Task t = ready.back();
        ready.pop_back();
        ++done;
        for (const auto& [u, ds] : deps)
            if (ds.contains(t) && --indegree[u] == 0) ready.push_back(u);
    }
    return done == indegree.size();
}

}  // namespace ctikit
