#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ctikit {

/// The five CTI tasks, in canonical dependency order.
enum class Task { Attribution = 1, Contextualization, Correlation, Prioritization, Remediation };

/// The fourteen analytical targets, grouped by task in table order.
enum class Target {
    ThreatActor,
    Ttps,
    Campaign,
    AffectedSystem,
    AttackInfra,
    Impact,
    CveId,
    CweId,
    Cvss,
    Epss,
    ToolUse,
    CodePatch,
    Methodology,
    Advisory,
};

/// Inference-time NLP modules.
enum class Module { TOM, NER, REL, RAG, REA, SUM };

inline constexpr std::array<Task, 5> kAllTasks{Task::Attribution, Task::Contextualization, Task::Correlation,
                                               Task::Prioritization, Task::Remediation};
inline constexpr std::array<Target, 14> kAllTargets{
    Target::ThreatActor, Target::Ttps,     Target::Campaign, Target::AffectedSystem, Target::AttackInfra,
    Target::Impact,      Target::CveId,    Target::CweId,    Target::Cvss,           Target::Epss,
    Target::ToolUse,     Target::CodePatch, Target::Methodology, Target::Advisory};
inline constexpr std::array<Module, 6> kAllModules{Module::TOM, Module::NER, Module::REL,
                                                   Module::RAG, Module::REA, Module::SUM};

int task_index(Task t);  // 1..5
std::string_view task_name(Task t);
std::string_view target_name(Target t);
std::string_view module_name(Module m);
std::optional<Task> task_from_name(std::string_view s);
std::optional<Target> target_from_name(std::string_view s);
std::optional<Module> module_from_name(std::string_view s);
Task task_of(Target t);

/// Task/target/dependency/module matrix for the five CTI tasks.
struct TaskGraph {
    std::map<Task, std::vector<Target>> targets;
    std::map<Task, std::set<Task>> deps;
    std::map<Task, std::set<Module>> modules;

    static const TaskGraph& standard();

    /// Prerequisites of `t` (transitive), in canonical task order, excluding `t`.
    std::vector<Task> dependency_closure(Task t) const;

    bool enabled(Task t, Module m) const;
    bool acyclic() const;
};

}  // namespace ctikit
