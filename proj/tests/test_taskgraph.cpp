#include <gtest/gtest.h>

#include <algorithm>

#include "ctikit/taskgraph.hpp"

using namespace ctikit;

TEST(TaskGraph, ModuleMatrixRows) {
    const auto& g = TaskGraph::standard();
    using enum Module;
    const std::set<Module> all{TOM, NER, REL, RAG, REA, SUM};
    EXPECT_EQ(g.modules.at(Task::Attribution), all);
    EXPECT_EQ(g.modules.at(Task::Contextualization), (std::set<Module>{TOM, NER, REL, REA, SUM}));
    EXPECT_EQ(g.modules.at(Task::Correlation), (std::set<Module>{TOM, RAG, REA, SUM}));
    EXPECT_EQ(g.modules.at(Task::Prioritization), (std::set<Module>{TOM, NER, RAG, REA, SUM}));
    EXPECT_EQ(g.modules.at(Task::Remediation), all);
}

TEST(TaskGraph, TargetsPerTask) {
    const auto& g = TaskGraph::standard();
    std::size_t n = 0;
    for (Task t : kAllTasks) {
        for (Target x : g.targets.at(t)) EXPECT_EQ(task_of(x), t);
        n += g.targets.at(t).size();
    }
    EXPECT_EQ(n, 14u);
    EXPECT_EQ(g.targets.at(Task::Remediation).size(), 4u);
}

TEST(TaskGraph, DependencyClosure) {
    const auto& g = TaskGraph::standard();
    EXPECT_TRUE(g.dependency_closure(Task::Attribution).empty());
    EXPECT_TRUE(g.dependency_closure(Task::Contextualization).empty());
    EXPECT_EQ(g.dependency_closure(Task::Prioritization),
              (std::vector<Task>{Task::Attribution, Task::Contextualization, Task::Correlation}));
    EXPECT_EQ(g.dependency_closure(Task::Remediation),
              (std::vector<Task>{Task::Attribution, Task::Contextualization, Task::Correlation, Task::Prioritization}));
}

TEST(TaskGraph, AcyclicAndCycleDetected) {
    EXPECT_TRUE(TaskGraph::standard().acyclic());
    TaskGraph g = TaskGraph::standard();
    g.deps[Task::Attribution].insert(Task::Remediation);
    EXPECT_FALSE(g.acyclic());
}

TEST(TaskGraph, NamesRoundTrip) {
    for (Task t : kAllTasks) EXPECT_EQ(task_from_name(task_name(t)), t);
    for (Target t : kAllTargets) EXPECT_EQ(target_from_name(target_name(t)), t);
    for (Module m : kAllModules) EXPECT_EQ(module_from_name(module_name(m)), m);
    EXPECT_EQ(task_from_name("remediation"), Task::Remediation);
    EXPECT_FALSE(task_from_name("nonsense"));
}
