#pragma once

#include <map>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "ctikit/ingest.hpp"
#include "ctikit/taskgraph.hpp"

namespace ctikit::cascade {

/// Question and answer text for one analytical target. The answer may use
/// {value} (rendered evidence) and {cve_id}.
struct QuestionTemplate {
    std::string question;
    std::string answer;
};

class QuestionTemplates {
public:
    static const QuestionTemplates& standard();

    /// Overrides from {"<target name>": {"question": ..., "answer": ...}}.
    static QuestionTemplates from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    const QuestionTemplate& at(Target t) const;

private:
    std::map<Target, QuestionTemplate> templates_;
};

struct CascadeStep {
    int index = 0;  // 1-based
    Task task = Task::Attribution;
    Target target = Target::ThreatActor;
    std::string question;
    std::string answer;

    bool operator==(const CascadeStep&) const = default;
};

struct CascadeChain {
    std::string chain_id;
    std::string e0;
    std::vector<CascadeStep> steps;

    bool operator==(const CascadeChain&) const = default;
};

/// Prerequisite tasks of `task` in canonical order.
std::vector<Task> dependency_closure(Task task, const TaskGraph& graph = TaskGraph::standard());

/// Evidence for `target` rendered as answer text; empty when absent.
std::string render_evidence(const ingest::ThreatRecord& record, Target target);

/// One step per target with evidence, in task then table order. The record
/// description is the initial evidence; an empty description is an error.
CascadeChain build_chain(const ingest::ThreatRecord& record, const TaskGraph& graph = TaskGraph::standard(),
                         const QuestionTemplates& templates = QuestionTemplates::standard());

inline constexpr std::string_view kDefaultJoiner = "\n\n";

/// Conditioning text and target answer for one step.
struct StepContext {
    int index = 0;
    std::string context;  // e0, A_1 .. A_{i-1}, Q_i joined
    std::string answer;   // A_i
};

std::vector<StepContext> serialize_chain(const CascadeChain& chain, std::string_view joiner = kDefaultJoiner);

struct Finding {
    enum class Kind { Dependency, Duplicate, Index, Target, Evidence };
    Kind kind;
    std::string message;
};

struct ValidationReport {
    std::vector<Finding> findings;
    bool ok() const { return findings.empty(); }
};

ValidationReport validate_chain(const CascadeChain& chain, const TaskGraph& graph = TaskGraph::standard());

nlohmann::json to_json(const CascadeChain& chain, std::string_view joiner = kDefaultJoiner);
CascadeChain chain_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StepContext& ctx, std::string_view chain_id);

/// Dataset file and companion contexts file; each starts with a header line.
std::string write_dataset(const std::vector<CascadeChain>& chains, std::string_view joiner,
                          const nlohmann::json& header);
std::string write_contexts(const std::vector<CascadeChain>& chains, std::string_view joiner,
                           const nlohmann::json& header);
std::vector<CascadeChain> read_dataset(std::string_view contents, std::string* joiner = nullptr);

}  // namespace ctikit::cascade
