#pragma once

#include <map>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctikit/modelio.hpp"
#include "ctikit/taskgraph.hpp"

namespace ctikit::infer {

enum class EntityCategory { ThreatActor, Infrastructure, Malware, Product, Identifier, Other };
std::string_view category_name(EntityCategory c);
std::optional<EntityCategory> category_from_name(std::string_view s);

struct Entity {
    std::string text;
    EntityCategory category = EntityCategory::Other;
    std::size_t begin = 0;  // character offsets into the source text
    std::size_t end = 0;

    bool operator==(const Entity&) const = default;
};

/// Subject and object index into the entity batch the triple was extracted from.
struct RelationTriple {
    std::size_t subject = 0;
    std::string relation;
    std::size_t object = 0;

    bool operator==(const RelationTriple&) const = default;
};

struct FewShotDemo {
    std::string text;
    std::string output;  // JSON in the expected schema
};

/// Task-specific demonstrations for entity and relation prompts.
struct ExtractionDemos {
    std::map<Task, std::vector<FewShotDemo>> entities;
    std::vector<FewShotDemo> relations;

    static const ExtractionDemos& builtin();
};

struct EntityExtraction {
    std::vector<Entity> entities;
    int retries = 0;
};

struct RelationExtraction {
    std::vector<RelationTriple> relations;
    std::vector<std::string> warnings;
    int retries = 0;
};

/// Expected structured output:
///   {"entities": [{"text": s, "category": c[, "start": n]}]}
/// An entity whose text is not found in the source (or not at `start`) is
/// schema-invalid. One repair request is made; a second invalid reply
/// raises StageError("NER").
EntityExtraction extract_entities(std::string_view text, Task task, const modelio::BackendRegistry& registry,
                                  std::string_view backend_id, const ExtractionDemos& demos,
                                  const modelio::SamplingParams& params = {});

/// Expected structured output:
///   {"relations": [{"subject": s, "relation": r, "object": o}]}
/// Subjects and objects name entities case-insensitively; triples naming
/// unknown entities are dropped with a warning. Failures raise StageError("REL").
RelationExtraction extract_relations(std::string_view text, const std::vector<Entity>& entities,
                                     const modelio::BackendRegistry& registry, std::string_view backend_id,
                                     const ExtractionDemos& demos, const modelio::SamplingParams& params = {});

nlohmann::json to_json(const Entity& e);

}  // namespace ctikit::infer
