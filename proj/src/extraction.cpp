#include "ctikit/infer/extraction.hpp"

#include <nlohmann/json.hpp>

#include "ctikit/error.hpp"
#include "ctikit/text.hpp"

namespace ctikit::infer {

using nlohmann::json;

namespace {

constexpr std::array<EntityCategory, 6> kCategories{EntityCategory::ThreatActor, EntityCategory::Infrastructure,
                                                    EntityCategory::Malware,     EntityCategory::Product,
                                                    EntityCategory::Identifier,  EntityCategory::Other};

std::string render_demos(const std::vector<FewShotDemo>& demos) {
    std::string out;
    for (const auto& d : demos) out += "Text: " + d.text + "\nOutput: " + d.output + "\n\n";
    return out;
}

/// Parses and checks one reply; returns an error description when invalid.
std::optional<std::string> parse_entities(std::string_view source, const std::string& reply,
                                          std::vector<Entity>& out) {
    json j;
    try {
        j = json::parse(reply);
    } catch (const json::parse_error& e) {
        return std::string("reply is not JSON: ") + e.what();
    }
    if (!j.is_object() || !j.contains("entities") || !j["entities"].is_array())
        return "reply lacks an \"entities\" array";
    out.clear();
    for (const auto& item : j["entities"]) {
        if (!item.is_object() || !item.contains("text") || !item["text"].is_string() || !item.contains("category") ||
            !item["category"].is_string())
            return "each entity needs string fields text and category";
        const auto surface = item["text"].get<std::string>();
        const auto cat = category_from_name(item["category"].get<std::string>());
        if (!cat) return "unknown entity category '" + item["category"].get<std::string>() + "'";
        if (surface.empty()) return "entity text is empty";
        std::size_t begin;
        if (item.contains("start")) {
            if (!item["start"].is_number_unsigned()) return "entity start must be a non-negative integer";
            begin = item["start"].get<std::size_t>();
            if (begin > source.size() || source.substr(begin, surface.size()) != surface)
                return "entity '" + surface + "' does not occur at offset " + std::to_string(begin);
        } else {
            begin = source.find(surface);
            if (begin == std::string_view::npos) return "entity '" + surface + "' does not occur in the text";
        }
        out.push_back({surface, *cat, begin, begin + surface.size()});
    }
    return std::nullopt;
}

struct Triple {
    std::string subject, relation, object;
};

std::optional<std::string> parse_relations(const std::string& reply, std::vector<Triple>& out) {
    json j;
    try {
        j = json::parse(reply);
    } catch (const json::parse_error& e) {
        return std::string("reply is not JSON: ") + e.what();
    }
    if (!j.is_object() || !j.contains("relations") || !j["relations"].is_array())
        return "reply lacks a \"relations\" array";
    out.clear();
    for (const auto& item : j["relations"]) {
        for (const char* k : {"subject", "relation", "object"})
            if (!item.is_object() || !item.contains(k) || !item[k].is_string())
                return "each relation needs string fields subject, relation and object";
        out.push_back({item["subject"].get<std::string>(), item["relation"].get<std::string>(),
                       item["object"].get<std::string>()});
    }
    return std::nullopt;
}

/// Runs a structured request with one repair attempt.
template <typename Parse>
int request_with_repair(const modelio::BackendRegistry& registry, modelio::CompletionRequest req, std::string_view stage,
                        Parse&& parse) {
    std::string reply;
    try {
        reply = modelio::generate(registry, req).text;
    } catch (const BackendError& e) {
        throw StageError(std::string(stage), e.what());
    }
    auto problem = parse(reply);
    if (!problem) return 0;
    req.messages.push_back({"assistant", reply});
    req.messages.push_back({"user", "That reply was rejected: " + *problem + ". Send a corrected reply in the same JSON shape."});
    try {
        reply = modelio::generate(registry, req).text;
    } catch (const BackendError& e) {
        throw StageError(std::string(stage), e.what());
    }
    problem = parse(reply);
    if (problem) throw StageError(std::string(stage), "invalid structured output after repair: " + *problem);
    return 1;
}

}  // namespace

std::string_view category_name(EntityCategory c) {
    switch (c) {
        case EntityCategory::ThreatActor: return "threat actor";
        case EntityCategory::Infrastructure: return "infrastructure";
        case EntityCategory::Malware: return "malware";
        case EntityCategory::Product: return "product";
        case EntityCategory::Identifier: return "identifier";
        case EntityCategory::Other: return "other";
    }
    return "other";
}

std::optional<EntityCategory> category_from_name(std::string_view s) {
    const std::string c = text::canonical_label(s);
    for (auto cat : kCategories)
        if (c == category_name(cat)) return cat;
    return std::nullopt;
}

const ExtractionDemos& ExtractionDemos::builtin() {
    static const ExtractionDemos d = [] {
        ExtractionDemos x;
        const FewShotDemo actor{
            "The group known as Sandworm staged payloads on a rented VPS before targeting grid operators.",
            R"({"entities":[{"text":"Sandworm","category":"threat actor"},{"text":"rented VPS","category":"infrastructure"}]})"};
        const FewShotDemo vuln{
            "CVE-2021-44228 in Apache Log4j allows remote code execution through JNDI lookups.",
            R"({"entities":[{"text":"CVE-2021-44228","category":"identifier"},{"text":"Apache Log4j","category":"product"}]})"};
        const FewShotDemo fix{
            "Operators should deploy the vendor hotfix and block outbound LDAP from the web tier.",
            R"({"entities":[{"text":"vendor hotfix","category":"other"},{"text":"web tier","category":"infrastructure"}]})"};
        x.entities[Task::Attribution] = {actor};
        x.entities[Task::Contextualization] = {actor, vuln};
        x.entities[Task::Correlation] = {vuln};
        x.entities[Task::Prioritization] = {vuln};
        x.entities[Task::Remediation] = {vuln, fix};
        x.relations = {{actor.text,
                        R"({"relations":[{"subject":"Sandworm","relation":"operates","object":"rented VPS"}]})"}};
        return x;
    }();
    return d;
}

EntityExtraction extract_entities(std::string_view text, Task task, const modelio::BackendRegistry& registry,
                                  std::string_view backend_id, const ExtractionDemos& demos,
                                  const modelio::SamplingParams& params) {
    EntityExtraction out;
    if (text::trim(text).empty()) return out;
    std::string cats;
    for (auto c : kCategories) cats += (cats.empty() ? "" : ", ") + std::string(category_name(c));
    std::string shots;
    if (auto it = demos.entities.find(task); it != demos.entities.end()) shots = render_demos(it->second);
    modelio::CompletionRequest req{std::string(backend_id),
                                   {{"system", "List the security-relevant entities in the text. Categories: " + cats +
                                                   ". Copy each entity exactly as written. Answer with JSON "
                                                   "{\"entities\": [{\"text\", \"category\"}]}."},
                                    {"user", shots + "Text: " + std::string(text) + "\nOutput:"}},
                                   params,
                                   modelio::OutputMode::Structured,
                                   "entities"};
    out.retries = request_with_repair(registry, std::move(req), "NER",
                                      [&](const std::string& r) { return parse_entities(text, r, out.entities); });
    return out;
}

RelationExtraction extract_relations(std::string_view text, const std::vector<Entity>& entities,
                                     const modelio::BackendRegistry& registry, std::string_view backend_id,
                                     const ExtractionDemos& demos, const modelio::SamplingParams& params) {
    if (entities.empty()) throw ValidationError("relation extraction needs at least one entity");
    std::string names;
    for (const auto& e : entities) names += "- " + e.text + " (" + std::string(category_name(e.category)) + ")\n";
    modelio::CompletionRequest req{std::string(backend_id),
                                   {{"system", "State how the listed entities relate to each other in the text. Use only "
                                               "the listed entities. Answer with JSON {\"relations\": [{\"subject\", "
                                               "\"relation\", \"object\"}]}."},
                                    {"user", render_demos(demos.relations) + "Entities:\n" + names +
                                                 "Text: " + std::string(text) + "\nOutput:"}},
                                   params,
                                   modelio::OutputMode::Structured,
                                   "relations"};
    std::vector<Triple> raw;
    RelationExtraction out;
    out.retries = request_with_repair(registry, std::move(req), "REL",
                                      [&](const std::string& r) { return parse_relations(r, raw); });
    auto lookup = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < entities.size(); ++i)
            if (text::iequals(text::collapse_whitespace(entities[i].text), text::collapse_whitespace(name))) return i;
        return std::nullopt;
    };
    for (const auto& t : raw) {
        const auto s = lookup(t.subject);
        const auto o = lookup(t.object);
        if (!s || !o) {
            out.warnings.push_back("dropped relation (" + t.subject + ", " + t.relation + ", " + t.object +
                                   "): unknown entity");
            continue;
        }
        out.relations.push_back({*s, t.relation, *o});
    }
    return out;
}

json to_json(const Entity& e) {
    return {{"text", e.text}, {"category", std::string(category_name(e.category))}, {"begin", e.begin}, {"end", e.end}};
}

}  // namespace ctikit::infer
