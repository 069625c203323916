#include "ctikit/cascade.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <set>

#include "ctikit/digest.hpp"
#include "ctikit/error.hpp"
#include "ctikit/text.hpp"
#include "ctikit/jsonl.hpp"

namespace ctikit::cascade {

using nlohmann::json;

namespace {

std::string list(const std::set<std::string>& s) {
    return text::join(std::vector<std::string>(s.begin(), s.end()), ", ");
}

std::string substitute(std::string_view tmpl, std::string_view value, std::string_view cve_id) {
    std::string out = text::replace_all(std::string(tmpl), "{value}", value);
    return text::replace_all(out, "{cve_id}", cve_id);
}

}  // namespace

const QuestionTemplates& QuestionTemplates::standard() {
    static const QuestionTemplates t = [] {
        QuestionTemplates q;
        auto& m = q.templates_;
        m[Target::ThreatActor] = {"Given this evidence, what threat actor is likely responsible?",
                                  "The likely responsible threat actor is {value}."};
        m[Target::Ttps] = {"Which tactics, techniques and procedures does the activity show?",
                           "Observed techniques: {value}."};
        m[Target::Campaign] = {"Is the activity tied to a known campaign?", "It is linked to the campaign {value}."};
        m[Target::AffectedSystem] = {"Which products or systems are affected?", "Affected systems: {value}."};
        m[Target::AttackInfra] = {"What infrastructure supports the attack?", "Attack infrastructure: {value}."};
        m[Target::Impact] = {"What is the impact of a successful attack?", "Impact: {value}."};
        m[Target::CveId] = {"Which vulnerabilities are involved?",
                            "The activity centers on {cve_id}; related vulnerabilities: {value}."};
        m[Target::CweId] = {"Which weakness types underlie the vulnerability?", "Underlying weaknesses: {value}."};
        m[Target::Cvss] = {"How does the vulnerability score on the CVSS base metrics?", "CVSS base metrics: {value}."};
        m[Target::Epss] = {"How has the exploitation likelihood evolved?", "EPSS history: {value}."};
        m[Target::ToolUse] = {"Which tools help detect or contain it?", "Useful tools: {value}."};
        m[Target::CodePatch] = {"Is a code fix available?", "Patch: {value}."};
        m[Target::Methodology] = {"How should defenders mitigate it?", "Mitigation approach: {value}."};
        m[Target::Advisory] = {"Which advisory covers it?", "Advisory: {value}."};
        return q;
    }();
    return t;
}

QuestionTemplates QuestionTemplates::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("question templates must be a JSON object");
    QuestionTemplates q = standard();
    for (const auto& [key, val] : j.items()) {
        const auto target = target_from_name(key);
        if (!target) throw ConfigError("unknown target '" + key + "' in question templates");
        if (!val.is_object() || !val.contains("question") || !val.contains("answer"))
            throw ConfigError("template for '" + key + "' needs question and answer");
        QuestionTemplate t{val["question"].get<std::string>(), val["answer"].get<std::string>()};
        if (text::trim(t.question).empty()) throw ConfigError("empty question for '" + key + "'");
        q.templates_[*target] = std::move(t);
    }
    return q;
}

json QuestionTemplates::to_json() const {
    json j = json::object();
    for (const auto& [target, t] : templates_)
        j[std::string(target_name(target))] = {{"question", t.question}, {"answer", t.answer}};
    return j;
}

const QuestionTemplate& QuestionTemplates::at(Target t) const {
    auto it = templates_.find(t);
    if (it == templates_.end()) throw ConfigError("no question template for " + std::string(target_name(t)));
    return it->second;
}

std::vector<Task> dependency_closure(Task task, const TaskGraph& graph) { return graph.dependency_closure(task); }

std::string render_evidence(const ingest::ThreatRecord& r, Target target) {
    if (!r.has_evidence(target)) return "";
    switch (target) {
        case Target::ThreatActor: return *r.threat_actor;
        case Target::Ttps: return list(r.ttps);
        case Target::Campaign: return *r.campaign;
        case Target::AffectedSystem: return text::join(r.affected_systems.values(), ", ");
        case Target::AttackInfra: return list(r.attack_infra);
        case Target::Impact: return *r.impact;
        case Target::CveId: return list(r.related_cves);
        case Target::CweId: return list(r.cwe_ids);
        case Target::Cvss: {
            std::vector<std::string> parts;
            for (auto f : ingest::kCvssFields)
                if (!r.cvss->is_na(f))
                    parts.push_back(std::string(ingest::cvss_field_name(f)) + ": " + std::string(r.cvss->label(f)));
            return text::join(parts, ", ");
        }
        case Target::Epss: {
            std::vector<std::string> parts;
            for (const auto& p : r.epss->points) parts.push_back(p.date.str() + ": " + format_double(p.score) + "%");
            return text::join(parts, "; ");
        }
        case Target::ToolUse: return list(r.remediation->tools);
        case Target::CodePatch: return *r.remediation->patch;
        case Target::Methodology: return *r.remediation->methodology;
        case Target::Advisory: return *r.remediation->advisory;
    }
    return "";
}

CascadeChain build_chain(const ingest::ThreatRecord& record, const TaskGraph& graph,
                         const QuestionTemplates& templates) {
    if (text::trim(record.description).empty())
        throw ValidationError("record " + record.cve_id + " has no initial evidence");
    CascadeChain chain;
    chain.chain_id = "chain:" + record.cve_id;
    chain.e0 = record.description;
    int index = 0;
    for (Task task : kAllTasks) {
        auto it = graph.targets.find(task);
        if (it == graph.targets.end()) continue;
        for (Target target : it->second) {
            const std::string value = render_evidence(record, target);
            if (value.empty()) continue;
            const auto& t = templates.at(target);
            chain.steps.push_back(
                {++index, task, target, t.question, substitute(t.answer, value, record.cve_id)});
        }
    }
    return chain;
}

std::vector<StepContext> serialize_chain(const CascadeChain& chain, std::string_view joiner) {
    std::vector<StepContext> out;
    out.reserve(chain.steps.size());
    std::string prefix = chain.e0;
    for (const auto& step : chain.steps) {
        out.push_back({step.index, prefix + std::string(joiner) + step.question, step.answer});
        prefix += joiner;
        prefix += step.answer;
    }
    return out;
}

ValidationReport validate_chain(const CascadeChain& chain, const TaskGraph& graph) {
    ValidationReport report;
    auto add = [&](Finding::Kind k, std::string msg) { report.findings.push_back({k, std::move(msg)}); };

    if (text::trim(chain.e0).empty()) add(Finding::Kind::Evidence, "chain has empty initial evidence");

    std::set<std::pair<Task, Target>> seen;
    for (std::size_t i = 0; i < chain.steps.size(); ++i) {
        const auto& s = chain.steps[i];
        if (s.index != static_cast<int>(i) + 1)
            add(Finding::Kind::Index,
                "step " + std::to_string(i + 1) + " carries index " + std::to_string(s.index));
        if (task_of(s.target) != s.task)
            add(Finding::Kind::Target, std::string(target_name(s.target)) + " does not belong to " +
                                           std::string(task_name(s.task)));
        if (!seen.insert({s.task, s.target}).second)
            add(Finding::Kind::Duplicate, "duplicate step (" + std::string(task_name(s.task)) + ", " +
                                              std::string(target_name(s.target)) + ")");
    }

    std::set<std::pair<Task, Task>> reported;
    for (std::size_t i = 0; i < chain.steps.size(); ++i) {
        for (std::size_t j = i + 1; j < chain.steps.size(); ++j) {
            const Task a = chain.steps[i].task;
            const Task b = chain.steps[j].task;
            auto deps = graph.deps.find(a);
            if (deps == graph.deps.end() || !deps->second.contains(b)) continue;
            if (reported.insert({a, b}).second)
                add(Finding::Kind::Dependency,
                    std::string(task_name(a)) + " precedes " + std::string(task_name(b)));
        }
    }
    return report;
}

json to_json(const CascadeChain& chain, std::string_view joiner) {
    json steps = json::array();
    for (const auto& s : chain.steps)
        steps.push_back({{"index", s.index},
                         {"task", std::string(task_name(s.task))},
                         {"target", std::string(target_name(s.target))},
                         {"question", s.question},
                         {"answer", s.answer}});
    return {{"chain_id", chain.chain_id}, {"e0", chain.e0}, {"steps", steps}, {"joiner", std::string(joiner)}};
}

CascadeChain chain_from_json(const json& j) {
    try {
        CascadeChain c;
        c.chain_id = j.at("chain_id").get<std::string>();
        c.e0 = j.at("e0").get<std::string>();
        for (const auto& s : j.at("steps")) {
            const auto task = task_from_name(s.at("task").get<std::string>());
            const auto target = target_from_name(s.at("target").get<std::string>());
            if (!task || !target) throw ValidationError("unknown task or target in chain " + c.chain_id);
            c.steps.push_back({s.at("index").get<int>(), *task, *target, s.at("question").get<std::string>(),
                               s.at("answer").get<std::string>()});
        }
        return c;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed chain: ") + e.what());
    }
}

json to_json(const StepContext& ctx, std::string_view chain_id) {
    return {{"chain_id", std::string(chain_id)}, {"index", ctx.index}, {"context", ctx.context}, {"answer", ctx.answer}};
}

std::string write_dataset(const std::vector<CascadeChain>& chains, std::string_view joiner, const json& header) {
    json h = header.is_object() ? header : json::object();
    h["joiner"] = std::string(joiner);
    std::string out = detail::header_line(h);
    for (const auto& c : chains) out += to_json(c, joiner).dump() + "\n";
    return out;
}

std::string write_contexts(const std::vector<CascadeChain>& chains, std::string_view joiner, const json& header) {
    json h = header.is_object() ? header : json::object();
    h["joiner"] = std::string(joiner);
    std::string out = detail::header_line(h);
    for (const auto& c : chains)
        for (const auto& ctx : serialize_chain(c, joiner)) out += to_json(ctx, c.chain_id).dump() + "\n";
    return out;
}

std::vector<CascadeChain> read_dataset(std::string_view contents, std::string* joiner) {
    std::vector<CascadeChain> chains;
    bool have_joiner = false;
    detail::for_each_jsonl(contents, "dataset", [&](const json& j) {
        chains.push_back(chain_from_json(j));
        if (joiner && !have_joiner && j.contains("joiner")) {
            *joiner = j["joiner"].get<std::string>();
            have_joiner = true;
        }
    });
    return chains;
}

}  // namespace ctikit::cascade
