#include "ctikit/ingest.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <regex>
#include <sstream>

#include "ctikit/error.hpp"
#include "ctikit/text.hpp"
#include "ctikit/jsonl.hpp"

namespace ctikit::ingest {

using nlohmann::json;

// ---------------------------------------------------------------------------
// CVSS

namespace {

struct CvssSpec {
    std::string_view name;
    std::string_view long_name;
    std::vector<std::string> categories;
};

const std::array<CvssSpec, 9>& cvss_specs() {
    static const std::array<CvssSpec, 9> specs{{
        {"AV", "attackVector", {"Network", "Adjacent Network", "Local", "Physical"}},
        {"AC", "attackComplexity", {"Low", "High"}},
        {"PR", "privilegesRequired", {"None", "Low", "High"}},
        {"UI", "userInteraction", {"None", "Required"}},
        {"S", "scope", {"Unchanged", "Changed"}},
        {"C", "confidentialityImpact", {"None", "Low", "High"}},
        {"I", "integrityImpact", {"None", "Low", "High"}},
        {"A", "availabilityImpact", {"None", "Low", "High"}},
        {"Base", "baseSeverity", {"Low", "Medium", "High", "Critical"}},
    }};
    return specs;
}

std::optional<CvssField> cvss_field_from_key(std::string_view key) {
    for (CvssField f : kCvssFields) {
        const auto& spec = cvss_specs()[static_cast<std::size_t>(f)];
        if (text::iequals(spec.name, key) || text::iequals(spec.long_name, key)) return f;
    }
    if (text::iequals(key, "base_severity") || text::iequals(key, "severity")) return CvssField::Base;
    return std::nullopt;
}

}  // namespace

std::string_view cvss_field_name(CvssField f) { return cvss_specs()[static_cast<std::size_t>(f)].name; }

const std::vector<std::string>& CvssAssessment::categories(CvssField f) {
    return cvss_specs()[static_cast<std::size_t>(f)].categories;
}

void CvssAssessment::set(CvssField f, std::string_view label) {
    const std::string l = text::collapse_whitespace(label);
    if (l.empty() || text::iequals(l, "NA") || text::iequals(l, "N/A") || text::iequals(l, "X")) {
        set_index(f, kNA);
        return;
    }
    const auto& cats = categories(f);
    for (std::size_t i = 0; i < cats.size(); ++i)
        if (text::iequals(cats[i], l)) return set_index(f, static_cast<int>(i));
    if (f == CvssField::AV && text::iequals(l, "Adjacent")) return set_index(f, 1);
    // Vector abbreviations: first letter of the category name.
    if (l.size() == 1 && f != CvssField::Base) {
        for (std::size_t i = 0; i < cats.size(); ++i)
            if (std::toupper(static_cast<unsigned char>(cats[i][0])) == std::toupper(static_cast<unsigned char>(l[0])))
                return set_index(f, static_cast<int>(i));
    }
    throw ValidationError("CVSS " + std::string(cvss_field_name(f)) + ": unknown category '" + l + "'");
}

void CvssAssessment::set_index(CvssField f, int category) {
    if (category != kNA && (category < 0 || category >= static_cast<int>(categories(f).size())))
        throw ValidationError("CVSS " + std::string(cvss_field_name(f)) + ": category index out of range");
    values_[static_cast<std::size_t>(f)] = category;
}

std::string_view CvssAssessment::label(CvssField f) const {
    const int i = index(f);
    return i == kNA ? std::string_view("NA") : std::string_view(categories(f)[static_cast<std::size_t>(i)]);
}

bool CvssAssessment::all_na() const {
    return std::all_of(values_.begin(), values_.end(), [](int v) { return v == kNA; });
}

CvssAssessment CvssAssessment::parse_vector(std::string_view vector) {
    CvssAssessment out;
    std::string v = text::trim(vector);
    if (v.rfind("CVSS:", 0) == 0) {
        auto slash = v.find('/');
        v = slash == std::string::npos ? std::string() : v.substr(slash + 1);
    }
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, '/')) {
        if (part.empty()) continue;
        auto colon = part.find(':');
        if (colon == std::string::npos) throw ValidationError("CVSS vector: malformed component '" + part + "'");
        auto field = cvss_field_from_key(part.substr(0, colon));
        if (!field || *field == CvssField::Base)
            throw ValidationError("CVSS vector: unknown metric '" + part.substr(0, colon) + "'");
        out.set(*field, part.substr(colon + 1));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Records

void EpssSeries::validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!(points[i].score >= 0.0 && points[i].score <= 100.0))
            throw ValidationError("EPSS score out of [0, 100] at " + points[i].date.str());
        if (i > 0 && !(points[i - 1].date < points[i].date))
            throw ValidationError("EPSS dates not strictly increasing at " + points[i].date.str());
    }
}

void ProductSet::insert(std::string_view product) {
    std::string display = text::collapse_whitespace(product);
    if (display.empty()) return;
    std::string key = text::to_lower(display);
    auto [it, inserted] = items_.emplace(key, display);
    if (!inserted && display < it->second) it->second = display;
}

std::vector<std::string> ProductSet::values() const {
    std::vector<std::string> out;
    out.reserve(items_.size());
    for (const auto& [k, v] : items_) out.push_back(v);
    return out;
}

bool ProductSet::contains_substring(std::string_view needle) const {
    const std::string n = text::canonical_label(needle);
    return std::any_of(items_.begin(), items_.end(),
                       [&](const auto& kv) { return kv.first.find(n) != std::string::npos; });
}

bool ThreatRecord::has_evidence(Target target) const {
    switch (target) {
        case Target::ThreatActor: return threat_actor.has_value();
        case Target::Ttps: return !ttps.empty();
        case Target::Campaign: return campaign.has_value();
        case Target::AffectedSystem: return !affected_systems.empty();
        case Target::AttackInfra: return !attack_infra.empty();
        case Target::Impact: return impact.has_value();
        case Target::CveId: return !related_cves.empty();
        case Target::CweId: return !cwe_ids.empty();
        case Target::Cvss: return cvss.has_value() && !cvss->all_na();
        case Target::Epss: return epss.has_value() && !epss->points.empty();
        case Target::ToolUse: return remediation && !remediation->tools.empty();
        case Target::CodePatch: return remediation && remediation->patch.has_value();
        case Target::Methodology: return remediation && remediation->methodology.has_value();
        case Target::Advisory: return remediation && remediation->advisory.has_value();
    }
    return false;
}

bool valid_cve_id(std::string_view id) {
    static const std::regex re("CVE-[0-9]{4}-[0-9]{4,}");
    return std::regex_match(id.begin(), id.end(), re);
}

std::string canonical_cwe_id(std::string_view id) {
    std::string c = text::to_upper(text::collapse_whitespace(id));
    if (!c.empty() && std::all_of(c.begin(), c.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
        c = "CWE-" + c;
    return c;
}

// ---------------------------------------------------------------------------
// Dialects and catalog

const std::vector<std::string>& Dialect::canonical_fields() {
    static const std::vector<std::string> fields{
        "cve_id",       "published",    "description", "threat_actor", "ttps",        "campaign",
        "affected_systems", "attack_infra", "impact",  "cwe_ids",      "related_cves", "vendors",
        "categories",   "cvss",         "epss",        "remediation",  "references"};
    return fields;
}

Dialect Dialect::canonical() {
    Dialect d{"canonical", {}};
    for (const auto& f : canonical_fields()) d.fields[f] = "/" + f;
    return d;
}

Dialect Dialect::builtin(std::string_view source) {
    Dialect d = canonical();
    d.name = std::string(source);
    if (source == "nvd") {
        d.fields["cve_id"] = "/id";
        d.fields["description"] = "/descriptions";
        d.fields["cwe_ids"] = "/weaknesses";
        d.fields["cvss"] = "/metrics/cvssV31";
        d.fields["affected_systems"] = "/affected";
    } else if (source == "mitre-cve") {
        d.fields["cve_id"] = "/cveMetadata/cveId";
        d.fields["published"] = "/cveMetadata/datePublished";
        d.fields["description"] = "/containers/cna/descriptions";
        d.fields["cwe_ids"] = "/containers/cna/problemTypes";
        d.fields["affected_systems"] = "/containers/cna/affected";
        d.fields["references"] = "/containers/cna/references";
        d.fields["cvss"] = "/containers/cna/metrics/cvss";
    } else if (source == "exploitdb") {
        d.fields["cve_id"] = "/cve";
        d.fields["published"] = "/date_published";
    }
    return d;
}

const SourceCatalog& SourceCatalog::standard() {
    static const SourceCatalog catalog = [] {
        using enum Target;
        SourceCatalog c;
        const std::set<Target> all(kAllTargets.begin(), kAllTargets.end());
        c.entries["mitre-cve"] = all;
        c.entries["nvd"] = all;
        c.entries["third-party"] = all;
        c.entries["cwe"] = {ThreatActor, Campaign, CweId, ToolUse, Methodology, Advisory};
        c.entries["attack"] = {ThreatActor, Ttps, Campaign, AffectedSystem, ToolUse, Methodology, Advisory};
        c.entries["capec"] = {Campaign, AttackInfra};
        c.entries["exploitdb"] = {ThreatActor, Ttps,      Campaign,  AffectedSystem, AttackInfra, Impact,
                                  CveId,       ToolUse,   CodePatch, Methodology,    Advisory};
        return c;
    }();
    return catalog;
}

bool SourceCatalog::supplies(std::string_view source, Target t) const {
    auto it = entries.find(std::string(source));
    return it != entries.end() && it->second.contains(t);
}

void IngestConfig::validate() {
    for (const auto& [source, dialect] : dialects)
        if (!catalog.known(source)) throw ConfigError("unknown source id '" + source + "'");
    for (const auto& source : precedence)
        if (!catalog.known(source)) throw ConfigError("unknown source id '" + source + "' in precedence");
    for (const auto& [source, targets] : catalog.entries)
        if (!dialects.contains(source)) dialects[source] = Dialect::builtin(source);
    for (const auto& [source, dialect] : dialects)
        for (const auto& [field, pointer] : dialect.fields) {
            const auto& known = Dialect::canonical_fields();
            if (std::find(known.begin(), known.end(), field) == known.end())
                throw ConfigError("dialect '" + dialect.name + "': unknown field '" + field + "'");
            if (pointer.empty() || pointer[0] != '/')
                throw ConfigError("dialect '" + dialect.name + "': field '" + field + "' needs a JSON pointer");
        }
}

const Dialect& IngestConfig::dialect_for(std::string_view source) const {
    auto it = dialects.find(std::string(source));
    if (it == dialects.end()) {
        if (!catalog.known(source)) throw ConfigError("unknown source id '" + std::string(source) + "'");
        static const std::map<std::string, Dialect> builtins = [] {
            std::map<std::string, Dialect> m;
            for (const auto& [s, t] : SourceCatalog::standard().entries) m[s] = Dialect::builtin(s);
            return m;
        }();
        auto b = builtins.find(std::string(source));
        if (b == builtins.end()) throw ConfigError("no dialect for source '" + std::string(source) + "'");
        return b->second;
    }
    return it->second;
}

// ---------------------------------------------------------------------------
// Field conversion

namespace {

const json* lookup(const json& record, const std::string& pointer) {
    try {
        const json& v = record.at(json::json_pointer(pointer));
        return v.is_null() ? nullptr : &v;
    } catch (const json::exception&) {
        return nullptr;
    }
}

[[noreturn]] void type_error(std::string_view field, std::string_view expected) {
    throw ValidationError("field '" + std::string(field) + "': expected " + std::string(expected));
}

std::string item_text(const json& v, std::string_view field) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_object()) {
        if (v.contains("product") && v["product"].is_string()) {
            std::string s = v["product"].get<std::string>();
            if (v.contains("version") && v["version"].is_string()) s += " " + v["version"].get<std::string>();
            return s;
        }
        for (const char* key : {"value", "name", "id", "cweId", "url"})
            if (v.contains(key) && v[key].is_string()) return v[key].get<std::string>();
    }
    type_error(field, "text or labelled object");
}

std::optional<std::string> to_text(const json* v, std::string_view field) {
    if (!v) return std::nullopt;
    std::string s;
    if (v->is_string()) {
        s = v->get<std::string>();
    } else if (v->is_array()) {
        // Language-tagged description lists: prefer English.
        for (const auto& item : *v)
            if (item.is_object() && item.value("lang", "") == "en") {
                s = item_text(item, field);
                break;
            }
        if (s.empty() && !v->empty()) s = item_text(v->front(), field);
    } else if (v->is_object()) {
        s = item_text(*v, field);
    } else {
        type_error(field, "text");
    }
    s = text::collapse_whitespace(s);
    if (s.empty()) return std::nullopt;
    return s;
}

std::vector<std::string> to_list(const json* v, std::string_view field) {
    std::vector<std::string> out;
    if (!v) return out;
    if (v->is_array()) {
        for (const auto& item : *v) {
            // Nested problem-type style lists: [{descriptions: [{cweId: ...}]}]
            if (item.is_object() && item.contains("descriptions") && item["descriptions"].is_array()) {
                for (const auto& d : item["descriptions"]) out.push_back(item_text(d, field));
                continue;
            }
            out.push_back(item_text(item, field));
        }
    } else {
        out.push_back(item_text(*v, field));
    }
    return out;
}

void add_labels(LabelSet& set, const std::vector<std::string>& items) {
    for (const auto& s : items) {
        std::string c = text::canonical_label(s);
        if (!c.empty()) set.insert(std::move(c));
    }
}

CvssAssessment to_cvss(const json& v) {
    if (v.is_string()) return CvssAssessment::parse_vector(v.get<std::string>());
    if (!v.is_object()) type_error("cvss", "vector string or object");
    CvssAssessment out;
    if (v.contains("vectorString") && v["vectorString"].is_string())
        out = CvssAssessment::parse_vector(v["vectorString"].get<std::string>());
    for (const auto& [key, value] : v.items()) {
        auto f = cvss_field_from_key(key);
        if (!f) continue;
        if (!value.is_string() && !value.is_null()) type_error("cvss." + key, "category label");
        out.set(*f, value.is_null() ? "" : value.get<std::string>());
    }
    return out;
}

EpssSeries to_epss(const json& v) {
    if (!v.is_array()) type_error("epss", "array of {date, score}");
    EpssSeries s;
    for (const auto& item : v) {
        json date, score;
        if (item.is_array() && item.size() == 2) {
            date = item[0];
            score = item[1];
        } else if (item.is_object()) {
            date = item.value("date", json());
            score = item.contains("score") ? item["score"] : item.value("epss", json());
        }
        if (!date.is_string() || !score.is_number()) type_error("epss", "array of {date, score}");
        s.points.push_back({Date::parse(date.get<std::string>()), score.get<double>()});
    }
    std::sort(s.points.begin(), s.points.end(), [](const auto& a, const auto& b) { return a.date < b.date; });
    s.validate();
    return s;
}

std::string validated_cve(std::string_view raw) {
    std::string id = text::to_upper(text::trim(raw));
    if (!valid_cve_id(id)) throw ValidationError("invalid CVE identifier '" + std::string(raw) + "'");
    return id;
}

}  // namespace

ThreatRecord parse_record(std::string_view raw, std::string_view source, const IngestConfig& config) {
    if (!config.catalog.known(source)) throw ConfigError("unknown source id '" + std::string(source) + "'");
    json j;
    try {
        j = json::parse(raw.begin(), raw.end());
    } catch (const json::parse_error& e) {
        throw ParseError("malformed record: " + std::string(e.what()), e.byte);
    }
    if (!j.is_object()) throw ParseError("record is not a JSON object", 0);

    const Dialect& dialect = config.dialect_for(source);
    auto field = [&](const std::string& name) -> const json* {
        auto it = dialect.fields.find(name);
        return it == dialect.fields.end() ? nullptr : lookup(j, it->second);
    };
    auto supplies = [&](Target t) { return config.catalog.supplies(source, t); };

    ThreatRecord r;
    auto id = to_text(field("cve_id"), "cve_id");
    if (!id) throw ValidationError("record has no CVE identifier");
    r.cve_id = validated_cve(*id);
    auto published = to_text(field("published"), "published");
    if (!published) throw ValidationError(r.cve_id + ": missing published date");
    r.published = YearMonth::parse(*published);
    r.description = to_text(field("description"), "description").value_or("");
    if (supplies(Target::ThreatActor)) r.threat_actor = to_text(field("threat_actor"), "threat_actor");
    if (supplies(Target::Ttps)) add_labels(r.ttps, to_list(field("ttps"), "ttps"));
    if (supplies(Target::Campaign)) r.campaign = to_text(field("campaign"), "campaign");
    if (supplies(Target::AffectedSystem))
        for (const auto& p : to_list(field("affected_systems"), "affected_systems")) r.affected_systems.insert(p);
    if (supplies(Target::AttackInfra)) add_labels(r.attack_infra, to_list(field("attack_infra"), "attack_infra"));
    if (supplies(Target::Impact)) r.impact = to_text(field("impact"), "impact");
    if (supplies(Target::CweId))
        for (const auto& c : to_list(field("cwe_ids"), "cwe_ids")) {
            std::string id2 = canonical_cwe_id(c);
            if (!id2.empty()) r.cwe_ids.insert(id2);
        }
    if (supplies(Target::CveId))
        for (const auto& c : to_list(field("related_cves"), "related_cves")) {
            std::string rel = validated_cve(c);
            if (rel != r.cve_id) r.related_cves.insert(rel);
        }
    add_labels(r.vendors, to_list(field("vendors"), "vendors"));
    add_labels(r.categories, to_list(field("categories"), "categories"));
    if (supplies(Target::Cvss))
        if (const json* v = field("cvss")) {
            auto c = to_cvss(*v);
            if (!c.all_na()) r.cvss = c;
        }
    if (supplies(Target::Epss))
        if (const json* v = field("epss")) {
            auto s = to_epss(*v);
            if (!s.points.empty()) r.epss = std::move(s);
        }
    if (const json* v = field("remediation")) {
        if (!v->is_object()) type_error("remediation", "object");
        RemediationInfo rem;
        if (supplies(Target::ToolUse)) add_labels(rem.tools, to_list(lookup(*v, "/tools"), "remediation.tools"));
        if (supplies(Target::CodePatch)) rem.patch = to_text(lookup(*v, "/patch"), "remediation.patch");
        if (supplies(Target::Methodology))
            rem.methodology = to_text(lookup(*v, "/methodology"), "remediation.methodology");
        if (supplies(Target::Advisory)) rem.advisory = to_text(lookup(*v, "/advisory"), "remediation.advisory");
        if (!rem.empty()) r.remediation = std::move(rem);
    }
    for (const auto& url : to_list(field("references"), "references")) {
        std::string u = text::trim(url);
        if (!u.empty()) r.references.insert({u, std::string(source)});
    }
    r.source_ids.insert(std::string(source));
    return r;
}

// ---------------------------------------------------------------------------
// Canonical serialization

json to_json(const ThreatRecord& r) {
    json j;
    j["cve_id"] = r.cve_id;
    j["published"] = r.published.str();
    j["description"] = r.description;
    if (r.threat_actor) j["threat_actor"] = *r.threat_actor;
    if (!r.ttps.empty()) j["ttps"] = r.ttps;
    if (r.campaign) j["campaign"] = *r.campaign;
    if (!r.affected_systems.empty()) j["affected_systems"] = r.affected_systems.values();
    if (!r.attack_infra.empty()) j["attack_infra"] = r.attack_infra;
    if (r.impact) j["impact"] = *r.impact;
    if (!r.cwe_ids.empty()) j["cwe_ids"] = r.cwe_ids;
    if (!r.related_cves.empty()) j["related_cves"] = r.related_cves;
    if (!r.vendors.empty()) j["vendors"] = r.vendors;
    if (!r.categories.empty()) j["categories"] = r.categories;
    if (r.cvss) {
        json c = json::object();
        for (CvssField f : kCvssFields) c[std::string(cvss_field_name(f))] = std::string(r.cvss->label(f));
        j["cvss"] = c;
    }
    if (r.epss) {
        json e = json::array();
        for (const auto& p : r.epss->points) e.push_back({{"date", p.date.str()}, {"score", p.score}});
        j["epss"] = e;
    }
    if (r.remediation) {
        json m = json::object();
        if (!r.remediation->tools.empty()) m["tools"] = r.remediation->tools;
        if (r.remediation->patch) m["patch"] = *r.remediation->patch;
        if (r.remediation->methodology) m["methodology"] = *r.remediation->methodology;
        if (r.remediation->advisory) m["advisory"] = *r.remediation->advisory;
        j["remediation"] = m;
    }
    if (!r.references.empty()) {
        json refs = json::array();
        for (const auto& ref : r.references) refs.push_back({{"url", ref.url}, {"source", ref.source}});
        j["references"] = refs;
    }
    j["source_ids"] = r.source_ids;
    return j;
}

ThreatRecord from_json(const json& j) {
    IngestConfig cfg;
    cfg.dialects["third-party"] = Dialect::canonical();
    // The canonical form is parsed through the all-targets dialect; provenance
    // fields are restored afterwards.
    ThreatRecord r = parse_record(j.dump(), "third-party", cfg);
    r.references.clear();
    if (j.contains("references"))
        for (const auto& ref : j["references"]) {
            if (!ref.is_object() || !ref.contains("url")) type_error("references", "array of {url, source}");
            r.references.insert({ref["url"].get<std::string>(), ref.value("source", "")});
        }
    r.source_ids.clear();
    if (j.contains("source_ids"))
        for (const auto& s : j["source_ids"]) r.source_ids.insert(s.get<std::string>());
    return r;
}

std::string serialize(const ThreatRecord& r) { return to_json(r).dump(); }

ThreatRecord deserialize(std::string_view line) {
    json j;
    try {
        j = json::parse(line.begin(), line.end());
    } catch (const json::parse_error& e) {
        throw ParseError("malformed store line: " + std::string(e.what()), e.byte);
    }
    return from_json(j);
}

// ---------------------------------------------------------------------------
// Store

const ThreatRecord* ThreatStore::find(std::string_view cve_id) const {
    auto it = records_.find(std::string(cve_id));
    return it == records_.end() ? nullptr : &it->second;
}

namespace {

template <typename T>
void take_scalar(std::optional<T>& dst, const std::optional<T>& src) {
    if (!dst && src) dst = src;
}

}  // namespace

ThreatStore merge_store(const std::vector<ThreatRecord>& records, const std::vector<std::string>& precedence) {
    auto rank = [&](const ThreatRecord& r) {
        std::size_t best = precedence.size();
        for (const auto& s : r.source_ids) {
            auto it = std::find(precedence.begin(), precedence.end(), s);
            if (it != precedence.end()) best = std::min(best, static_cast<std::size_t>(it - precedence.begin()));
        }
        const std::string first_source = r.source_ids.empty() ? std::string() : *r.source_ids.begin();
        return std::make_pair(best, first_source);
    };

    std::map<std::string, std::vector<const ThreatRecord*>> groups;
    for (const auto& r : records) groups[r.cve_id].push_back(&r);

    std::map<std::string, ThreatRecord> merged;
    for (auto& [id, group] : groups) {
        // Highest-precedence record first; full serialization breaks ties so the
        // result never depends on input order.
        std::vector<std::pair<std::pair<std::size_t, std::string>, std::string>> keys;
        std::vector<std::size_t> order(group.size());
        for (std::size_t i = 0; i < group.size(); ++i) {
            order[i] = i;
            keys.emplace_back(rank(*group[i]), serialize(*group[i]));
        }
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });

        ThreatRecord out;
        out.cve_id = id;
        bool have_published = false;
        for (std::size_t idx : order) {
            const ThreatRecord& r = *group[idx];
            if (!have_published) {
                out.published = r.published;
                have_published = true;
            }
            if (out.description.empty()) out.description = r.description;
            take_scalar(out.threat_actor, r.threat_actor);
            take_scalar(out.campaign, r.campaign);
            take_scalar(out.impact, r.impact);
            take_scalar(out.cvss, r.cvss);
            take_scalar(out.epss, r.epss);
            out.ttps.insert(r.ttps.begin(), r.ttps.end());
            for (const auto& p : r.affected_systems.values()) out.affected_systems.insert(p);
            out.attack_infra.insert(r.attack_infra.begin(), r.attack_infra.end());
            out.cwe_ids.insert(r.cwe_ids.begin(), r.cwe_ids.end());
            out.related_cves.insert(r.related_cves.begin(), r.related_cves.end());
            out.vendors.insert(r.vendors.begin(), r.vendors.end());
            out.categories.insert(r.categories.begin(), r.categories.end());
            out.references.insert(r.references.begin(), r.references.end());
            out.source_ids.insert(r.source_ids.begin(), r.source_ids.end());
            if (r.remediation) {
                if (!out.remediation) out.remediation.emplace();
                out.remediation->tools.insert(r.remediation->tools.begin(), r.remediation->tools.end());
                take_scalar(out.remediation->patch, r.remediation->patch);
                take_scalar(out.remediation->methodology, r.remediation->methodology);
                take_scalar(out.remediation->advisory, r.remediation->advisory);
            }
        }
        merged.emplace(id, std::move(out));
    }
    return ThreatStore(std::move(merged));
}

bool ScopeFilter::matches(const ThreatRecord& r) const {
    if (product && !r.affected_systems.contains_substring(*product)) return false;
    if (vendor) {
        const std::string v = text::canonical_label(*vendor);
        bool hit = r.vendors.contains(v);
        for (const auto& p : r.affected_systems.values())
            if (!hit) hit = text::to_lower(p).rfind(v + " ", 0) == 0 || text::to_lower(p) == v;
        if (!hit) return false;
    }
    if (category && !r.categories.contains(text::canonical_label(*category)) &&
        !r.cwe_ids.contains(canonical_cwe_id(*category)))
        return false;
    if (from && r.published < *from) return false;
    if (to && *to < r.published) return false;
    return true;
}

std::vector<ThreatRecord> query(const ThreatStore& store, const ScopeFilter& filter) {
    std::vector<ThreatRecord> out;
    for (const auto& [id, r] : store)
        if (filter.matches(r)) out.push_back(r);
    std::stable_sort(out.begin(), out.end(), [](const ThreatRecord& a, const ThreatRecord& b) {
        return std::tie(a.published, a.cve_id) < std::tie(b.published, b.cve_id);
    });
    return out;
}

std::string write_store(const ThreatStore& store, const json& header) {
    std::string out = detail::header_line(header);
    for (const auto& [id, r] : store) {
        out += serialize(r);
        out.push_back('\n');
    }
    return out;
}

ThreatStore read_store(std::string_view contents) {
    std::map<std::string, ThreatRecord> records;
    detail::for_each_jsonl(contents, "store", [&](const json& j) {
        ThreatRecord r = from_json(j);
        records.insert_or_assign(r.cve_id, std::move(r));
    });
    return ThreatStore(std::move(records));
}

}  // namespace ctikit::ingest
