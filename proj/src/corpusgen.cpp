#include "ctikit/corpusgen.hpp"

#include <atomic>
#include <nlohmann/json.hpp>
#include <thread>

#include "ctikit/digest.hpp"
#include "ctikit/jsonl.hpp"
#include "ctikit/error.hpp"
#include "ctikit/text.hpp"

namespace ctikit::corpusgen {

using nlohmann::json;

void PromptTemplate::validate() const {
    if (kind == TemplateKind::Generation) {
        const auto demo = body.find(kDemoSlot);
        const auto meta = body.find(kMetaSlot);
        if (demo == std::string::npos || meta == std::string::npos)
            throw TemplateError("generation template needs {demo} and {meta} placeholders");
        if (meta < demo) throw TemplateError("generation template must place {demo} before {meta}");
    } else if (body.find(kDraftSlot) == std::string::npos) {
        throw TemplateError("revision template needs a {draft} placeholder");
    }
}

PromptTemplate PromptTemplate::default_generation() {
    return {TemplateKind::Generation,
            "Write a threat report centered on a single CVE. Match the structure, tone and level of "
            "technical detail of the sample report, and use every metadata item below.\n\n"
            "Sample report:\n{demo}\n\n"
            "CVE metadata:\n{meta}\n\n"
            "Cover likely exploitation paths, attacker goals and defensive measures.\n\nReport:"};
}

PromptTemplate PromptTemplate::default_revision() {
    return {TemplateKind::Revision,
            "Edit the threat report below for structure and readability. Group related material into "
            "sections, keep every technical fact unchanged, and return only the edited report.\n\n"
            "Report:\n{draft}\n\nEdited report:"};
}

DemoLibrary DemoLibrary::builtin() {
    return {{
        {"advisory-style",
         "Title: Security Advisory for a Remote Code Execution Flaw\n"
         "Summary: A flaw in request parsing lets an unauthenticated attacker run code on the server.\n"
         "Details: Affected versions, weakness class and scoring.\n"
         "Impact: Full compromise of the affected host.\n"
         "Mitigation: Upgrade to the fixed release; restrict exposure until patched."},
        {"bulletin-style",
         "Threat Bulletin\n"
         "Overview: Activity exploiting a newly disclosed vulnerability was observed in the wild.\n"
         "Observed techniques: initial access through a public-facing application, followed by "
         "credential dumping.\n"
         "Recommendations: apply vendor patches, monitor for the listed indicators."},
        {"brief-style",
         "Executive brief. What happened: a storage weakness exposed user data to other local "
         "applications. Who is affected: users of the listed releases. What to do: update and review "
         "local access policies."},
    }};
}

DemoLibrary DemoLibrary::from_jsonl(std::string_view contents) {
    DemoLibrary lib;
    detail::for_each_jsonl(contents, "demo", [&](const json& j) {
        if (!j.is_object() || !j.contains("id") || !j.contains("text") || !j["id"].is_string() ||
            !j["text"].is_string())
            throw ValidationError("demo line needs string fields id and text");
        lib.demos.push_back({j["id"].get<std::string>(), j["text"].get<std::string>()});
    });
    return lib;
}

std::string render_metadata(const ingest::ThreatRecord& r) {
    std::vector<std::string> lines;
    auto line = [&lines](std::string_view label, const std::string& value) {
        if (!value.empty()) lines.push_back("- " + std::string(label) + ": " + value);
    };
    auto list = [](const auto& set) { return text::join(std::vector<std::string>(set.begin(), set.end()), ", "); };

    line("CVE ID", r.cve_id);
    line("Description", r.description);
    line("Threat Actor", r.threat_actor.value_or(""));
    line("TTPs", list(r.ttps));
    line("Campaign", r.campaign.value_or(""));
    line("Affected Systems", text::join(r.affected_systems.values(), ", "));
    line("Attack Infrastructure", list(r.attack_infra));
    line("Impact", r.impact.value_or(""));
    line("Weaknesses", list(r.cwe_ids));
    line("Related CVEs", list(r.related_cves));
    if (r.cvss) {
        std::vector<std::string> parts;
        for (auto f : ingest::kCvssFields)
            if (!r.cvss->is_na(f))
                parts.push_back(std::string(ingest::cvss_field_name(f)) + "=" + std::string(r.cvss->label(f)));
        line("CVSS", text::join(parts, ", "));
    }
    if (r.epss) {
        std::vector<std::string> parts;
        for (const auto& p : r.epss->points) parts.push_back(p.date.str() + " " + format_double(p.score) + "%");
        line("EPSS", text::join(parts, "; "));
    }
    if (r.remediation) {
        line("Remediation Tools", list(r.remediation->tools));
        line("Patch", r.remediation->patch.value_or(""));
        line("Mitigation", r.remediation->methodology.value_or(""));
        line("Advisory", r.remediation->advisory.value_or(""));
    }
    return text::join(lines, "\n");
}

std::string build_generation_prompt(const PromptTemplate& tmpl, std::string_view demo, std::string_view metadata) {
    if (tmpl.kind != TemplateKind::Generation) throw TemplateError("expected a generation template");
    tmpl.validate();
    // Split at the placeholders rather than substituting sequentially so that
    // placeholder text inside the demo is never expanded.
    const auto d = tmpl.body.find(kDemoSlot);
    const auto m = tmpl.body.find(kMetaSlot);
    std::string out = tmpl.body.substr(0, d);
    out += demo;
    out += tmpl.body.substr(d + kDemoSlot.size(), m - d - kDemoSlot.size());
    out += metadata;
    out += tmpl.body.substr(m + kMetaSlot.size());
    return out;
}

std::string build_generation_prompt(const PromptTemplate& tmpl, std::string_view demo,
                                    const ingest::ThreatRecord& record) {
    return build_generation_prompt(tmpl, demo, render_metadata(record));
}

std::string build_revision_prompt(const PromptTemplate& tmpl, std::string_view draft) {
    if (tmpl.kind != TemplateKind::Revision) throw TemplateError("expected a revision template");
    tmpl.validate();
    const auto p = tmpl.body.find(kDraftSlot);
    return tmpl.body.substr(0, p) + std::string(draft) + tmpl.body.substr(p + kDraftSlot.size());
}

std::size_t count_tokens(std::string_view s) { return text::split_whitespace(s).size(); }

CorpusDocument generate_report(const ingest::ThreatRecord& record, const DemoLibrary& demos,
                               const modelio::BackendRegistry& registry, Rng& rng, const TemplatePair& templates,
                               GenerationTrace* trace) {
    if (registry.empty()) throw ConfigError("no generation backends registered");
    if (demos.demos.empty()) throw ConfigError("demo library is empty");

    const Demo& demo = demos.demos[rng.index(demos.demos.size())];
    const auto ids = registry.ids();
    const std::size_t gen = rng.index(ids.size());
    std::size_t rev = gen;
    if (ids.size() >= 2) {
        rev = rng.index(ids.size() - 1);
        if (rev >= gen) ++rev;
    }
    const auto gen_params = modelio::sample_params(rng);
    const auto rev_params = modelio::sample_params(rng);

    const std::string gen_prompt = build_generation_prompt(templates.generation, demo.text, record);
    std::string draft;
    try {
        draft = modelio::generate(registry, ids[gen], gen_prompt, gen_params).text;
    } catch (const BackendError& e) {
        throw StageError("generation", e.what());
    }
    const std::string rev_prompt = build_revision_prompt(templates.revision, draft);
    std::string revised;
    try {
        revised = modelio::generate(registry, ids[rev], rev_prompt, rev_params).text;
    } catch (const BackendError& e) {
        throw StageError("revision", e.what());
    }
    if (trace) *trace = {gen_prompt, draft, rev_prompt};

    CorpusDocument doc;
    doc.doc_id = record.cve_id;
    doc.cve_id = record.cve_id;
    doc.token_count = count_tokens(revised);
    if (doc.token_count == 0) throw StageError("revision", "revised report has no tokens");
    doc.text = std::move(revised);
    doc.published = record.published;
    doc.provenance = {demo.id, ids[gen], ids[rev], gen_params, rev_params, 0, 0};
    return doc;
}

std::string document_id(std::uint64_t master_seed, std::string_view cve_id) {
    return std::string(cve_id) + "#" + sha256_hex(std::to_string(master_seed) + "\x1f" + std::string(cve_id)).substr(0, 12);
}

CorpusBuild build_corpus(const ingest::ThreatStore& store, const CorpusJobConfig& config,
                         const modelio::BackendRegistry& registry, const DemoLibrary& demos,
                         const TemplatePair& templates) {
    if (registry.empty()) throw ConfigError("no generation backends registered");
    if (demos.demos.empty()) throw ConfigError("demo library is empty");
    templates.generation.validate();
    templates.revision.validate();

    std::vector<const ingest::ThreatRecord*> records;
    for (const auto& [id, r] : store) records.push_back(&r);

    std::vector<std::optional<CorpusDocument>> docs(records.size());
    std::vector<std::optional<SkippedRecord>> skips(records.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < records.size(); i = next++) {
            const auto& r = *records[i];
            const std::uint64_t seed = derive_seed(config.master_seed, r.cve_id);
            Rng rng(seed);
            try {
                CorpusDocument d = generate_report(r, demos, registry, rng, templates);
                d.doc_id = document_id(config.master_seed, r.cve_id);
                d.provenance.master_seed = config.master_seed;
                d.provenance.record_seed = seed;
                docs[i] = std::move(d);
            } catch (const StageError& e) {
                skips[i] = SkippedRecord{r.cve_id, e.stage(), e.what()};
            } catch (const Error& e) {
                skips[i] = SkippedRecord{r.cve_id, "generation", e.what()};
            }
        }
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(config.workers, records.size()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
        work();
    }

    CorpusBuild out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (docs[i]) out.documents.push_back(std::move(*docs[i]));
        if (skips[i]) out.skipped.push_back(std::move(*skips[i]));
    }
    return out;
}

json to_json(const CorpusDocument& d) {
    return {{"doc_id", d.doc_id},
            {"cve_id", d.cve_id},
            {"published", d.published.str()},
            {"token_count", d.token_count},
            {"text", d.text},
            {"provenance",
             {{"demo_id", d.provenance.demo_id},
              {"generator", d.provenance.generator},
              {"reviser", d.provenance.reviser},
              {"generation_params", modelio::to_json(d.provenance.generation_params)},
              {"revision_params", modelio::to_json(d.provenance.revision_params)},
              {"master_seed", d.provenance.master_seed},
              {"record_seed", d.provenance.record_seed}}}};
}

CorpusDocument document_from_json(const json& j) {
    try {
        CorpusDocument d;
        d.doc_id = j.at("doc_id").get<std::string>();
        d.cve_id = j.at("cve_id").get<std::string>();
        d.published = YearMonth::parse(j.at("published").get<std::string>());
        d.token_count = j.at("token_count").get<std::size_t>();
        d.text = j.at("text").get<std::string>();
        const json& p = j.at("provenance");
        d.provenance.demo_id = p.at("demo_id").get<std::string>();
        d.provenance.generator = p.at("generator").get<std::string>();
        d.provenance.reviser = p.at("reviser").get<std::string>();
        d.provenance.generation_params = modelio::sampling_from_json(p.at("generation_params"));
        d.provenance.revision_params = modelio::sampling_from_json(p.at("revision_params"));
        d.provenance.master_seed = p.at("master_seed").get<std::uint64_t>();
        d.provenance.record_seed = p.at("record_seed").get<std::uint64_t>();
        if (d.token_count != count_tokens(d.text))
            throw ValidationError(d.doc_id + ": token_count does not match text");
        return d;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("corpus document: ") + e.what());
    }
}

std::string write_corpus(const std::vector<CorpusDocument>& docs, const json& header) {
    std::string out = detail::header_line(header);
    for (const auto& d : docs) out += to_json(d).dump() + "\n";
    return out;
}

std::vector<CorpusDocument> read_corpus(std::string_view contents) {
    std::vector<CorpusDocument> docs;
    detail::for_each_jsonl(contents, "corpus", [&](const json& j) { docs.push_back(document_from_json(j)); });
    return docs;
}

}  // namespace ctikit::corpusgen
