#include "ctikit/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ctikit/cascade.hpp"
#include "ctikit/config.hpp"
#include "ctikit/corpusgen.hpp"
#include "ctikit/curriculum.hpp"
#include "ctikit/digest.hpp"
#include "ctikit/error.hpp"
#include "ctikit/eval/experiments.hpp"
#include "ctikit/eval/metrics.hpp"
#include "ctikit/infer/session.hpp"
#include "ctikit/ingest.hpp"
#include "ctikit/jsonl.hpp"
#include "ctikit/objective.hpp"
#include "ctikit/text.hpp"

namespace ctikit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& contents) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << contents;
}

std::vector<json> read_jsonl(const fs::path& p) {
    std::vector<json> rows;
    detail::for_each_jsonl(read_file(p), p.string(), [&](const json& j) { rows.push_back(j); });
    return rows;
}

std::map<std::string, json> by_id(const std::vector<json>& rows, const std::string& what) {
    std::map<std::string, json> out;
    for (const auto& r : rows) {
        if (!r.contains("id") || !r["id"].is_string()) throw ValidationError(what + " row lacks a string id");
        if (!out.emplace(r["id"].get<std::string>(), r).second)
            throw ValidationError(what + " repeats id '" + r["id"].get<std::string>() + "'");
    }
    return out;
}

/// Rows of `pred` and `ref` paired by id; every reference id needs a prediction.
std::vector<std::pair<json, json>> pair_rows(const fs::path& pred, const fs::path& ref) {
    const auto p = by_id(read_jsonl(pred), "prediction file");
    const auto r = by_id(read_jsonl(ref), "reference file");
    std::vector<std::pair<json, json>> out;
    for (const auto& [id, row] : r) {
        auto it = p.find(id);
        if (it == p.end()) throw ValidationError("no prediction for reference id '" + id + "'");
        out.emplace_back(it->second, row);
    }
    if (out.empty()) throw ValidationError("no rows");
    return out;
}

std::set<std::string> string_set(const json& j, const char* key) {
    std::set<std::string> out;
    if (!j.contains(key)) return out;
    for (const auto& x : j.at(key)) out.insert(x.get<std::string>());
    return out;
}

ingest::EpssSeries series_from(const json& j) {
    ingest::EpssSeries s;
    for (const auto& p : j.at("points")) s.points.push_back({Date::parse(p.at("date").get<std::string>()), p.at("score").get<double>()});
    s.validate();
    return s;
}

ingest::CvssAssessment cvss_from(const json& j) {
    if (j.contains("vector")) return ingest::CvssAssessment::parse_vector(j["vector"].get<std::string>());
    ingest::CvssAssessment a;
    for (const auto& [k, v] : j.at("fields").items()) {
        bool found = false;
        for (auto f : ingest::kCvssFields) {
            if (text::iequals(k, ingest::cvss_field_name(f))) {
                a.set(f, v.get<std::string>());
                found = true;
            }
        }
        if (!found) throw ValidationError("unknown CVSS field '" + k + "'");
    }
    return a;
}

std::unique_ptr<eval::TokenEmbedder> make_embedder(const std::string& name) {
    if (name == "hashed") return std::make_unique<eval::HashedEmbedder>();
    return std::make_unique<eval::OneHotEmbedder>();
}

struct Scope {
    std::string product, vendor, category, from, to;

    void add(CLI::App* app) {
        app->add_option("--product", product, "Keep records whose affected systems mention this product");
        app->add_option("--vendor", vendor, "Keep records for this vendor");
        app->add_option("--category", category, "Keep records in this threat category");
        app->add_option("--from", from, "Earliest publication month (YYYY-MM)");
        app->add_option("--to", to, "Latest publication month (YYYY-MM)");
    }

    ingest::ScopeFilter filter() const {
        ingest::ScopeFilter f;
        if (!product.empty()) f.product = product;
        if (!vendor.empty()) f.vendor = vendor;
        if (!category.empty()) f.category = category;
        if (!from.empty()) f.from = YearMonth::parse(from);
        if (!to.empty()) f.to = YearMonth::parse(to);
        return f;
    }

    bool active() const { return !(product.empty() && vendor.empty() && category.empty() && from.empty() && to.empty()); }
};

/// Backends, cache and session settings; heap-allocated because the session
/// config points into it.
struct Runtime {
    modelio::BackendRegistry registry;
    std::unique_ptr<infer::RetrievalCache> cache;
    infer::SessionConfig session;
    std::optional<fs::path> cache_path;
};

std::unique_ptr<Runtime> make_runtime(const AppConfig& c, bool bypass) {
    auto rt = std::make_unique<Runtime>();
    rt->registry = c.make_registry();
    if (rt->registry.empty()) throw ConfigError("no backends configured");
    std::optional<infer::RetrievalCache::Clock::duration> ttl;
    if (c.cache.ttl_seconds)
        ttl = std::chrono::duration_cast<infer::RetrievalCache::Clock::duration>(
            std::chrono::duration<double>(*c.cache.ttl_seconds));
    rt->cache = std::make_unique<infer::RetrievalCache>(c.cache.capacity, ttl);
    if (c.cache.path) {
        rt->cache_path = c.resolve(*c.cache.path);
        if (fs::exists(*rt->cache_path)) infer::read_cache(read_file(*rt->cache_path), *rt->cache);
    }

    auto& s = rt->session;
    const auto& inf = c.inference;
    s.registry = &rt->registry;
    s.backend_id = inf.backend.empty() ? rt->registry.ids().front() : inf.backend;
    s.stage_backends = inf.stage_backends;
    if (inf.topic == "backend")
        s.topic = std::make_shared<infer::BackendTopicProvider>(
            rt->registry, inf.topic_backend.empty() ? s.backend_id : inf.topic_backend);
    else
        s.topic = std::make_shared<infer::KeywordTopicProvider>();
    if (inf.retriever == "http")
        s.retriever = std::make_shared<infer::HttpRetriever>(inf.retriever_endpoint);
    else
        s.retriever = std::make_shared<infer::MockRetriever>();
    if (inf.ranker == "backend")
        s.ranker = std::make_shared<infer::BackendRanker>(rt->registry,
                                                          inf.ranker_backend.empty() ? s.backend_id : inf.ranker_backend);
    else
        s.ranker = std::make_shared<infer::FetchOrderRanker>();
    s.cache = rt->cache.get();
    if (c.reasoning_templates)
        s.templates = infer::ReasoningTemplates::from_json(json::parse(read_file(c.resolve(*c.reasoning_templates))));
    s.params = {inf.temperature, inf.top_p, 0};
    s.seed = c.seed;
    s.bypass_cache = bypass;
    s.topic_threshold = inf.topic_threshold;
    return rt;
}

void save_cache(const Runtime& rt, const AppConfig& c) {
    if (rt.cache_path) write_file(*rt.cache_path, infer::write_cache(*rt.cache, {{"kind", "cache"}, {"config_digest", c.digest()}}));
}

json header(const AppConfig& c, std::string_view kind) {
    return {{"kind", std::string(kind)}, {"config_digest", c.digest()}, {"seed", c.seed}};
}

std::string report_file(const std::vector<eval::MetricReport>& reports, const AppConfig& c) {
    std::string out = detail::header_line(header(c, "metrics"));
    for (const auto& r : reports) out += eval::to_json(r).dump() + "\n";
    return out;
}

corpusgen::TemplatePair load_templates(const AppConfig& c) {
    corpusgen::TemplatePair t;
    if (c.generation_template) t.generation.body = read_file(c.resolve(*c.generation_template));
    if (c.revision_template) t.revision.body = read_file(c.resolve(*c.revision_template));
    t.generation.validate();
    t.revision.validate();
    return t;
}

std::vector<ingest::ThreatRecord> read_feed(const fs::path& p, const std::string& source, const ingest::IngestConfig& cfg) {
    const std::string contents = read_file(p);
    std::vector<ingest::ThreatRecord> out;
    const std::string t = text::trim(contents);
    if (!t.empty() && t.front() == '[') {
        json arr;
        try {
            arr = json::parse(contents);
        } catch (const json::parse_error& e) {
            throw ParseError(p.string() + ": " + e.what(), e.byte);
        }
        for (const auto& item : arr) out.push_back(ingest::parse_record(item.dump(), source, cfg));
        return out;
    }
    std::size_t pos = 0;
    while (pos < contents.size()) {
        std::size_t nl = contents.find('\n', pos);
        if (nl == std::string::npos) nl = contents.size();
        const std::string_view line(contents.data() + pos, nl - pos);
        const std::size_t start = pos;
        pos = nl + 1;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(ingest::parse_record(line, source, cfg));
        } catch (const ParseError& e) {
            throw ParseError(p.string() + ": " + e.what(), start + e.offset());
        }
    }
    return out;
}

ingest::ThreatStore load_store(const fs::path& p) { return ingest::read_store(read_file(p)); }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in) {
    CLI::App app{"Threat-intelligence corpus, curriculum, cascade and inference toolkit", "ctikit"};
    app.fallthrough();
    app.require_subcommand(1);

    std::string config_path, manifest_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed, "Override the master seed");
    app.add_option("--workers", workers, "Worker threads for corpus generation");
    app.add_option("--manifest", manifest_path, "Run manifest path (default: run_manifest.json next to the outputs)");

    std::vector<fs::path> outputs;
    std::string command;
    AppConfig cfg;
    bool cfg_loaded = false;

    auto load_config = [&] {
        cfg = config_path.empty() ? AppConfig::from_json(json::object()) : AppConfig::load(config_path);
        if (seed) cfg.seed = *seed;
        if (workers) {
            if (*workers == 0) throw ConfigError("--workers must be at least 1");
            cfg.workers = *workers;
        }
        cfg_loaded = true;
    };
    auto emit = [&](const fs::path& p, const std::string& contents) {
        write_file(p, contents);
        outputs.push_back(p);
    };

    int status = kOk;

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "Parse source feeds into a normalized store");
    std::vector<std::string> feeds;
    std::string store_out;
    Scope ingest_scope;
    ingest_cmd->add_option("--feed", feeds, "SOURCE=PATH; JSON lines or a JSON array of raw records")->required();
    ingest_cmd->add_option("-o,--out", store_out, "Store file to write")->required();
    ingest_scope.add(ingest_cmd);
    ingest_cmd->callback([&] {
        command = "ingest";
        load_config();
        std::vector<ingest::ThreatRecord> records;
        for (const auto& f : feeds) {
            const auto eq = f.find('=');
            if (eq == std::string::npos) throw ConfigError("--feed expects SOURCE=PATH, got '" + f + "'");
            const std::string source = f.substr(0, eq);
            if (!cfg.ingest.catalog.known(source)) throw ConfigError("unknown source id '" + source + "'");
            auto part = read_feed(f.substr(eq + 1), source, cfg.ingest);
            records.insert(records.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
        }
        ingest::ThreatStore store = ingest::merge_store(records, cfg.ingest.precedence);
        if (ingest_scope.active()) {
            std::map<std::string, ingest::ThreatRecord> kept;
            for (auto& r : ingest::query(store, ingest_scope.filter())) kept.emplace(r.cve_id, std::move(r));
            store = ingest::ThreatStore(std::move(kept));
        }
        emit(store_out, ingest::write_store(store, header(cfg, "store")));
        out << "ingested " << records.size() << " feed records into " << store.size() << " store records\n";
    });

    // corpus build
    auto* corpus_cmd = app.add_subcommand("corpus", "Synthetic report corpus");
    corpus_cmd->require_subcommand(1);
    auto* corpus_build = corpus_cmd->add_subcommand("build", "Generate and revise one report per store record");
    std::string corpus_store, corpus_out;
    corpus_build->add_option("--store", corpus_store, "Store file")->required();
    corpus_build->add_option("-o,--out", corpus_out, "Corpus file to write")->required();
    corpus_build->callback([&] {
        command = "corpus build";
        load_config();
        const auto store = load_store(corpus_store);
        const auto registry = cfg.make_registry();
        const auto demos = cfg.demos ? corpusgen::DemoLibrary::from_jsonl(read_file(cfg.resolve(*cfg.demos)))
                                     : corpusgen::DemoLibrary::builtin();
        const auto built = corpusgen::build_corpus(store, {cfg.seed, cfg.workers}, registry, demos, load_templates(cfg));
        json h = header(cfg, "corpus");
        h["skipped"] = built.skipped.size();
        emit(corpus_out, corpusgen::write_corpus(built.documents, h));
        for (const auto& s : built.skipped) err << "skipped " << s.cve_id << " (" << s.stage << "): " << s.message << "\n";
        out << "generated " << built.documents.size() << " documents, skipped " << built.skipped.size() << "\n";
        if (built.documents.empty() && !built.skipped.empty()) status = kStageError;
    });

    // curriculum plan
    auto* curriculum_cmd = app.add_subcommand("curriculum", "Curriculum pacing");
    curriculum_cmd->require_subcommand(1);
    auto* plan_cmd = curriculum_cmd->add_subcommand("plan", "Write one manifest per epoch");
    std::string plan_corpus, plan_dir, plan_preset;
    plan_cmd->add_option("--corpus", plan_corpus, "Corpus file")->required();
    plan_cmd->add_option("--out-dir", plan_dir, "Directory for epoch manifests")->required();
    plan_cmd->add_option("--preset", plan_preset, "Pacing preset (1B, 8B, 70B); overrides the config");
    plan_cmd->callback([&] {
        command = "curriculum plan";
        load_config();
        const auto sched = plan_preset.empty() ? cfg.pacing : curriculum::PacingSchedule::preset(plan_preset);
        const auto docs = corpusgen::read_corpus(read_file(plan_corpus));
        const auto ordered = curriculum::order_corpus(std::span<const corpusgen::CorpusDocument>(docs));
        const auto manifests = curriculum::emit_schedule(ordered, sched);
        json h = header(cfg, "manifest");
        h["preset"] = plan_preset.empty() ? cfg.pacing_name : plan_preset;
        std::vector<std::string> sizes;
        for (const auto& m : manifests) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch-%03d.txt", m.epoch);
            emit(fs::path(plan_dir) / name, curriculum::write_manifest(m, h));
            sizes.push_back(std::to_string(m.entries.size()));
        }
        out << "epochs " << manifests.size() << ", sizes [" << text::join(sizes, ",") << "]\n";
    });

    // cascade build
    auto* cascade_cmd = app.add_subcommand("cascade", "Cascading instruction data");
    cascade_cmd->require_subcommand(1);
    auto* cascade_build = cascade_cmd->add_subcommand("build", "Build chains from store records");
    std::string cascade_store, cascade_out, cascade_contexts;
    Scope cascade_scope;
    cascade_build->add_option("--store", cascade_store, "Store file")->required();
    cascade_build->add_option("-o,--out", cascade_out, "Dataset file to write")->required();
    cascade_build->add_option("--contexts", cascade_contexts, "Companion step-context file");
    cascade_scope.add(cascade_build);
    cascade_build->callback([&] {
        command = "cascade build";
        load_config();
        const auto store = load_store(cascade_store);
        const auto templates =
            cfg.question_templates
                ? cascade::QuestionTemplates::from_json(json::parse(read_file(cfg.resolve(*cfg.question_templates))))
                : cascade::QuestionTemplates::standard();
        std::vector<cascade::CascadeChain> chains;
        std::size_t skipped = 0;
        for (const auto& r : ingest::query(store, cascade_scope.filter())) {
            if (text::trim(r.description).empty()) {
                err << "skipped " << r.cve_id << ": no initial evidence\n";
                ++skipped;
                continue;
            }
            auto chain = cascade::build_chain(r, TaskGraph::standard(), templates);
            const auto report = cascade::validate_chain(chain);
            if (!report.ok()) throw ValidationError(chain.chain_id + ": " + report.findings.front().message);
            chains.push_back(std::move(chain));
        }
        emit(cascade_out, cascade::write_dataset(chains, cfg.joiner, header(cfg, "cascade")));
        if (!cascade_contexts.empty())
            emit(cascade_contexts, cascade::write_contexts(chains, cfg.joiner, header(cfg, "contexts")));
        out << "built " << chains.size() << " chains, skipped " << skipped << "\n";
    });

    // objective check
    auto* objective_cmd = app.add_subcommand("objective", "Objective checks");
    objective_cmd->require_subcommand(1);
    auto* check_cmd = objective_cmd->add_subcommand("check", "Gradient check on random bigram instances");
    int instances = 100, vocab = 4;
    std::string check_dataset;
    check_cmd->add_option("--instances", instances, "Random instances")->check(CLI::PositiveNumber);
    check_cmd->add_option("--vocab", vocab, "Vocabulary size")->check(CLI::PositiveNumber);
    check_cmd->add_option("--dataset", check_dataset, "Cascade dataset; also reports its loss");
    check_cmd->callback([&] {
        command = "objective check";
        load_config();
        Rng rng(derive_seed(cfg.seed, "objective-check"));
        double worst = 0.0;
        bool reductions = true;
        for (int n = 0; n < instances; ++n) {
            auto theta = objective::ToyModel::random(vocab, rng);
            objective::ObjectiveConfig oc{rng.uniform(0.0, 1.0), objective::ToyModel::random(vocab, rng)};
            std::vector<objective::TokenSequence> corpus(5);
            for (auto& s : corpus) {
                s.resize(1 + rng.index(8));
                for (auto& x : s) x = static_cast<int>(rng.index(static_cast<std::size_t>(vocab)));
            }
            worst = std::max(worst, objective::check_gradient(theta, corpus, oc).max_rel_error);
            objective::ObjectiveConfig plain{0.0, oc.theta0};
            objective::ObjectiveConfig anchored{oc.lambda, theta};
            const double nll = objective::clm_loss(theta, corpus, plain);
            reductions = reductions && objective::clm_loss(theta, corpus, anchored) == nll &&
                         (objective::clm_grad(theta, corpus, anchored) - objective::clm_grad(theta, corpus, plain))
                                 .cwiseAbs()
                                 .maxCoeff() == 0.0;
        }
        out << "instances " << instances << ", vocab " << vocab << "\n";
        out << "max relative gradient error " << format_double(worst) << (worst < 1e-6 ? " (ok)" : " (FAIL)") << "\n";
        out << "lambda=0 and theta=theta0 reductions " << (reductions ? "exact" : "NOT exact") << "\n";
        if (!check_dataset.empty()) {
            std::string joiner;
            const auto chains = cascade::read_dataset(read_file(check_dataset), &joiner);
            std::vector<cascade::StepContext> contexts;
            std::vector<std::string> texts;
            for (const auto& c : chains)
                for (auto& ctx : cascade::serialize_chain(c, joiner)) {
                    texts.push_back(ctx.context);
                    texts.push_back(ctx.answer);
                    contexts.push_back(std::move(ctx));
                }
            const auto v = objective::Vocabulary::fit(texts);
            const auto theta = objective::ToyModel::random(v.size(), rng);
            out << "cascade loss over " << contexts.size() << " steps "
                << format_double(objective::cascade_loss(theta, contexts, v)) << "\n";
        }
        if (worst >= 1e-6 || !reductions) status = kValidationError;
    });

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "Modular inference sessions");
    infer_cmd->require_subcommand(1);
    std::string e0_text, e0_file, infer_store, infer_cve, question, transcript_out, timings_out;
    bool bypass = false;
    auto add_evidence = [&](CLI::App* c) {
        c->add_option("--e0", e0_text, "Initial evidence text");
        c->add_option("--e0-file", e0_file, "File holding the initial evidence");
        c->add_option("--store", infer_store, "Store file; with --cve uses the record description as evidence");
        c->add_option("--cve", infer_cve, "Record id in --store");
        c->add_flag("--bypass-cache", bypass, "Neither read nor write the retrieval cache");
        c->add_option("--timings", timings_out, "Write per-stage timings to this file");
    };
    auto evidence = [&]() -> std::string {
        if (!e0_text.empty()) return e0_text;
        if (!e0_file.empty()) return read_file(e0_file);
        if (!infer_store.empty() && !infer_cve.empty()) {
            const auto store = load_store(infer_store);
            const auto* r = store.find(infer_cve);
            if (!r) throw ValidationError("no record " + infer_cve + " in " + infer_store);
            return r->description;
        }
        throw ConfigError("give --e0, --e0-file or --store with --cve");
    };
    auto transcript_doc = [&](const json& body) {
        json j = body;
        j["config_digest"] = cfg.digest();
        j["seed"] = cfg.seed;
        return j.dump(2) + "\n";
    };

    auto* ask_cmd = infer_cmd->add_subcommand("ask", "Answer one question");
    add_evidence(ask_cmd);
    ask_cmd->add_option("-q,--question", question, "Analyst question")->required();
    ask_cmd->add_option("-o,--out", transcript_out, "Transcript file");
    ask_cmd->callback([&] {
        command = "infer ask";
        load_config();
        const std::string e0 = evidence();
        auto rt = make_runtime(cfg, bypass);
        const auto tr = infer::run_session(e0, question, rt->session);
        if (!transcript_out.empty()) emit(transcript_out, transcript_doc(infer::to_json(tr)));
        if (!timings_out.empty()) emit(timings_out, infer::timings_json(tr).dump(2) + "\n");
        save_cache(*rt, cfg);
        if (tr.error) {
            err << "session failed in " << tr.error_stage.value_or("?") << ": " << *tr.error << "\n";
            status = kStageError;
            return;
        }
        out << tr.response.render();
    });

    auto* repl_cmd = infer_cmd->add_subcommand("repl", "Interactive cascading session; one question per line");
    add_evidence(repl_cmd);
    repl_cmd->add_option("-o,--out", transcript_out, "Write every turn to this file");
    repl_cmd->callback([&] {
        command = "infer repl";
        load_config();
        auto rt = make_runtime(cfg, bypass);
        infer::Session session(evidence(), rt->session);
        std::string line;
        out << "> " << std::flush;
        while (std::getline(in, line)) {
            const std::string q = text::trim(line);
            if (q == "quit" || q == "exit") break;
            if (!q.empty()) {
                const auto& tr = session.ask(q);
                if (tr.error)
                    out << "error in " << tr.error_stage.value_or("?") << ": " << *tr.error << "\n";
                else
                    out << tr.response.render();
            }
            out << "> " << std::flush;
        }
        out << "\n";
        if (!transcript_out.empty()) {
            json turns = json::array();
            for (const auto& t : session.turns()) turns.push_back(infer::to_json(t));
            emit(transcript_out, transcript_doc({{"turns", turns}}));
        }
        save_cache(*rt, cfg);
    });

    // cache
    auto* cache_cmd = app.add_subcommand("cache", "Retrieval cache maintenance");
    cache_cmd->require_subcommand(1);
    auto cache_path = [&] {
        if (!cfg.cache.path) throw ConfigError("config sets no cache.path");
        return cfg.resolve(*cfg.cache.path);
    };
    cache_cmd->add_subcommand("stats", "Show cache size")->callback([&] {
        command = "cache stats";
        load_config();
        const auto p = cache_path();
        infer::RetrievalCache cache(cfg.cache.capacity);
        if (fs::exists(p)) infer::read_cache(read_file(p), cache);
        const auto s = cache.stats();
        out << "entries " << s.size << " / capacity " << s.capacity << "\n";
        for (const auto& [k, docs] : cache.entries()) out << "  " << k.str() << " (" << docs.size() << " documents)\n";
    });
    cache_cmd->add_subcommand("clear", "Remove every cache entry")->callback([&] {
        command = "cache clear";
        load_config();
        const auto p = cache_path();
        infer::RetrievalCache cache(cfg.cache.capacity);
        emit(p, infer::write_cache(cache, {{"kind", "cache"}, {"config_digest", cfg.digest()}}));
        out << "cleared " << p.string() << "\n";
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Metrics and experiments");
    eval_cmd->require_subcommand(1);
    std::string pred_path, ref_path, report_out, dates_arg, dataset_path, strategy = "direct", transcript_path, eval_store,
                                                                          eval_cve;
    std::optional<std::size_t> k_opt;
    std::optional<double> threshold_opt;
    auto add_pair = [&](CLI::App* c) {
        c->add_option("--pred", pred_path, "Prediction rows (JSON lines with id)")->required();
        c->add_option("--ref", ref_path, "Reference rows (JSON lines with id)")->required();
        c->add_option("-o,--out", report_out, "Metric report file");
    };
    auto finish = [&](const std::vector<eval::MetricReport>& reports) {
        out << eval::render_table(reports);
        if (!report_out.empty()) emit(report_out, report_file(reports, cfg));
    };
    auto k = [&] { return k_opt.value_or(cfg.metrics.k); };
    auto threshold = [&] { return threshold_opt.value_or(cfg.metrics.similarity_threshold); };

    auto* eval_set = eval_cmd->add_subcommand("set", "Precision, recall, F1 and IoU of label sets");
    add_pair(eval_set);
    eval_set->callback([&] {
        command = "eval set";
        load_config();
        const auto rows = pair_rows(pred_path, ref_path);
        double p = 0, r = 0, f = 0, i = 0;
        for (const auto& [pr, rf] : rows) {
            const auto s = eval::set_metrics(string_set(pr, "labels"), string_set(rf, "labels"));
            p += s.precision, r += s.recall, f += s.f1, i += s.iou;
        }
        const double n = static_cast<double>(rows.size());
        const auto d = cfg.digest();
        finish({{"precision", 100 * p / n, rows.size(), d},
                {"recall", 100 * r / n, rows.size(), d},
                {"f1", 100 * f / n, rows.size(), d},
                {"iou", 100 * i / n, rows.size(), d}});
    });

    auto* eval_hit = eval_cmd->add_subcommand("hit", "Hit@k of ranked identifiers");
    add_pair(eval_hit);
    eval_hit->add_option("--k", k_opt, "Cutoff");
    eval_hit->callback([&] {
        command = "eval hit";
        load_config();
        std::vector<eval::RankedPrediction> rows;
        for (const auto& [pr, rf] : pair_rows(pred_path, ref_path))
            rows.push_back({pr.at("ranked").get<std::vector<std::string>>(), string_set(rf, "truth")});
        finish({{"hit@" + std::to_string(k()), eval::hit_ratio(rows, k()), rows.size(), cfg.digest()}});
    });

    auto* eval_cvss = eval_cmd->add_subcommand("cvss", "Per-metric CVSS classification accuracy");
    add_pair(eval_cvss);
    eval_cvss->callback([&] {
        command = "eval cvss";
        load_config();
        std::vector<ingest::CvssAssessment> preds, refs;
        for (const auto& [pr, rf] : pair_rows(pred_path, ref_path)) {
            preds.push_back(cvss_from(pr));
            refs.push_back(cvss_from(rf));
        }
        std::vector<eval::MetricReport> reports;
        for (const auto& [f, acc] : eval::classify_accuracy(preds, refs))
            reports.push_back({"accuracy/" + std::string(ingest::cvss_field_name(f)), 100 * acc, preds.size(), cfg.digest()});
        finish(reports);
    });

    auto* eval_epss = eval_cmd->add_subcommand("epss", "RMSE of EPSS predictions against nearest truth dates");
    add_pair(eval_epss);
    eval_epss->add_option("--dates", dates_arg, "Comma-separated query dates; default: each prediction's dates");
    eval_epss->callback([&] {
        command = "eval epss";
        load_config();
        std::vector<double> sq;
        const auto rows = pair_rows(pred_path, ref_path);
        for (const auto& [pr, rf] : rows) {
            const auto pred = series_from(pr);
            std::vector<Date> dates;
            if (!dates_arg.empty()) {
                std::string s = dates_arg;
                std::replace(s.begin(), s.end(), ',', ' ');
                for (const auto& d : text::split_whitespace(s)) dates.push_back(Date::parse(d));
            } else {
                for (const auto& p : pred.points) dates.push_back(p.date);
            }
            const auto e = eval::epss_squared_errors(pred, series_from(rf), dates);
            sq.insert(sq.end(), e.begin(), e.end());
        }
        if (sq.empty()) throw ValidationError("no query dates");
        double sum = 0;
        for (double x : sq) sum += x;
        finish({{"epss_rmse", std::sqrt(sum / static_cast<double>(sq.size())), rows.size(), cfg.digest()}});
    });

    auto* eval_sim = eval_cmd->add_subcommand("similarity", "Token-matching text similarity and descriptive accuracy");
    add_pair(eval_sim);
    eval_sim->add_option("--threshold", threshold_opt, "Similarity needed to count a descriptive answer as correct");
    eval_sim->callback([&] {
        command = "eval similarity";
        load_config();
        const auto emb = make_embedder(cfg.metrics.embedder);
        const auto rows = pair_rows(pred_path, ref_path);
        double sim = 0;
        std::size_t correct = 0;
        for (const auto& [pr, rf] : rows) {
            const auto a = pr.at("text").get<std::string>();
            const auto b = rf.at("text").get<std::string>();
            sim += eval::text_similarity(a, b, *emb);
            correct += eval::descriptive_match(a, b, *emb, threshold());
        }
        const double n = static_cast<double>(rows.size());
        finish({{"similarity", sim / n, rows.size(), cfg.digest()},
                {"descriptive_accuracy", 100.0 * static_cast<double>(correct) / n, rows.size(), cfg.digest()}});
    });

    auto* eval_tr = eval_cmd->add_subcommand("transcript", "Score an inference transcript against a reference");
    eval_tr->add_option("--transcript", transcript_path, "Transcript written by infer ask")->required();
    eval_tr->add_option("--ref", ref_path, "Reference JSON with optional entities, text and cves");
    eval_tr->add_option("--store", eval_store, "Store file; with --cve builds the reference from the record");
    eval_tr->add_option("--cve", eval_cve, "Record id in --store");
    eval_tr->add_option("--k", k_opt, "Cutoff for CVE hits");
    eval_tr->add_option("-o,--out", report_out, "Metric report file");
    eval_tr->callback([&] {
        command = "eval transcript";
        load_config();
        const json tr = json::parse(read_file(transcript_path));
        json ref;
        if (!ref_path.empty()) {
            ref = json::parse(read_file(ref_path));
        } else if (!eval_store.empty() && !eval_cve.empty()) {
            const auto store = load_store(eval_store);
            const auto* r = store.find(eval_cve);
            if (!r) throw ValidationError("no record " + eval_cve + " in " + eval_store);
            std::set<std::string> ents;
            if (r->threat_actor) ents.insert(*r->threat_actor);
            if (r->campaign) ents.insert(*r->campaign);
            for (const auto& a : r->affected_systems.values()) ents.insert(a);
            ents.insert(r->attack_infra.begin(), r->attack_infra.end());
            ref = {{"entities", ents}, {"text", r->description}, {"cves", r->related_cves}};
        } else {
            throw ConfigError("give --ref or --store with --cve");
        }
        if (tr.contains("error")) throw StageError("eval", "transcript records a failed session");
        std::set<std::string> predicted;
        for (const auto& st : tr.at("stages"))
            if (st.contains("entities"))
                for (const auto& e : st["entities"]) predicted.insert(e.at("text").get<std::string>());
        const auto d = cfg.digest();
        std::vector<eval::MetricReport> reports;
        if (ref.contains("entities")) {
            const auto s = eval::set_metrics(predicted, string_set(ref, "entities"));
            reports.push_back({"entity_f1", 100 * s.f1, 1, d});
            reports.push_back({"entity_iou", 100 * s.iou, 1, d});
        }
        const auto& resp = tr.at("response");
        const std::string answer = resp.at("summary").get<std::string>() + "\n" + resp.at("reasoning").get<std::string>();
        if (ref.contains("text")) {
            const auto emb = make_embedder(cfg.metrics.embedder);
            reports.push_back({"summary_similarity", eval::text_similarity(resp.at("summary").get<std::string>(),
                                                                           ref["text"].get<std::string>(), *emb),
                               1, d});
        }
        if (ref.contains("cves")) {
            const auto ranked = eval::extract_cve_ids(answer);
            reports.push_back({"hit@" + std::to_string(k()),
                               100.0 * eval::hit_at_k(ranked, string_set(ref, "cves"), k()), 1, d});
        }
        finish(reports);
    });

    auto session_runner = [&](Runtime& rt, const std::string& e0) {
        return [&rt, e0](std::string_view prompt) {
            const auto tr = infer::run_session(e0, prompt, rt.session);
            if (tr.error) throw StageError(tr.error_stage.value_or("session"), *tr.error);
            return tr.response.render();
        };
    };

    auto* eval_corr = eval_cmd->add_subcommand("correlation", "CVE expansion experiment");
    eval_corr->add_option("--dataset", dataset_path, "Rows {id, report, truth: [CVE ids]}")->required();
    eval_corr->add_option("--strategy", strategy, "direct, via_cve or via_cwe");
    eval_corr->add_option("--k", k_opt, "Cutoff");
    eval_corr->add_option("-o,--out", report_out, "Metric report file");
    eval_corr->callback([&] {
        command = "eval correlation";
        load_config();
        std::vector<eval::CorrelationRow> rows;
        for (const auto& j : read_jsonl(dataset_path))
            rows.push_back({j.at("id").get<std::string>(), j.at("report").get<std::string>(), string_set(j, "truth")});
        auto rt = make_runtime(cfg, false);
        const auto outcome = eval::run_correlation_experiment(
            eval::strategy_from_name(strategy), rows,
            [&](std::string_view prompt) {
                return session_runner(*rt, std::string(prompt))("Which known CVE identifiers relate to this threat?");
            },
            k());
        for (const auto& f : outcome.failures) err << "miss: " << f << "\n";
        auto report = outcome.report;
        report.config_digest = cfg.digest();
        finish({report});
        save_cache(*rt, cfg);
    });

    auto* eval_trend = eval_cmd->add_subcommand("epss-trend", "EPSS interpolation and prediction experiment");
    eval_trend->add_option("--dataset", dataset_path, "Rows {cve_id, report, t0, truth: [{date, score}]}")->required();
    eval_trend->add_option("-o,--out", report_out, "Metric report file");
    eval_trend->callback([&] {
        command = "eval epss-trend";
        load_config();
        std::vector<eval::EpssRow> rows;
        for (const auto& j : read_jsonl(dataset_path))
            rows.push_back({j.at("cve_id").get<std::string>(), j.at("report").get<std::string>(),
                            Date::parse(j.at("t0").get<std::string>()), series_from({{"points", j.at("truth")}})});
        auto rt = make_runtime(cfg, false);
        const auto outcome = eval::run_epss_experiment(rows, [&](std::string_view prompt) {
            return session_runner(*rt, std::string(prompt))(
                "What EPSS scores do you expect on the listed dates?");
        });
        for (const auto& s : outcome.skipped) err << "skipped " << s << ": fewer than 6 months of EPSS history\n";
        for (const auto& f : outcome.failures) err << "failed " << f << "\n";
        const auto d = cfg.digest();
        finish({{"epss_interpolation_rmse", outcome.interpolation_rmse, outcome.rows_used, d},
                {"epss_prediction_rmse", outcome.prediction_rmse, outcome.rows_used, d}});
        save_cache(*rt, cfg);
    });

    std::vector<std::string> argv_store;
    argv_store.push_back("ctikit");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        status = kConfigError;
    } catch (const TemplateError& e) {
        err << "config error: " << e.what() << "\n";
        status = kConfigError;
    } catch (const StageError& e) {
        err << "stage error: " << e.what() << "\n";
        status = kStageError;
    } catch (const BackendError& e) {
        err << "stage error: " << e.what() << "\n";
        status = kStageError;
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << "\n";
        status = kValidationError;
    } catch (const ParseError& e) {
        err << "validation error: " << e.what() << "\n";
        status = kValidationError;
    } catch (const json::exception& e) {
        err << "validation error: " << e.what() << "\n";
        status = kValidationError;
    } catch (const fs::filesystem_error& e) {
        err << "config error: " << e.what() << "\n";
        status = kConfigError;
    }

    if (cfg_loaded) {
        fs::path mp = manifest_path;
        if (mp.empty()) mp = (outputs.empty() ? fs::path(".") : outputs.front().parent_path()) / "run_manifest.json";
        json names = json::array();
        for (const auto& p : outputs) names.push_back(p.filename().string());
        const json manifest = {{"command", command},
                               {"config_digest", cfg.digest()},
                               {"seed", cfg.seed},
                               {"status", status},
                               {"outputs", names}};
        try {
            write_file(mp, manifest.dump(2) + "\n");
        } catch (const Error& e) {
            err << "could not write run manifest: " << e.what() << "\n";
        }
    }
    return status;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::istringstream empty;
    return run(args, out, err, empty);
}

}  // namespace ctikit::cli
