#include "ctikit/infer/retrieval.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <set>

#include "ctikit/digest.hpp"
#include "ctikit/error.hpp"
#include "ctikit/text.hpp"
#include "ctikit/jsonl.hpp"

namespace ctikit::infer {

using nlohmann::json;

CacheKey CacheKey::make(Task task, Target target, std::string_view entity) {
    return {task, target, text::canonical_label(entity)};
}

std::string CacheKey::str() const {
    return std::to_string(task_index(task)) + "|" + std::string(target_name(target)) + "|" + entity;
}

json to_json(const Document& d) { return {{"id", d.id}, {"source", d.source}, {"text", d.text}}; }

Document document_from_json(const json& j) {
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("text") || !j["text"].is_string())
        throw ValidationError("document needs string fields id and text");
    return {j["id"].get<std::string>(), j.value("source", std::string()), j["text"].get<std::string>()};
}

json to_json(const std::vector<Document>& docs) {
    json a = json::array();
    for (const auto& d : docs) a.push_back(to_json(d));
    return a;
}

std::string write_cache(const RetrievalCache& cache, const json& header) {
    std::string out = detail::header_line(header);
    auto entries = cache.entries();
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [key, docs] : entries) {
        json line = {{"task", std::string(task_name(key.task))},
                     {"target", std::string(target_name(key.target))},
                     {"entity", key.entity},
                     {"documents", to_json(docs)}};
        out += line.dump() + "\n";
    }
    return out;
}

void read_cache(std::string_view contents, RetrievalCache& cache) {
    detail::for_each_jsonl(contents, "cache", [&](const json& j) {
        const auto task = task_from_name(j.at("task").get<std::string>());
        const auto target = target_from_name(j.at("target").get<std::string>());
        if (!task || !target) throw ValidationError("cache line names an unknown task or target");
        std::vector<Document> docs;
        for (const auto& d : j.at("documents")) docs.push_back(document_from_json(d));
        cache.insert(CacheKey::make(*task, *target, j.at("entity").get<std::string>()), std::move(docs));
    });
}

std::vector<Document> MockRetriever::fetch(const CacheKey& key, std::string_view query) {
    ++calls_;
    std::vector<Document> out;
    const std::string base = sha256_hex(key.str() + "\x1f" + std::string(query));
    for (std::size_t i = 0; i < per_query_; ++i) {
        const std::string h = sha256_hex(base + "#" + std::to_string(i));
        out.push_back({"doc-" + h.substr(0, 12), "mock", "Reference material on " + std::string(target_name(key.target)) +
                                                             (key.entity.empty() ? "" : " for " + key.entity) + " (" +
                                                             h.substr(12, 16) + ")"});
    }
    return out;
}

std::vector<Document> HttpRetriever::fetch(const CacheKey& key, std::string_view query) {
    const json body = {{"query", std::string(query)},
                       {"task", std::string(task_name(key.task))},
                       {"target", std::string(target_name(key.target))},
                       {"entity", key.entity}};
    const json reply = modelio::post_json(endpoint_, body);
    if (!reply.is_object() || !reply.contains("documents") || !reply["documents"].is_array())
        throw BackendError("retriever reply lacks a documents array");
    std::vector<Document> out;
    for (const auto& d : reply["documents"]) out.push_back(document_from_json(d));
    return out;
}

std::vector<Document> BackendRanker::rank(std::vector<Document> docs, std::string_view context) {
    if (docs.size() < 2) return docs;
    std::string listing;
    for (const auto& d : docs) listing += "[" + d.id + "] " + d.text + "\n";
    modelio::CompletionRequest req{backend_id_,
                                   {{"system", "Order the documents by how useful they are for analysing the report. "
                                               "Answer with JSON {\"order\": [<document id>, ...]}."},
                                    {"user", "Report:\n" + std::string(context) + "\n\nDocuments:\n" + listing}},
                                   params_,
                                   modelio::OutputMode::Structured,
                                   "ranking"};
    json reply;
    try {
        reply = json::parse(modelio::generate(registry_, req).text);
    } catch (const json::parse_error&) {
        return docs;
    }
    if (!reply.is_object() || !reply.contains("order") || !reply["order"].is_array()) return docs;
    std::vector<Document> out;
    std::vector<bool> used(docs.size(), false);
    for (const auto& id : reply["order"]) {
        if (!id.is_string()) continue;
        for (std::size_t i = 0; i < docs.size(); ++i) {
            if (!used[i] && docs[i].id == id.get<std::string>()) {
                used[i] = true;
                out.push_back(docs[i]);
                break;
            }
        }
    }
    for (std::size_t i = 0; i < docs.size(); ++i)
        if (!used[i]) out.push_back(std::move(docs[i]));
    return out;
}

RetrievalResult retrieve(const CacheKey& key, std::string_view query, RetrievalCache& cache, Retriever& retriever,
                         Ranker& ranker, std::string_view context, bool bypass) {
    if (!bypass)
        if (auto hit = cache.get(key)) return {std::move(*hit), true};
    std::vector<Document> docs;
    try {
        docs = ranker.rank(retriever.fetch(key, query), context);
    } catch (const BackendError& e) {
        throw StageError("RAG", e.what());
    }
    if (bypass) return {std::move(docs), false};
    return {cache.insert(key, std::move(docs)), false};
}

}  // namespace ctikit::infer
