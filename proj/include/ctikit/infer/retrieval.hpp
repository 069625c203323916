#pragma once

#include <atomic>
#include <chrono>
#include <list>
#include <map>
#include <mutex>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctikit/modelio.hpp"
#include "ctikit/taskgraph.hpp"

namespace ctikit::infer {

/// Retrieval cache key; the entity string is canonicalized on construction.
struct CacheKey {
    Task task = Task::Attribution;
    Target target = Target::ThreatActor;
    std::string entity;

    static CacheKey make(Task task, Target target, std::string_view entity);
    std::string str() const;

    auto operator<=>(const CacheKey&) const = default;
};

struct Document {
    std::string id;
    std::string source;
    std::string text;

    bool operator==(const Document&) const = default;
};

struct CacheStats {
    std::size_t hits = 0;
    std::size_t misses = 0;
    std::size_t evictions = 0;
    std::size_t size = 0;
    std::size_t capacity = 0;
};

/// Thread-safe LRU map. Values are insert-if-absent: once stored, a key's
/// value does not change until it is evicted, expires, or the cache is cleared.
template <typename K, typename V>
class LruCache {
public:
    using Clock = std::chrono::steady_clock;

    explicit LruCache(std::size_t capacity = 1024, std::optional<Clock::duration> ttl = std::nullopt)
        : capacity_(capacity), ttl_(ttl) {}

    std::optional<V> get(const K& key) {
        std::lock_guard lock(mu_);
        auto it = index_.find(key);
        if (it == index_.end() || expired(*it->second)) {
            if (it != index_.end()) erase(it);
            ++misses_;
            return std::nullopt;
        }
        order_.splice(order_.begin(), order_, it->second);
        ++hits_;
        return it->second->value;
    }

    /// Returns the stored value: `value` if the key was absent, else the existing one.
    V insert(const K& key, V value) {
        std::lock_guard lock(mu_);
        if (auto it = index_.find(key); it != index_.end()) {
            if (!expired(*it->second)) {
                order_.splice(order_.begin(), order_, it->second);
                return it->second->value;
            }
            erase(it);
        }
        if (capacity_ == 0) return value;
        while (order_.size() >= capacity_) {
            index_.erase(order_.back().key);
            order_.pop_back();
            ++evictions_;
        }
        order_.push_front({key, std::move(value), Clock::now()});
        index_.emplace(key, order_.begin());
        return order_.front().value;
    }

    bool contains(const K& key) const {
        std::lock_guard lock(mu_);
        auto it = index_.find(key);
        return it != index_.end() && !expired(*it->second);
    }

    void clear() {
        std::lock_guard lock(mu_);
        order_.clear();
        index_.clear();
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return order_.size();
    }

    CacheStats stats() const {
        std::lock_guard lock(mu_);
        return {hits_, misses_, evictions_, order_.size(), capacity_};
    }

    /// Entries from least to most recently used.
    std::vector<std::pair<K, V>> entries() const {
        std::lock_guard lock(mu_);
        std::vector<std::pair<K, V>> out;
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) out.emplace_back(it->key, it->value);
        return out;
    }

private:
    struct Node {
        K key;
        V value;
        Clock::time_point inserted;
    };
    using Iter = typename std::list<Node>::iterator;

    bool expired(const Node& n) const { return ttl_ && Clock::now() - n.inserted > *ttl_; }
    void erase(typename std::map<K, Iter>::iterator it) {
        order_.erase(it->second);
        index_.erase(it);
    }

    mutable std::mutex mu_;
    std::size_t capacity_;
    std::optional<Clock::duration> ttl_;
    std::list<Node> order_;
    std::map<K, Iter> index_;
    std::size_t hits_ = 0, misses_ = 0, evictions_ = 0;
};

using RetrievalCache = LruCache<CacheKey, std::vector<Document>>;

/// Cache file: a header line then one {key, documents} line per entry, least
/// recent first.
std::string write_cache(const RetrievalCache& cache, const nlohmann::json& header);
void read_cache(std::string_view contents, RetrievalCache& cache);

class Retriever {
public:
    virtual ~Retriever() = default;
    virtual std::vector<Document> fetch(const CacheKey& key, std::string_view query) = 0;
};

/// Deterministic documents derived from the key; counts fetches.
class MockRetriever final : public Retriever {
public:
    explicit MockRetriever(std::size_t per_query = 3) : per_query_(per_query) {}
    std::vector<Document> fetch(const CacheKey& key, std::string_view query) override;
    std::size_t calls() const { return calls_.load(); }

private:
    std::size_t per_query_;
    std::atomic<std::size_t> calls_{0};
};

/// POSTs {query, task, target, entity} and reads {documents: [{id, source, text}]}.
class HttpRetriever final : public Retriever {
public:
    explicit HttpRetriever(modelio::HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
    std::vector<Document> fetch(const CacheKey& key, std::string_view query) override;

private:
    modelio::HttpEndpoint endpoint_;
};

class Ranker {
public:
    virtual ~Ranker() = default;
    virtual std::vector<Document> rank(std::vector<Document> docs, std::string_view context) = 0;
};

/// Keeps fetch order.
class FetchOrderRanker final : public Ranker {
public:
    std::vector<Document> rank(std::vector<Document> docs, std::string_view) override { return docs; }
};

/// Asks a backend for {"order": [doc ids]} by relevance. Listed documents come
/// first in that order; the rest keep fetch order. Unknown or repeated ids are
/// ignored, and an unusable reply leaves fetch order unchanged.
class BackendRanker final : public Ranker {
public:
    BackendRanker(const modelio::BackendRegistry& registry, std::string backend_id, modelio::SamplingParams params = {})
        : registry_(registry), backend_id_(std::move(backend_id)), params_(params) {}
    std::vector<Document> rank(std::vector<Document> docs, std::string_view context) override;

private:
    const modelio::BackendRegistry& registry_;
    std::string backend_id_;
    modelio::SamplingParams params_;
};

struct RetrievalResult {
    std::vector<Document> documents;
    bool cache_hit = false;
};

/// Cached retrieval. With `bypass` the cache is neither read nor written.
/// Retriever failures raise StageError("RAG") and leave the cache untouched.
RetrievalResult retrieve(const CacheKey& key, std::string_view query, RetrievalCache& cache, Retriever& retriever,
                         Ranker& ranker, std::string_view context, bool bypass = false);

nlohmann::json to_json(const Document& d);
Document document_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<Document>& docs);

}  // namespace ctikit::infer
