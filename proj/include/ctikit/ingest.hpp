#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ctikit/date.hpp"
#include "ctikit/taskgraph.hpp"

namespace ctikit::ingest {

using LabelSet = std::set<std::string>;

enum class CvssField { AV, AC, PR, UI, S, C, I, A, Base };
inline constexpr std::array<CvssField, 9> kCvssFields{CvssField::AV, CvssField::AC, CvssField::PR,
                                                      CvssField::UI, CvssField::S,  CvssField::C,
                                                      CvssField::I,  CvssField::A,  CvssField::Base};

std::string_view cvss_field_name(CvssField f);

/// CVSS 3.x base metrics plus base severity; each field holds one of its
/// closed categories or NA.
class CvssAssessment {
public:
    static constexpr int kNA = -1;

    /// Sets a field from a category label or its single-letter vector
    /// abbreviation, case-insensitively. "NA", "N/A" and "" map to NA.
    void set(CvssField f, std::string_view label);
    void set_index(CvssField f, int category);

    int index(CvssField f) const { return values_[static_cast<std::size_t>(f)]; }
    bool is_na(CvssField f) const { return index(f) == kNA; }
    std::string_view label(CvssField f) const;  // "NA" when absent
    bool all_na() const;

    /// Parses "CVSS:3.x/AV:N/AC:L/..." (the prefix is optional).
    static CvssAssessment parse_vector(std::string_view vector);

    static const std::vector<std::string>& categories(CvssField f);

    bool operator==(const CvssAssessment&) const = default;

private:
    std::array<int, 9> values_{kNA, kNA, kNA, kNA, kNA, kNA, kNA, kNA, kNA};
};

struct EpssPoint {
    Date date;
    double score = 0.0;  // percent, 0..100
    bool operator==(const EpssPoint&) const = default;
};

/// Time-ordered EPSS observations.
struct EpssSeries {
    std::vector<EpssPoint> points;

    /// Throws ValidationError unless dates strictly increase and scores lie in [0, 100].
    void validate() const;
    bool operator==(const EpssSeries&) const = default;
};

struct RemediationInfo {
    LabelSet tools;
    std::optional<std::string> patch;
    std::optional<std::string> methodology;
    std::optional<std::string> advisory;

    bool empty() const { return tools.empty() && !patch && !methodology && !advisory; }
    bool operator==(const RemediationInfo&) const = default;
};

struct Reference {
    std::string url;
    std::string source;
    auto operator<=>(const Reference&) const = default;
};

/// Product strings compare case-insensitively but keep a display spelling.
/// Among case variants the byte-wise smallest spelling is kept, so the
/// result does not depend on insertion order.
class ProductSet {
public:
    void insert(std::string_view product);
    bool empty() const { return items_.empty(); }
    std::size_t size() const { return items_.size(); }
    std::vector<std::string> values() const;
    bool contains_substring(std::string_view needle) const;
    bool operator==(const ProductSet&) const = default;

private:
    std::map<std::string, std::string> items_;  // canonical key -> display
};

/// Normalized CVE-centric record.
struct ThreatRecord {
    std::string cve_id;
    YearMonth published;
    std::string description;
    std::optional<std::string> threat_actor;
    LabelSet ttps;
    std::optional<std::string> campaign;
    ProductSet affected_systems;
    LabelSet attack_infra;
    std::optional<std::string> impact;
    LabelSet cwe_ids;
    LabelSet related_cves;
    LabelSet vendors;
    LabelSet categories;
    std::optional<CvssAssessment> cvss;
    std::optional<EpssSeries> epss;
    std::optional<RemediationInfo> remediation;
    std::set<Reference> references;
    std::set<std::string> source_ids;

    /// True when the record carries evidence for `target`.
    bool has_evidence(Target target) const;

    bool operator==(const ThreatRecord&) const = default;
};

bool valid_cve_id(std::string_view id);
std::string canonical_cwe_id(std::string_view id);

/// Maps canonical record fields to JSON pointers in a source's feed records.
struct Dialect {
    std::string name;
    std::map<std::string, std::string> fields;

    static const std::vector<std::string>& canonical_fields();
    static Dialect canonical();
    static Dialect builtin(std::string_view source);
};

/// Which analytical targets each known source supplies.
struct SourceCatalog {
    std::map<std::string, std::set<Target>> entries;

    static const SourceCatalog& standard();
    bool known(std::string_view source) const { return entries.contains(std::string(source)); }
    bool supplies(std::string_view source, Target t) const;
};

struct IngestConfig {
    std::map<std::string, Dialect> dialects;  // source id -> dialect
    std::vector<std::string> precedence{"nvd", "mitre-cve", "exploitdb", "third-party"};
    SourceCatalog catalog = SourceCatalog::standard();

    /// Rejects source ids missing from the catalog; fills builtin dialects.
    void validate();
    const Dialect& dialect_for(std::string_view source) const;
};

/// Parses one feed record. Throws ParseError (with byte offset) for
/// malformed input and ValidationError for invalid field contents.
ThreatRecord parse_record(std::string_view raw, std::string_view source, const IngestConfig& config);

nlohmann::json to_json(const ThreatRecord& r);
ThreatRecord from_json(const nlohmann::json& j);
std::string serialize(const ThreatRecord& r);          // one canonical line, no newline
ThreatRecord deserialize(std::string_view line);

/// Immutable CVE-keyed store.
class ThreatStore {
public:
    ThreatStore() = default;
    explicit ThreatStore(std::map<std::string, ThreatRecord> records) : records_(std::move(records)) {}

    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const ThreatRecord* find(std::string_view cve_id) const;
    const std::map<std::string, ThreatRecord>& records() const { return records_; }
    auto begin() const { return records_.begin(); }
    auto end() const { return records_.end(); }

private:
    std::map<std::string, ThreatRecord> records_;
};

/// One record per cve_id; set fields unioned, scalar conflicts resolved by
/// source precedence (earlier wins; unlisted sources rank last, by id).
ThreatStore merge_store(const std::vector<ThreatRecord>& records,
                        const std::vector<std::string>& precedence = IngestConfig{}.precedence);

/// Optional predicates combined conjunctively.
struct ScopeFilter {
    std::optional<std::string> product;   // case-insensitive substring of an affected system
    std::optional<std::string> vendor;    // case-insensitive vendor label
    std::optional<std::string> category;  // threat-category label
    std::optional<YearMonth> from;        // inclusive
    std::optional<YearMonth> to;          // inclusive

    bool matches(const ThreatRecord& r) const;
};

/// Matching records ordered by (published, cve_id).
std::vector<ThreatRecord> query(const ThreatStore& store, const ScopeFilter& filter);

/// Canonical store file: a header line then one record per line, sorted by cve_id.
std::string write_store(const ThreatStore& store, const nlohmann::json& header);
ThreatStore read_store(std::string_view contents);

}  // namespace ctikit::ingest
