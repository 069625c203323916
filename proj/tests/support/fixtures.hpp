#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "ctikit/ingest.hpp"
#include "ctikit/rng.hpp"

namespace fixtures {

inline std::string cve(int year, int n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "CVE-%04d-%05d", year, n);
    return buf;
}

/// Canonical-form raw record with every target populated.
inline nlohmann::json full_raw(int i) {
    const int year = 2020 + i % 5;
    nlohmann::json j = {
        {"cve_id", cve(year, 1000 + i)},
        {"published", std::to_string(year) + "-" + (i % 12 + 1 < 10 ? "0" : "") + std::to_string(i % 12 + 1)},
        {"description", "Record " + std::to_string(i) + ": a request-handling flaw lets remote attackers run code on exposed gateways."},
        {"threat_actor", i % 2 ? "APT28" : "Lazarus Group"},
        {"ttps", {"T1190 exploit public-facing application", "T1059 command interpreter"}},
        {"campaign", "Operation Window " + std::to_string(i % 7)},
        {"affected_systems", {"Acme Gateway 3." + std::to_string(i % 4), "vendor acme"}},
        {"attack_infra", {"c2 over https", "bulletproof hosting"}},
        {"impact", "remote code execution"},
        {"cwe_ids", {"CWE-" + std::to_string(20 + i % 60)}},
        {"related_cves", {cve(year, 2000 + i), cve(year, 3000 + i)}},
        {"vendors", {"Acme"}},
        {"categories", {"rce"}},
        {"cvss", "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H"},
        {"epss", {{{"date", std::to_string(year) + "-01-15"}, {"score", 0.31}},
                  {{"date", std::to_string(year) + "-04-15"}, {"score", 12.5}},
                  {{"date", std::to_string(year) + "-09-15"}, {"score", 55.37}}}},
        {"remediation",
         {{"tools", {"yara", "suricata"}},
          {"patch", "upgrade to 3.9.1"},
          {"methodology", "restrict management interfaces"},
          {"advisory", "ACME-SA-" + std::to_string(100 + i)}}},
        {"references", {"https://example.org/advisory/" + std::to_string(i)}},
    };
    return j;
}

/// Full record with a random subset of target fields removed.
inline nlohmann::json random_raw(ctikit::Rng& rng, int i) {
    nlohmann::json j = full_raw(i);
    for (const char* k : {"threat_actor", "ttps", "campaign", "affected_systems", "attack_infra", "impact", "cwe_ids",
                          "related_cves", "cvss", "epss"})
        if (rng.uniform01() < 0.5) j.erase(k);
    auto& rem = j["remediation"];
    for (const char* k : {"tools", "patch", "methodology", "advisory"})
        if (rng.uniform01() < 0.5) rem.erase(k);
    if (rem.empty()) j.erase("remediation");
    return j;
}

inline ctikit::ingest::ThreatRecord parse(const nlohmann::json& raw) {
    static const ctikit::ingest::IngestConfig cfg = [] {
        ctikit::ingest::IngestConfig c;
        c.validate();
        return c;
    }();
    return ctikit::ingest::parse_record(raw.dump(), "third-party", cfg);
}

/// JSON-lines feed of `n` synthetic records in canonical form.
inline std::string synthetic_feed(int n, std::uint64_t seed) {
    ctikit::Rng rng(seed);
    std::string out;
    for (int i = 0; i < n; ++i) out += random_raw(rng, i).dump() + "\n";
    return out;
}

}  // namespace fixtures
