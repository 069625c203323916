#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <string_view>

#include "ctikit/error.hpp"
#include "ctikit/text.hpp"

namespace ctikit::detail {

/// Calls `fn(json)` for each non-blank line; header lines ({"header": ...})
/// are skipped. Parse errors report the byte offset within `contents`.
template <typename Fn>
void for_each_jsonl(std::string_view contents, std::string_view what, Fn&& fn) {
    std::size_t pos = 0;
    while (pos < contents.size()) {
        std::size_t nl = contents.find('\n', pos);
        if (nl == std::string_view::npos) nl = contents.size();
        const std::string_view line = contents.substr(pos, nl - pos);
        const std::size_t start = pos;
        pos = nl + 1;
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line.begin(), line.end());
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("malformed " + std::string(what) + " line: " + e.what(), start + e.byte);
        }
        if (j.is_object() && j.contains("header")) continue;
        fn(j);
    }
}

inline std::string header_line(const nlohmann::json& header) {
    return nlohmann::json{{"header", header}}.dump() + "\n";
}

}  // namespace ctikit::detail
