#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ctikit::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);

// Trims and collapses internal runs of whitespace to a single space.
std::string collapse_whitespace(std::string_view s);

// Canonical form of a free-text label: trimmed, whitespace-collapsed, case-folded.
std::string canonical_label(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool icontains(std::string_view haystack, std::string_view needle);
bool iequals(std::string_view a, std::string_view b);

// Replaces every occurrence of `from` in `s`.
std::string replace_all(std::string s, std::string_view from, std::string_view to);

}  // namespace ctikit::text
