#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace ctikit {

/// Calendar year-month, e.g. "2024-07".
struct YearMonth {
    int year = 1970;
    unsigned month = 1;

    /// Accepts "YYYY-MM" and any ISO-8601 date or timestamp starting with it.
    static YearMonth parse(std::string_view s);
    std::string str() const;

    auto operator<=>(const YearMonth&) const = default;
};

/// Calendar date with day arithmetic.
struct Date {
    std::chrono::year_month_day ymd{std::chrono::year{1970}, std::chrono::month{1}, std::chrono::day{1}};

    static Date parse(std::string_view s);
    static Date from_days(long days);
    static Date make(int y, unsigned m, unsigned d);

    long days() const;  // days since 1970-01-01
    std::string str() const;
    YearMonth year_month() const;

    // Calendar month arithmetic; the day is clamped to the target month's length.
    Date add_months(int n) const;

    bool operator==(const Date& o) const { return days() == o.days(); }
    auto operator<=>(const Date& o) const { return days() <=> o.days(); }
};

}  // namespace ctikit
