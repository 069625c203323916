#include "ctikit/date.hpp"

#include <charconv>
#include <cstdio>

#include "ctikit/error.hpp"

namespace ctikit {

using namespace std::chrono;

namespace {

int parse_int(std::string_view s, std::string_view what, std::string_view whole) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ValidationError("invalid " + std::string(what) + " in '" + std::string(whole) + "'");
    return v;
}

bool digits(std::string_view s) {
    for (char c : s)
        if (c < '0' || c > '9') return false;
    return !s.empty();
}

}  // namespace

YearMonth YearMonth::parse(std::string_view s) {
    if (s.size() < 7 || s[4] != '-' || !digits(s.substr(0, 4)) || !digits(s.substr(5, 2)) ||
        (s.size() > 7 && s[7] != '-' && s[7] != 'T'))
        throw ValidationError("invalid year-month '" + std::string(s) + "'");
    YearMonth ym{parse_int(s.substr(0, 4), "year", s), static_cast<unsigned>(parse_int(s.substr(5, 2), "month", s))};
    if (ym.month < 1 || ym.month > 12) throw ValidationError("invalid month in '" + std::string(s) + "'");
    return ym;
}

std::string YearMonth::str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u", year, month);
    return buf;
}

Date Date::parse(std::string_view s) {
    if (s.size() < 10 || s[4] != '-' || s[7] != '-' || !digits(s.substr(0, 4)) || !digits(s.substr(5, 2)) ||
        !digits(s.substr(8, 2)))
        throw ValidationError("invalid date '" + std::string(s) + "'");
    return make(parse_int(s.substr(0, 4), "year", s), static_cast<unsigned>(parse_int(s.substr(5, 2), "month", s)),
                static_cast<unsigned>(parse_int(s.substr(8, 2), "day", s)));
}

Date Date::make(int y, unsigned m, unsigned d) {
    year_month_day ymd{year{y}, month{m}, day{d}};
    if (!ymd.ok())
        throw ValidationError("invalid calendar date " + std::to_string(y) + "-" + std::to_string(m) + "-" +
                              std::to_string(d));
    return Date{ymd};
}

Date Date::from_days(long n) { return Date{year_month_day{sys_days{std::chrono::days{n}}}}; }

long Date::days() const { return sys_days{ymd}.time_since_epoch().count(); }

std::string Date::str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

YearMonth Date::year_month() const {
    return YearMonth{static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month())};
}

Date Date::add_months(int n) const {
    const std::chrono::year_month ym = std::chrono::year_month{ymd.year(), ymd.month()} + months{n};
    auto last = year_month_day_last{ym.year(), month_day_last{ym.month()}}.day();
    auto d = ymd.day() > last ? last : ymd.day();
    return Date{year_month_day{ym.year(), ym.month(), d}};
}

}  // namespace ctikit
