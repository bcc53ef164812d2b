#pragma once

#include <charconv>
#include <chrono>
#include <cstdio>
#include <string>
#include <string_view>

#include "mmf/error.hpp"

namespace mmf {

// Calendar dates and wall-clock timestamps. Timestamps are naive
// exchange-local times; no time-zone conversion happens anywhere.
using Date = std::chrono::sys_days;
using Timestamp = std::chrono::sys_seconds;

namespace detail {

inline bool parse_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

} // namespace detail

inline Date make_date(int y, unsigned m, unsigned d) {
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw Error("invalid calendar date");
    return std::chrono::sys_days{ymd};
}

// Strict YYYY-MM-DD.
inline Date parse_date(std::string_view s) {
    int y = 0, m = 0, d = 0;
    if (s.size() != 10 || s[4] != '-' || s[7] != '-' || !detail::parse_int(s.substr(0, 4), y) ||
        !detail::parse_int(s.substr(5, 2), m) || !detail::parse_int(s.substr(8, 2), d))
        throw Error("unparseable date '" + std::string(s) + "'");
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                    std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw Error("invalid date '" + std::string(s) + "'");
    return std::chrono::sys_days{ymd};
}

inline std::string format_date(Date d) {
    std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

// Accepts `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM` and `YYYY-MM-DDTHH:MM:SS` (a space
// may replace the `T`). Date-only values map to 00:00. Zone suffixes are
// rejected because timestamps are exchange-local wall-clock times.
inline Timestamp parse_timestamp(std::string_view s) {
    if (s.size() < 10) throw Error("unparseable timestamp '" + std::string(s) + "'");
    Date day = parse_date(s.substr(0, 10));
    if (s.size() == 10) return Timestamp{day};
    auto rest = s.substr(10);
    if (rest[0] != 'T' && rest[0] != ' ') throw Error("unparseable timestamp '" + std::string(s) + "'");
    rest.remove_prefix(1);
    int hh = 0, mm = 0, ss = 0;
    bool ok = false;
    if (rest.size() == 5 && rest[2] == ':')
        ok = detail::parse_int(rest.substr(0, 2), hh) && detail::parse_int(rest.substr(3, 2), mm);
    else if (rest.size() == 8 && rest[2] == ':' && rest[5] == ':')
        ok = detail::parse_int(rest.substr(0, 2), hh) && detail::parse_int(rest.substr(3, 2), mm) &&
             detail::parse_int(rest.substr(6, 2), ss);
    if (!ok || hh > 23 || mm > 59 || ss > 59)
        throw Error("unparseable timestamp '" + std::string(s) + "'");
    return Timestamp{day} + std::chrono::hours{hh} + std::chrono::minutes{mm} + std::chrono::seconds{ss};
}

inline std::string format_timestamp(Timestamp t) {
    auto day = std::chrono::floor<std::chrono::days>(t);
    auto secs = (t - day).count();
    char buf[64];
    std::snprintf(buf, sizeof buf, "T%02lld:%02lld:%02lld", static_cast<long long>(secs / 3600),
                  static_cast<long long>(secs / 60 % 60), static_cast<long long>(secs % 60));
    return format_date(Date{day}) + buf;
}

// HH:MM time of day as an offset from midnight.
inline std::chrono::minutes parse_time_of_day(std::string_view s) {
    int hh = 0, mm = 0;
    if (s.size() != 5 || s[2] != ':' || !detail::parse_int(s.substr(0, 2), hh) ||
        !detail::parse_int(s.substr(3, 2), mm) || hh > 23 || mm > 59)
        throw Error("unparseable time of day '" + std::string(s) + "'");
    return std::chrono::hours{hh} + std::chrono::minutes{mm};
}

inline std::string format_time_of_day(std::chrono::minutes m) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02d:%02d", static_cast<int>(m.count() / 60), static_cast<int>(m.count() % 60));
    return buf;
}

} // namespace mmf
