#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "market_states/error.hpp"

namespace market_states {

/// Calendar date stored as days since 1970-01-01.
struct Date {
    std::int64_t days = 0;

    friend constexpr auto operator<=>(const Date&, const Date&) = default;

    static Date from_ymd(int y, unsigned m, unsigned d) {
        const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                              std::chrono::day{d}};
        if (!ymd.ok()) {
            throw DataError("invalid calendar date " + std::to_string(y) + "-" +
                            std::to_string(m) + "-" + std::to_string(d));
        }
        return Date{std::chrono::sys_days{ymd}.time_since_epoch().count()};
    }

    /// Parses strict ISO-8601 `YYYY-MM-DD`.
    static Date parse(std::string_view s) {
        auto bad = [&] { return DataError("invalid date '" + std::string(s) + "'"); };
        if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw bad();
        int y = 0;
        unsigned m = 0, d = 0;
        auto field = [&](std::size_t pos, std::size_t len, auto& out) {
            auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
            if (ec != std::errc{} || p != s.data() + pos + len) throw bad();
        };
        field(0, 4, y);
        field(5, 2, m);
        field(8, 2, d);
        return from_ymd(y, m, d);
    }

    std::string to_string() const {
        const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
        return buf;
    }

    /// 0 = Monday ... 6 = Sunday.
    int weekday() const {
        const std::chrono::weekday wd{std::chrono::sys_days{std::chrono::days{days}}};
        return static_cast<int>(wd.iso_encoding()) - 1;
    }
};

}  // namespace market_states
