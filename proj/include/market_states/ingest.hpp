#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "market_states/csv.hpp"
#include "market_states/date.hpp"
#include "market_states/error.hpp"

namespace market_states {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Instrument {
    std::string ticker;
    std::string name;
    std::string sector_code;

    friend bool operator==(const Instrument&, const Instrument&) = default;
};

/// Two-letter sector abbreviations used by the S&P 500 and Nikkei 225 universes.
inline const std::vector<std::string>& default_sector_vocabulary() {
    static const std::vector<std::string> codes = {"CD", "CG", "CP", "CS", "EG", "FN",
                                                   "HC", "ID", "IT", "MT", "TC", "UT"};
    return codes;
}

/// Dense, gap-free price panel. Rows are instruments, columns trading dates.
struct PriceTable {
    std::vector<Instrument> instruments;
    std::vector<Date> dates;
    RowMatrix prices;

    std::size_t n() const { return instruments.size(); }
    std::size_t t() const { return dates.size(); }

    void validate() const {
        if (n() < 2) throw DataError("price table needs at least 2 instruments");
        if (t() < 2) throw DataError("price table needs at least 2 trading dates");
        if (static_cast<std::size_t>(prices.rows()) != n() ||
            static_cast<std::size_t>(prices.cols()) != t()) {
            throw DataError("price matrix shape does not match instruments x dates");
        }
        std::unordered_set<std::string> seen;
        for (const auto& ins : instruments) {
            if (ins.ticker.empty()) throw DataError("empty ticker");
            if (!seen.insert(ins.ticker).second) throw DataError("duplicate ticker " + ins.ticker);
        }
        for (std::size_t c = 1; c < t(); ++c) {
            if (!(dates[c - 1] < dates[c])) throw DataError("dates not strictly increasing");
        }
        for (Eigen::Index r = 0; r < prices.rows(); ++r) {
            for (Eigen::Index c = 0; c < prices.cols(); ++c) {
                const double p = prices(r, c);
                if (!std::isfinite(p) || p <= 0.0) {
                    throw DataError("non-positive or non-finite price for " +
                                    instruments[r].ticker + " on " + dates[c].to_string());
                }
            }
        }
    }
};

struct DroppedTicker {
    std::string ticker;
    std::size_t missing_dates_count = 0;
    Date first_missing;
};

struct PriceLoad {
    PriceTable table;
    std::vector<DroppedTicker> dropped;
};

struct LoadOptions {
    /// Wide layout: header `date,T1,T2,...`, one row per date, empty or NA cells missing.
    bool wide = false;
    /// When set, only tickers in this universe are kept and they take its metadata.
    const std::vector<Instrument>* universe = nullptr;
};

inline std::vector<Instrument> load_universe(
    const std::string& path,
    const std::vector<std::string>& sector_vocabulary = default_sector_vocabulary()) {
    auto in = csv::open_input(path);
    std::string line;
    if (!csv::read_line(in, line, true)) throw DataError("empty universe");
    const auto header = csv::split(line);
    if (header.size() != 4 || csv::trim(header[0]) != "code" || csv::trim(header[1]) != "name" ||
        csv::trim(header[2]) != "sector" || csv::trim(header[3]) != "abbrv") {
        throw DataError(path + ":1: expected header code,name,sector,abbrv");
    }
    std::vector<Instrument> out;
    std::unordered_set<std::string> seen;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const auto f = csv::split(line);
        const std::string where = path + ":" + std::to_string(line_no) + ": ";
        if (f.size() != 4) throw DataError(where + "expected 4 fields");
        Instrument ins{std::string(csv::trim(f[0])), std::string(csv::trim(f[1])),
                       std::string(csv::trim(f[3]))};
        if (ins.ticker.empty()) throw DataError(where + "empty ticker code");
        if (ins.sector_code.empty()) {
            throw DataError(where + "empty sector abbreviation for " + ins.ticker);
        }
        if (std::find(sector_vocabulary.begin(), sector_vocabulary.end(), ins.sector_code) ==
            sector_vocabulary.end()) {
            throw DataError(where + "unknown sector abbreviation '" + ins.sector_code + "'");
        }
        if (!seen.insert(ins.ticker).second) {
            throw DataError(where + "duplicate ticker " + ins.ticker);
        }
        out.push_back(std::move(ins));
    }
    if (out.empty()) throw DataError("empty universe");
    return out;
}

namespace detail {

using Series = std::map<Date, double>;

inline double parse_price(std::string_view cell, const std::string& where) {
    double v = 0.0;
    if (!csv::parse_double(cell, v)) {
        throw DataError(where + "malformed price '" + std::string(cell) + "'");
    }
    if (!std::isfinite(v) || v <= 0.0) {
        throw DataError(where + "non-positive or non-finite price '" + std::string(cell) + "'");
    }
    return v;
}

inline Date parse_row_date(std::string_view cell, const std::string& where) {
    try {
        return Date::parse(csv::trim(cell));
    } catch (const DataError& e) {
        throw DataError(where + e.what());
    }
}

inline void insert_price(Series& s, Date d, double v, const std::string& ticker,
                         const std::string& where) {
    if (!s.emplace(d, v).second) {
        throw DataError(where + "duplicate row for " + ticker + " on " + d.to_string());
    }
}

inline std::map<std::string, Series> read_long(const std::string& path) {
    auto in = csv::open_input(path);
    std::string line;
    if (!csv::read_line(in, line, true)) throw DataError(path + ": empty price file");
    const auto header = csv::split(line);
    if (header.size() != 3 || csv::trim(header[0]) != "date" ||
        csv::trim(header[1]) != "ticker" || csv::trim(header[2]) != "adj_close") {
        throw DataError(path + ":1: expected header date,ticker,adj_close");
    }
    std::map<std::string, Series> data;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no) + ": ";
        const auto f = csv::split(line);
        if (f.size() != 3) throw DataError(where + "expected 3 fields");
        const std::string ticker(csv::trim(f[1]));
        if (ticker.empty()) throw DataError(where + "empty ticker");
        const Date d = parse_row_date(f[0], where);
        insert_price(data[ticker], d, parse_price(f[2], where), ticker, where);
    }
    return data;
}

inline std::map<std::string, Series> read_wide(const std::string& path) {
    auto in = csv::open_input(path);
    std::string line;
    if (!csv::read_line(in, line, true)) throw DataError(path + ": empty price file");
    const auto header = csv::split(line);
    if (header.size() < 2 || csv::trim(header[0]) != "date") {
        throw DataError(path + ":1: expected header date,<ticker>,...");
    }
    std::vector<std::string> tickers;
    std::map<std::string, Series> data;
    for (std::size_t c = 1; c < header.size(); ++c) {
        tickers.emplace_back(csv::trim(header[c]));
        if (tickers.back().empty() || data.count(tickers.back())) {
            throw DataError(path + ":1: empty or duplicate ticker column");
        }
        data[tickers.back()];
    }
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no) + ": ";
        const auto f = csv::split(line);
        if (f.size() != header.size()) {
            throw DataError(where + "expected " + std::to_string(header.size()) + " fields");
        }
        const Date d = parse_row_date(f[0], where);
        for (std::size_t c = 1; c < f.size(); ++c) {
            const auto cell = csv::trim(f[c]);
            if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "null") continue;
            insert_price(data[tickers[c - 1]], d, parse_price(cell, where), tickers[c - 1], where);
        }
    }
    return data;
}

}  // namespace detail

/// Loads prices in [start, end], keeping only tickers priced on every trading
/// date of that window. The calendar is the union of all dates seen in the
/// window; no filling of gaps is done.
inline PriceLoad load_prices(const std::string& path, Date start, Date end,
                             const LoadOptions& options = {}) {
    auto raw = options.wide ? detail::read_wide(path) : detail::read_long(path);

    std::unordered_map<std::string, const Instrument*> meta;
    if (options.universe) {
        for (const auto& ins : *options.universe) meta.emplace(ins.ticker, &ins);
    }

    std::set<Date> calendar;
    for (auto it = raw.begin(); it != raw.end();) {
        if (options.universe && !meta.count(it->first)) {
            it = raw.erase(it);
            continue;
        }
        for (const auto& [d, p] : it->second) {
            if (start <= d && d <= end) calendar.insert(d);
        }
        ++it;
    }
    if (calendar.empty()) throw DataError("no trading dates");
    if (calendar.size() < 2) throw DataError("fewer than 2 trading dates");

    PriceLoad result;
    std::vector<Instrument> survivors;
    for (const auto& [ticker, series] : raw) {
        DroppedTicker gap{ticker, 0, {}};
        for (const Date d : calendar) {
            if (!series.count(d)) {
                if (gap.missing_dates_count++ == 0) gap.first_missing = d;
            }
        }
        if (gap.missing_dates_count > 0) {
            result.dropped.push_back(gap);
        } else if (options.universe) {
            survivors.push_back(*meta.at(ticker));
        } else {
            survivors.push_back(Instrument{ticker, "", ""});
        }
    }
    if (survivors.size() < 2) {
        throw DataError("fewer than 2 tickers priced on every trading date (" +
                        std::to_string(survivors.size()) + " survived)");
    }
    std::sort(survivors.begin(), survivors.end(), [](const Instrument& a, const Instrument& b) {
        return std::tie(a.sector_code, a.ticker) < std::tie(b.sector_code, b.ticker);
    });

    PriceTable& table = result.table;
    table.instruments = std::move(survivors);
    table.dates.assign(calendar.begin(), calendar.end());
    table.prices.resize(static_cast<Eigen::Index>(table.n()), static_cast<Eigen::Index>(table.t()));
    for (std::size_t r = 0; r < table.n(); ++r) {
        const auto& series = raw.at(table.instruments[r].ticker);
        for (std::size_t c = 0; c < table.t(); ++c) {
            table.prices(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                series.at(table.dates[c]);
        }
    }
    table.validate();
    return result;
}

inline PriceLoad load_prices(const std::string& path, const LoadOptions& options = {}) {
    return load_prices(path, Date{INT32_MIN}, Date{INT32_MAX}, options);
}

/// Writes the table in long format; prices round-trip bit-exactly.
inline void write_prices(const PriceTable& table, const std::string& path) {
    auto out = csv::open_output(path);
    out << "date,ticker,adj_close\n";
    for (std::size_t c = 0; c < table.t(); ++c) {
        const std::string date = table.dates[c].to_string();
        for (std::size_t r = 0; r < table.n(); ++r) {
            out << date << ',' << csv::quote(table.instruments[r].ticker) << ','
                << csv::format_double(
                       table.prices(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)))
                << '\n';
        }
    }
    if (!out) throw DataError("failed writing " + path);
}

inline nlohmann::json drop_report_json(const std::vector<DroppedTicker>& dropped) {
    auto arr = nlohmann::json::array();
    for (const auto& d : dropped) {
        arr.push_back({{"ticker", d.ticker},
                       {"missing_dates_count", d.missing_dates_count},
                       {"first_missing", d.first_missing.to_string()}});
    }
    return arr;
}

}  // namespace market_states
