#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "market_states/ingest.hpp"
#include "test_util.hpp"

using namespace market_states;
using ms_test::TempDir;
using ms_test::write_file;

namespace {

const char* toy_prices =
    "date,ticker,adj_close\n"
    "2020-01-02,A,10\n2020-01-02,B,20\n2020-01-02,C,30\n"
    "2020-01-03,A,11\n2020-01-03,B,21\n"
    "2020-01-06,A,12\n2020-01-06,B,22\n2020-01-06,C,32\n";

}  // namespace

TEST(Ingest, DropsTickerWithGap) {
    TempDir dir;
    const auto path = write_file(dir.file("p.csv"), toy_prices);
    const PriceLoad load = load_prices(path);
    ASSERT_EQ(load.table.n(), 2u);
    EXPECT_EQ(load.table.instruments[0].ticker, "A");
    EXPECT_EQ(load.table.instruments[1].ticker, "B");
    EXPECT_EQ(load.table.t(), 3u);
    ASSERT_EQ(load.dropped.size(), 1u);
    EXPECT_EQ(load.dropped[0].ticker, "C");
    EXPECT_EQ(load.dropped[0].missing_dates_count, 1u);
    EXPECT_EQ(load.dropped[0].first_missing, Date::parse("2020-01-03"));
    EXPECT_DOUBLE_EQ(load.table.prices(1, 2), 22.0);
}

TEST(Ingest, DateRangeFilter) {
    TempDir dir;
    const auto path = write_file(dir.file("p.csv"), std::string(toy_prices) +
                                                        "2020-01-07,A,13\n2020-01-07,B,23\n2020-01-07,C,33\n");
    // Window excludes the gap day, so C survives.
    const PriceLoad load = load_prices(path, Date::parse("2020-01-06"), Date::parse("2020-01-10"));
    EXPECT_EQ(load.table.n(), 3u);
    EXPECT_EQ(load.table.t(), 2u);
    EXPECT_TRUE(load.dropped.empty());
    EXPECT_DOUBLE_EQ(load.table.prices(2, 1), 33.0);

    try {
        load_prices(path, Date::parse("2021-01-01"), Date::parse("2021-02-01"));
        ADD_FAILURE() << "empty range accepted";
    } catch (const DataError& e) {
        EXPECT_STREQ(e.what(), "no trading dates");
    }
    EXPECT_THROW(load_prices(path, Date::parse("2020-01-06"), Date::parse("2020-01-06")), DataError);
}

TEST(Ingest, CrlfAndWideFormat) {
    TempDir dir;
    write_file(dir.file("crlf.csv"), "date,ticker,adj_close\r\n2020-01-02,A,1\r\n2020-01-02,B,2\r\n"
                                     "2020-01-03,A,1.5\r\n2020-01-03,B,2.5\r\n");
    EXPECT_EQ(load_prices(dir.file("crlf.csv")).table.t(), 2u);

    write_file(dir.file("wide.csv"), "date,A,B,C\n2020-01-02,1,2,3\n2020-01-03,1.1,2.1,\n"
                                     "2020-01-06,1.2,2.2,3.2\n");
    LoadOptions opts;
    opts.wide = true;
    const PriceLoad load = load_prices(dir.file("wide.csv"), opts);
    EXPECT_EQ(load.table.n(), 2u);
    ASSERT_EQ(load.dropped.size(), 1u);
    EXPECT_EQ(load.dropped[0].ticker, "C");
}

TEST(Ingest, ErrorsReportLineNumbers) {
    TempDir dir;
    write_file(dir.file("bad.csv"), "date,ticker,adj_close\n2020-01-02,A,1\n2020-01-02,B\n");
    try {
        load_prices(dir.file("bad.csv"));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
    }
    write_file(dir.file("neg.csv"), "date,ticker,adj_close\n2020-01-02,A,-1\n");
    EXPECT_THROW(load_prices(dir.file("neg.csv")), DataError);
    write_file(dir.file("nan.csv"), "date,ticker,adj_close\n2020-01-02,A,nan\n");
    EXPECT_THROW(load_prices(dir.file("nan.csv")), DataError);
    write_file(dir.file("date.csv"), "date,ticker,adj_close\n2020-13-02,A,1\n");
    EXPECT_THROW(load_prices(dir.file("date.csv")), DataError);
    write_file(dir.file("hdr.csv"), "day,ticker,close\n");
    EXPECT_THROW(load_prices(dir.file("hdr.csv")), DataError);
    EXPECT_THROW(load_prices(dir.file("missing.csv")), DataError);
    write_file(dir.file("one.csv"), "date,ticker,adj_close\n2020-01-02,A,1\n2020-01-03,A,2\n");
    EXPECT_THROW(load_prices(dir.file("one.csv")), DataError);
    write_file(dir.file("dup.csv"), "date,ticker,adj_close\n2020-01-02,A,1\n2020-01-02,A,2\n");
    EXPECT_THROW(load_prices(dir.file("dup.csv")), DataError);
}

TEST(Ingest, UniverseParsing) {
    TempDir dir;
    write_file(dir.file("u.csv"),
               "code,name,sector,abbrv\nAAP,Advance Auto Parts,Consumer Discretionary,CD\n"
               "XOM,\"Exxon Mobil, Corp.\",Energy,EG\n");
    const auto u = load_universe(dir.file("u.csv"));
    ASSERT_EQ(u.size(), 2u);
    EXPECT_EQ(u[0], (Instrument{"AAP", "Advance Auto Parts", "CD"}));
    EXPECT_EQ(u[1].name, "Exxon Mobil, Corp.");

    write_file(dir.file("empty.csv"), "");
    try {
        load_universe(dir.file("empty.csv"));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_STREQ(e.what(), "empty universe");
    }
    write_file(dir.file("header_only.csv"), "code,name,sector,abbrv\n");
    EXPECT_THROW(load_universe(dir.file("header_only.csv")), DataError);

    write_file(dir.file("dup.csv"), "code,name,sector,abbrv\nAAP,a,s,CD\nAAP,b,s,CD\n");
    try {
        load_universe(dir.file("dup.csv"));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("duplicate ticker AAP"), std::string::npos);
    }
    write_file(dir.file("sector.csv"), "code,name,sector,abbrv\nAAP,a,s,ZZ\n");
    EXPECT_THROW(load_universe(dir.file("sector.csv")), DataError);
    write_file(dir.file("nosector.csv"), "code,name,sector,abbrv\nAAP,a,s,\n");
    EXPECT_THROW(load_universe(dir.file("nosector.csv")), DataError);
}

TEST(Ingest, UniverseOrdersBySectorThenTicker) {
    TempDir dir;
    write_file(dir.file("u.csv"), "code,name,sector,abbrv\nZZ,z,Energy,EG\nAA,a,Utilities,UT\n"
                                  "MM,m,Energy,EG\n");
    write_file(dir.file("p.csv"), "date,ticker,adj_close\n2020-01-02,AA,1\n2020-01-02,MM,1\n"
                                  "2020-01-02,ZZ,1\n2020-01-02,QQ,1\n2020-01-03,AA,2\n"
                                  "2020-01-03,MM,2\n2020-01-03,ZZ,2\n");
    const auto universe = load_universe(dir.file("u.csv"));
    LoadOptions opts;
    opts.universe = &universe;
    const auto load = load_prices(dir.file("p.csv"), opts);
    ASSERT_EQ(load.table.n(), 3u);
    EXPECT_EQ(load.table.instruments[0].ticker, "MM");
    EXPECT_EQ(load.table.instruments[1].ticker, "ZZ");
    EXPECT_EQ(load.table.instruments[2].ticker, "AA");
    EXPECT_EQ(load.table.instruments[2].sector_code, "UT");
    EXPECT_TRUE(load.dropped.empty());
}

// Property: writing and reloading is bit-exact, and row order does not matter.
TEST(Ingest, RoundTripAndOrderIndependence) {
    std::mt19937_64 gen(7);
    std::lognormal_distribution<double> price(3.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        TempDir dir;
        std::vector<std::string> rows;
        const int n = 4 + trial, t = 6;
        for (int d = 0; d < t; ++d) {
            for (int i = 0; i < n; ++i) {
                if (i == 0 && d == 3) continue;  // one gapped ticker
                rows.push_back(Date{18000 + d}.to_string() + ",X" + std::to_string(i) + "," +
                               csv::format_double(price(gen)));
            }
        }
        std::string text = "date,ticker,adj_close\n";
        for (const auto& r : rows) text += r + "\n";
        write_file(dir.file("a.csv"), text);
        std::shuffle(rows.begin(), rows.end(), gen);
        std::string shuffled = "date,ticker,adj_close\n";
        for (const auto& r : rows) shuffled += r + "\n";
        write_file(dir.file("b.csv"), shuffled);

        const auto a = load_prices(dir.file("a.csv"));
        const auto b = load_prices(dir.file("b.csv"));
        EXPECT_EQ(a.table.instruments, b.table.instruments);
        EXPECT_EQ(a.table.dates, b.table.dates);
        EXPECT_TRUE(a.table.prices == b.table.prices);
        EXPECT_EQ(a.table.n(), static_cast<std::size_t>(n - 1));
        for (const auto& d : a.dropped) EXPECT_GE(d.missing_dates_count, 1u);

        write_prices(a.table, dir.file("c.csv"));
        const auto c = load_prices(dir.file("c.csv"));
        EXPECT_EQ(c.table.instruments, a.table.instruments);
        EXPECT_EQ(c.table.dates, a.table.dates);
        EXPECT_TRUE(c.table.prices == a.table.prices);
        EXPECT_TRUE(c.dropped.empty());
    }
}

TEST(Ingest, DropReportJson) {
    const auto j = drop_report_json({{"C", 2, Date::parse("2020-01-03")}});
    EXPECT_EQ(j.dump(), R"([{"first_missing":"2020-01-03","missing_dates_count":2,"ticker":"C"}])");
}

TEST(Date, ParseFormatRoundTrip) {
    for (const char* s : {"1970-01-01", "2006-01-03", "2019-12-31", "2000-02-29"}) {
        EXPECT_EQ(Date::parse(s).to_string(), s);
    }
    EXPECT_EQ(Date::parse("1970-01-02").days, 1);
    EXPECT_THROW(Date::parse("2019-02-29"), DataError);
    EXPECT_THROW(Date::parse("2019-2-1"), DataError);
    EXPECT_EQ(Date::parse("2024-01-01").weekday(), 0);
}
