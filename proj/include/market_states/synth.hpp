#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "market_states/correlation.hpp"
#include "market_states/date.hpp"
#include "market_states/error.hpp"
#include "market_states/random.hpp"

namespace market_states {

struct Regime {
    int duration_days = 0;
    double base_correlation = 0.0;
};

/// Planted-regime one-factor return model.
struct RegimeSpec {
    int n_stocks = 0;
    std::vector<Regime> regimes;
    double noise_sigma = 0.01;
    std::uint64_t seed = 0;
    /// Date of the base prices; returns start on the following business day.
    Date start = Date::from_ymd(2000, 1, 3);

    int total_days() const {
        int t = 0;
        for (const auto& r : regimes) t += r.duration_days;
        return t;
    }

    /// Throws DataError on an invalid spec. `min_duration` is the epoch length
    /// the data is meant for; every regime must be at least that long.
    void validate(int min_duration = 1) const {
        if (n_stocks < 2) throw DataError("synthetic regime set needs at least 2 stocks");
        if (regimes.empty()) throw DataError("synthetic regime set needs at least one regime");
        if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) {
            throw DataError("noise_sigma must be positive");
        }
        for (std::size_t i = 0; i < regimes.size(); ++i) {
            const auto& r = regimes[i];
            if (r.duration_days < std::max(1, min_duration)) {
                throw DataError("regime " + std::to_string(i) + " is shorter than " +
                                std::to_string(std::max(1, min_duration)) + " days");
            }
            if (!(r.base_correlation >= 0.0 && r.base_correlation < 1.0)) {
                throw DataError("regime correlation must lie in [0, 1)");
            }
            for (std::size_t j = 0; j < i; ++j) {
                if (regimes[j].base_correlation == r.base_correlation) {
                    throw DataError("regime correlations must be pairwise distinct");
                }
            }
        }
    }
};

/// `count` consecutive weekdays starting at `first` (moved forward off a weekend).
inline std::vector<Date> business_days(Date first, std::size_t count) {
    std::vector<Date> out;
    out.reserve(count);
    Date d = first;
    while (out.size() < count) {
        if (d.weekday() < 5) out.push_back(d);
        ++d.days;
    }
    return out;
}

/// Returns r_i(t) = noise_sigma * (sqrt(c) m(t) + sqrt(1 - c) e_i(t)) with
/// standard normal m and e_i, so any two stocks have population correlation c.
/// Per day the market draw comes first, then one draw per stock in order.
inline ReturnTable generate_returns(const RegimeSpec& spec) {
    spec.validate();
    const auto n = static_cast<std::size_t>(spec.n_stocks);
    const auto days = static_cast<std::size_t>(spec.total_days());
    ReturnTable out;
    for (std::size_t i = 0; i < n; ++i) {
        std::string ticker = std::to_string(i);
        ticker.insert(0, ticker.size() < 3 ? 3 - ticker.size() : 0, '0');
        out.instruments.push_back(Instrument{"SYN" + ticker, "synthetic", ""});
    }
    auto dates = business_days(spec.start, days + 1);
    out.dates.assign(dates.begin() + 1, dates.end());
    out.returns.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(days));

    Rng rng(spec.seed);
    Eigen::Index t = 0;
    for (const auto& regime : spec.regimes) {
        const double load = std::sqrt(regime.base_correlation);
        const double idio = std::sqrt(1.0 - regime.base_correlation);
        for (int d = 0; d < regime.duration_days; ++d, ++t) {
            const double market = rng.normal();
            for (std::size_t i = 0; i < n; ++i) {
                out.returns(static_cast<Eigen::Index>(i), t) =
                    spec.noise_sigma * (load * market + idio * rng.normal());
            }
        }
    }
    return out;
}

/// Regime index (0-based) of every return column.
inline std::vector<int> regime_of_day(const RegimeSpec& spec) {
    std::vector<int> out;
    for (std::size_t r = 0; r < spec.regimes.size(); ++r) {
        out.insert(out.end(), static_cast<std::size_t>(spec.regimes[r].duration_days),
                   static_cast<int>(r));
    }
    return out;
}

/// Price paths p(0) = start_price, p(t+1) = p(t) exp(r(t)); one more date than returns.
inline PriceTable prices_from_returns(const ReturnTable& returns, Date base_date,
                                      double start_price = 100.0) {
    PriceTable table;
    table.instruments = returns.instruments;
    table.dates.push_back(base_date);
    table.dates.insert(table.dates.end(), returns.dates.begin(), returns.dates.end());
    const Eigen::Index n = returns.returns.rows(), t = returns.returns.cols();
    table.prices.resize(n, t + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        double log_p = std::log(start_price);
        table.prices(i, 0) = start_price;
        for (Eigen::Index c = 0; c < t; ++c) {
            log_p += returns.returns(i, c);
            table.prices(i, c + 1) = std::exp(log_p);
        }
    }
    return table;
}

inline PriceTable generate_prices(const RegimeSpec& spec) {
    const Date base = business_days(spec.start, 1).front();
    return prices_from_returns(generate_returns(spec), base);
}

}  // namespace market_states
