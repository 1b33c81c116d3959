#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "market_states/error.hpp"
#include "market_states/ingest.hpp"
#include "market_states/parallel.hpp"

namespace market_states {

/// Log-returns; column t holds ln(p[t+1] / p[t]) stamped with the later date.
struct ReturnTable {
    std::vector<Instrument> instruments;
    std::vector<Date> dates;
    RowMatrix returns;

    std::size_t n() const { return instruments.size(); }
    std::size_t t() const { return dates.size(); }
};

inline ReturnTable log_returns(const PriceTable& prices) {
    prices.validate();
    ReturnTable out;
    out.instruments = prices.instruments;
    out.dates.assign(prices.dates.begin() + 1, prices.dates.end());
    const Eigen::Index n = prices.prices.rows(), t = prices.prices.cols();
    out.returns.resize(n, t - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c + 1 < t; ++c) {
            out.returns(i, c) = std::log(prices.prices(i, c + 1) / prices.prices(i, c));
        }
    }
    return out;
}

/// Symmetric correlation matrix with unit diagonal, stored as its strict upper
/// triangle in row-major order: (0,1), (0,2), ..., (0,n-1), (1,2), ...
struct CorrelationFrame {
    Date tau;
    int epoch_len = 0;
    double epsilon = 0.0;
    std::size_t n = 0;
    std::vector<double> upper;

    static constexpr std::size_t packed_size(std::size_t n) { return n * (n - 1) / 2; }

    static constexpr std::size_t packed_index(std::size_t n, std::size_t i, std::size_t j) {
        return i * n - i * (i + 1) / 2 + (j - i - 1);
    }

    double operator()(std::size_t i, std::size_t j) const {
        if (i == j) return 1.0;
        if (i > j) std::swap(i, j);
        return upper[packed_index(n, i, j)];
    }

    /// Mean of the off-diagonal entries.
    double mean_off_diagonal() const {
        double sum = 0.0;
        for (double v : upper) sum += v;
        return upper.empty() ? 0.0 : sum / static_cast<double>(upper.size());
    }

    Eigen::MatrixXd dense() const {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*this)(i, j);
            }
        }
        return m;
    }
};

struct FrameSet {
    std::vector<CorrelationFrame> frames;
    std::size_t n = 0;
    int epoch_len = 0;
    int shift = 0;
    double epsilon = 0.0;

    std::size_t size() const { return frames.size(); }
    const CorrelationFrame& operator[](std::size_t f) const { return frames[f]; }

    std::vector<Date> taus() const {
        std::vector<Date> out;
        out.reserve(frames.size());
        for (const auto& f : frames) out.push_back(f.tau);
        return out;
    }
};

/// Number of epochs of `epoch_len` returns, advanced by `shift`, that fit in
/// `return_cols` return observations. Zero when not even one fits.
inline std::size_t frame_count(std::size_t return_cols, int epoch_len, int shift) {
    if (epoch_len < 1 || shift < 1) throw UsageError("epoch_len and shift must be positive");
    const auto len = static_cast<std::size_t>(epoch_len);
    if (return_cols < len) return 0;
    return (return_cols - len) / static_cast<std::size_t>(shift) + 1;
}

namespace detail {
inline constexpr double clamp_tolerance = 1e-12;
}

/// Pearson correlation over the `epoch_len` return columns ending at column `end_col`.
inline CorrelationFrame epoch_correlation_at(const ReturnTable& returns, std::size_t end_col,
                                             int epoch_len) {
    if (epoch_len < 2) throw UsageError("epoch_len must be at least 2");
    const auto len = static_cast<std::size_t>(epoch_len);
    if (end_col >= returns.t()) throw DataError("epoch end outside the return table");
    if (end_col + 1 < len) {
        throw DataError("insufficient history before " + returns.dates[end_col].to_string() +
                        ": need " + std::to_string(len) + " returns");
    }
    const std::size_t n = returns.n();
    const std::size_t first = end_col + 1 - len;

    // Standardized rows: z_i = (r_i - mean_i) / ||r_i - mean_i||, so rho_ij = <z_i, z_j>.
    std::vector<double> z(n * len);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = returns.returns.row(static_cast<Eigen::Index>(i)).data() + first;
        double* zi = z.data() + i * len;
        const auto [lo, hi] = std::minmax_element(r, r + len);
        if (*lo == *hi) {
            throw DataError("zero return variance for " + returns.instruments[i].ticker +
                            " in epoch ending " + returns.dates[end_col].to_string());
        }
        double mean = 0.0;
        for (std::size_t t = 0; t < len; ++t) mean += r[t];
        mean /= static_cast<double>(len);
        double ss = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            zi[t] = r[t] - mean;
            ss += zi[t] * zi[t];
        }
        const double scale = 1.0 / std::sqrt(ss);
        for (std::size_t t = 0; t < len; ++t) zi[t] *= scale;
    }

    CorrelationFrame frame;
    frame.tau = returns.dates[end_col];
    frame.epoch_len = epoch_len;
    frame.epsilon = 0.0;
    frame.n = n;
    frame.upper.resize(CorrelationFrame::packed_size(n));
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* zi = z.data() + i * len;
        for (std::size_t j = i + 1; j < n; ++j, ++k) {
            const double* zj = z.data() + j * len;
            double rho = 0.0;
            for (std::size_t t = 0; t < len; ++t) rho += zi[t] * zj[t];
            if (std::abs(rho) > 1.0 + detail::clamp_tolerance) {
                throw NumericalError("correlation out of range at " + frame.tau.to_string());
            }
            frame.upper[k] = std::clamp(rho, -1.0, 1.0);
        }
    }
    return frame;
}

inline CorrelationFrame epoch_correlation(const ReturnTable& returns, Date tau, int epoch_len) {
    const auto it = std::lower_bound(returns.dates.begin(), returns.dates.end(), tau);
    if (it == returns.dates.end() || *it != tau) {
        throw DataError("no return column dated " + tau.to_string());
    }
    return epoch_correlation_at(returns, static_cast<std::size_t>(it - returns.dates.begin()),
                                epoch_len);
}

/// Elementwise sign(rho) |rho|^(1 + epsilon); suppresses small coefficients
/// and keeps -1, 0, 1 fixed.
inline CorrelationFrame power_map(const CorrelationFrame& frame, double epsilon) {
    if (!(epsilon >= 0.0 && epsilon < 1.0)) {
        throw UsageError("power-map epsilon must lie in [0, 1), got " + std::to_string(epsilon));
    }
    if (frame.epsilon != 0.0) throw UsageError("power map expects a raw (epsilon = 0) frame");
    CorrelationFrame out = frame;
    out.epsilon = epsilon;
    if (epsilon == 0.0) return out;
    const double exponent = 1.0 + epsilon;
    for (double& c : out.upper) c = std::copysign(std::pow(std::abs(c), exponent), c);
    return out;
}

inline FrameSet power_map(const FrameSet& raw, double epsilon) {
    FrameSet out;
    out.n = raw.n;
    out.epoch_len = raw.epoch_len;
    out.shift = raw.shift;
    out.epsilon = epsilon;
    out.frames.resize(raw.size());
    parallel_for(raw.size(), [&](std::size_t f) { out.frames[f] = power_map(raw.frames[f], epsilon); });
    return out;
}

/// Power-mapped correlation frames for epochs ending at return columns
/// epoch_len-1, epoch_len-1+shift, ...
inline FrameSet build_frames(const ReturnTable& returns, int epoch_len, int shift, double epsilon) {
    if (epoch_len < 2) throw UsageError("epoch_len must be at least 2");
    if (shift < 1) throw UsageError("shift must be at least 1");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw UsageError("epsilon must lie in [0, 1)");
    const std::size_t count = frame_count(returns.t(), epoch_len, shift);
    if (count == 0) {
        throw DataError("insufficient history: " + std::to_string(returns.t()) +
                        " returns for epoch length " + std::to_string(epoch_len));
    }
    FrameSet set;
    set.n = returns.n();
    set.epoch_len = epoch_len;
    set.shift = shift;
    set.epsilon = epsilon;
    set.frames.resize(count);
    const auto first_end = static_cast<std::size_t>(epoch_len - 1);
    parallel_for(count, [&](std::size_t f) {
        const std::size_t end_col = first_end + f * static_cast<std::size_t>(shift);
        set.frames[f] = power_map(epoch_correlation_at(returns, end_col, epoch_len), epsilon);
    });
    return set;
}

}  // namespace market_states
