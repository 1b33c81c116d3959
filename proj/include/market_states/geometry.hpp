#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "market_states/correlation.hpp"
#include "market_states/error.hpp"
#include "market_states/parallel.hpp"

namespace market_states {

namespace detail {

// Packed entries are summed in fixed-size chunks; each chunk uses four
// interleaved accumulators. Every caller uses the same order, so a distance
// is bit-identical whether computed alone or inside a tiled sweep.
inline constexpr std::size_t l1_chunk = 1024;

inline double l1_chunk_sum(const double* x, const double* y, std::size_t len) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t k = 0;
    for (; k + 4 <= len; k += 4) {
        s0 += std::abs(x[k] - y[k]);
        s1 += std::abs(x[k + 1] - y[k + 1]);
        s2 += std::abs(x[k + 2] - y[k + 2]);
        s3 += std::abs(x[k + 3] - y[k + 3]);
    }
    for (; k < len; ++k) s0 += std::abs(x[k] - y[k]);
    return (s0 + s1) + (s2 + s3);
}

inline double zeta_scale(std::size_t n) {
    // Off-diagonal entries appear twice among the n^2 components; the diagonal adds 0.
    return 2.0 / (static_cast<double>(n) * static_cast<double>(n));
}

}  // namespace detail

/// Mean absolute difference over all N^2 matrix components.
inline double frame_distance(const CorrelationFrame& a, const CorrelationFrame& b) {
    if (a.n != b.n || a.upper.size() != b.upper.size()) {
        throw UsageError("frame dimension mismatch: " + std::to_string(a.n) + " vs " +
                         std::to_string(b.n));
    }
    double total = 0.0;
    for (std::size_t k = 0; k < a.upper.size(); k += detail::l1_chunk) {
        const std::size_t len = std::min(detail::l1_chunk, a.upper.size() - k);
        total += detail::l1_chunk_sum(a.upper.data() + k, b.upper.data() + k, len);
    }
    return total * detail::zeta_scale(a.n);
}

struct FrameDistanceMatrix {
    Eigen::MatrixXd distances;
    std::vector<Date> frame_taus;

    std::size_t size() const { return static_cast<std::size_t>(distances.rows()); }
    double operator()(std::size_t a, std::size_t b) const {
        return distances(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }

    /// Rounds every entry to single precision, the on-disk storage format.
    void round_to_storage() {
        distances = distances.cast<float>().cast<double>();
    }
};

/// Called with (pairs done, total pairs) as tiles complete.
using DistanceProgress = std::function<void(std::size_t, std::size_t)>;

/// All F(F-1)/2 frame distances. Work is split into tiles of frames and the
/// packed entries are swept chunk by chunk so both tiles stay cache-resident.
inline FrameDistanceMatrix pairwise_distances(const FrameSet& frames,
                                              const DistanceProgress& progress = {}) {
    const std::size_t count = frames.size();
    if (count < 2) throw DataError("pairwise distances need at least 2 frames");
    for (const auto& f : frames.frames) {
        if (f.n != frames.n || f.upper.size() != CorrelationFrame::packed_size(frames.n)) {
            throw DataError("frame set has inconsistent dimensions");
        }
    }
    constexpr std::size_t tile = 16;
    const std::size_t tiles = (count + tile - 1) / tile;
    std::vector<std::pair<std::size_t, std::size_t>> tasks;
    for (std::size_t ti = 0; ti < tiles; ++ti) {
        for (std::size_t tj = ti; tj < tiles; ++tj) tasks.emplace_back(ti, tj);
    }

    FrameDistanceMatrix out;
    out.frame_taus = frames.taus();
    const auto ecount = static_cast<Eigen::Index>(count);
    out.distances = Eigen::MatrixXd::Zero(ecount, ecount);
    const std::size_t packed = CorrelationFrame::packed_size(frames.n);
    const double scale = detail::zeta_scale(frames.n);
    const std::size_t total_pairs = count * (count - 1) / 2;
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;

    parallel_for(tasks.size(), [&](std::size_t task) {
        const auto [ti, tj] = tasks[task];
        const std::size_t a0 = ti * tile, a1 = std::min(count, a0 + tile);
        const std::size_t b0 = tj * tile, b1 = std::min(count, b0 + tile);
        double acc[tile][tile] = {};
        for (std::size_t k = 0; k < packed; k += detail::l1_chunk) {
            const std::size_t len = std::min(detail::l1_chunk, packed - k);
            for (std::size_t a = a0; a < a1; ++a) {
                const double* x = frames[a].upper.data() + k;
                for (std::size_t b = std::max(b0, a + 1); b < b1; ++b) {
                    acc[a - a0][b - b0] += detail::l1_chunk_sum(x, frames[b].upper.data() + k, len);
                }
            }
        }
        std::size_t pairs = 0;
        for (std::size_t a = a0; a < a1; ++a) {
            for (std::size_t b = std::max(b0, a + 1); b < b1; ++b, ++pairs) {
                const double d = acc[a - a0][b - b0] * scale;
                out.distances(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = d;
                out.distances(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = d;
            }
        }
        const std::size_t now = done += pairs;
        if (progress) {
            std::lock_guard lock(progress_mutex);
            progress(now, total_pairs);
        }
    });
    return out;
}

}  // namespace market_states
