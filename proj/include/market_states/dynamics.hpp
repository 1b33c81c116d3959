#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "market_states/clustering.hpp"
#include "market_states/correlation.hpp"
#include "market_states/error.hpp"
#include "market_states/geometry.hpp"
#include "market_states/mds.hpp"
#include "market_states/parallel.hpp"

namespace market_states {

/// Counts and row-normalized probabilities of consecutive state pairs.
/// Accessors take 1-based state ids.
struct TransitionMatrix {
    int k = 0;
    std::vector<std::int64_t> counts;
    /// Row-normalized including self-transitions (canonical).
    std::vector<double> probabilities;
    /// Row-normalized over off-diagonal transitions only; diagonal is zero.
    std::vector<double> probabilities_excl_self;
    /// States with no outgoing transition; their probability rows are all zero.
    std::vector<int> empty_rows;

    std::int64_t count(int from, int to) const { return counts[cell(from, to)]; }
    double probability(int from, int to) const { return probabilities[cell(from, to)]; }
    double probability_excl_self(int from, int to) const {
        return probabilities_excl_self[cell(from, to)];
    }
    std::int64_t total() const {
        std::int64_t s = 0;
        for (auto c : counts) s += c;
        return s;
    }

private:
    std::size_t cell(int from, int to) const {
        if (from < 1 || from > k || to < 1 || to > k) throw UsageError("state id out of range");
        return static_cast<std::size_t>(from - 1) * static_cast<std::size_t>(k) +
               static_cast<std::size_t>(to - 1);
    }
};

/// Transition statistics of a 1-based state sequence over k states.
inline TransitionMatrix transition_counts(const std::vector<int>& states, int k) {
    if (k < 1) throw UsageError("k must be at least 1");
    TransitionMatrix tm;
    tm.k = k;
    const auto kk = static_cast<std::size_t>(k);
    tm.counts.assign(kk * kk, 0);
    for (int s : states) {
        if (s < 1 || s > k) throw DataError("state id " + std::to_string(s) + " outside 1.." + std::to_string(k));
    }
    for (std::size_t t = 1; t < states.size(); ++t) {
        ++tm.counts[static_cast<std::size_t>(states[t - 1] - 1) * kk +
                    static_cast<std::size_t>(states[t] - 1)];
    }
    tm.probabilities.assign(kk * kk, 0.0);
    tm.probabilities_excl_self.assign(kk * kk, 0.0);
    for (std::size_t a = 0; a < kk; ++a) {
        std::int64_t row = 0, off = 0;
        for (std::size_t b = 0; b < kk; ++b) {
            row += tm.counts[a * kk + b];
            if (a != b) off += tm.counts[a * kk + b];
        }
        if (row == 0) {
            tm.empty_rows.push_back(static_cast<int>(a + 1));
            continue;
        }
        for (std::size_t b = 0; b < kk; ++b) {
            const auto c = static_cast<double>(tm.counts[a * kk + b]);
            tm.probabilities[a * kk + b] = c / static_cast<double>(row);
            if (a != b && off > 0) tm.probabilities_excl_self[a * kk + b] = c / static_cast<double>(off);
        }
    }
    return tm;
}

inline TransitionMatrix transition_counts(const StateModel& states) {
    return transition_counts(states.state_of_frame, states.k_star);
}

/// Share of transitions that stay put or move to an adjacent state.
inline double tridiagonality_score(const TransitionMatrix& tm) {
    std::int64_t near = 0, all = 0;
    for (int a = 1; a <= tm.k; ++a) {
        for (int b = 1; b <= tm.k; ++b) {
            all += tm.count(a, b);
            if (std::abs(a - b) <= 1) near += tm.count(a, b);
        }
    }
    return all == 0 ? 1.0 : static_cast<double>(near) / static_cast<double>(all);
}

struct ForbiddenTransition {
    int from_state = 0;
    int to_state = 0;
    std::int64_t count = 0;
};

/// Jumps into the highest state from anywhere below the penultimate state.
inline std::vector<ForbiddenTransition> forbidden_transition_report(const TransitionMatrix& tm) {
    std::vector<ForbiddenTransition> out;
    for (int a = 1; a <= tm.k - 2; ++a) out.push_back({a, tm.k, tm.count(a, tm.k)});
    return out;
}

/// Equal-weighted mean of constituent log-returns; a proxy for the index return.
struct IndexReturnSeries {
    std::vector<Date> dates;
    std::vector<double> values;

    std::optional<double> at(Date d) const {
        const auto it = std::lower_bound(dates.begin(), dates.end(), d);
        if (it == dates.end() || *it != d) return std::nullopt;
        return values[static_cast<std::size_t>(it - dates.begin())];
    }
};

inline IndexReturnSeries index_return_proxy(const ReturnTable& returns) {
    IndexReturnSeries out;
    out.dates = returns.dates;
    out.values.resize(returns.t());
    for (Eigen::Index c = 0; c < returns.returns.cols(); ++c) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < returns.returns.rows(); ++i) s += returns.returns(i, c);
        out.values[static_cast<std::size_t>(c)] = s / static_cast<double>(returns.n());
    }
    return out;
}

struct TrajectoryNode {
    Date tau;
    std::vector<double> point;
    int state_id = 0;
    std::optional<double> index_return;
};

using Trajectory = std::vector<TrajectoryNode>;

inline Trajectory build_trajectory(const Embedding& embedding, const StateModel& states,
                                   const IndexReturnSeries* index_returns = nullptr) {
    if (embedding.size() != states.size() || states.taus.size() != states.size()) {
        throw DataError("embedding and state model are not aligned");
    }
    Trajectory out;
    out.reserve(states.size());
    for (std::size_t f = 0; f < states.size(); ++f) {
        if (f > 0 && !(states.taus[f - 1] < states.taus[f])) {
            throw DataError("trajectory dates are not strictly increasing at " +
                            states.taus[f].to_string());
        }
        if (!embedding.taus.empty() && embedding.taus[f] != states.taus[f]) {
            throw DataError("embedding and state model dates differ at frame " + std::to_string(f));
        }
        TrajectoryNode node;
        node.tau = states.taus[f];
        const auto row = embedding.points.row(static_cast<Eigen::Index>(f));
        node.point.assign(row.data(), row.data() + row.size());
        node.state_id = states.state_of_frame[f];
        if (index_returns) node.index_return = index_returns->at(node.tau);
        out.push_back(std::move(node));
    }
    return out;
}

struct Classification {
    Date tau;
    int state_id = 0;
    std::vector<double> point;
    double nearest_centroid_distance = 0.0;
};

/// Stress-minimizing position of one extra point against fixed anchors,
/// started from the centroid of its `seed_neighbours` nearest anchors.
inline Eigen::RowVectorXd place_point(const RowMatrix& anchors, const std::vector<double>& targets,
                                      int seed_neighbours = 5, int max_iter = 1000) {
    const auto n = static_cast<std::size_t>(anchors.rows());
    std::vector<std::size_t> order(n);
    for (std::size_t j = 0; j < n; ++j) order[j] = j;
    const std::size_t m = std::min<std::size_t>(n, static_cast<std::size_t>(seed_neighbours));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          return targets[a] < targets[b] || (targets[a] == targets[b] && a < b);
                      });
    Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(anchors.cols());
    for (std::size_t j = 0; j < m; ++j) x += anchors.row(static_cast<Eigen::Index>(order[j]));
    x /= static_cast<double>(m);

    for (int it = 0; it < max_iter; ++it) {
        Eigen::RowVectorXd next = Eigen::RowVectorXd::Zero(anchors.cols());
        for (std::size_t j = 0; j < n; ++j) {
            const auto p = anchors.row(static_cast<Eigen::Index>(j));
            next += p;
            const double d = (x - p).norm();
            if (d > 0.0) next += targets[j] * (x - p) / d;
        }
        next /= static_cast<double>(n);
        const double step = (next - x).norm();
        x = next;
        if (step <= 1e-13 * (1.0 + x.norm())) break;
    }
    return x;
}

/// Places a new frame into an existing map and assigns the state of the
/// nearest centroid. The historical embedding is not recomputed.
inline Classification classify_new_frame(const CorrelationFrame& frame, const FrameSet& reference,
                                         const Embedding& embedding, const StateModel& states) {
    if (reference.size() == 0) throw DataError("empty reference frame set");
    if (frame.n != reference.n) {
        throw DataError("frame has " + std::to_string(frame.n) + " instruments, reference has " +
                        std::to_string(reference.n));
    }
    if (frame.epsilon != reference.epsilon || frame.epsilon != states.epsilon_star) {
        throw DataError("frame epsilon does not match the reference model");
    }
    if (frame.epoch_len != reference.epoch_len) {
        throw DataError("frame epoch length does not match the reference model");
    }
    if (embedding.size() != reference.size() || states.size() != reference.size()) {
        throw DataError("reference frames, embedding and states are not aligned");
    }
    std::vector<double> targets(reference.size());
    parallel_for(reference.size(), [&](std::size_t j) { targets[j] = frame_distance(frame, reference[j]); });

    Classification out;
    out.tau = frame.tau;
    const Eigen::RowVectorXd x = place_point(embedding.points, targets);
    out.point.assign(x.data(), x.data() + x.size());
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index s = 0; s < states.centroids.rows(); ++s) {
        const double d = (states.centroids.row(s) - x).norm();
        if (d < best) {
            best = d;
            out.state_id = static_cast<int>(s + 1);
        }
    }
    out.nearest_centroid_distance = best;
    return out;
}

}  // namespace market_states
