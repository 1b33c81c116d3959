#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "market_states/correlation.hpp"
#include "market_states/error.hpp"
#include "market_states/geometry.hpp"
#include "market_states/mds.hpp"
#include "market_states/parallel.hpp"
#include "market_states/random.hpp"

namespace market_states {

struct KMeansResult {
    int k = 0;
    std::vector<int> assignments;
    RowMatrix centroids;
    /// Sum of squared point-to-centroid distances.
    double inertia = 0.0;
    /// Mean Euclidean distance of a point to its own centroid.
    double d_intra = 0.0;
    std::uint64_t seed = 0;
    int iterations = 0;
    bool converged = false;
    /// Inertia after every centroid update (filled when requested).
    std::vector<double> inertia_history;
};

namespace detail {

inline double squared_distance(const RowMatrix& a, Eigen::Index i, const RowMatrix& b,
                               Eigen::Index j) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
        const double diff = a(i, c) - b(j, c);
        s += diff * diff;
    }
    return s;
}

// Nearest centroid for every point, ties to the lower index. Returns true if any label changed.
inline bool assign_points(const RowMatrix& points, const RowMatrix& centroids,
                          std::vector<int>& labels) {
    bool changed = false;
    for (Eigen::Index p = 0; p < points.rows(); ++p) {
        int best = 0;
        double best_d = squared_distance(points, p, centroids, 0);
        for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
            const double d = squared_distance(points, p, centroids, c);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        if (labels[static_cast<std::size_t>(p)] != best) {
            labels[static_cast<std::size_t>(p)] = best;
            changed = true;
        }
    }
    return changed;
}

// Gives every empty cluster the point farthest from its centroid, taken from
// a cluster that keeps at least one member.
inline bool repair_empty(const RowMatrix& points, RowMatrix& centroids, std::vector<int>& labels) {
    const auto k = static_cast<std::size_t>(centroids.rows());
    std::vector<std::size_t> sizes(k, 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    bool changed = false;
    for (std::size_t c = 0; c < k; ++c) {
        if (sizes[c] != 0) continue;
        Eigen::Index far = -1;
        double far_d = -1.0;
        for (Eigen::Index p = 0; p < points.rows(); ++p) {
            const auto own = static_cast<std::size_t>(labels[static_cast<std::size_t>(p)]);
            if (sizes[own] < 2) continue;
            const double d = squared_distance(points, p, centroids, static_cast<Eigen::Index>(own));
            if (d > far_d) {
                far_d = d;
                far = p;
            }
        }
        if (far < 0) throw NumericalError("k-means could not repair an empty cluster");
        --sizes[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
        labels[static_cast<std::size_t>(far)] = static_cast<int>(c);
        sizes[c] = 1;
        centroids.row(static_cast<Eigen::Index>(c)) = points.row(far);
        changed = true;
    }
    return changed;
}

inline void update_centroids(const RowMatrix& points, const std::vector<int>& labels,
                             RowMatrix& centroids) {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(centroids.rows()), 0);
    centroids.setZero();
    for (Eigen::Index p = 0; p < points.rows(); ++p) {
        const int l = labels[static_cast<std::size_t>(p)];
        centroids.row(l) += points.row(p);
        ++sizes[static_cast<std::size_t>(l)];
    }
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        centroids.row(c) /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);
    }
}

inline double inertia_of(const RowMatrix& points, const RowMatrix& centroids,
                         const std::vector<int>& labels) {
    double s = 0.0;
    for (Eigen::Index p = 0; p < points.rows(); ++p) {
        s += squared_distance(points, p, centroids, labels[static_cast<std::size_t>(p)]);
    }
    return s;
}

}  // namespace detail

/// Lloyd's algorithm from k distinct data points drawn uniformly at random.
inline KMeansResult kmeans(const RowMatrix& points, int k, std::uint64_t seed, int max_iter = 300,
                           bool record_history = false) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (k < 1) throw UsageError("k must be at least 1");
    if (static_cast<std::size_t>(k) > n) {
        throw UsageError("k = " + std::to_string(k) + " exceeds the " + std::to_string(n) +
                         " points");
    }
    KMeansResult res;
    res.k = k;
    res.seed = seed;

    Rng rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    res.centroids.resize(k, points.cols());
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
        std::swap(order[c], order[c + rng.index(n - c)]);
        res.centroids.row(static_cast<Eigen::Index>(c)) =
            points.row(static_cast<Eigen::Index>(order[c]));
    }

    std::vector<int> labels(n, -1);
    detail::assign_points(points, res.centroids, labels);
    detail::repair_empty(points, res.centroids, labels);
    for (int it = 0; it < max_iter; ++it) {
        detail::update_centroids(points, labels, res.centroids);
        res.inertia = detail::inertia_of(points, res.centroids, labels);
        if (record_history) res.inertia_history.push_back(res.inertia);
        ++res.iterations;
        bool changed = detail::assign_points(points, res.centroids, labels);
        changed = detail::repair_empty(points, res.centroids, labels) || changed;
        if (!changed) {
            res.converged = true;
            break;
        }
    }
    if (!res.converged) {
        detail::update_centroids(points, labels, res.centroids);
        res.inertia = detail::inertia_of(points, res.centroids, labels);
        if (record_history) res.inertia_history.push_back(res.inertia);
    }

    double dist_sum = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        dist_sum += std::sqrt(detail::squared_distance(points, static_cast<Eigen::Index>(p),
                                                       res.centroids, labels[p]));
    }
    res.d_intra = dist_sum / static_cast<double>(n);
    res.assignments = std::move(labels);
    return res;
}

/// Scalar summarizing the intra-cluster size of one k-means run.
using IntraMeasure = std::function<double(const RowMatrix&, const KMeansResult&)>;

/// Mean distance of each point to its own centroid (the default measure).
inline double mean_centroid_distance(const RowMatrix&, const KMeansResult& r) { return r.d_intra; }

/// Alternative measure: mean Euclidean distance over all within-cluster point pairs.
inline double mean_within_cluster_pairwise(const RowMatrix& points, const KMeansResult& r) {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (Eigen::Index a = 0; a < points.rows(); ++a) {
        for (Eigen::Index b = a + 1; b < points.rows(); ++b) {
            if (r.assignments[static_cast<std::size_t>(a)] != r.assignments[static_cast<std::size_t>(b)]) {
                continue;
            }
            sum += std::sqrt(detail::squared_distance(points, a, points, b));
            ++pairs;
        }
    }
    return pairs == 0 ? 0.0 : sum / static_cast<double>(pairs);
}

struct IntraSpread {
    /// Population standard deviation of the measure across runs.
    double sigma = 0.0;
    double mean = 0.0;
    int n_init = 0;
};

/// Runs k-means with seeds seed, seed+1, ..., seed+n_init-1 and summarizes
/// the spread of the intra-cluster measure across those runs.
inline IntraSpread intra_cluster_sigma(const RowMatrix& points, int k, int n_init,
                                       std::uint64_t seed, int max_iter = 300,
                                       const IntraMeasure& measure = mean_centroid_distance) {
    if (n_init < 2) throw UsageError("n_init must be at least 2");
    std::vector<double> values(static_cast<std::size_t>(n_init));
    parallel_for(values.size(), [&](std::size_t r) {
        const KMeansResult res = kmeans(points, k, seed + r, max_iter);
        values[r] = measure(points, res);
    });
    IntraSpread out;
    out.n_init = n_init;
    // Shifted by the first run so identical runs give exactly zero spread.
    const double ref = values.front();
    double shift_sum = 0.0;
    for (double v : values) shift_sum += v - ref;
    const double shift_mean = shift_sum / static_cast<double>(n_init);
    double var = 0.0;
    for (double v : values) var += (v - ref - shift_mean) * (v - ref - shift_mean);
    out.mean = ref + shift_mean;
    out.sigma = std::sqrt(var / static_cast<double>(n_init));
    return out;
}

struct LandscapeCell {
    int k = 0;
    double epsilon = 0.0;
    double sigma_d_intra = 0.0;
    double mean_d_intra = 0.0;
    int n_init = 0;
};

/// Embedding of the power-mapped frames for one epsilon.
using EpsilonEmbedder = std::function<Embedding(double epsilon)>;

/// Power map -> pairwise distances -> MDS for one epsilon.
inline Embedding embed_frames(const FrameSet& raw_frames, double epsilon, const MdsOptions& mds,
                              const DistanceProgress& progress = {}) {
    const FrameSet mapped = power_map(raw_frames, epsilon);
    return mds_embed(pairwise_distances(mapped, progress), mds);
}

struct ScanOptions {
    int epoch_len = 20;
    int shift = 1;
    std::vector<int> k_range = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<double> epsilon_grid = default_epsilon_grid();
    int n_init = 1000;
    std::uint64_t seed = 0;
    int kmeans_max_iter = 300;
    MdsOptions mds;
    IntraMeasure measure = mean_centroid_distance;

    /// 0.00, 0.05, ..., 0.95.
    static std::vector<double> default_epsilon_grid() {
        std::vector<double> g;
        for (int i = 0; i < 20; ++i) g.push_back(i / 20.0);
        return g;
    }
};

/// Evaluates every (k, epsilon) cell on the embedding supplied for its
/// epsilon. Cells are ordered by epsilon grid position, then k range position.
inline std::vector<LandscapeCell> landscape_scan(const EpsilonEmbedder& embed,
                                                 const ScanOptions& opt) {
    if (opt.k_range.empty() || opt.epsilon_grid.empty()) {
        throw UsageError("landscape scan needs non-empty k and epsilon ranges");
    }
    std::vector<LandscapeCell> cells;
    for (double eps : opt.epsilon_grid) {
        const Embedding emb = embed(eps);
        for (int k : opt.k_range) {
            const IntraSpread s =
                intra_cluster_sigma(emb.points, k, opt.n_init, opt.seed, opt.kmeans_max_iter, opt.measure);
            cells.push_back(LandscapeCell{k, eps, s.sigma, s.mean, s.n_init});
        }
    }
    return cells;
}

/// Builds frames from `returns` and scans, re-embedding once per epsilon.
inline std::vector<LandscapeCell> landscape_scan(const ReturnTable& returns, const ScanOptions& opt) {
    const FrameSet raw = build_frames(returns, opt.epoch_len, opt.shift, 0.0);
    return landscape_scan([&](double eps) { return embed_frames(raw, eps, opt.mds); }, opt);
}

struct Optimum {
    int k = 0;
    double epsilon = 0.0;
    double sigma_d_intra = 0.0;
};

/// Minimum sigma over cells with k >= k_min; ties go to smaller k, then smaller epsilon.
inline Optimum select_optimum(const std::vector<LandscapeCell>& cells, int k_min = 4) {
    const LandscapeCell* best = nullptr;
    for (const auto& c : cells) {
        if (c.k < k_min) continue;
        if (!best || std::tie(c.sigma_d_intra, c.k, c.epsilon) <
                         std::tie(best->sigma_d_intra, best->k, best->epsilon)) {
            best = &c;
        }
    }
    if (!best) throw DataError("no landscape cell with k >= " + std::to_string(k_min));
    return Optimum{best->k, best->epsilon, best->sigma_d_intra};
}

/// Clusters relabeled S1..Sk in ascending mean raw correlation.
struct StateModel {
    int k_star = 0;
    double epsilon_star = 0.0;
    /// State id in 1..k_star for every frame.
    std::vector<int> state_of_frame;
    /// Row s-1 is the embedding-space centroid of state s.
    RowMatrix centroids;
    std::vector<double> mu;
    std::vector<Date> taus;

    std::size_t size() const { return state_of_frame.size(); }
};

inline StateModel label_states(const FrameSet& frames_raw, const KMeansResult& result,
                               double epsilon_star) {
    if (frames_raw.epsilon != 0.0) throw UsageError("state labeling needs raw (epsilon = 0) frames");
    if (frames_raw.size() != result.assignments.size()) {
        throw DataError("frame count " + std::to_string(frames_raw.size()) +
                        " does not match " + std::to_string(result.assignments.size()) +
                        " cluster assignments");
    }
    const auto k = static_cast<std::size_t>(result.k);
    std::vector<double> mu_sum(k, 0.0);
    std::vector<std::size_t> members(k, 0);
    std::vector<std::size_t> first_member(k, std::numeric_limits<std::size_t>::max());
    for (std::size_t f = 0; f < frames_raw.size(); ++f) {
        const auto c = static_cast<std::size_t>(result.assignments[f]);
        mu_sum[c] += frames_raw[f].mean_off_diagonal();
        ++members[c];
        first_member[c] = std::min(first_member[c], f);
    }
    std::vector<double> mu(k);
    for (std::size_t c = 0; c < k; ++c) {
        if (members[c] == 0) throw DataError("cluster " + std::to_string(c) + " has no frames");
        mu[c] = mu_sum[c] / static_cast<double>(members[c]);
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(mu[a], first_member[a]) < std::tie(mu[b], first_member[b]);
    });
    std::vector<int> state_of_cluster(k);
    for (std::size_t s = 0; s < k; ++s) state_of_cluster[order[s]] = static_cast<int>(s + 1);

    StateModel model;
    model.k_star = result.k;
    model.epsilon_star = epsilon_star;
    model.taus = frames_raw.taus();
    model.state_of_frame.reserve(frames_raw.size());
    for (int a : result.assignments) {
        model.state_of_frame.push_back(state_of_cluster[static_cast<std::size_t>(a)]);
    }
    model.centroids.resize(result.centroids.rows(), result.centroids.cols());
    for (std::size_t s = 0; s < k; ++s) {
        model.centroids.row(static_cast<Eigen::Index>(s)) =
            result.centroids.row(static_cast<Eigen::Index>(order[s]));
        model.mu.push_back(mu[order[s]]);
    }
    return model;
}

/// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw UsageError("labelings differ in length");
    if (a.size() < 2) return 1.0;
    auto compact = [](const std::vector<int>& labels) {
        std::vector<int> sorted = labels;
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        std::vector<std::size_t> out;
        for (int l : labels) {
            out.push_back(static_cast<std::size_t>(
                std::lower_bound(sorted.begin(), sorted.end(), l) - sorted.begin()));
        }
        return std::pair{out, sorted.size()};
    };
    const auto [ca, na] = compact(a);
    const auto [cb, nb] = compact(b);
    std::vector<double> table(na * nb, 0.0), rows(na, 0.0), cols(nb, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[ca[i] * nb + cb[i]] += 1.0;
        rows[ca[i]] += 1.0;
        cols[cb[i]] += 1.0;
    }
    auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (double v : table) index += choose2(v);
    for (double v : rows) sum_rows += choose2(v);
    for (double v : cols) sum_cols += choose2(v);
    const double expected = sum_rows * sum_cols / choose2(static_cast<double>(a.size()));
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

}  // namespace market_states
