#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "market_states/error.hpp"
#include "market_states/geometry.hpp"
#include "market_states/parallel.hpp"
#include "market_states/random.hpp"

namespace market_states {

struct MdsOptions {
    int dim = 3;
    int n_restarts = 4;
    int max_iter = 300;
    /// Stop once the relative stress improvement of an iteration drops below this.
    double tol = 1e-6;
    std::uint64_t seed = 0;
    /// Start the first restart from classical (Torgerson) MDS instead of random points.
    bool classical_init = false;
    /// Keep the per-iteration stress of every restart.
    bool record_history = false;
};

/// Low-dimensional coordinates whose Euclidean distances approximate the
/// input distances. Centered and put into a canonical orientation.
struct Embedding {
    RowMatrix points;
    /// Raw stress: sum over pairs a < b of (d_ab - delta_ab)^2.
    double stress = 0.0;
    int n_restarts_used = 0;
    int best_restart = 0;
    std::uint64_t seed = 0;
    /// Set when every input distance was zero; points are then all zero.
    bool degenerate = false;
    std::vector<Date> taus;
    std::vector<std::vector<double>> stress_histories;

    std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
    int dim() const { return static_cast<int>(points.cols()); }
};

namespace detail {

inline void check_distance_matrix(const Eigen::MatrixXd& delta) {
    if (delta.rows() != delta.cols()) throw DataError("distance matrix is not square");
    if (delta.rows() < 1) throw DataError("distance matrix is empty");
    const double scale = 1.0 + delta.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < delta.rows(); ++i) {
        if (delta(i, i) != 0.0) throw DataError("distance matrix has a non-zero diagonal");
        for (Eigen::Index j = i + 1; j < delta.cols(); ++j) {
            const double a = delta(i, j), b = delta(j, i);
            if (!std::isfinite(a) || !std::isfinite(b)) {
                throw DataError("distance matrix has non-finite entries");
            }
            if (a < 0.0 || b < 0.0) throw DataError("distance matrix has negative entries");
            if (std::abs(a - b) > 1e-12 * scale) throw DataError("distance matrix is not symmetric");
        }
    }
}

// One pass over all pairs: returns the raw stress of `x` and, when `next`
// is given, writes the Guttman transform X+ = n^-1 B(X) X into it. `delta`
// is symmetric, so row i is read as the contiguous column i.
template <int Dim>
double majorize_pass(const RowMatrix& x, const Eigen::MatrixXd& delta, RowMatrix* next) {
    const auto n = static_cast<std::size_t>(x.rows());
    const auto dim = static_cast<std::size_t>(Dim > 0 ? Dim : x.cols());
    const double inv_n = 1.0 / static_cast<double>(n);
    const double* pts = x.data();
    std::vector<double> row_stress(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        const double* target = delta.col(static_cast<Eigen::Index>(i)).data();
        const double* xi = pts + i * dim;
        double local[Dim > 0 ? Dim : 16] = {};
        std::vector<double> heap(Dim > 0 || dim <= 16 ? 0 : dim, 0.0);
        double* sum = heap.empty() ? local : heap.data();
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double* xj = pts + j * dim;
            double sq = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                const double diff = xi[c] - xj[c];
                sq += diff * diff;
            }
            const double dij = std::sqrt(sq);
            if (j > i) s += (dij - target[j]) * (dij - target[j]);
            if (next && dij > 0.0) {
                const double b = target[j] / dij;
                for (std::size_t c = 0; c < dim; ++c) sum[c] += b * (xi[c] - xj[c]);
            }
        }
        row_stress[i] = s;
        if (next) {
            double* out = next->data() + i * dim;
            for (std::size_t c = 0; c < dim; ++c) out[c] = sum[c] * inv_n;
        }
    });
    double total = 0.0;
    for (double v : row_stress) total += v;
    return total;
}

inline double majorize(const RowMatrix& x, const Eigen::MatrixXd& delta, RowMatrix* next) {
    if (next) next->resize(x.rows(), x.cols());
    return x.cols() == 3 ? majorize_pass<3>(x, delta, next) : majorize_pass<0>(x, delta, next);
}

inline void center_columns(RowMatrix& x) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        double mean = 0.0;
        for (Eigen::Index r = 0; r < x.rows(); ++r) mean += x(r, c);
        mean /= static_cast<double>(x.rows());
        for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, c) -= mean;
    }
}

}  // namespace detail

inline double raw_stress(const RowMatrix& points, const Eigen::MatrixXd& delta) {
    return detail::majorize(points, delta, nullptr);
}

/// Torgerson scaling: top eigenvectors of the double-centered squared distances.
inline RowMatrix classical_mds(const Eigen::MatrixXd& delta, int dim) {
    const Eigen::Index n = delta.rows();
    const Eigen::MatrixXd sq = delta.cwiseProduct(delta);
    const Eigen::VectorXd row_mean = sq.rowwise().mean();
    const double grand = row_mean.mean();
    Eigen::MatrixXd b(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            b(i, j) = -0.5 * (sq(i, j) - row_mean(i) - row_mean(j) + grand);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
    RowMatrix x = RowMatrix::Zero(n, dim);
    for (int c = 0; c < dim && c < n; ++c) {
        const Eigen::Index k = n - 1 - c;
        const double lambda = eig.eigenvalues()(k);
        if (lambda > 0.0) x.col(c) = eig.eigenvectors().col(k) * std::sqrt(lambda);
    }
    return x;
}

/// Centers the cloud, rotates it onto its principal axes in descending
/// variance order and flips each axis so its third moment is non-negative.
inline void orient(RowMatrix& points) {
    detail::center_columns(points);
    const Eigen::MatrixXd cov = points.transpose() * points;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::Index dim = points.cols();
    Eigen::MatrixXd axes(dim, dim);
    for (Eigen::Index c = 0; c < dim; ++c) axes.col(c) = eig.eigenvectors().col(dim - 1 - c);
    RowMatrix rotated = points * axes;
    for (Eigen::Index c = 0; c < dim; ++c) {
        double third = 0.0;
        for (Eigen::Index r = 0; r < rotated.rows(); ++r) third += std::pow(rotated(r, c), 3);
        if (third < 0.0) rotated.col(c) *= -1.0;
    }
    points = std::move(rotated);
}

/// Runs one stress-majorization descent from `start`. Returns the final stress.
/// The stress sequence is non-increasing: a step that would raise the stress
/// (only possible through rounding) is discarded and the descent ends.
inline double smacof_descent(const Eigen::MatrixXd& delta, RowMatrix& x, int max_iter, double tol,
                             std::vector<double>* history = nullptr) {
    RowMatrix next, after;
    double stress = detail::majorize(x, delta, &next);
    if (history) history->push_back(stress);
    for (int it = 0; it < max_iter && stress > 0.0; ++it) {
        const double next_stress = detail::majorize(next, delta, &after);
        if (!std::isfinite(next_stress)) throw NumericalError("SMACOF stress became non-finite");
        if (next_stress > stress) break;
        const double improvement = (stress - next_stress) / stress;
        x.swap(next);
        next.swap(after);
        stress = next_stress;
        if (history) history->push_back(stress);
        if (improvement < tol) break;
    }
    return stress;
}

/// Metric MDS by SMACOF with seeded random restarts; keeps the lowest-stress run.
inline Embedding smacof(const Eigen::MatrixXd& delta, const MdsOptions& opt) {
    if (opt.dim < 1) throw UsageError("embedding dimension must be at least 1");
    if (opt.n_restarts < 1) throw UsageError("n_restarts must be at least 1");
    if (opt.max_iter < 0) throw UsageError("max_iter must be non-negative");
    detail::check_distance_matrix(delta);
    const Eigen::Index n = delta.rows();

    Embedding best;
    best.seed = opt.seed;
    best.n_restarts_used = opt.n_restarts;
    if (delta.cwiseAbs().maxCoeff() == 0.0) {
        best.points = RowMatrix::Zero(n, opt.dim);
        best.degenerate = true;
        return best;
    }

    double mean_sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) mean_sq += delta(i, j) * delta(i, j);
    }
    mean_sq /= static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
    const double spread = n > 1 ? std::sqrt(mean_sq) : 1.0;

    best.stress = std::numeric_limits<double>::infinity();
    for (int r = 0; r < opt.n_restarts; ++r) {
        RowMatrix x;
        if (r == 0 && opt.classical_init) {
            x = classical_mds(delta, opt.dim);
        } else {
            Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(r)));
            x.resize(n, opt.dim);
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index c = 0; c < opt.dim; ++c) x(i, c) = (rng.uniform() - 0.5) * spread;
            }
        }
        detail::center_columns(x);
        std::vector<double> history;
        const double stress =
            smacof_descent(delta, x, opt.max_iter, opt.tol, opt.record_history ? &history : nullptr);
        if (opt.record_history) best.stress_histories.push_back(std::move(history));
        if (stress < best.stress) {
            best.stress = stress;
            best.points = std::move(x);
            best.best_restart = r;
        }
    }
    orient(best.points);
    return best;
}

inline Embedding mds_embed(const FrameDistanceMatrix& dist, const MdsOptions& opt = {}) {
    Embedding e = smacof(dist.distances, opt);
    e.taus = dist.frame_taus;
    return e;
}

}  // namespace market_states
