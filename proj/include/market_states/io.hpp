#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "market_states/clustering.hpp"
#include "market_states/correlation.hpp"
#include "market_states/csv.hpp"
#include "market_states/dynamics.hpp"
#include "market_states/error.hpp"
#include "market_states/geometry.hpp"
#include "market_states/mds.hpp"

// Binary layouts (all little-endian):
//   frames     "MSF1" u32 N, u32 F, u32 epoch_len, u32 shift, f64 epsilon,
//              then per frame N(N-1)/2 f64 upper-triangle entries and i64 tau
//   distances  "MSD1" u32 F, F(F-1)/2 f32 upper-triangle entries, F i64 taus
//   embedding  "MSE1" u32 F, u32 dim, f64 stress, u32 n_restarts, u32 best_restart,
//              u64 seed, u8 degenerate, F*dim f64 row-major points, F i64 taus
// Dates are days since 1970-01-01.

namespace market_states::io {

namespace detail {

template <typename T>
void put(std::ostream& out, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    const U bits = std::bit_cast<U>(value);
    unsigned char bytes[sizeof(U)];
    for (std::size_t b = 0; b < sizeof(U); ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char*>(bytes), sizeof bytes);
}

template <typename T>
T get(std::istream& in, const std::string& path) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    unsigned char bytes[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof bytes)) {
        throw DataError(path + ": truncated file");
    }
    U bits = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) bits |= static_cast<U>(static_cast<U>(bytes[b]) << (8 * b));
    return std::bit_cast<T>(bits);
}

inline void expect_magic(std::istream& in, const char* magic, const std::string& path) {
    char buf[4];
    if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
        throw DataError(path + ": not a " + std::string(magic, 4) + " file");
    }
}

inline void expect_end(std::istream& in, const std::string& path) {
    if (in.peek() != std::char_traits<char>::eof()) throw DataError(path + ": trailing bytes");
}

inline void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw DataError("failed writing " + path);
}

}  // namespace detail

inline void write_frames(const FrameSet& set, const std::string& path) {
    auto out = csv::open_output(path);
    out.write("MSF1", 4);
    detail::put(out, static_cast<std::uint32_t>(set.n));
    detail::put(out, static_cast<std::uint32_t>(set.size()));
    detail::put(out, static_cast<std::uint32_t>(set.epoch_len));
    detail::put(out, static_cast<std::uint32_t>(set.shift));
    detail::put(out, set.epsilon);
    for (const auto& f : set.frames) {
        for (double v : f.upper) detail::put(out, v);
        detail::put(out, f.tau.days);
    }
    detail::finish(out, path);
}

inline FrameSet read_frames(const std::string& path) {
    auto in = csv::open_input(path);
    detail::expect_magic(in, "MSF1", path);
    FrameSet set;
    set.n = detail::get<std::uint32_t>(in, path);
    const auto count = detail::get<std::uint32_t>(in, path);
    set.epoch_len = static_cast<int>(detail::get<std::uint32_t>(in, path));
    set.shift = static_cast<int>(detail::get<std::uint32_t>(in, path));
    set.epsilon = detail::get<double>(in, path);
    if (set.n < 2) throw DataError(path + ": frame dimension below 2");
    const std::size_t packed = CorrelationFrame::packed_size(set.n);
    set.frames.resize(count);
    for (auto& f : set.frames) {
        f.n = set.n;
        f.epoch_len = set.epoch_len;
        f.epsilon = set.epsilon;
        f.upper.resize(packed);
        for (double& v : f.upper) v = detail::get<double>(in, path);
        f.tau.days = detail::get<std::int64_t>(in, path);
    }
    detail::expect_end(in, path);
    return set;
}

/// One CSV per frame (full N x N matrix) for debugging.
inline void write_frame_csv(const CorrelationFrame& frame, const std::string& path) {
    auto out = csv::open_output(path);
    for (std::size_t i = 0; i < frame.n; ++i) {
        for (std::size_t j = 0; j < frame.n; ++j) {
            if (j) out << ',';
            out << csv::format_double(frame(i, j));
        }
        out << '\n';
    }
    detail::finish(out, path);
}

inline void write_distances(const FrameDistanceMatrix& dist, const std::string& path) {
    auto out = csv::open_output(path);
    out.write("MSD1", 4);
    const std::size_t f = dist.size();
    detail::put(out, static_cast<std::uint32_t>(f));
    for (std::size_t a = 0; a < f; ++a) {
        for (std::size_t b = a + 1; b < f; ++b) detail::put(out, static_cast<float>(dist(a, b)));
    }
    for (std::size_t a = 0; a < f; ++a) {
        detail::put(out, a < dist.frame_taus.size() ? dist.frame_taus[a].days : std::int64_t{0});
    }
    detail::finish(out, path);
}

inline FrameDistanceMatrix read_distances(const std::string& path) {
    auto in = csv::open_input(path);
    detail::expect_magic(in, "MSD1", path);
    const auto f = static_cast<Eigen::Index>(detail::get<std::uint32_t>(in, path));
    FrameDistanceMatrix dist;
    dist.distances = Eigen::MatrixXd::Zero(f, f);
    for (Eigen::Index a = 0; a < f; ++a) {
        for (Eigen::Index b = a + 1; b < f; ++b) {
            const double v = detail::get<float>(in, path);
            dist.distances(a, b) = v;
            dist.distances(b, a) = v;
        }
    }
    dist.frame_taus.resize(static_cast<std::size_t>(f));
    for (auto& t : dist.frame_taus) t.days = detail::get<std::int64_t>(in, path);
    detail::expect_end(in, path);
    return dist;
}

inline void write_distances_csv(const FrameDistanceMatrix& dist, const std::string& path) {
    auto out = csv::open_output(path);
    out << "tau";
    for (const auto& t : dist.frame_taus) out << ',' << t.to_string();
    out << '\n';
    for (std::size_t a = 0; a < dist.size(); ++a) {
        out << dist.frame_taus[a].to_string();
        for (std::size_t b = 0; b < dist.size(); ++b) out << ',' << csv::format_double(dist(a, b));
        out << '\n';
    }
    detail::finish(out, path);
}

inline void write_embedding(const Embedding& e, const std::string& path) {
    auto out = csv::open_output(path);
    out.write("MSE1", 4);
    detail::put(out, static_cast<std::uint32_t>(e.size()));
    detail::put(out, static_cast<std::uint32_t>(e.dim()));
    detail::put(out, e.stress);
    detail::put(out, static_cast<std::uint32_t>(e.n_restarts_used));
    detail::put(out, static_cast<std::uint32_t>(e.best_restart));
    detail::put(out, e.seed);
    detail::put(out, static_cast<std::uint8_t>(e.degenerate));
    for (Eigen::Index r = 0; r < e.points.rows(); ++r) {
        for (Eigen::Index c = 0; c < e.points.cols(); ++c) detail::put(out, e.points(r, c));
    }
    for (std::size_t r = 0; r < e.size(); ++r) {
        detail::put(out, r < e.taus.size() ? e.taus[r].days : std::int64_t{0});
    }
    detail::finish(out, path);
}

inline Embedding read_embedding(const std::string& path) {
    auto in = csv::open_input(path);
    detail::expect_magic(in, "MSE1", path);
    Embedding e;
    const auto f = static_cast<Eigen::Index>(detail::get<std::uint32_t>(in, path));
    const auto dim = static_cast<Eigen::Index>(detail::get<std::uint32_t>(in, path));
    e.stress = detail::get<double>(in, path);
    e.n_restarts_used = static_cast<int>(detail::get<std::uint32_t>(in, path));
    e.best_restart = static_cast<int>(detail::get<std::uint32_t>(in, path));
    e.seed = detail::get<std::uint64_t>(in, path);
    e.degenerate = detail::get<std::uint8_t>(in, path) != 0;
    e.points.resize(f, dim);
    for (Eigen::Index r = 0; r < f; ++r) {
        for (Eigen::Index c = 0; c < dim; ++c) e.points(r, c) = detail::get<double>(in, path);
    }
    e.taus.resize(static_cast<std::size_t>(f));
    for (auto& t : e.taus) t.days = detail::get<std::int64_t>(in, path);
    detail::expect_end(in, path);
    return e;
}

/// `tau,x,y,z` for three dimensions, `tau,x1,...,xd` otherwise.
inline void write_embedding_csv(const Embedding& e, const std::string& path) {
    auto out = csv::open_output(path);
    out << "tau";
    if (e.dim() == 3) {
        out << ",x,y,z";
    } else {
        for (int c = 1; c <= e.dim(); ++c) out << ",x" << c;
    }
    out << '\n';
    for (std::size_t r = 0; r < e.size(); ++r) {
        out << (r < e.taus.size() ? e.taus[r].to_string() : std::string());
        for (Eigen::Index c = 0; c < e.points.cols(); ++c) {
            out << ',' << csv::format_double(e.points(static_cast<Eigen::Index>(r), c));
        }
        out << '\n';
    }
    detail::finish(out, path);
}

inline void write_landscape_csv(const std::vector<LandscapeCell>& cells, const std::string& path) {
    auto out = csv::open_output(path);
    out << "k,epsilon,sigma_d_intra,mean_d_intra,n_init\n";
    for (const auto& c : cells) {
        out << c.k << ',' << csv::format_double(c.epsilon) << ',' << csv::format_double(c.sigma_d_intra)
            << ',' << csv::format_double(c.mean_d_intra) << ',' << c.n_init << '\n';
    }
    detail::finish(out, path);
}

inline std::vector<LandscapeCell> read_landscape_csv(const std::string& path) {
    auto in = csv::open_input(path);
    std::string line;
    if (!csv::read_line(in, line, true) || line != "k,epsilon,sigma_d_intra,mean_d_intra,n_init") {
        throw DataError(path + ": expected landscape header");
    }
    std::vector<LandscapeCell> cells;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = csv::split(line);
        LandscapeCell c;
        double k = 0, n = 0;
        if (f.size() != 5 || !csv::parse_double(f[0], k) || !csv::parse_double(f[1], c.epsilon) ||
            !csv::parse_double(f[2], c.sigma_d_intra) || !csv::parse_double(f[3], c.mean_d_intra) ||
            !csv::parse_double(f[4], n)) {
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed landscape row");
        }
        c.k = static_cast<int>(k);
        c.n_init = static_cast<int>(n);
        cells.push_back(c);
    }
    return cells;
}

inline nlohmann::json state_model_json(const StateModel& m) {
    nlohmann::json j;
    j["k_star"] = m.k_star;
    j["epsilon_star"] = m.epsilon_star;
    j["mu"] = m.mu;
    auto states = nlohmann::json::array();
    for (std::size_t f = 0; f < m.size(); ++f) {
        states.push_back({{"tau", m.taus[f].to_string()}, {"state_id", m.state_of_frame[f]}});
    }
    j["states"] = std::move(states);
    auto centroids = nlohmann::json::array();
    for (Eigen::Index s = 0; s < m.centroids.rows(); ++s) {
        std::vector<double> row(m.centroids.row(s).data(), m.centroids.row(s).data() + m.centroids.cols());
        centroids.push_back(row);
    }
    j["centroids"] = std::move(centroids);
    return j;
}

inline StateModel state_model_from_json(const nlohmann::json& j) {
    try {
        StateModel m;
        m.k_star = j.at("k_star").get<int>();
        m.epsilon_star = j.at("epsilon_star").get<double>();
        m.mu = j.at("mu").get<std::vector<double>>();
        for (const auto& s : j.at("states")) {
            m.taus.push_back(Date::parse(s.at("tau").get<std::string>()));
            m.state_of_frame.push_back(s.at("state_id").get<int>());
        }
        const auto& cs = j.at("centroids");
        const auto dim = cs.empty() ? 0 : static_cast<Eigen::Index>(cs.front().size());
        m.centroids.resize(static_cast<Eigen::Index>(cs.size()), dim);
        for (std::size_t s = 0; s < cs.size(); ++s) {
            const auto row = cs[s].get<std::vector<double>>();
            if (static_cast<Eigen::Index>(row.size()) != dim) throw DataError("ragged centroids");
            for (Eigen::Index c = 0; c < dim; ++c) m.centroids(static_cast<Eigen::Index>(s), c) = row[static_cast<std::size_t>(c)];
        }
        if (static_cast<int>(m.mu.size()) != m.k_star || m.centroids.rows() != m.k_star) {
            throw DataError("state model sizes disagree with k_star");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed state model: ") + e.what());
    }
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
    auto out = csv::open_output(path);
    out << j.dump(2) << '\n';
    detail::finish(out, path);
}

inline nlohmann::json read_json(const std::string& path) {
    auto in = csv::open_input(path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

/// `from_state,to_state,count,probability` for every cell; `excl_self`
/// selects the off-diagonal normalization.
inline void write_transitions_csv(const TransitionMatrix& tm, const std::string& path,
                                  bool excl_self = false) {
    auto out = csv::open_output(path);
    out << "from_state,to_state,count,probability\n";
    for (int a = 1; a <= tm.k; ++a) {
        for (int b = 1; b <= tm.k; ++b) {
            out << a << ',' << b << ',' << tm.count(a, b) << ','
                << csv::format_double(excl_self ? tm.probability_excl_self(a, b) : tm.probability(a, b))
                << '\n';
        }
    }
    detail::finish(out, path);
}

inline void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
    auto out = csv::open_output(path);
    out << "tau,x,y,z,state_id,index_return\n";
    for (const auto& node : traj) {
        out << node.tau.to_string();
        for (std::size_t c = 0; c < 3; ++c) {
            out << ',' << (c < node.point.size() ? csv::format_double(node.point[c]) : std::string("0"));
        }
        out << ',' << node.state_id << ',';
        if (node.index_return) out << csv::format_double(*node.index_return);
        out << '\n';
    }
    detail::finish(out, path);
}

inline nlohmann::json classification_json(const Classification& c) {
    return {{"tau", c.tau.to_string()},
            {"state_id", c.state_id},
            {"point", c.point},
            {"nearest_centroid_distance", c.nearest_centroid_distance}};
}

}  // namespace market_states::io
