#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "market_states/market_states.hpp"

namespace market_states::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* tool_version = "1.0.0";

struct RunConfig {
    std::string prices;
    std::string universe;
    bool wide = false;
    std::string start;
    std::string end;
    int epoch_len = 20;
    int shift = 1;
    std::vector<double> epsilon_grid = ScanOptions::default_epsilon_grid();
    std::vector<int> k_range = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    int k_min = 4;
    int n_init = 1000;
    int kmeans_max_iter = 300;
    MdsOptions mds;
    std::uint64_t seed = 0;
    std::string output = "out";
    unsigned threads = 0;
    std::string cache_dir;
    bool quiet = false;

    // Single-point commands.
    double epsilon = 0.0;
    int k = 0;
    std::string frames_path;
    std::string distances_path;
    std::string model_dir;
    std::string frame_csv_dir;
    bool csv = false;

    // synth
    int synth_stocks = 50;
    std::string synth_regimes = "400:0.15,400:0.35,400:0.55,400:0.75";
    double synth_noise = 0.01;
};

// ---------------------------------------------------------------------------
// Parsing helpers

inline std::vector<double> parse_epsilon_grid(const std::string& text) {
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        // start:stop:step, stop inclusive
        std::string spec = text;
        std::replace(spec.begin(), spec.end(), ':', ',');
        const auto parts = csv::split(spec);
        double a = 0, b = 0, step = 0;
        if (parts.size() != 3 || !csv::parse_double(parts[0], a) || !csv::parse_double(parts[1], b) ||
            !csv::parse_double(parts[2], step) || !(step > 0)) {
            throw UsageError("bad epsilon range '" + text + "'");
        }
        for (int i = 0;; ++i) {
            const double v = a + i * step;
            if (v > b + 1e-9 * step) break;
            out.push_back(std::round(v * 1e12) / 1e12);
        }
    } else {
        for (const auto& p : csv::split(text)) {
            double v = 0;
            if (!csv::parse_double(p, v)) throw UsageError("bad epsilon value '" + p + "'");
            out.push_back(v);
        }
    }
    for (double v : out) {
        if (!(v >= 0.0 && v < 1.0)) throw UsageError("epsilon values must lie in [0, 1)");
    }
    if (out.empty()) throw UsageError("empty epsilon grid");
    return out;
}

inline std::vector<int> parse_k_range(const std::string& text) {
    std::vector<int> out;
    auto to_int = [&](std::string_view s) {
        s = csv::trim(s);
        int v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size() || v < 1) {
            throw UsageError("bad k value '" + std::string(s) + "'");
        }
        return v;
    };
    for (const auto& part : csv::split(text)) {
        const auto dash = part.find('-');
        if (dash == std::string::npos) {
            out.push_back(to_int(part));
        } else {
            const int a = to_int(std::string_view(part).substr(0, dash));
            const int b = to_int(std::string_view(part).substr(dash + 1));
            if (b < a) throw UsageError("bad k range '" + part + "'");
            for (int v = a; v <= b; ++v) out.push_back(v);
        }
    }
    if (out.empty()) throw UsageError("empty k range");
    return out;
}

inline std::vector<Regime> parse_regimes(const std::string& text) {
    std::vector<Regime> out;
    for (const auto& part : csv::split(text)) {
        const auto colon = part.find(':');
        double days = 0, c = 0;
        if (colon == std::string::npos || !csv::parse_double(part.substr(0, colon), days) ||
            !csv::parse_double(part.substr(colon + 1), c) || days < 1 || days != std::floor(days)) {
            throw UsageError("bad regime '" + part + "', expected days:correlation");
        }
        out.push_back(Regime{static_cast<int>(days), c});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hashing, metadata, cache

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw NumericalError("SHA-256 failed");
    }
    std::ostringstream out;
    for (unsigned i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return out.str();
}

inline std::string read_file(const std::string& path) {
    auto in = csv::open_input(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string file_hash(const std::string& path) {
    return path.empty() ? std::string() : sha256_hex(read_file(path));
}

/// Every setting that can change a result; output location, threads and
/// cache directory are deliberately absent.
inline json config_json(const RunConfig& c) {
    return {{"wide", c.wide},
            {"start", c.start},
            {"end", c.end},
            {"epoch_len", c.epoch_len},
            {"shift", c.shift},
            {"epsilon_grid", c.epsilon_grid},
            {"k_range", c.k_range},
            {"k_min", c.k_min},
            {"n_init", c.n_init},
            {"kmeans_max_iter", c.kmeans_max_iter},
            {"mds",
             {{"dim", c.mds.dim},
              {"n_restarts", c.mds.n_restarts},
              {"max_iter", c.mds.max_iter},
              {"tol", c.mds.tol},
              {"classical_init", c.mds.classical_init}}},
            {"seed", c.seed},
            {"epsilon", c.epsilon},
            {"k", c.k},
            {"synth", {{"stocks", c.synth_stocks}, {"regimes", c.synth_regimes}, {"noise", c.synth_noise}}}};
}

inline void write_meta(const RunConfig& cfg, const std::string& command, const json& inputs) {
    const json conf = config_json(cfg);
    json meta = {{"tool", "market_states"},
                 {"version", tool_version},
                 {"command", command},
                 {"config", conf},
                 {"config_hash", sha256_hex(conf.dump())},
                 {"inputs", inputs},
                 {"seed", cfg.seed},
                 {"rng", rng_algorithm}};
    io::write_json(meta, (fs::path(cfg.output) / "meta.json").string());
}

inline fs::path cache_root(const RunConfig& cfg) {
    if (const char* env = std::getenv("MS_CACHE_DIR"); env && *env) return env;
    if (!cfg.cache_dir.empty()) return cfg.cache_dir;
    return fs::path(cfg.output) / "cache";
}

// Write-then-rename so an interrupted run never leaves a partial cache entry.
template <typename Writer>
void atomic_write(const fs::path& path, Writer&& write) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    write(tmp.string());
    fs::rename(tmp, path);
}

class Progress {
public:
    Progress(std::string label, bool quiet) : label_(std::move(label)), quiet_(quiet) {}

    void operator()(std::size_t done, std::size_t total) {
        if (quiet_) return;
        const auto now = Clock::now();
        if (done < total && now - last_ < std::chrono::seconds(1)) return;
        last_ = now;
        const double secs = std::chrono::duration<double>(now - start_).count();
        std::cerr << label_ << ": " << done << "/" << total << " pairs ("
                  << static_cast<long long>(secs > 0 ? done / secs : 0.0) << " pairs/s)\n";
    }

private:
    using Clock = std::chrono::steady_clock;
    std::string label_;
    bool quiet_;
    Clock::time_point start_ = Clock::now();
    Clock::time_point last_ = Clock::now();
};

// ---------------------------------------------------------------------------
// Shared pipeline stages

struct LoadedData {
    PriceLoad load;
    ReturnTable returns;
    std::string prices_hash;
    std::string universe_hash;
};

inline LoadedData load_data(const RunConfig& cfg) {
    if (cfg.prices.empty()) throw UsageError("--prices is required");
    LoadedData d;
    std::vector<Instrument> universe;
    LoadOptions opts;
    opts.wide = cfg.wide;
    if (!cfg.universe.empty()) {
        universe = load_universe(cfg.universe);
        opts.universe = &universe;
    }
    const Date start = cfg.start.empty() ? Date{INT32_MIN} : Date::parse(cfg.start);
    const Date end = cfg.end.empty() ? Date{INT32_MAX} : Date::parse(cfg.end);
    if (end < start) throw DataError("no trading dates");
    d.load = load_prices(cfg.prices, start, end, opts);
    d.returns = log_returns(d.load.table);
    d.prices_hash = file_hash(cfg.prices);
    d.universe_hash = file_hash(cfg.universe);
    return d;
}

inline json input_hashes(const LoadedData& d) {
    json j = {{"prices", d.prices_hash}};
    if (!d.universe_hash.empty()) j["universe"] = d.universe_hash;
    return j;
}

/// Distances and embedding for one epsilon, read from or stored in the cache.
/// Distances always pass through single precision so cold and warm runs agree.
struct EpsilonPipeline {
    const RunConfig& cfg;
    const LoadedData& data;
    const FrameSet& raw;

    std::string data_key() const {
        return sha256_hex(json({{"prices", data.prices_hash},
                                {"universe", data.universe_hash},
                                {"wide", cfg.wide},
                                {"start", cfg.start},
                                {"end", cfg.end},
                                {"epoch_len", cfg.epoch_len},
                                {"shift", cfg.shift}})
                              .dump());
    }

    std::string distance_key(double eps) const {
        return sha256_hex(data_key() + "|eps=" + csv::format_double(eps));
    }

    std::string embedding_key(double eps) const {
        return sha256_hex(distance_key(eps) + "|" +
                          json({{"dim", cfg.mds.dim},
                                {"n_restarts", cfg.mds.n_restarts},
                                {"max_iter", cfg.mds.max_iter},
                                {"tol", cfg.mds.tol},
                                {"classical_init", cfg.mds.classical_init},
                                {"seed", cfg.seed}})
                              .dump());
    }

    FrameDistanceMatrix distances(double eps) const {
        const fs::path path = cache_root(cfg) / (distance_key(eps) + ".msd");
        if (fs::exists(path)) return io::read_distances(path.string());
        Progress progress("distances eps=" + csv::format_double(eps), cfg.quiet);
        FrameDistanceMatrix dist = pairwise_distances(power_map(raw, eps), std::ref(progress));
        dist.round_to_storage();
        atomic_write(path, [&](const std::string& p) { io::write_distances(dist, p); });
        return dist;
    }

    Embedding embedding(double eps) const {
        const fs::path path = cache_root(cfg) / (embedding_key(eps) + ".mse");
        if (fs::exists(path)) return io::read_embedding(path.string());
        MdsOptions mds = cfg.mds;
        mds.seed = cfg.seed;
        Embedding emb = mds_embed(distances(eps), mds);
        atomic_write(path, [&](const std::string& p) { io::write_embedding(emb, p); });
        return emb;
    }
};

inline void prepare_output(const RunConfig& cfg) { fs::create_directories(cfg.output); }

inline std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.output) / name).string();
}

// ---------------------------------------------------------------------------
// Commands

inline json cmd_synth(const RunConfig& cfg) {
    prepare_output(cfg);
    RegimeSpec spec;
    spec.n_stocks = cfg.synth_stocks;
    spec.regimes = parse_regimes(cfg.synth_regimes);
    spec.noise_sigma = cfg.synth_noise;
    spec.seed = cfg.seed;
    spec.validate(cfg.epoch_len);
    const PriceTable prices = generate_prices(spec);
    write_prices(prices, out_path(cfg, "prices.csv"));
    json regimes = json::array();
    const auto labels = regime_of_day(spec);
    for (std::size_t t = 0; t < labels.size(); ++t) {
        regimes.push_back({{"date", prices.dates[t + 1].to_string()}, {"regime", labels[t]}});
    }
    io::write_json(regimes, out_path(cfg, "regimes.json"));
    write_meta(cfg, "synth", json::object());
    return {{"N", prices.n()}, {"T", prices.t()}};
}

inline json cmd_frames(const RunConfig& cfg) {
    const LoadedData data = load_data(cfg);
    prepare_output(cfg);
    const FrameSet frames = build_frames(data.returns, cfg.epoch_len, cfg.shift, cfg.epsilon);
    io::write_frames(frames, out_path(cfg, "frames.msf"));
    io::write_json(drop_report_json(data.load.dropped), out_path(cfg, "drop_report.json"));
    if (!cfg.frame_csv_dir.empty()) {
        fs::create_directories(cfg.frame_csv_dir);
        for (const auto& f : frames.frames) {
            io::write_frame_csv(f, (fs::path(cfg.frame_csv_dir) / (f.tau.to_string() + ".csv")).string());
        }
    }
    const json manifest = {{"N", data.load.table.n()}, {"T", data.load.table.t()},
                           {"F", frames.size()},      {"epoch_len", cfg.epoch_len},
                           {"shift", cfg.shift},      {"epsilon", cfg.epsilon}};
    io::write_json(manifest, out_path(cfg, "manifest.json"));
    write_meta(cfg, "frames", input_hashes(data));
    return manifest;
}

inline json cmd_distances(const RunConfig& cfg) {
    if (cfg.frames_path.empty()) throw UsageError("--frames is required");
    const FrameSet frames = io::read_frames(cfg.frames_path);
    prepare_output(cfg);
    Progress progress("distances", cfg.quiet);
    FrameDistanceMatrix dist = pairwise_distances(frames, std::ref(progress));
    dist.round_to_storage();
    io::write_distances(dist, out_path(cfg, "distances.msd"));
    if (cfg.csv) io::write_distances_csv(dist, out_path(cfg, "distances.csv"));
    write_meta(cfg, "distances", {{"frames", file_hash(cfg.frames_path)}});
    return {{"F", dist.size()}, {"pairs", dist.size() * (dist.size() - 1) / 2}};
}

inline json cmd_embed(const RunConfig& cfg) {
    if (cfg.distances_path.empty()) throw UsageError("--distances is required");
    const FrameDistanceMatrix dist = io::read_distances(cfg.distances_path);
    prepare_output(cfg);
    MdsOptions mds = cfg.mds;
    mds.seed = cfg.seed;
    const Embedding emb = mds_embed(dist, mds);
    io::write_embedding_csv(emb, out_path(cfg, "embedding.csv"));
    io::write_embedding(emb, out_path(cfg, "embedding.mse"));
    write_meta(cfg, "embed", {{"distances", file_hash(cfg.distances_path)}});
    return {{"F", emb.size()}, {"stress", emb.stress}, {"degenerate", emb.degenerate}};
}

inline json cmd_scan(const RunConfig& cfg) {
    const LoadedData data = load_data(cfg);
    prepare_output(cfg);
    const FrameSet raw = build_frames(data.returns, cfg.epoch_len, cfg.shift, 0.0);
    const EpsilonPipeline pipeline{cfg, data, raw};
    ScanOptions scan;
    scan.epoch_len = cfg.epoch_len;
    scan.shift = cfg.shift;
    scan.k_range = cfg.k_range;
    scan.epsilon_grid = cfg.epsilon_grid;
    scan.n_init = cfg.n_init;
    scan.seed = cfg.seed;
    scan.kmeans_max_iter = cfg.kmeans_max_iter;
    const auto cells = landscape_scan([&](double eps) { return pipeline.embedding(eps); }, scan);
    io::write_landscape_csv(cells, out_path(cfg, "landscape.csv"));
    const Optimum best = select_optimum(cells, cfg.k_min);
    const json optimum = {{"k_star", best.k},
                          {"epsilon_star", best.epsilon},
                          {"sigma_d_intra", best.sigma_d_intra},
                          {"k_min", cfg.k_min},
                          {"F", raw.size()}};
    io::write_json(optimum, out_path(cfg, "optimum.json"));
    write_meta(cfg, "scan", input_hashes(data));
    return optimum;
}

/// Lowest-inertia k-means run among seeds seed .. seed+n_runs-1 (ties to the lower seed).
inline KMeansResult best_kmeans(const RowMatrix& points, int k, int n_runs, std::uint64_t seed,
                                int max_iter) {
    std::vector<KMeansResult> runs(static_cast<std::size_t>(std::max(1, n_runs)));
    parallel_for(runs.size(), [&](std::size_t r) { runs[r] = kmeans(points, k, seed + r, max_iter); });
    std::size_t best = 0;
    for (std::size_t r = 1; r < runs.size(); ++r) {
        if (runs[r].inertia < runs[best].inertia) best = r;
    }
    return std::move(runs[best]);
}

inline json cmd_states(const RunConfig& cfg) {
    if (cfg.k < 1) throw UsageError("--k is required for states");
    const LoadedData data = load_data(cfg);
    prepare_output(cfg);
    const FrameSet raw = build_frames(data.returns, cfg.epoch_len, cfg.shift, 0.0);
    const EpsilonPipeline pipeline{cfg, data, raw};
    const Embedding emb = pipeline.embedding(cfg.epsilon);
    const KMeansResult km = best_kmeans(emb.points, cfg.k, cfg.n_init, cfg.seed, cfg.kmeans_max_iter);
    const StateModel model = label_states(raw, km, cfg.epsilon);
    const TransitionMatrix tm = transition_counts(model);
    const IndexReturnSeries index = index_return_proxy(data.returns);
    const Trajectory traj = build_trajectory(emb, model, &index);

    io::write_json(io::state_model_json(model), out_path(cfg, "state_model.json"));
    io::write_trajectory_csv(traj, out_path(cfg, "trajectory.csv"));
    io::write_transitions_csv(tm, out_path(cfg, "transitions.csv"));
    io::write_transitions_csv(tm, out_path(cfg, "transitions_excl_self.csv"), true);

    json forbidden = json::array();
    for (const auto& f : forbidden_transition_report(tm)) {
        forbidden.push_back({{"from_state", f.from_state}, {"to_state", f.to_state}, {"count", f.count}});
    }
    const json dynamics = {{"tridiagonality_score", tridiagonality_score(tm)},
                           {"forbidden_transitions", forbidden},
                           {"empty_rows", tm.empty_rows},
                           {"total_transitions", tm.total()}};
    io::write_json(dynamics, out_path(cfg, "dynamics.json"));

    // Bundle consumed by `classify`.
    io::write_frames(power_map(raw, cfg.epsilon), out_path(cfg, "reference_frames.msf"));
    io::write_embedding(emb, out_path(cfg, "embedding.mse"));
    io::write_embedding_csv(emb, out_path(cfg, "embedding.csv"));
    json tickers = json::array();
    for (const auto& ins : data.returns.instruments) tickers.push_back(ins.ticker);
    io::write_json({{"epoch_len", cfg.epoch_len},
                    {"shift", cfg.shift},
                    {"epsilon", cfg.epsilon},
                    {"k", cfg.k},
                    {"tickers", tickers}},
                   out_path(cfg, "bundle.json"));
    write_meta(cfg, "states", input_hashes(data));
    return {{"k_star", model.k_star}, {"epsilon_star", model.epsilon_star}, {"mu", model.mu},
            {"tridiagonality_score", tridiagonality_score(tm)}};
}

inline json cmd_classify(const RunConfig& cfg) {
    if (cfg.model_dir.empty()) throw UsageError("--model is required");
    const fs::path model_dir(cfg.model_dir);
    const json bundle = io::read_json((model_dir / "bundle.json").string());
    const StateModel states = io::state_model_from_json(io::read_json((model_dir / "state_model.json").string()));
    const FrameSet reference = io::read_frames((model_dir / "reference_frames.msf").string());
    const Embedding emb = io::read_embedding((model_dir / "embedding.mse").string());
    const int epoch_len = bundle.at("epoch_len").get<int>();
    const auto tickers = bundle.at("tickers").get<std::vector<std::string>>();

    const LoadedData data = load_data(cfg);
    const PriceTable& table = data.load.table;
    if (table.t() < static_cast<std::size_t>(epoch_len) + 1) {
        throw DataError("insufficient history: need " + std::to_string(epoch_len + 1) +
                        " prices, got " + std::to_string(table.t()));
    }
    // Rebuild the last epoch_len + 1 prices in model ticker order.
    PriceTable recent;
    const auto cols = static_cast<Eigen::Index>(epoch_len + 1);
    const auto first = static_cast<Eigen::Index>(table.t()) - cols;
    recent.dates.assign(table.dates.end() - cols, table.dates.end());
    recent.prices.resize(static_cast<Eigen::Index>(tickers.size()), cols);
    for (std::size_t m = 0; m < tickers.size(); ++m) {
        const auto it = std::find_if(table.instruments.begin(), table.instruments.end(),
                                     [&](const Instrument& i) { return i.ticker == tickers[m]; });
        if (it == table.instruments.end()) {
            throw DataError("model ticker " + tickers[m] + " missing from the new price data");
        }
        const auto row = static_cast<Eigen::Index>(it - table.instruments.begin());
        recent.instruments.push_back(*it);
        recent.prices.row(static_cast<Eigen::Index>(m)) = table.prices.block(row, first, 1, cols);
    }
    const ReturnTable returns = log_returns(recent);
    const CorrelationFrame frame =
        power_map(epoch_correlation_at(returns, returns.t() - 1, epoch_len), states.epsilon_star);
    const Classification result = classify_new_frame(frame, reference, emb, states);
    const json out = io::classification_json(result);
    prepare_output(cfg);
    io::write_json(out, out_path(cfg, "classification.json"));
    return out;
}

}  // namespace market_states::cli
