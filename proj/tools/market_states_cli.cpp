#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace market_states;
using market_states::cli::RunConfig;

namespace {

void print_error(const std::string& kind, const std::string& message) {
    std::cerr << nlohmann::json({{"error", kind}, {"message", message}}).dump() << '\n';
}

const char* kind_of(ExitCode code) {
    switch (code) {
        case ExitCode::usage: return "usage";
        case ExitCode::data: return "data";
        case ExitCode::numerical: return "numerical";
        default: return "error";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Market-state identification from sliding-epoch correlation matrices"};
    app.set_config("--config", "", "key=value config file; command-line flags take precedence");
    app.require_subcommand(1);

    RunConfig cfg;
    std::string epsilon_grid = "0:0.95:0.05";
    std::string k_range = "1-10";

    app.add_option("--prices", cfg.prices, "Price CSV (date,ticker,adj_close)");
    app.add_option("--universe", cfg.universe, "Universe CSV (code,name,sector,abbrv)");
    app.add_flag("--wide", cfg.wide, "Price CSV is wide: date,<ticker>,...");
    app.add_option("--start", cfg.start, "First date, YYYY-MM-DD");
    app.add_option("--end", cfg.end, "Last date, YYYY-MM-DD");
    app.add_option("--epoch", cfg.epoch_len, "Epoch length in returns")->capture_default_str();
    app.add_option("--shift", cfg.shift, "Days between epoch ends")->capture_default_str();
    app.add_option("--epsilon", cfg.epsilon, "Power-map epsilon for frames/states")->capture_default_str();
    app.add_option("--epsilon-grid", epsilon_grid, "Scan grid: list or start:stop:step")->capture_default_str();
    app.add_option("--k", cfg.k, "Cluster count for states");
    app.add_option("--k-range", k_range, "Scan cluster counts, e.g. 1-10 or 4,5,6")->capture_default_str();
    app.add_option("--k-min", cfg.k_min, "Smallest k eligible for the optimum")->capture_default_str();
    app.add_option("--n-init", cfg.n_init, "k-means restarts per cell")->capture_default_str();
    app.add_option("--kmeans-max-iter", cfg.kmeans_max_iter)->capture_default_str();
    app.add_option("--mds-dim", cfg.mds.dim)->capture_default_str();
    app.add_option("--mds-restarts", cfg.mds.n_restarts)->capture_default_str();
    app.add_option("--mds-max-iter", cfg.mds.max_iter)->capture_default_str();
    app.add_option("--mds-tol", cfg.mds.tol)->capture_default_str();
    app.add_flag("--mds-classical-init", cfg.mds.classical_init, "Warm-start the first MDS run classically");
    app.add_option("--seed", cfg.seed)->capture_default_str();
    app.add_option("-o,--output", cfg.output, "Output directory")->capture_default_str();
    app.add_option("--threads", cfg.threads, "Worker threads (0 = all cores)")->capture_default_str();
    app.add_option("--cache-dir", cfg.cache_dir, "Cache directory (MS_CACHE_DIR wins)");
    app.add_flag("-q,--quiet", cfg.quiet, "No progress output");
    app.add_option("--frames", cfg.frames_path, "Frame file (MSF1) for distances");
    app.add_option("--distances", cfg.distances_path, "Distance file (MSD1) for embed");
    app.add_option("--model", cfg.model_dir, "Directory written by `states`, for classify");
    app.add_option("--frame-csv-dir", cfg.frame_csv_dir, "Also export every frame as CSV here");
    app.add_flag("--csv", cfg.csv, "Also write the distance matrix as CSV");
    app.add_option("--stocks", cfg.synth_stocks, "synth: number of stocks")->capture_default_str();
    app.add_option("--regimes", cfg.synth_regimes, "synth: days:correlation,...")->capture_default_str();
    app.add_option("--noise", cfg.synth_noise, "synth: return scale")->capture_default_str();

    auto sub = [&](const char* name, const char* help) {
        auto* s = app.add_subcommand(name, help);
        s->fallthrough();
        return s;
    };
    auto* frames = sub("frames", "Build correlation frames");
    auto* distances = sub("distances", "All-pairs frame distances");
    auto* embed = sub("embed", "MDS embedding of a distance file");
    auto* scan = sub("scan", "Robustness landscape over (k, epsilon)");
    auto* states = sub("states", "Market states and transition analysis at fixed (k, epsilon)");
    auto* classify = sub("classify", "Classify the newest epoch against a saved model");
    auto* synth = sub("synth", "Generate planted-regime synthetic prices");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what());
        return static_cast<int>(ExitCode::usage);
    }

    try {
        cfg.epsilon_grid = cli::parse_epsilon_grid(epsilon_grid);
        cfg.k_range = cli::parse_k_range(k_range);
        set_thread_count(cfg.threads);

        nlohmann::json summary;
        if (frames->parsed()) summary = cli::cmd_frames(cfg);
        else if (distances->parsed()) summary = cli::cmd_distances(cfg);
        else if (embed->parsed()) summary = cli::cmd_embed(cfg);
        else if (scan->parsed()) summary = cli::cmd_scan(cfg);
        else if (states->parsed()) summary = cli::cmd_states(cfg);
        else if (classify->parsed()) summary = cli::cmd_classify(cfg);
        else if (synth->parsed()) summary = cli::cmd_synth(cfg);
        std::cout << summary.dump() << '\n';
        return 0;
    } catch (const Error& e) {
        print_error(kind_of(e.code()), e.what());
        return static_cast<int>(e.code());
    } catch (const std::filesystem::filesystem_error& e) {
        print_error("data", e.what());
        return static_cast<int>(ExitCode::data);
    } catch (const std::exception& e) {
        print_error("numerical", e.what());
        return static_cast<int>(ExitCode::numerical);
    }
}
