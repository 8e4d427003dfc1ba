// Command-line front end: runs the configured scenario sweep (or a single
// cell), the paired coordinated/uncoordinated comparison, and the analytic
// gain validation, and writes csv/json/plot-data reports.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cotdma/experiment.hpp"
#include "cotdma/network.hpp"
#include "cotdma/scenario.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config file: " + path);
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write output file: " + path.string());
    }
    out << content;
}

std::vector<std::uint64_t> parse_seed_range(const std::string& s, std::uint64_t base, int n_iter) {
    std::vector<std::uint64_t> seeds;
    if (s.empty()) {
        for (int i = 0; i < n_iter; ++i) {
            seeds.push_back(base + static_cast<std::uint64_t>(i));
        }
        return seeds;
    }
    const std::size_t dots = s.find("..");
    if (dots == std::string::npos) {
        seeds.push_back(std::stoull(s));
        return seeds;
    }
    const std::uint64_t a = std::stoull(s.substr(0, dots));
    const std::uint64_t b = std::stoull(s.substr(dots + 2));
    if (b < a) {
        throw std::runtime_error("--seeds: range end precedes start");
    }
    for (std::uint64_t v = a; v <= b; ++v) {
        seeds.push_back(v);
    }
    return seeds;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Co-TDMA OBSS system-level simulator"};

    std::string config_path;
    std::string system_arg;
    int vc_stas = -1;
    std::string seeds_arg;
    std::string out_dir = ".";
    std::string format = "csv";
    std::string trace_arg = "none";
    bool pooled = false;
    std::string gain_csv;
    std::string samples_path;
    int workers = cotdma::exec_detail::default_workers();

    app.add_option("--config", config_path, "scenario configuration file")->required();
    app.add_option("--system", system_arg, "coordinated|uncoordinated (default: both, paired)");
    app.add_option("--vc-stas", vc_stas, "single congestion level instead of the 2..5 sweep");
    app.add_option("--seeds", seeds_arg, "seed or range a..b (default: seed..seed+n_iterations-1)");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--format", format, "csv|json|plot-data")
        ->check(CLI::IsMember({"csv", "json", "plot-data"}));
    app.add_option("--trace", trace_arg, "frames|grants|arrivals|none")
        ->check(CLI::IsMember({"frames", "grants", "arrivals", "none"}));
    app.add_flag("--pooled", pooled, "pool samples across iterations for percentiles");
    app.add_option("--gain-validation", gain_csv,
                   "run the controlled analytic-model validation and write its CSV here");
    app.add_option("--dump-samples", samples_path,
                   "write the first run's raw per-packet latencies to this file");
    app.add_option("--workers", workers, "worker threads (or set COTDMA_WORKERS)");

    CLI11_PARSE(app, argc, argv);

    try {
        cotdma::ScenarioConfig cfg = cotdma::parse_config(read_file(config_path));
        std::filesystem::create_directories(out_dir);

        if (!gain_csv.empty()) {
            const auto gv = cotdma::run_gain_validation(cfg.seed, {2, 3, 4, 5}, 130,
                                                        cotdma::ValidationMode::Congested,
                                                        workers);
            write_file(gain_csv, gv.csv());
            std::cout << "gain validation: " << gv.total_pairs() << " extracted pairs -> "
                      << gain_csv << "\n";
            return 0;
        }

        const std::vector<std::uint64_t> seeds =
            parse_seed_range(seeds_arg, cfg.seed, cfg.n_iterations);

        std::vector<cotdma::SystemKind> systems;
        if (system_arg.empty()) {
            systems = {cotdma::SystemKind::Uncoordinated, cotdma::SystemKind::Coordinated};
        } else if (system_arg == "coordinated") {
            systems = {cotdma::SystemKind::Coordinated};
        } else if (system_arg == "uncoordinated") {
            systems = {cotdma::SystemKind::Uncoordinated};
        } else {
            std::cerr << "error: --system expects coordinated|uncoordinated\n";
            return 2;
        }

        std::vector<int> levels;
        if (vc_stas >= 0) {
            levels = {vc_stas};
        } else {
            levels = {2, 3, 4, 5};
        }

        // Trace output is per-run; when requested, run the first seed alone
        // and dump its traces next to the reports.
        if (trace_arg != "none") {
            cotdma::ScenarioConfig one = cfg;
            one.system = systems.front();
            one.n_vc_stas = levels.front();
            cotdma::TraceOptions topt;
            topt.frames = trace_arg == "frames";
            topt.grants = trace_arg == "grants" || trace_arg == "frames";
            topt.txops = topt.frames;
            topt.arrivals = trace_arg == "arrivals";
            one.seed = seeds.front();
            cotdma::NetworkSetup setup = cotdma::build_scenario(one);
            cotdma::Network net(setup, one.seed, topt);
            net.run();
            if (topt.frames) {
                write_file(std::filesystem::path(out_dir) / "frames.csv",
                           net.trace().frames_csv());
            }
            if (topt.grants) {
                write_file(std::filesystem::path(out_dir) / "grants.csv",
                           net.trace().grants_csv());
            }
            if (topt.arrivals) {
                write_file(std::filesystem::path(out_dir) / "arrivals.csv",
                           net.trace().arrivals_csv());
            }
        }

        if (!samples_path.empty()) {
            cotdma::ScenarioConfig one = cfg;
            one.system = systems.front();
            one.n_vc_stas = levels.front();
            one.seed = seeds.front();
            cotdma::NetworkSetup setup = cotdma::build_scenario(one);
            cotdma::Network net(setup, one.seed);
            net.run();
            write_file(samples_path, cotdma::samples_csv(net.collector().samples()));
        }

        cotdma::ExperimentSummary summary =
            cotdma::run_experiment(cfg, seeds, levels, systems, workers, pooled);

        cotdma::NetworkSetup probe = cotdma::build_scenario(cfg);
        for (const std::string& w : probe.warnings) {
            std::cerr << "warning: " << w << "\n";
        }

        const std::filesystem::path out(out_dir);
        if (format == "csv") {
            write_file(out / "results.csv", cotdma::results_csv(summary));
            std::cout << "wrote " << (out / "results.csv").string() << "\n";
        } else if (format == "json") {
            nlohmann::json j = summary;
            write_file(out / "results.json", j.dump(2) + "\n");
            std::cout << "wrote " << (out / "results.json").string() << "\n";
        } else {
            for (const auto& [name, content] : cotdma::plot_data_files(summary)) {
                write_file(out / name, content);
            }
            std::cout << "wrote plot data to " << out.string() << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
