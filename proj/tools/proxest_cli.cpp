// proxest: exchange benchmark driver.
//
//   proxest run     --config cfg.json [--mode exact|estimated] [--memory M] [--out dir] [--oracle file]
//   proxest compare --config cfg.json --out dir [--oracle file]
//   proxest oracle  --config cfg.json --out file
//
// Exit codes: 0 success, 1 runtime failure, 2 non-convergence, 3 config error.
// Log level comes from SPDLOG_LEVEL (e.g. SPDLOG_LEVEL=debug).

#include <proxest/exchange.hpp>
#include <proxest/harness.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace proxest;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitNotConverged = 2;
constexpr int kExitConfig = 3;

constexpr int kOracleIterations = 50000;

Vec load_oracle(const fs::path& path, const harness::Config& cfg) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open oracle file " + path.string());
    const auto j = nlohmann::json::parse(in);
    if (j.at("N").get<std::size_t>() != cfg.agents || j.at("T").get<std::size_t>() != cfg.horizon ||
        j.at("seed").get<std::uint64_t>() != cfg.seed || j.at("rho").get<double>() != cfg.rho)
        throw ConfigError("oracle file " + path.string() + " was computed for a different scenario");
    return exchange::vec_from_json(j.at("solution"));
}

Vec oracle_for(const harness::Config& cfg, const std::string& oracle_path) {
    if (!oracle_path.empty()) return load_oracle(oracle_path, cfg);
    spdlog::info("computing reference solution ({} iterations)", kOracleIterations);
    return exchange::solve_oracle(harness::scenario_for(cfg), kOracleIterations);
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("proxest"));
    spdlog::cfg::load_env_levels();

    CLI::App app{"Reduced-communication ADMM experiments on the exchange benchmark"};
    app.require_subcommand(1);

    std::string config_path, out_path, oracle_path, mode_override;
    int memory_override = -1;

    auto* run = app.add_subcommand("run", "run one experiment and write metrics.csv + summary.json");
    run->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
    run->add_option("--mode", mode_override, "override config mode")->check(CLI::IsMember({"exact", "estimated"}));
    run->add_option("--memory", memory_override, "override memory limit (0 = unlimited)")->check(CLI::NonNegativeNumber);
    run->add_option("--out", out_path, "output directory (default: config output_path)");
    run->add_option("--oracle", oracle_path, "precomputed solution from 'oracle'")->check(CLI::ExistingFile);

    auto* compare = app.add_subcommand("compare", "exact vs. estimated with memory all/1/5/10");
    compare->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
    compare->add_option("--out", out_path, "output directory")->required();
    compare->add_option("--oracle", oracle_path, "precomputed solution from 'oracle'")->check(CLI::ExistingFile);

    auto* oracle = app.add_subcommand("oracle", "precompute the reference solution");
    oracle->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
    oracle->add_option("--out", out_path, "output JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        auto cfg = harness::load_config(config_path);

        if (*oracle) {
            const auto scn = harness::scenario_for(cfg);
            const Vec z = exchange::solve_oracle(scn, kOracleIterations);
            nlohmann::json j;
            j["N"] = cfg.agents;
            j["T"] = cfg.horizon;
            j["seed"] = cfg.seed;
            j["rho"] = cfg.rho;
            j["iterations"] = kOracleIterations;
            j["objective"] = exchange::objective(scn, z);
            j["solution"] = exchange::vec_to_json(z);
            const fs::path out(out_path);
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            std::ofstream(out) << j.dump(2) << "\n";
            std::cout << "wrote " << out.string() << "\n";
            return 0;
        }

        if (*run) {
            if (mode_override == "exact") cfg.mode = harness::Mode::exact;
            if (mode_override == "estimated") cfg.mode = harness::Mode::estimated;
            if (memory_override == 0) cfg.memory_limit.reset();
            if (memory_override > 0) cfg.memory_limit = static_cast<std::size_t>(memory_override);
            const fs::path dir = out_path.empty() ? fs::path(cfg.output_path) : fs::path(out_path);

            harness::RunOptions opts;
            opts.oracle = oracle_for(cfg, oracle_path);
            const auto metrics = harness::run_experiment(cfg, opts);
            harness::write_run(dir, metrics);
            const auto& s = metrics.summary;
            std::cout << s.mode << ": " << s.iterations << " iterations, " << s.communications_per_agent
                      << " communications per agent, rel. error " << s.final_rel_error << "\n";
            if (!s.converged) {
                std::cout << "did not converge within " << cfg.max_iter << " iterations\n";
                return kExitNotConverged;
            }
            return 0;
        }

        if (*compare) {
            harness::RunOptions opts;
            opts.oracle = oracle_for(cfg, oracle_path);
            const auto report = harness::compare_modes(cfg, opts);
            harness::write_comparison(out_path, report);
            std::cout << harness::format_comparison(report);
            for (const auto& row : report.rows) {
                if (!row.converged) return kExitNotConverged;
            }
            return 0;
        }
    } catch (const ConfigError& e) {
        spdlog::error("config error: {}", e.what());
        return kExitConfig;
    } catch (const nlohmann::json::exception& e) {
        spdlog::error("config error: {}", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitRuntime;
    }
    return 0;
}
