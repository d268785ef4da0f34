#pragma once

// Experiment runner for the exchange benchmark: configuration, exact vs.
// estimated runs, per-iteration metrics as CSV, and the mode comparison
// table (iterations, communications per agent, reduction vs. exact).

#include <proxest/exchange.hpp>
#include <proxest/gradset.hpp>
#include <proxest/splitting.hpp>

#include <nlohmann/json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace proxest::harness {

enum class Mode { exact, estimated };

struct Config {
    std::size_t agents = 5;
    std::size_t horizon = 6;
    std::uint64_t seed = 1;
    double rho = 20.0;
    EtaSchedule eta = EtaSchedule::constant(1.0);
    Mode mode = Mode::estimated;
    std::optional<std::size_t> memory_limit;  // nullopt keeps every record
    double tol = 1e-3;
    int max_iter = 5000;
    AnchorRule anchor_rule = AnchorRule::lower_bound;
    std::string output_path = "out";
};

inline const char* to_string(Mode m) { return m == Mode::exact ? "exact" : "estimated"; }
inline const char* to_string(AnchorRule r) {
    return r == AnchorRule::lower_bound ? "lower_bound" : "nearest_point";
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

}  // namespace detail

/// Parses the experiment config. Missing keys take defaults; unknown keys
/// and out-of-range values raise ConfigError.
inline Config parse_config(const nlohmann::json& j) {
    detail::reject_unknown_keys(j,
                                {"scenario", "rho", "eta", "mode", "memory_limit", "tol", "max_iter",
                                 "anchor_rule", "output_path"},
                                "");
    Config c;
    if (j.contains("scenario")) {
        const auto& s = j.at("scenario");
        detail::reject_unknown_keys(s, {"N", "T", "seed"}, "scenario.");
        c.agents = detail::get_or<std::size_t>(s, "N", c.agents);
        c.horizon = detail::get_or<std::size_t>(s, "T", c.horizon);
        c.seed = detail::get_or<std::uint64_t>(s, "seed", c.seed);
        if (c.agents < 1 || c.horizon < 1) throw ConfigError("scenario.N and scenario.T must be >= 1");
    }
    c.rho = detail::get_or<double>(j, "rho", c.rho);
    if (!(c.rho > 0)) throw ConfigError("rho must be positive");

    if (j.contains("eta")) {
        const auto& e = j.at("eta");
        detail::reject_unknown_keys(e, {"mode", "value"}, "eta.");
        const auto mode = detail::get_or<std::string>(e, "mode", "constant");
        if (mode == "constant") {
            c.eta = EtaSchedule::constant(detail::get_or<double>(e, "value", 1.0));
        } else if (mode == "diminishing") {
            c.eta = EtaSchedule::diminishing();
        } else {
            throw ConfigError("eta.mode must be 'constant' or 'diminishing'");
        }
    }

    const auto mode = detail::get_or<std::string>(j, "mode", "estimated");
    if (mode == "exact") c.mode = Mode::exact;
    else if (mode == "estimated") c.mode = Mode::estimated;
    else throw ConfigError("mode must be 'exact' or 'estimated'");

    if (j.contains("memory_limit") && !j.at("memory_limit").is_null()) {
        const auto m = detail::get_or<long long>(j, "memory_limit", 0);
        if (m < 0) throw ConfigError("memory_limit must be positive, 0 or null (unlimited)");
        if (m > 0) c.memory_limit = static_cast<std::size_t>(m);
    }
    c.tol = detail::get_or<double>(j, "tol", c.tol);
    if (!(c.tol > 0)) throw ConfigError("tol must be positive");
    c.max_iter = detail::get_or<int>(j, "max_iter", c.max_iter);
    if (c.max_iter < 1) throw ConfigError("max_iter must be >= 1");

    const auto rule = detail::get_or<std::string>(j, "anchor_rule", "lower_bound");
    if (rule == "lower_bound") c.anchor_rule = AnchorRule::lower_bound;
    else if (rule == "nearest_point") c.anchor_rule = AnchorRule::nearest_point;
    else throw ConfigError("anchor_rule must be 'lower_bound' or 'nearest_point'");

    c.output_path = detail::get_or<std::string>(j, "output_path", c.output_path);
    return c;
}

inline Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

inline exchange::ExchangeScenario scenario_for(const Config& c) {
    auto s = exchange::generate_scenario(c.agents, c.horizon, c.seed);
    s.rho = c.rho;
    s.eta = c.eta.value;
    return s;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct MetricsRow {
    int k = 0;  // iterations completed
    double rel_error = 0.0;
    double residual = 0.0;
    bool communicated = false;
    std::uint64_t comm_per_agent = 0;  // cumulative rounds
    std::uint64_t messages_total = 0;
    double e_norm_bound = 0.0;
    double eta = 1.0;
};

struct RunSummary {
    std::string mode;
    std::optional<std::size_t> memory_limit;
    int iterations = 0;
    bool converged = false;
    std::uint64_t communications_per_agent = 0;
    std::uint64_t messages_total = 0;
    double final_rel_error = 0.0;
    double avg_projection_seconds = 0.0;  // per estimated iteration
    double sum_eta_2me = 0.0;
    double sum_eta_e = 0.0;
};

struct RunMetrics {
    std::vector<MetricsRow> rows;
    RunSummary summary;
};

inline constexpr const char* kCsvHeader =
    "k,rel_error,residual,communicated,comm_per_agent,messages_total,e_norm_bound,eta";

/// Quotes a field when it contains a delimiter, quote or line break.
inline std::string csv_field(const std::string& raw) {
    if (raw.find_first_of(",\"\r\n") == std::string::npos) return raw;
    std::string out = "\"";
    for (char ch : raw) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

inline void write_metrics_csv(std::ostream& os, const RunMetrics& m) {
    os << kCsvHeader << "\r\n";
    for (const auto& r : m.rows) {
        os << fmt::format("{},{},{},{},{},{},{},{}\r\n", r.k, r.rel_error, r.residual, r.communicated ? 1 : 0,
                          r.comm_per_agent, r.messages_total, r.e_norm_bound, r.eta);
    }
}

inline nlohmann::json to_json(const RunSummary& s) {
    nlohmann::json j;
    j["mode"] = s.mode;
    j["memory_limit"] = s.memory_limit ? nlohmann::json(*s.memory_limit) : nlohmann::json(nullptr);
    j["iterations"] = s.iterations;
    j["converged"] = s.converged;
    j["communications_per_agent"] = s.communications_per_agent;
    j["messages_total"] = s.messages_total;
    j["final_rel_error"] = s.final_rel_error;
    j["avg_projection_seconds"] = s.avg_projection_seconds;
    j["sum_eta_2me"] = s.sum_eta_2me;
    j["sum_eta_e"] = s.sum_eta_e;
    return j;
}

inline RunSummary summary_from_json(const nlohmann::json& j) {
    RunSummary s;
    s.mode = j.at("mode").get<std::string>();
    if (!j.at("memory_limit").is_null()) s.memory_limit = j.at("memory_limit").get<std::size_t>();
    s.iterations = j.at("iterations").get<int>();
    s.converged = j.at("converged").get<bool>();
    s.communications_per_agent = j.at("communications_per_agent").get<std::uint64_t>();
    s.messages_total = j.at("messages_total").get<std::uint64_t>();
    s.final_rel_error = j.at("final_rel_error").get<double>();
    s.avg_projection_seconds = j.at("avg_projection_seconds").get<double>();
    s.sum_eta_2me = j.at("sum_eta_2me").get<double>();
    s.sum_eta_e = j.at("sum_eta_e").get<double>();
    return s;
}

inline std::vector<MetricsRow> read_metrics_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("metrics csv: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader) throw std::runtime_error("metrics csv: unexpected header '" + line + "'");
    std::vector<MetricsRow> rows;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<std::string> f;
        for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
        if (f.size() != 8) throw std::runtime_error("metrics csv: expected 8 fields in '" + line + "'");
        MetricsRow r;
        r.k = std::stoi(f[0]);
        r.rel_error = std::stod(f[1]);
        r.residual = std::stod(f[2]);
        r.communicated = f[3] == "1";
        r.comm_per_agent = std::stoull(f[4]);
        r.messages_total = std::stoull(f[5]);
        r.e_norm_bound = std::stod(f[6]);
        r.eta = std::stod(f[7]);
        rows.push_back(r);
    }
    return rows;
}

/// Recomputes the summary counters from the rows; throws on any mismatch.
inline void verify_summary(const std::vector<MetricsRow>& rows, const RunSummary& s, std::size_t agents) {
    auto fail = [](const std::string& what) { throw std::runtime_error("metrics inconsistent: " + what); };
    if (static_cast<int>(rows.size()) != s.iterations) fail("row count != iterations");
    std::uint64_t rounds = 0, prev_comm = 0, prev_msgs = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.k != static_cast<int>(i + 1)) fail("iteration column not consecutive");
        rounds += r.communicated ? 1 : 0;
        if (r.comm_per_agent != rounds) fail("cumulative communications disagree with flags");
        if (r.comm_per_agent < prev_comm || r.messages_total < prev_msgs) fail("counter decreased");
        if (r.messages_total != 2 * agents * r.comm_per_agent) fail("messages != 2·N·rounds");
        prev_comm = r.comm_per_agent;
        prev_msgs = r.messages_total;
    }
    if (rounds != s.communications_per_agent) fail("summary communications");
    if (!rows.empty() && rows.back().messages_total != s.messages_total) fail("summary messages");
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct RunOptions {
    /// Stop on ‖y - z*‖/‖z*‖ <= tol. Without an oracle the run stops on
    /// s <= tol and ρ‖y^{k+1} - y^k‖ <= tol instead.
    std::optional<Vec> oracle;
    Algorithm1Options algorithm;
};

inline RunMetrics run_experiment(const Config& cfg, const RunOptions& opts = {}) {
    const auto scn = scenario_for(cfg);
    const auto problem = exchange::make_split_problem(scn);
    if (opts.oracle) require_dim(opts.oracle->size(), problem.dim(), "oracle solution");

    auto state = SplittingState::zeros(problem);
    Transport transport(problem.agent_count());
    std::vector<AgentMemory> memories;
    for (std::size_t i = 0; i < problem.agent_count(); ++i)
        memories.emplace_back(problem.gamma(), cfg.memory_limit, cfg.anchor_rule);

    auto algo = opts.algorithm;
    algo.transmit_envelope = cfg.anchor_rule == AnchorRule::lower_bound;

    RunMetrics m;
    m.summary.mode = to_string(cfg.mode);
    m.summary.memory_limit = cfg.memory_limit;
    const double oracle_norm = opts.oracle ? opts.oracle->norm() : 0.0;
    double last_bound = 0.0;
    double projection_seconds = 0.0;
    int estimated_iterations = 0;

    for (int k = 1; k <= cfg.max_iter; ++k) {
        const double eta = eta_schedule_next(k, last_bound, cfg.eta);
        const Vec y_prev = state.y;
        MetricsRow row;
        if (cfg.mode == Mode::exact) {
            admm_step_exact(state, problem, transport, eta);
            row.communicated = true;
            last_bound = 0.0;
        } else {
            const auto rep = algorithm1_step(state, problem, memories, transport, eta, algo);
            row.communicated = rep.communicated;
            last_bound = rep.e_norm_bound;
            if (rep.reason != CommReason::empty_memory && rep.reason != CommReason::forced) {
                projection_seconds += rep.projection_seconds;
                ++estimated_iterations;
            }
        }
        row.k = k;
        row.residual = state.residual;
        row.rel_error = opts.oracle ? (state.y - *opts.oracle).norm() / oracle_norm
                                    : std::numeric_limits<double>::quiet_NaN();
        row.comm_per_agent = transport.rounds();
        row.messages_total = transport.messages_total();
        row.e_norm_bound = last_bound;
        row.eta = eta;
        m.rows.push_back(row);

        const bool done = opts.oracle ? row.rel_error <= cfg.tol
                                      : row.communicated && state.residual <= cfg.tol &&
                                            problem.rho() * (state.y - y_prev).norm() <= cfg.tol;
        if (done) {
            m.summary.converged = true;
            break;
        }
    }

    m.summary.iterations = static_cast<int>(m.rows.size());
    m.summary.communications_per_agent = transport.rounds();
    m.summary.messages_total = transport.messages_total();
    m.summary.final_rel_error = m.rows.empty() ? 0.0 : m.rows.back().rel_error;
    m.summary.avg_projection_seconds = estimated_iterations ? projection_seconds / estimated_iterations : 0.0;
    m.summary.sum_eta_2me = state.sum_eta_2me;
    m.summary.sum_eta_e = state.sum_eta_e;
    spdlog::info("{} run (memory {}): {} iterations, {} communications per agent, converged={}",
                 m.summary.mode, cfg.memory_limit ? std::to_string(*cfg.memory_limit) : "all",
                 m.summary.iterations, m.summary.communications_per_agent, m.summary.converged);
    return m;
}

inline void write_run(const std::filesystem::path& dir, const RunMetrics& m) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream csv(dir / "metrics.csv", std::ios::binary);
        write_metrics_csv(csv, m);
    }
    std::ofstream js(dir / "summary.json");
    js << to_json(m.summary).dump(2) << "\n";
}

/// Reads a run back and checks its summary against the rows.
inline RunMetrics load_run(const std::filesystem::path& dir, std::size_t agents) {
    RunMetrics m;
    std::ifstream csv(dir / "metrics.csv", std::ios::binary);
    if (!csv) throw std::runtime_error("cannot open " + (dir / "metrics.csv").string());
    m.rows = read_metrics_csv(csv);
    std::ifstream js(dir / "summary.json");
    if (!js) throw std::runtime_error("cannot open " + (dir / "summary.json").string());
    m.summary = summary_from_json(nlohmann::json::parse(js));
    verify_summary(m.rows, m.summary, agents);
    return m;
}

// ---------------------------------------------------------------------------
// Comparison table
// ---------------------------------------------------------------------------

struct ComparisonRow {
    std::string label;
    Mode mode = Mode::exact;
    std::optional<std::size_t> memory_limit;
    int iterations = 0;
    std::uint64_t communications = 0;
    std::uint64_t constraints_per_agent = 0;  // balls in the final projection
    double reduction = 0.0;                   // 1 - comm / comm_exact
    bool converged = false;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    std::vector<RunMetrics> runs;
};

/// Same scenario under exact ADMM and the estimated scheme with memory
/// M = 1, 5, 10 and unlimited.
inline ComparisonReport compare_modes(const Config& base, const RunOptions& opts) {
    struct Variant {
        std::string label;
        Mode mode;
        std::optional<std::size_t> memory;
    };
    const std::vector<Variant> variants = {
        {"exact", Mode::exact, std::nullopt},
        {"estimated_all", Mode::estimated, std::nullopt},
        {"estimated_M1", Mode::estimated, 1},
        {"estimated_M5", Mode::estimated, 5},
        {"estimated_M10", Mode::estimated, 10},
    };

    ComparisonReport report;
    std::uint64_t exact_comm = 0;
    for (const auto& v : variants) {
        Config cfg = base;
        cfg.mode = v.mode;
        cfg.memory_limit = v.memory;
        auto metrics = run_experiment(cfg, opts);
        ComparisonRow row;
        row.label = v.label;
        row.mode = v.mode;
        row.memory_limit = v.memory;
        row.iterations = metrics.summary.iterations;
        row.communications = metrics.summary.communications_per_agent;
        row.converged = metrics.summary.converged;
        if (v.mode == Mode::estimated)
            row.constraints_per_agent = v.memory ? std::min<std::uint64_t>(*v.memory, row.communications)
                                                 : row.communications;
        if (v.mode == Mode::exact) exact_comm = row.communications;
        report.rows.push_back(row);
        report.runs.push_back(std::move(metrics));
    }
    for (auto& row : report.rows) {
        row.reduction = exact_comm ? 1.0 - static_cast<double>(row.communications) / static_cast<double>(exact_comm)
                                   : 0.0;
    }
    return report;
}

inline void write_comparison(const std::filesystem::path& dir, const ComparisonReport& rep) {
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir / "comparison.csv", std::ios::binary);
    csv << "label,mode,memory_limit,iterations,communications_per_agent,constraints_per_agent,reduction,converged\r\n";
    for (const auto& r : rep.rows) {
        csv << fmt::format("{},{},{},{},{},{},{},{}\r\n", csv_field(r.label), to_string(r.mode),
                           r.memory_limit ? std::to_string(*r.memory_limit) : "all", r.iterations,
                           r.communications, r.constraints_per_agent, r.reduction, r.converged ? 1 : 0);
    }
    for (std::size_t i = 0; i < rep.rows.size(); ++i) write_run(dir / rep.rows[i].label, rep.runs[i]);
}

inline std::string format_comparison(const ComparisonReport& rep) {
    std::string out = fmt::format("{:<16}{:>12}{:>16}{:>14}{:>12}\n", "run", "iterations", "comm/agent",
                                  "constraints", "reduction");
    for (const auto& r : rep.rows) {
        out += fmt::format("{:<16}{:>12}{:>16}{:>14}{:>11.1f}%{}\n", r.label, r.iterations, r.communications,
                           r.mode == Mode::exact ? std::string("-") : std::to_string(r.constraints_per_agent),
                           100.0 * r.reduction, r.converged ? "" : "  (did not converge)");
    }
    return out;
}

}  // namespace proxest::harness
