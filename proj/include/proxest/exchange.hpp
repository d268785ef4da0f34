#pragma once

// Desk-scale optimal-exchange benchmark: N synthetic agents with
// piecewise-max deviation costs over box feasible sets must jointly track a
// reference profile r over T steps (Σ_i z_i = r).

#include <proxest/core.hpp>
#include <proxest/proxlib.hpp>
#include <proxest/splitting.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace proxest::exchange {

struct ExchangeScenario {
    std::size_t agents = 0;   // N
    std::size_t horizon = 0;  // T
    Vec reference;            // r, length T
    std::vector<Vec> baselines;
    std::vector<Vec> tariffs;
    std::vector<Vec> lower;
    std::vector<Vec> upper;
    double weight = 0.05;
    double rho = 20.0;
    double eta = 1.0;
    std::uint64_t seed = 0;

    Eigen::Index dim() const { return static_cast<Eigen::Index>(agents * horizon); }
};

namespace detail {

/// Uniform double in [lo, hi) from the raw 53 high bits; mt19937_64 output is
/// fixed by the standard, distributions are not.
inline double uniform(std::mt19937_64& gen, double lo, double hi) {
    const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

inline bool is_daytime(std::size_t t, std::size_t horizon) {
    const double hour = 24.0 * static_cast<double>(t) / static_cast<double>(horizon);
    return hour >= 7.0 && hour < 19.0;
}

}  // namespace detail

/// Deterministic synthetic scenario. Baselines in [1, 5], tariffs in
/// ct/kWh with a day rate in [20, 30) and a night rate in [10, 20), boxes
/// baseline ± 50%, and a reference that perturbs the total baseline by a
/// 10% sinusoid.
inline ExchangeScenario generate_scenario(std::size_t agents, std::size_t horizon, std::uint64_t seed) {
    if (agents < 1 || horizon < 1) throw ConfigError("scenario: N and T must be >= 1");
    std::mt19937_64 gen(seed);
    ExchangeScenario s;
    s.agents = agents;
    s.horizon = horizon;
    s.seed = seed;
    const auto T = static_cast<Eigen::Index>(horizon);

    Vec total = Vec::Zero(T);
    for (std::size_t i = 0; i < agents; ++i) {
        const double day_rate = detail::uniform(gen, 20.0, 30.0);
        const double night_rate = detail::uniform(gen, 10.0, 20.0);
        Vec base(T), tariff(T);
        for (Eigen::Index t = 0; t < T; ++t) {
            base[t] = detail::uniform(gen, 1.0, 5.0);
            tariff[t] = detail::is_daytime(static_cast<std::size_t>(t), horizon) ? day_rate : night_rate;
        }
        s.lower.push_back(0.5 * base);
        s.upper.push_back(1.5 * base);
        total += base;
        s.baselines.push_back(std::move(base));
        s.tariffs.push_back(std::move(tariff));
    }
    const double phase = detail::uniform(gen, 0.0, 2.0 * std::numbers::pi);
    s.reference.resize(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(T) + phase;
        s.reference[t] = total[t] * (1.0 + 0.1 * std::sin(angle));
    }
    return s;
}

/// w Σ_t max{c(p - p̂), 0.5c(p - p̂), -0.5c(p + 3p̂)} + δ(p | [l, u]).
inline ProximableFunction build_agent_cost(const ExchangeScenario& s, std::size_t i) {
    const auto T = static_cast<Eigen::Index>(s.horizon);
    std::vector<std::vector<AffinePiece>> pieces(s.horizon);
    for (Eigen::Index t = 0; t < T; ++t) {
        const double c = s.weight * s.tariffs[i][t];
        const double base = s.baselines[i][t];
        pieces[static_cast<std::size_t>(t)] = {
            {c, -c * base},
            {0.5 * c, -0.5 * c * base},
            {-0.5 * c, -1.5 * c * base},
        };
    }
    return ProximableFunction::piecewise_linear(std::move(pieces), s.lower[i], s.upper[i]);
}

/// Coordinator side of the exchange: δ(x | Σ_i x_i = r).
inline ProximableFunction coupling_constraint(const ExchangeScenario& s) {
    return ProximableFunction::block_sum(s.agents, s.reference);
}

inline SplitProblem make_split_problem(const ExchangeScenario& s) {
    std::vector<ProximableFunction> agents;
    for (std::size_t i = 0; i < s.agents; ++i) agents.push_back(build_agent_cost(s, i));
    return SplitProblem(coupling_constraint(s), std::move(agents), s.rho);
}

/// Per-agent z_i and one shared price λ (length T).
struct ExchangeState {
    std::vector<Vec> z;
    Vec lambda;

    static ExchangeState zeros(const ExchangeScenario& s) {
        const auto T = static_cast<Eigen::Index>(s.horizon);
        return ExchangeState{std::vector<Vec>(s.agents, Vec::Zero(T)), Vec::Zero(T)};
    }

    Vec stacked() const {
        const auto T = z.empty() ? 0 : z.front().size();
        Vec out(static_cast<Eigen::Index>(z.size()) * T);
        for (std::size_t i = 0; i < z.size(); ++i) out.segment(static_cast<Eigen::Index>(i) * T, T) = z[i];
        return out;
    }
};

inline Vec average(const std::vector<Vec>& z) {
    Vec mean = Vec::Zero(z.front().size());
    for (const auto& zi : z) mean += zi;
    return mean / static_cast<double>(z.size());
}

/// z_i ← argmin f_i(z_i) + ⟨z_i, λ⟩ + (ρ/2)‖z_i - (z_i - z̄ + r/N)‖²
///     = prox_{f_i/ρ}(z_i - z̄ + r/N - λ/ρ);  λ ← λ + ρ(z̄ - r/N).
inline void exchange_admm_step(ExchangeState& st, const ExchangeScenario& s,
                               const std::vector<ProximableFunction>& costs) {
    const double n = static_cast<double>(s.agents);
    const Vec target = s.reference / n;
    const Vec shift = target - average(st.z) - st.lambda / s.rho;
    for (std::size_t i = 0; i < s.agents; ++i) st.z[i] = prox(costs[i], st.z[i] + shift, 1.0 / s.rho);
    st.lambda = st.lambda + s.rho * (average(st.z) - target);
}

inline std::vector<ProximableFunction> agent_costs(const ExchangeScenario& s) {
    std::vector<ProximableFunction> costs;
    for (std::size_t i = 0; i < s.agents; ++i) costs.push_back(build_agent_cost(s, i));
    return costs;
}

/// Reference optimizer z* from a long exact exchange-ADMM run.
inline Vec solve_oracle(const ExchangeScenario& s, int iterations = 50000) {
    const auto costs = agent_costs(s);
    auto st = ExchangeState::zeros(s);
    for (int k = 0; k < iterations; ++k) exchange_admm_step(st, s, costs);
    return st.stacked();
}

inline double objective(const ExchangeScenario& s, const Vec& stacked) {
    const auto costs = agent_costs(s);
    const auto T = static_cast<Eigen::Index>(s.horizon);
    double total = 0.0;
    for (std::size_t i = 0; i < s.agents; ++i)
        total += eval(costs[i], stacked.segment(static_cast<Eigen::Index>(i) * T, T)).as_double();
    return total;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json vec_to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vec vec_from_json(const nlohmann::json& j) {
    const auto raw = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(raw.data(), static_cast<Eigen::Index>(raw.size()));
}

inline nlohmann::json to_json(const ExchangeScenario& s) {
    nlohmann::json j;
    j["N"] = s.agents;
    j["T"] = s.horizon;
    j["seed"] = s.seed;
    j["weight"] = s.weight;
    j["rho"] = s.rho;
    j["eta"] = s.eta;
    j["reference"] = vec_to_json(s.reference);
    auto list = [](const std::vector<Vec>& vs) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& v : vs) arr.push_back(vec_to_json(v));
        return arr;
    };
    j["baselines"] = list(s.baselines);
    j["tariffs"] = list(s.tariffs);
    j["lower"] = list(s.lower);
    j["upper"] = list(s.upper);
    return j;
}

inline ExchangeScenario scenario_from_json(const nlohmann::json& j) {
    ExchangeScenario s;
    s.agents = j.at("N").get<std::size_t>();
    s.horizon = j.at("T").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.weight = j.at("weight").get<double>();
    s.rho = j.at("rho").get<double>();
    s.eta = j.at("eta").get<double>();
    s.reference = vec_from_json(j.at("reference"));
    auto list = [&](const char* key) {
        std::vector<Vec> out;
        for (const auto& v : j.at(key)) out.push_back(vec_from_json(v));
        if (out.size() != s.agents) throw ConfigError(std::string("scenario: '") + key + "' needs N entries");
        return out;
    };
    s.baselines = list("baselines");
    s.tariffs = list("tariffs");
    s.lower = list("lower");
    s.upper = list("upper");
    return s;
}

}  // namespace proxest::exchange
