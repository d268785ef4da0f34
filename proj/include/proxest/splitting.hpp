#pragma once

// Relaxed ADMM between a coordinator h and agents f_i, its Douglas-Rachford
// view on the dual, and the reduced-communication iteration in which the
// coordinator substitutes estimated agent prox outputs whenever the
// consensus residual keeps decreasing.

#include <proxest/core.hpp>
#include <proxest/envelope.hpp>
#include <proxest/gradset.hpp>
#include <proxest/proxlib.hpp>

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace proxest {

/// minimize h(x) + Σ_i f_i(x_i) with x = (x_1, ..., x_N), split as x = y.
class SplitProblem {
  public:
    SplitProblem(ProximableFunction coordinator, std::vector<ProximableFunction> agents, double rho)
        : coordinator_(std::move(coordinator)), agents_(std::move(agents)), rho_(rho) {
        if (!(rho > 0) || !std::isfinite(rho)) throw ConfigError("split problem: rho must be positive");
        if (agents_.empty()) throw ConfigError("split problem: needs at least one agent");
        Eigen::Index offset = 0;
        for (const auto& f : agents_) {
            offsets_.push_back(offset);
            offset += static_cast<Eigen::Index>(f.dim());
        }
        require_dim(static_cast<Eigen::Index>(coordinator_.dim()), offset, "coordinator function");
        dim_ = offset;
    }

    const ProximableFunction& coordinator() const { return coordinator_; }
    const ProximableFunction& agent(std::size_t i) const { return agents_[i]; }
    std::size_t agent_count() const { return agents_.size(); }
    double rho() const { return rho_; }
    double gamma() const { return 1.0 / rho_; }
    Eigen::Index dim() const { return dim_; }

    Eigen::Index offset(std::size_t i) const { return offsets_[i]; }
    Eigen::Index block_dim(std::size_t i) const { return static_cast<Eigen::Index>(agents_[i].dim()); }

    auto block(Vec& v, std::size_t i) const { return v.segment(offsets_[i], block_dim(i)); }
    auto block(const Vec& v, std::size_t i) const { return v.segment(offsets_[i], block_dim(i)); }

  private:
    ProximableFunction coordinator_;
    std::vector<ProximableFunction> agents_;
    double rho_;
    std::vector<Eigen::Index> offsets_;
    Eigen::Index dim_ = 0;
};

/// Iterates of one run. `residual` is s^k = ‖x^k - y^k‖ over the stacked
/// blocks; `z_dr` is the Douglas-Rachford state λ^{k-1} + ρ x̃^k.
struct SplittingState {
    Vec x;
    Vec x_relaxed;
    Vec y;
    Vec lambda;
    Vec z_dr;
    int k = 0;
    double residual = 0.0;

    std::vector<double> e_history;
    double sum_eta_e = 0.0;       // Σ η^k ‖e^k‖
    double sum_eta_e_bound = 0.0;  // Σ η^k · (over-approximation of ‖e^k‖)
    double sum_eta_2me = 0.0;     // Σ η^k (2 - η^k)

    static SplittingState zeros(const SplitProblem& p) {
        SplittingState s;
        s.x = Vec::Zero(p.dim());
        s.x_relaxed = s.x;
        s.y = s.x;
        s.lambda = s.x;
        s.z_dr = s.x;
        return s;
    }
};

/// Message counters between the coordinator and each agent.
class Transport {
  public:
    explicit Transport(std::size_t agents) : to_agent_(agents, 0), from_agent_(agents, 0) {}

    /// Query point out, (y_i, λ_i) back, for every agent.
    void communicate_all() {
        for (auto& c : to_agent_) ++c;
        for (auto& c : from_agent_) ++c;
        log_.push_back(true);
    }
    void skip() { log_.push_back(false); }

    std::uint64_t to_agent(std::size_t i) const { return to_agent_[i]; }
    std::uint64_t from_agent(std::size_t i) const { return from_agent_[i]; }
    std::uint64_t messages(std::size_t i) const { return to_agent_[i] + from_agent_[i]; }
    std::uint64_t messages_total() const {
        return std::accumulate(to_agent_.begin(), to_agent_.end(), std::uint64_t{0}) +
               std::accumulate(from_agent_.begin(), from_agent_.end(), std::uint64_t{0});
    }
    std::uint64_t rounds() const {
        return static_cast<std::uint64_t>(std::count(log_.begin(), log_.end(), true));
    }
    std::size_t iterations() const { return log_.size(); }
    std::size_t agent_count() const { return to_agent_.size(); }
    const std::vector<bool>& log() const { return log_; }

  private:
    std::vector<std::uint64_t> to_agent_;
    std::vector<std::uint64_t> from_agent_;
    std::vector<bool> log_;
};

// ---------------------------------------------------------------------------
// Relaxation parameter
// ---------------------------------------------------------------------------

struct EtaSchedule {
    enum class Mode { constant, diminishing };

    Mode mode = Mode::constant;
    double value = 1.0;

    static constexpr double error_floor = 1e-12;
    static constexpr double eta_min = 1e-6;
    static constexpr double eta_max = 1.999;

    static EtaSchedule constant(double eta) {
        if (!(eta > 0.0 && eta < 2.0)) throw ConfigError("eta must lie in (0, 2)");
        return EtaSchedule{Mode::constant, eta};
    }
    static EtaSchedule diminishing() { return EtaSchedule{Mode::diminishing, 1.0}; }
};

/// η^k for the constant rule, or clamp(1/(k² max(‖e‖, floor)), η_min, η_max)
/// for the diminishing rule; `e_norm_bound` over-approximates ‖e^k‖.
inline double eta_schedule_next(int k, double e_norm_bound, const EtaSchedule& schedule) {
    if (schedule.mode == EtaSchedule::Mode::constant) return schedule.value;
    if (k < 1) throw std::invalid_argument("eta schedule: k must be >= 1");
    const double kk = static_cast<double>(k);
    const double raw = 1.0 / (kk * kk * std::max(e_norm_bound, EtaSchedule::error_floor));
    return std::clamp(raw, EtaSchedule::eta_min, EtaSchedule::eta_max);
}

/// Accumulates the two series whose behavior decides convergence of the
/// inexact iteration: Σ η‖e‖ must stay bounded, Σ η(2 - η) must diverge.
inline void accumulate_summability(SplittingState& s, double eta, double e_norm, double e_bound) {
    s.sum_eta_2me += eta * (2.0 - eta);
    s.sum_eta_e += eta * e_norm;
    s.sum_eta_e_bound += eta * e_bound;
}

// ---------------------------------------------------------------------------
// Exact ADMM
// ---------------------------------------------------------------------------

namespace detail {

/// x-update and relaxation; returns v = x̃ + λ/ρ, the agents' query point.
inline Vec coordinator_update(SplittingState& s, const SplitProblem& p, double eta) {
    s.x = prox(p.coordinator(), s.y - s.lambda / p.rho(), p.gamma());
    s.x_relaxed = eta * s.x + (1.0 - eta) * s.y;
    s.z_dr = s.lambda + p.rho() * s.x_relaxed;
    return s.x_relaxed + s.lambda / p.rho();
}

inline Vec agents_prox(const SplitProblem& p, const Vec& v) {
    Vec y(p.dim());
    for (std::size_t i = 0; i < p.agent_count(); ++i)
        p.block(y, i) = prox(p.agent(i), Vec(p.block(v, i)), p.gamma());
    return y;
}

inline void accept_agent_answers(SplittingState& s, const SplitProblem& p, Vec y) {
    s.y = std::move(y);
    s.lambda = s.lambda + p.rho() * (s.x_relaxed - s.y);
    s.residual = (s.x - s.y).norm();
}

}  // namespace detail

/// One relaxed ADMM iteration with every agent solving its prox (γ = 1/ρ).
inline void admm_step_exact(SplittingState& s, const SplitProblem& p, Transport& transport, double eta) {
    const Vec v = detail::coordinator_update(s, p, eta);
    detail::accept_agent_answers(s, p, detail::agents_prox(p, v));
    transport.communicate_all();
    s.e_history.push_back(0.0);
    accumulate_summability(s, eta, 0.0, 0.0);
    ++s.k;
}

// ---------------------------------------------------------------------------
// Douglas-Rachford on the dual: minimize H(λ) + F(λ), H(λ) = h*(-λ),
// F(λ) = Σ f_i*(λ_i). Dual proxes come from the Moreau identity.
// ---------------------------------------------------------------------------

struct DrState {
    Vec z;
    Vec lambda;

    /// DR state matching an ADMM state (y, λ): z = λ + ρ y.
    static DrState from_admm(const SplittingState& s, double rho) { return {s.lambda + rho * s.y, s.lambda}; }
};

inline Vec dual_prox_H(const SplitProblem& p, const Vec& u) {
    return -conjugate_prox(p.coordinator(), -u, p.rho());
}

inline Vec dual_prox_F(const SplitProblem& p, const Vec& z) {
    Vec out(p.dim());
    for (std::size_t i = 0; i < p.agent_count(); ++i)
        p.block(out, i) = conjugate_prox(p.agent(i), Vec(p.block(z, i)), p.rho());
    return out;
}

/// ζ = ½(refl_H(refl_F(z) + 2e) + z) - Tz with T = ½(refl_H refl_F + I).
inline Vec dr_fixed_point_error(const SplitProblem& p, const Vec& z, const Vec& e) {
    const Vec refl_F = 2.0 * dual_prox_F(p, z) - z;
    auto refl_H = [&](const Vec& u) -> Vec { return 2.0 * dual_prox_H(p, u) - u; };
    const Vec Tz = 0.5 * (refl_H(refl_F) + z);
    return 0.5 * (refl_H(refl_F + 2.0 * e) + z) - Tz;
}

/// r = prox_{ρH}(2λ - z); z ← z + η(r - λ); λ ← prox_{ρF}(z). Returns r.
inline Vec dr_step(DrState& s, const SplitProblem& p, double eta) {
    Vec r = dual_prox_H(p, 2.0 * s.lambda - s.z);
    s.z = s.z + eta * (r - s.lambda);
    s.lambda = dual_prox_F(p, s.z);
    return r;
}

struct InexactDrResult {
    Vec r;
    Vec zeta;  // evaluated at the incoming z with the same e
};

/// dr_step with an additive error on the λ-update: λ ← prox_{ρF}(z) + e.
inline InexactDrResult dr_step_inexact(DrState& s, const SplitProblem& p, double eta, const Vec& e) {
    require_dim(e.size(), p.dim(), "dual error");
    InexactDrResult out;
    out.zeta = dr_fixed_point_error(p, s.z, e);
    out.r = dual_prox_H(p, 2.0 * s.lambda - s.z);
    s.z = s.z + eta * (out.r - s.lambda);
    s.lambda = dual_prox_F(p, s.z) + e;
    return out;
}

// ---------------------------------------------------------------------------
// Reduced-communication iteration
// ---------------------------------------------------------------------------

/// True when the agents must be queried: the residual failed to decrease,
/// s_prev - s_next < 0. Equal residuals do not trigger. NaN always triggers.
inline bool communication_test(double s_prev, double s_next) {
    if (std::isnan(s_prev) || std::isnan(s_next)) {
        spdlog::warn("communication test saw a NaN residual; forcing communication");
        return true;
    }
    return s_prev - s_next < 0.0;
}

enum class CommReason {
    none,
    forced,           // configuration asks for communication every round
    empty_memory,     // some agent has no query records yet
    estimator_failed, // Dykstra reported an inconsistent set
    residual_test,    // s^k - s^{k+1} < 0
    stalled,          // provisional residual collapsed to ~0; verify with true answers
};

struct Algorithm1Options {
    bool force_communication = false;
    bool diagnostics = true;        // compute e^k against the true prox (costs no messages)
    bool transmit_envelope = true;  // agents report f^γ(v) alongside (y, λ)
    double stall_tol = 1e-9;
    DykstraOptions dykstra;
};

struct StepReport {
    bool communicated = false;
    CommReason reason = CommReason::none;
    double eta = 1.0;
    double provisional_residual = 0.0;
    double e_norm = 0.0;        // ‖g - ∇f^γ(v)‖ of the accepted step (NaN without diagnostics)
    double e_norm_bound = 0.0;  // √Σ_i (smallest-ball diameter)², 0 after communication
    Vec error;                  // stacked e^k of the accepted step
    int projections = 0;        // agents whose anchor needed projecting
    double projection_seconds = 0.0;
};

/// Agents answer the query v: true prox outputs, appended to each memory.
inline Vec query_agents(const SplitProblem& p, const Vec& v, std::vector<AgentMemory>& memories,
                        bool transmit_envelope) {
    Vec y(p.dim());
    for (std::size_t i = 0; i < p.agent_count(); ++i) {
        QueryRecord rec = make_query_record(p.agent(i), Vec(p.block(v, i)), p.gamma());
        if (!transmit_envelope) rec.env_value = std::numeric_limits<double>::quiet_NaN();
        p.block(y, i) = rec.prox_out;
        memories[i].record_communication(std::move(rec));
    }
    return y;
}

/// One iteration of the estimated-prox scheme: coordinator update, gradient
/// estimates for every agent, provisional (ŷ, λ̂, s); then either accept the
/// estimates or query all agents and overwrite with their true answers.
inline StepReport algorithm1_step(SplittingState& s, const SplitProblem& p, std::vector<AgentMemory>& memories,
                                  Transport& transport, double eta, const Algorithm1Options& opts = {}) {
    if (memories.size() != p.agent_count()) throw ConfigError("algorithm1: one memory per agent required");

    StepReport report;
    report.eta = eta;
    report.error = Vec::Zero(p.dim());
    const Vec v = detail::coordinator_update(s, p, eta);

    CommReason reason = opts.force_communication ? CommReason::forced : CommReason::none;
    for (const auto& m : memories) {
        if (reason == CommReason::none && m.empty()) reason = CommReason::empty_memory;
    }

    Vec g(p.dim());
    double bound_sq = 0.0;
    if (reason == CommReason::none) {
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < p.agent_count() && reason == CommReason::none; ++i) {
            try {
                const auto est = estimate_gradient(memories[i], Vec(p.block(v, i)), opts.dykstra);
                if (!est) {
                    reason = CommReason::empty_memory;
                    break;
                }
                p.block(g, i) = est->g;
                bound_sq += est->error_bound * est->error_bound;
                report.projections += est->projected ? 1 : 0;
            } catch (const InconsistentSetError& e) {
                spdlog::debug("agent {}: {}", i, e.what());
                reason = CommReason::estimator_failed;
            }
        }
        report.projection_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    if (reason == CommReason::none) {
        Vec y_hat = v - p.gamma() * g;
        const double s_next = (s.x - y_hat).norm();
        report.provisional_residual = s_next;
        if (communication_test(s.residual, s_next)) {
            reason = CommReason::residual_test;
        } else if (s_next <= opts.stall_tol) {
            reason = CommReason::stalled;
        } else {
            s.lambda = s.lambda + p.rho() * (s.x_relaxed - y_hat);
            s.y = std::move(y_hat);
            s.residual = s_next;
            report.e_norm_bound = std::sqrt(bound_sq);
            if (opts.diagnostics) {
                for (std::size_t i = 0; i < p.agent_count(); ++i) {
                    const Vec vi = p.block(v, i);
                    p.block(report.error, i) = Vec(p.block(g, i)) - envelope_gradient(p.agent(i), vi, p.gamma());
                }
                report.e_norm = report.error.norm();
            } else {
                report.e_norm = std::numeric_limits<double>::quiet_NaN();
            }
            transport.skip();
        }
    }

    if (reason != CommReason::none) {
        report.communicated = true;
        detail::accept_agent_answers(s, p, query_agents(p, v, memories, opts.transmit_envelope));
        transport.communicate_all();
    }
    report.reason = reason;

    s.e_history.push_back(std::isnan(report.e_norm) ? report.e_norm_bound : report.e_norm);
    accumulate_summability(s, eta, s.e_history.back(), report.e_norm_bound);
    ++s.k;
    return report;
}

}  // namespace proxest
