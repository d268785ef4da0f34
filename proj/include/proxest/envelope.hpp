#pragma once

// Moreau-envelope calculus on the coordinator side. Everything here uses
// only what an agent reports for a query (z, prox output, envelope value);
// the true envelope at an unqueried point never enters.

#include <proxest/core.hpp>
#include <proxest/proxlib.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace proxest {

/// One answered query: the agent solved its prox at `z`.
struct QueryRecord {
    Vec z;
    Vec prox_out;
    Vec grad;          // ∇f^γ(z) = (z - prox_out)/γ
    double env_value;  // f^γ(z); NaN when the agent withholds it
    double gamma;

    Eigen::Index dim() const { return z.size(); }
};

/// Builds a record from an agent response y = prox_{γf}(z), using
/// ∇f^γ(z) = (z - y)/γ.
inline QueryRecord record_from_response(Vec z, Vec y, double env_value, double gamma) {
    if (!(gamma > 0)) throw std::invalid_argument("query record: gamma must be positive");
    require_dim(y.size(), z.size(), "query response");
    Vec grad = (z - y) / gamma;
    return QueryRecord{std::move(z), std::move(y), std::move(grad), env_value, gamma};
}

/// Solves the agent's prox at z and packages the answer, including
/// f^γ(z) = f(p) + ‖p - z‖²/(2γ).
inline QueryRecord make_query_record(const ProximableFunction& f, const Vec& z, double gamma) {
    Vec p = prox(f, z, gamma);
    const ExtendedReal fp = eval(f, p);
    if (fp.is_infinite()) throw std::logic_error("prox output outside dom f");
    const double env = fp.value() + (p - z).squaredNorm() / (2.0 * gamma);
    return record_from_response(z, std::move(p), env, gamma);
}

inline double moreau_envelope(const ProximableFunction& f, const Vec& z, double gamma) {
    return make_query_record(f, z, gamma).env_value;
}

inline Vec envelope_gradient(const ProximableFunction& f, const Vec& z, double gamma) {
    return (z - prox(f, z, gamma)) / gamma;
}

/// f̄^γ(z; rec.z): the quadratic upper bound on f^γ anchored at a query.
inline double quadratic_upper_bound(const QueryRecord& rec, const Vec& z) {
    require_dim(z.size(), rec.dim(), "upper bound point");
    const Vec d = z - rec.z;
    return rec.env_value + rec.grad.dot(d) + d.squaredNorm() / (2.0 * rec.gamma);
}

/// Center/radius form of one co-coercivity constraint.
struct GradientBall {
    Vec center;
    double radius = 0.0;

    /// Distance outside the ball (0 inside).
    double violation(const Vec& g) const { return std::max(0.0, (g - center).norm() - radius); }

    bool contains(const Vec& g, double tol = kMembershipTol) const {
        return (g - center).norm() <= radius + tol;
    }

    Vec project(const Vec& g) const {
        const Vec d = g - center;
        const double n = d.norm();
        if (n <= radius) return g;
        return center + (radius / n) * d;
    }
};

/// Ĝ(v; rec.z) = {g : γ‖g - ∇₁‖² - ⟨g - ∇₁, v - z₁⟩ ≤ 0} completed to a ball:
/// center ∇₁ + (v - z₁)/(2γ), radius ‖v - z₁‖/(2γ).
inline GradientBall cocoercive_ball(const QueryRecord& rec, const Vec& v) {
    require_dim(v.size(), rec.dim(), "point of interest");
    const Vec d = v - rec.z;
    return GradientBall{rec.grad + d / (2.0 * rec.gamma), d.norm() / (2.0 * rec.gamma)};
}

/// Left-hand side of the co-coercivity inequality; g ∈ Ĝ(v; rec.z) iff <= 0.
inline double cocoercive_residual(const QueryRecord& rec, const Vec& v, const Vec& g) {
    const Vec dg = g - rec.grad;
    return rec.gamma * dg.squaredNorm() - dg.dot(v - rec.z);
}

}  // namespace proxest
