#pragma once

// Analysis-only set constructions. Each takes the TRUE envelope value at the
// point of interest as an explicit argument, which the coordinator never has;
// they exist to check the computable sets in envelope.hpp against the sharper
// ε-subdifferential ones.

#include <proxest/envelope.hpp>

#include <stdexcept>

namespace proxest::analysis {

/// ε*(v; z₁) = f̄^γ(v; z₁) - f^γ(v). Throws if the bound is violated by
/// more than kMembershipTol (a broken envelope).
inline double epsilon_star(const QueryRecord& rec, const Vec& v, double env_at_v) {
    const double eps = quadratic_upper_bound(rec, v) - env_at_v;
    if (eps < -kMembershipTol)
        throw std::logic_error("epsilon_star: quadratic upper bound below the envelope");
    return std::max(0.0, eps);
}

/// Left-hand side of the ε-subdifferential ball of f̄^γ(·; z₁) at v:
/// (γ/2)‖g - ∇₁‖² - ⟨g - ∇₁, v - z₁⟩ + ‖z₁ - v‖²/(2γ).
inline double epsilon_subdifferential_lhs(const QueryRecord& rec, const Vec& v, const Vec& g) {
    const Vec dg = g - rec.grad;
    const Vec dv = v - rec.z;
    return 0.5 * rec.gamma * dg.squaredNorm() - dg.dot(dv) + dv.squaredNorm() / (2.0 * rec.gamma);
}

/// g ∈ ∂_ε f̄^γ(v; z₁) for an arbitrary slack ε.
inline bool epsilon_subdifferential_contains(const QueryRecord& rec, const Vec& v, const Vec& g,
                                             double eps) {
    return epsilon_subdifferential_lhs(rec, v, g) <= eps + kMembershipTol;
}

/// Membership in the smallest set of the family, G(v; z₁):
/// (γ/2)‖g - ∇₁‖² - ⟨g, v - z₁⟩ ≤ f^γ(z₁) - f^γ(v).
inline bool exact_set_contains(const QueryRecord& rec, const Vec& v, double env_at_v, const Vec& g) {
    require_dim(g.size(), rec.dim(), "gradient candidate");
    const double lhs = 0.5 * rec.gamma * (g - rec.grad).squaredNorm() - g.dot(v - rec.z);
    return lhs <= rec.env_value - env_at_v + kMembershipTol;
}

}  // namespace proxest::analysis
