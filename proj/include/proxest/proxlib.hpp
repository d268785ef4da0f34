#pragma once

// Closed-form proximal operators for the function families used by agents
// and coordinators: indicators of boxes, balls and affine sets, convex
// quadratics, separable max-of-affine costs over a box, and a
// scaled/shifted/tilted composite of any of these.

#include <proxest/core.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <utility>
#include <variant>
#include <vector>

namespace proxest {

/// One affine piece `slope * x + intercept` of a max-type cost.
struct AffinePiece {
    double slope;
    double intercept;
};

struct Interval {
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Upper envelope of a set of lines: slopes strictly increasing, breakpoints[j]
/// is where segment j hands over to segment j+1.
struct ConvexPiecewiseLinear {
    std::vector<double> slopes;
    std::vector<double> intercepts;
    std::vector<double> breakpoints;

    double operator()(double x) const {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < slopes.size(); ++j)
            best = std::max(best, slopes[j] * x + intercepts[j]);
        return best;
    }
};

inline ConvexPiecewiseLinear upper_envelope(std::span<const AffinePiece> pieces) {
    if (pieces.empty()) throw ConfigError("piecewise-linear cost needs at least one piece");
    std::vector<AffinePiece> sorted(pieces.begin(), pieces.end());
    for (const auto& p : sorted) {
        if (!std::isfinite(p.slope) || !std::isfinite(p.intercept))
            throw ConfigError("piecewise-linear cost has a non-finite piece");
    }
    std::sort(sorted.begin(), sorted.end(), [](const AffinePiece& a, const AffinePiece& b) {
        return a.slope < b.slope || (a.slope == b.slope && a.intercept > b.intercept);
    });

    auto cross = [](const AffinePiece& a, const AffinePiece& b) {
        return (a.intercept - b.intercept) / (b.slope - a.slope);
    };

    std::vector<AffinePiece> hull;
    for (const auto& p : sorted) {
        if (!hull.empty() && hull.back().slope == p.slope) continue;  // dominated
        while (hull.size() >= 2 &&
               cross(hull[hull.size() - 2], p) <= cross(hull[hull.size() - 2], hull.back()))
            hull.pop_back();
        hull.push_back(p);
    }

    ConvexPiecewiseLinear out;
    for (std::size_t j = 0; j < hull.size(); ++j) {
        out.slopes.push_back(hull[j].slope);
        out.intercepts.push_back(hull[j].intercept);
        if (j + 1 < hull.size()) out.breakpoints.push_back(cross(hull[j], hull[j + 1]));
    }
    return out;
}

/// Solves 0 ∈ ∂φ(x) + (x - z)/γ over R for a convex max-of-affines φ.
/// x + γ∂φ(x) is monotone, so the first segment whose candidate does not
/// overshoot its right breakpoint contains the answer (or its left kink does).
inline double prox_envelope_unconstrained(const ConvexPiecewiseLinear& f, double z, double gamma) {
    const std::size_t segments = f.slopes.size();
    for (std::size_t j = 0; j + 1 < segments; ++j) {
        const double x = z - gamma * f.slopes[j];
        if (x <= f.breakpoints[j]) {
            if (j == 0 || x > f.breakpoints[j - 1]) return x;
            return f.breakpoints[j - 1];
        }
    }
    const double x = z - gamma * f.slopes.back();
    if (segments == 1 || x > f.breakpoints.back()) return x;
    return f.breakpoints.back();
}

}  // namespace detail

/// Exact prox of max_m(a_m x + b_m) + δ_[l,u] at z with step γ.
///
/// The objective is strictly convex in one variable, so the constrained
/// minimizer is the clamp of the unconstrained one.
inline double prox_piecewise_linear_1d(std::span<const AffinePiece> pieces, Interval box, double z,
                                       double gamma) {
    if (!(gamma > 0)) throw std::invalid_argument("prox: gamma must be positive");
    if (box.lower > box.upper) throw ConfigError("piecewise-linear prox: lower > upper");
    const auto env = detail::upper_envelope(pieces);
    return std::clamp(detail::prox_envelope_unconstrained(env, z, gamma), box.lower, box.upper);
}

class ProximableFunction;

// ---------------------------------------------------------------------------
// Function families
// ---------------------------------------------------------------------------

struct BoxIndicator {
    Vec lower;
    Vec upper;
};

struct BallIndicator {
    Vec center;
    double radius;
};

/// {x : A x = b}. The block-sum form {x = (x_1..x_N) : Σ x_i = total} is kept
/// separately so its projection is the closed-form de-meaning.
struct AffineSetIndicator {
    Mat A;
    Vec b;
    Eigen::LDLT<Mat> gram;  // factorization of A Aᵀ, built once

    std::size_t blocks = 0;  // > 0 selects the block-sum form
    Vec total;
};

/// ½ xᵀQx + qᵀx with Q symmetric PSD. Q = V diag(d) Vᵀ is cached so the prox
/// (I + γQ)⁻¹(z - γq) is available for every γ without refactoring.
struct Quadratic {
    Mat Q;
    Vec q;
    bool diagonal = false;
    Vec eigenvalues;
    Mat eigenvectors;
};

/// Σ_t max_m(a_tm x_t + b_tm) + δ(x | [l, u]).
struct SeparablePiecewiseLinearBox {
    std::vector<std::vector<AffinePiece>> pieces;
    std::vector<detail::ConvexPiecewiseLinear> envelopes;
    Vec lower;
    Vec upper;
};

/// scale · f(x - shift) + ⟨tilt, x⟩.
struct Composite {
    std::shared_ptr<const ProximableFunction> inner;
    double scale = 1.0;
    Vec shift;
    Vec tilt;
};

enum class FunctionKind {
    box_indicator,
    ball_indicator,
    affine_set_indicator,
    quadratic,
    separable_piecewise_linear_box,
    composite,
};

/// Closed proper convex function with a computable prox. Immutable once built;
/// all validation happens in the factories.
class ProximableFunction {
  public:
    using Repr = std::variant<BoxIndicator, BallIndicator, AffineSetIndicator, Quadratic,
                              SeparablePiecewiseLinearBox, Composite>;

    static ProximableFunction box(Vec lower, Vec upper) {
        require_dim(upper.size(), lower.size(), "box upper bound");
        for (Eigen::Index i = 0; i < lower.size(); ++i) {
            if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i])
                throw ConfigError("box: requires lower <= upper elementwise");
        }
        return ProximableFunction(BoxIndicator{std::move(lower), std::move(upper)},
                                  FunctionKind::box_indicator);
    }

    static ProximableFunction ball(Vec center, double radius) {
        if (!(radius >= 0) || !std::isfinite(radius)) throw ConfigError("ball: radius must be >= 0");
        return ProximableFunction(BallIndicator{std::move(center), radius},
                                  FunctionKind::ball_indicator);
    }

    static ProximableFunction affine_set(Mat A, Vec b) {
        require_dim(b.size(), A.rows(), "affine set right-hand side");
        AffineSetIndicator s;
        s.gram.compute(A * A.transpose());
        if (s.gram.info() != Eigen::Success || !s.gram.isPositive() ||
            (s.gram.vectorD().array().abs() < 1e-12).any())
            throw ConfigError("affine set: A must have full row rank");
        s.A = std::move(A);
        s.b = std::move(b);
        return ProximableFunction(std::move(s), FunctionKind::affine_set_indicator);
    }

    /// {x = (x_1, ..., x_N) : Σ_i x_i = total}, each x_i of size total.size().
    static ProximableFunction block_sum(std::size_t blocks, Vec total) {
        if (blocks == 0) throw ConfigError("block_sum: needs at least one block");
        AffineSetIndicator s;
        s.blocks = blocks;
        s.total = std::move(total);
        return ProximableFunction(std::move(s), FunctionKind::affine_set_indicator);
    }

    static ProximableFunction quadratic(Mat Q, Vec q) {
        if (Q.rows() != Q.cols()) throw ConfigError("quadratic: Q must be square");
        require_dim(q.size(), Q.rows(), "quadratic linear term");
        const double scale = std::max(1.0, Q.cwiseAbs().maxCoeff());
        if (Q.size() > 0 && (Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw ConfigError("quadratic: Q must be symmetric");
        Quadratic f;
        Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (Q + Q.transpose()));
        if (eig.info() != Eigen::Success) throw ConfigError("quadratic: eigendecomposition failed");
        if (Q.rows() > 0 && eig.eigenvalues().minCoeff() < -1e-12 * scale)
            throw ConfigError("quadratic: Q must be positive semidefinite");
        f.eigenvalues = eig.eigenvalues().cwiseMax(0.0);
        f.eigenvectors = eig.eigenvectors();
        f.Q = std::move(Q);
        f.q = std::move(q);
        return ProximableFunction(std::move(f), FunctionKind::quadratic);
    }

    static ProximableFunction diagonal_quadratic(Vec d, Vec q) {
        require_dim(q.size(), d.size(), "quadratic linear term");
        if ((d.array() < 0).any() || d.hasNaN()) throw ConfigError("quadratic: diagonal must be >= 0");
        Quadratic f;
        f.diagonal = true;
        f.eigenvalues = d;
        f.Q = d.asDiagonal();
        f.q = std::move(q);
        return ProximableFunction(std::move(f), FunctionKind::quadratic);
    }

    static ProximableFunction piecewise_linear(std::vector<std::vector<AffinePiece>> pieces, Vec lower,
                                               Vec upper) {
        require_dim(lower.size(), static_cast<Eigen::Index>(pieces.size()), "piecewise-linear lower bound");
        require_dim(upper.size(), lower.size(), "piecewise-linear upper bound");
        SeparablePiecewiseLinearBox f;
        for (Eigen::Index t = 0; t < lower.size(); ++t) {
            if (std::isnan(lower[t]) || std::isnan(upper[t]) || lower[t] > upper[t])
                throw ConfigError("piecewise-linear: requires lower <= upper elementwise");
            f.envelopes.push_back(detail::upper_envelope(pieces[static_cast<std::size_t>(t)]));
        }
        f.pieces = std::move(pieces);
        f.lower = std::move(lower);
        f.upper = std::move(upper);
        return ProximableFunction(std::move(f), FunctionKind::separable_piecewise_linear_box);
    }

    static ProximableFunction composite(ProximableFunction inner, double scale, Vec shift, Vec tilt) {
        if (!(scale > 0) || !std::isfinite(scale)) throw ConfigError("composite: scale must be positive");
        const auto n = static_cast<Eigen::Index>(inner.dim());
        require_dim(shift.size(), n, "composite shift");
        require_dim(tilt.size(), n, "composite tilt");
        Composite c{std::make_shared<const ProximableFunction>(std::move(inner)), scale,
                    std::move(shift), std::move(tilt)};
        return ProximableFunction(std::move(c), FunctionKind::composite);
    }

    FunctionKind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }
    const Repr& repr() const { return repr_; }

  private:
    ProximableFunction(Repr r, FunctionKind k) : repr_(std::move(r)), kind_(k) {
        dim_ = std::visit(
            [](const auto& f) -> std::size_t {
                using T = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<T, BoxIndicator>) return f.lower.size();
                else if constexpr (std::is_same_v<T, BallIndicator>) return f.center.size();
                else if constexpr (std::is_same_v<T, AffineSetIndicator>)
                    return f.blocks > 0 ? f.blocks * f.total.size() : f.A.cols();
                else if constexpr (std::is_same_v<T, Quadratic>) return f.q.size();
                else if constexpr (std::is_same_v<T, SeparablePiecewiseLinearBox>) return f.lower.size();
                else return f.inner->dim();
            },
            repr_);
    }

    Repr repr_;
    FunctionKind kind_;
    std::size_t dim_ = 0;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// prox_{γf}(z) = argmin_x f(x) + ‖x - z‖²/(2γ).
inline Vec prox(const ProximableFunction& f, const Vec& z, double gamma) {
    if (!(gamma > 0)) throw std::invalid_argument("prox: gamma must be positive");
    require_dim(z.size(), static_cast<Eigen::Index>(f.dim()), "prox argument");

    return std::visit(
        [&](const auto& g) -> Vec {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, BoxIndicator>) {
                return z.cwiseMax(g.lower).cwiseMin(g.upper);
            } else if constexpr (std::is_same_v<T, BallIndicator>) {
                const Vec d = z - g.center;
                const double n = d.norm();
                if (n <= g.radius) return z;
                return g.center + (g.radius / n) * d;
            } else if constexpr (std::is_same_v<T, AffineSetIndicator>) {
                if (g.blocks > 0) {
                    const auto T_ = g.total.size();
                    const auto N = static_cast<Eigen::Index>(g.blocks);
                    Vec mean = Vec::Zero(T_);
                    for (Eigen::Index i = 0; i < N; ++i) mean += z.segment(i * T_, T_);
                    mean /= static_cast<double>(N);
                    const Vec shift = g.total / static_cast<double>(N) - mean;
                    Vec out = z;
                    for (Eigen::Index i = 0; i < N; ++i) out.segment(i * T_, T_) += shift;
                    return out;
                }
                return z - g.A.transpose() * g.gram.solve(g.A * z - g.b);
            } else if constexpr (std::is_same_v<T, Quadratic>) {
                const Vec rhs = z - gamma * g.q;
                if (g.diagonal) return rhs.cwiseQuotient((1.0 + gamma * g.eigenvalues.array()).matrix());
                const Vec w = g.eigenvectors.transpose() * rhs;
                return g.eigenvectors * w.cwiseQuotient((1.0 + gamma * g.eigenvalues.array()).matrix());
            } else if constexpr (std::is_same_v<T, SeparablePiecewiseLinearBox>) {
                Vec out(z.size());
                for (Eigen::Index t = 0; t < z.size(); ++t) {
                    const double x = detail::prox_envelope_unconstrained(
                        g.envelopes[static_cast<std::size_t>(t)], z[t], gamma);
                    out[t] = std::clamp(x, g.lower[t], g.upper[t]);
                }
                return out;
            } else {
                // u = x - shift: scale·f(u) + ⟨tilt, u⟩ + ‖u - (z - shift)‖²/(2γ)
                return g.shift + prox(*g.inner, z - g.shift - gamma * g.tilt, gamma * g.scale);
            }
        },
        f.repr());
}

/// f(x), +inf outside indicator domains (membership tolerance kMembershipTol).
inline ExtendedReal eval(const ProximableFunction& f, const Vec& x) {
    require_dim(x.size(), static_cast<Eigen::Index>(f.dim()), "eval argument");

    return std::visit(
        [&](const auto& g) -> ExtendedReal {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, BoxIndicator>) {
                const bool inside = ((x - g.lower).array() >= -kMembershipTol).all() &&
                                    ((g.upper - x).array() >= -kMembershipTol).all();
                return inside ? ExtendedReal::finite(0.0) : ExtendedReal::infinity();
            } else if constexpr (std::is_same_v<T, BallIndicator>) {
                return (x - g.center).norm() <= g.radius + kMembershipTol ? ExtendedReal::finite(0.0)
                                                                          : ExtendedReal::infinity();
            } else if constexpr (std::is_same_v<T, AffineSetIndicator>) {
                double violation = 0.0;
                if (g.blocks > 0) {
                    const auto T_ = g.total.size();
                    Vec sum = -g.total;
                    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(g.blocks); ++i)
                        sum += x.segment(i * T_, T_);
                    violation = sum.size() ? sum.cwiseAbs().maxCoeff() : 0.0;
                } else {
                    const Vec res = g.A * x - g.b;
                    violation = res.size() ? res.cwiseAbs().maxCoeff() : 0.0;
                }
                return violation <= kMembershipTol ? ExtendedReal::finite(0.0) : ExtendedReal::infinity();
            } else if constexpr (std::is_same_v<T, Quadratic>) {
                return ExtendedReal::finite(0.5 * x.dot(g.Q * x) + g.q.dot(x));
            } else if constexpr (std::is_same_v<T, SeparablePiecewiseLinearBox>) {
                double total = 0.0;
                for (Eigen::Index t = 0; t < x.size(); ++t) {
                    if (x[t] < g.lower[t] - kMembershipTol || x[t] > g.upper[t] + kMembershipTol)
                        return ExtendedReal::infinity();
                    total += g.envelopes[static_cast<std::size_t>(t)](x[t]);
                }
                return ExtendedReal::finite(total);
            } else {
                return g.scale * eval(*g.inner, x - g.shift) + g.tilt.dot(x);
            }
        },
        f.repr());
}

/// prox_{ρf*}(x) through the Moreau identity; f* is never formed.
inline Vec conjugate_prox(const ProximableFunction& f, const Vec& x, double rho) {
    if (!(rho > 0)) throw std::invalid_argument("conjugate_prox: rho must be positive");
    return x - rho * prox(f, x / rho, 1.0 / rho);
}

/// refl_{γf} = 2 prox_{γf} - I.
inline Vec reflect(const ProximableFunction& f, const Vec& z, double gamma) {
    return 2.0 * prox(f, z, gamma) - z;
}

}  // namespace proxest
