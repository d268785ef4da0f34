#pragma once

// Shared random instance generators and independent reference solvers for
// the test suites. Nothing here calls into the library's prox code.

#include <proxest/envelope.hpp>
#include <proxest/proxlib.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace proxest::testing {

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }

    Vec normal_vec(Eigen::Index n, double scale = 1.0) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * normal();
        return v;
    }
    Vec uniform_vec(Eigen::Index n, double lo, double hi) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
        return v;
    }
    Mat normal_mat(Eigen::Index r, Eigen::Index c) {
        Mat m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal();
        return m;
    }

  private:
    std::mt19937_64 gen_;
};

/// A named random function.
struct Sample {
    std::string name;
    ProximableFunction f;
};

inline ProximableFunction random_box(Rng& rng, Eigen::Index n) {
    Vec lo = rng.uniform_vec(n, -2.0, 0.5);
    Vec hi = lo + rng.uniform_vec(n, 0.0, 2.5);
    return ProximableFunction::box(lo, hi);
}

inline ProximableFunction random_ball(Rng& rng, Eigen::Index n) {
    return ProximableFunction::ball(rng.normal_vec(n), rng.uniform(0.1, 2.0));
}

inline ProximableFunction random_dense_quadratic(Rng& rng, Eigen::Index n, bool definite = false) {
    const Mat B = rng.normal_mat(n, std::max<Eigen::Index>(1, n - 1));
    Mat Q = B * B.transpose();
    if (definite) Q += 0.5 * Mat::Identity(n, n);
    return ProximableFunction::quadratic(Q, rng.normal_vec(n));
}

inline ProximableFunction random_diagonal_quadratic(Rng& rng, Eigen::Index n) {
    return ProximableFunction::diagonal_quadratic(rng.uniform_vec(n, 0.0, 3.0), rng.normal_vec(n));
}

/// Σ_t |x_t| scaled, i.e. the absolute-value kind.
inline ProximableFunction abs_value(Eigen::Index n, double weight = 1.0) {
    std::vector<std::vector<AffinePiece>> pieces(static_cast<std::size_t>(n),
                                                 {{weight, 0.0}, {-weight, 0.0}});
    const double inf = std::numeric_limits<double>::infinity();
    return ProximableFunction::piecewise_linear(std::move(pieces), Vec::Constant(n, -inf), Vec::Constant(n, inf));
}

inline std::vector<AffinePiece> random_pieces(Rng& rng, int count) {
    std::vector<AffinePiece> p;
    for (int m = 0; m < count; ++m) p.push_back({rng.uniform(-3.0, 3.0), rng.uniform(-2.0, 2.0)});
    return p;
}

inline ProximableFunction random_piecewise(Rng& rng, Eigen::Index n) {
    std::vector<std::vector<AffinePiece>> pieces;
    for (Eigen::Index t = 0; t < n; ++t) pieces.push_back(random_pieces(rng, rng.integer(1, 4)));
    Vec lo = rng.uniform_vec(n, -3.0, 0.0);
    Vec hi = lo + rng.uniform_vec(n, 0.0, 4.0);
    return ProximableFunction::piecewise_linear(std::move(pieces), lo, hi);
}

inline ProximableFunction random_affine_set(Rng& rng, Eigen::Index n) {
    const Eigen::Index m = std::max<Eigen::Index>(1, n / 2);
    return ProximableFunction::affine_set(rng.normal_mat(m, n), rng.normal_vec(m));
}

inline ProximableFunction random_composite(Rng& rng, Eigen::Index n) {
    return ProximableFunction::composite(random_piecewise(rng, n), rng.uniform(0.2, 3.0), rng.normal_vec(n),
                                         rng.normal_vec(n));
}

/// One instance of every kind; n must be even (block_sum uses two halves).
inline std::vector<Sample> random_functions(Rng& rng, Eigen::Index n) {
    return {
        {"box", random_box(rng, n)},
        {"ball", random_ball(rng, n)},
        {"affine_set", random_affine_set(rng, n)},
        {"block_sum", ProximableFunction::block_sum(2, rng.normal_vec(n / 2))},
        {"dense_quadratic", random_dense_quadratic(rng, n)},
        {"diagonal_quadratic", random_diagonal_quadratic(rng, n)},
        {"abs", abs_value(n, rng.uniform(0.2, 2.0))},
        {"piecewise_linear", random_piecewise(rng, n)},
        {"composite", random_composite(rng, n)},
    };
}

/// Reference 1-D prox of max-of-affines + box by candidate enumeration: the
/// minimizer is a smooth stationary point z - γa_m, a kink between two pieces,
/// or a box end. Every candidate is clamped and the best objective wins.
inline double reference_prox_1d(const std::vector<AffinePiece>& pieces, double lo, double hi, double z,
                                double gamma) {
    auto phi = [&](double x) {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& p : pieces) m = std::max(m, p.slope * x + p.intercept);
        return m + (x - z) * (x - z) / (2.0 * gamma);
    };
    std::vector<double> cand;
    for (const auto& p : pieces) cand.push_back(z - gamma * p.slope);
    for (std::size_t a = 0; a < pieces.size(); ++a)
        for (std::size_t b = a + 1; b < pieces.size(); ++b)
            if (pieces[a].slope != pieces[b].slope)
                cand.push_back((pieces[b].intercept - pieces[a].intercept) / (pieces[a].slope - pieces[b].slope));
    if (std::isfinite(lo)) cand.push_back(lo);
    if (std::isfinite(hi)) cand.push_back(hi);
    double best = std::clamp(cand.front(), lo, hi);
    for (double c : cand) {
        const double x = std::clamp(c, lo, hi);
        if (phi(x) < phi(best)) best = x;
    }
    return best;
}

/// Random 2-D balls sharing an interior point: each ball contains `common`
/// with a margin in [0.05, 0.5].
inline std::vector<GradientBall> random_balls_2d(Rng& rng, int count, Vec& common) {
    common = rng.normal_vec(2);
    std::vector<GradientBall> balls;
    for (int j = 0; j < count; ++j) {
        const double radius = rng.uniform(0.3, 2.0);
        const double margin = rng.uniform(0.05, std::min(0.5, radius));
        const double angle = rng.uniform(0.0, 2.0 * 3.141592653589793);
        const double offset = radius - margin;
        Vec center = common;
        center[0] += offset * std::cos(angle);
        center[1] += offset * std::sin(angle);
        balls.push_back({center, radius});
    }
    return balls;
}

inline bool inside_all(const std::vector<GradientBall>& balls, const Vec& g, double tol) {
    for (const auto& b : balls)
        if ((g - b.center).norm() > b.radius + tol) return false;
    return true;
}

/// Exact 2-D projection onto an intersection of balls: at most two
/// constraints are active, so the answer is p, a single-ball projection, or
/// a pairwise circle intersection point.
inline Vec reference_projection_2d(const std::vector<GradientBall>& balls, const Vec& p) {
    std::vector<Vec> cand{p};
    for (const auto& b : balls) cand.push_back(b.project(p));
    for (std::size_t a = 0; a < balls.size(); ++a) {
        for (std::size_t c = a + 1; c < balls.size(); ++c) {
            const Vec d = balls[c].center - balls[a].center;
            const double dist = d.norm();
            const double ra = balls[a].radius, rc = balls[c].radius;
            if (dist == 0.0 || dist > ra + rc || dist < std::abs(ra - rc)) continue;
            const double along = (ra * ra - rc * rc + dist * dist) / (2.0 * dist);
            const double h = std::sqrt(std::max(0.0, ra * ra - along * along));
            const Vec base = balls[a].center + along * d / dist;
            Vec perp(2);
            perp << -d[1] / dist, d[0] / dist;
            cand.push_back(base + h * perp);
            cand.push_back(base - h * perp);
        }
    }
    Vec best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto& c : cand) {
        if (!inside_all(balls, c, 1e-12)) continue;
        const double dist = (c - p).norm();
        if (dist < best_dist) {
            best_dist = dist;
            best = c;
        }
    }
    return best;
}

/// Distance from p along the unit direction u to the first point inside every
/// ball, or +inf if the ray misses the intersection.
inline double ray_entry(const std::vector<GradientBall>& balls, const Vec& p, const Vec& u) {
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (const auto& b : balls) {
        const Vec w = p - b.center;
        const double half_b = u.dot(w);
        const double disc = half_b * half_b - (w.squaredNorm() - b.radius * b.radius);
        if (disc < 0.0) return std::numeric_limits<double>::infinity();
        const double root = std::sqrt(disc);
        lo = std::max(lo, -half_b - root);
        hi = std::min(hi, -half_b + root);
    }
    return lo <= hi ? lo : std::numeric_limits<double>::infinity();
}

/// Grid-refinement projection onto an intersection of 2-D balls. The plane is
/// searched in polar coordinates around p: the radial coordinate of the first
/// feasible point on each ray is exact, and the angular grid is refined around
/// the best ray. The entry radius is quasiconvex in the angle, so the optimum
/// always lies between the neighbours of the best grid angle.
inline Vec grid_projection_2d(const std::vector<GradientBall>& balls, const Vec& p, int coarse = 7200,
                              int fine = 41, int levels = 14) {
    if (inside_all(balls, p, 0.0)) return p;
    auto point = [&](double theta, double r) {
        Vec g(2);
        g << p[0] + r * std::cos(theta), p[1] + r * std::sin(theta);
        return g;
    };
    auto entry = [&](double theta) {
        Vec u(2);
        u << std::cos(theta), std::sin(theta);
        return ray_entry(balls, p, u);
    };
    const double two_pi = 2.0 * 3.141592653589793;
    double lo = 0.0, step = two_pi / coarse;
    int count = coarse;
    double best_theta = 0.0, best_r = std::numeric_limits<double>::infinity();
    for (int level = 0; level <= levels; ++level) {
        for (int i = 0; i < count; ++i) {
            const double theta = lo + i * step;
            const double r = entry(theta);
            if (r < best_r) {
                best_r = r;
                best_theta = theta;
            }
        }
        lo = best_theta - step;
        step = 2.0 * step / (fine - 1);
        count = fine;
    }
    return point(best_theta, best_r);
}

}  // namespace proxest::testing
