#pragma once

// Coordinator-side memory of answered queries per agent and the gradient
// estimator built on it: pick an anchor gradient, then project it onto the
// intersection of co-coercivity balls with Dykstra's algorithm.

#include <proxest/core.hpp>
#include <proxest/envelope.hpp>

#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace proxest {

enum class AnchorRule {
    lower_bound,    // argmax_j f^γ(z_j) + ⟨∇_j, v - z_j⟩ (needs envelope values)
    nearest_point,  // argmin_j ‖v - z_j‖ (envelope values withheld)
};

/// Answered queries for one agent, oldest first. With a limit M, inserting
/// the (M+1)-th record evicts the oldest one.
class AgentMemory {
  public:
    explicit AgentMemory(double gamma, std::optional<std::size_t> limit = std::nullopt,
                         AnchorRule rule = AnchorRule::lower_bound)
        : gamma_(gamma), limit_(limit), rule_(rule) {
        if (!(gamma > 0)) throw ConfigError("agent memory: gamma must be positive");
        if (limit && *limit == 0) throw ConfigError("agent memory: limit must be positive");
    }

    void record_communication(QueryRecord rec) {
        if (rec.gamma != gamma_)
            throw ConfigError("agent memory: record gamma " + std::to_string(rec.gamma) +
                              " does not match memory gamma " + std::to_string(gamma_));
        if (!records_.empty()) require_dim(rec.dim(), records_.front().dim(), "query record");
        records_.push_back(std::move(rec));
        if (limit_ && records_.size() > *limit_) records_.pop_front();
    }

    const std::deque<QueryRecord>& records() const { return records_; }
    bool empty() const { return records_.empty(); }
    std::size_t size() const { return records_.size(); }
    double gamma() const { return gamma_; }
    std::optional<std::size_t> limit() const { return limit_; }
    AnchorRule anchor_rule() const { return rule_; }

  private:
    std::deque<QueryRecord> records_;
    double gamma_;
    std::optional<std::size_t> limit_;
    AnchorRule rule_;
};

struct GradientEstimate {
    Vec g;
    std::size_t anchor_index = 0;
    bool projected = false;  // false when the anchor gradient was already feasible
    double error_bound = 0.0;
};

/// Index of the anchor record for v; nullopt on empty memory (the agent must
/// be queried). Ties go to the lowest index.
inline std::optional<std::size_t> select_anchor(const AgentMemory& mem, const Vec& v) {
    if (mem.empty()) return std::nullopt;
    const auto& recs = mem.records();
    std::size_t best = 0;
    if (mem.anchor_rule() == AnchorRule::lower_bound) {
        double best_value = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < recs.size(); ++j) {
            if (std::isnan(recs[j].env_value))
                throw ConfigError("lower-bound anchor rule needs envelope values from agents");
            const double value = recs[j].env_value + recs[j].grad.dot(v - recs[j].z);
            if (value > best_value) {
                best_value = value;
                best = j;
            }
        }
    } else {
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < recs.size(); ++j) {
            const double dist = (v - recs[j].z).squaredNorm();
            if (dist < best_dist) {
                best_dist = dist;
                best = j;
            }
        }
    }
    return best;
}

struct DykstraOptions {
    double tol = 1e-8;
    int max_iter = 5000;
};

inline double max_violation(std::span<const GradientBall> balls, const Vec& g) {
    double worst = 0.0;
    for (const auto& b : balls) worst = std::max(worst, b.violation(g));
    return worst;
}

/// Euclidean projection of p onto the intersection of balls by Dykstra's
/// cyclic algorithm. Stops when a full sweep moves both the iterate and the
/// correction terms less than tol and the point is feasible within 10·tol.
/// The iterate alone can sit still for a sweep while the corrections are
/// still far from converged.
inline Vec project_onto_intersection(std::span<const GradientBall> balls, const Vec& p,
                                     const DykstraOptions& opts = {}) {
    if (balls.empty()) throw std::invalid_argument("project_onto_intersection: no balls");
    for (const auto& b : balls) require_dim(b.center.size(), p.size(), "ball center");
    if (max_violation(balls, p) == 0.0) return p;
    if (balls.size() == 1) return balls.front().project(p);

    const double feas_tol = 10.0 * opts.tol;
    const Eigen::Index n = p.size();
    Vec x = p, sweep_start(n), shifted(n), updated(n);
    Mat correction = Mat::Zero(n, static_cast<Eigen::Index>(balls.size()));
    for (int it = 0; it < opts.max_iter; ++it) {
        sweep_start = x;
        double correction_change = 0.0;
        for (std::size_t j = 0; j < balls.size(); ++j) {
            const auto col = static_cast<Eigen::Index>(j);
            const auto& b = balls[j];
            shifted = x + correction.col(col);
            const double dist = (shifted - b.center).norm();
            if (dist <= b.radius) {
                x = shifted;
                updated.setZero();
            } else {
                x = b.center + (b.radius / dist) * (shifted - b.center);
                updated = shifted - x;
            }
            correction_change += (updated - correction.col(col)).squaredNorm();
            correction.col(col) = updated;
        }
        if ((x - sweep_start).norm() < opts.tol && std::sqrt(correction_change) < opts.tol &&
            max_violation(balls, x) <= feas_tol)
            return x;
    }
    if (max_violation(balls, x) <= feas_tol) return x;
    throw InconsistentSetError("Dykstra: no feasible point after " + std::to_string(opts.max_iter) +
                               " sweeps (violation " + std::to_string(max_violation(balls, x)) + ")");
}

inline std::vector<GradientBall> gradient_balls(const AgentMemory& mem, const Vec& v) {
    std::vector<GradientBall> balls;
    balls.reserve(mem.size());
    for (const auto& rec : mem.records()) balls.push_back(cocoercive_ball(rec, v));
    return balls;
}

/// Estimate of ∇f^γ(v) from the retained queries; nullopt on empty memory.
/// error_bound is the diameter of the smallest ball, min_j ‖v - z_j‖/γ.
inline std::optional<GradientEstimate> estimate_gradient(const AgentMemory& mem, const Vec& v,
                                                         const DykstraOptions& opts = {}) {
    const auto anchor = select_anchor(mem, v);
    if (!anchor) return std::nullopt;

    const auto balls = gradient_balls(mem, v);
    GradientEstimate est;
    est.anchor_index = *anchor;
    est.error_bound = std::numeric_limits<double>::infinity();
    for (const auto& b : balls) est.error_bound = std::min(est.error_bound, 2.0 * b.radius);

    const Vec& g0 = mem.records()[*anchor].grad;
    if (max_violation(balls, g0) <= kMembershipTol) {
        est.g = g0;
        est.projected = false;
    } else {
        est.g = project_onto_intersection(balls, g0, opts);
        est.projected = true;
    }
    // A zero-radius ball pins the answer; return its center exactly.
    for (const auto& b : balls) {
        if (b.radius == 0.0) {
            est.g = b.center;
            break;
        }
    }
    return est;
}

}  // namespace proxest
