#include "support.hpp"

#include <proxest/gradset.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace proxest;
using proxest::testing::Rng;

namespace {

Vec scalar(double x) { return Vec::Constant(1, x); }

ProximableFunction half_square() { return ProximableFunction::diagonal_quadratic(scalar(1.0), scalar(0.0)); }

AgentMemory memory_with(const ProximableFunction& f, std::initializer_list<double> zs, double gamma = 1.0) {
    AgentMemory mem(gamma);
    for (double z : zs) mem.record_communication(make_query_record(f, scalar(z), gamma));
    return mem;
}

}  // namespace

// ---------------------------------------------------------------------------
// Memory
// ---------------------------------------------------------------------------

TEST(Memory, AppendsAndEvictsOldestFirst) {
    const auto f = half_square();
    AgentMemory unlimited(1.0);
    unlimited.record_communication(make_query_record(f, scalar(0.0), 1.0));
    EXPECT_EQ(unlimited.size(), 1u);

    AgentMemory one(1.0, 1);
    one.record_communication(make_query_record(f, scalar(1.0), 1.0));
    one.record_communication(make_query_record(f, scalar(2.0), 1.0));
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one.records().front().z[0], 2.0);

    AgentMemory five(1.0, 5);
    for (int i = 0; i < 6; ++i) five.record_communication(make_query_record(f, scalar(i), 1.0));
    ASSERT_EQ(five.size(), 5u);
    EXPECT_EQ(five.records().front().z[0], 1.0);
    EXPECT_EQ(five.records().back().z[0], 5.0);
}

TEST(Memory, RejectsMismatchedRecords) {
    AgentMemory mem(0.5);
    EXPECT_THROW(mem.record_communication(make_query_record(half_square(), scalar(0.0), 1.0)), ConfigError);
    mem.record_communication(make_query_record(half_square(), scalar(0.0), 0.5));
    const auto wide = ProximableFunction::box(Vec::Zero(2), Vec::Ones(2));
    EXPECT_THROW(mem.record_communication(make_query_record(wide, Vec::Zero(2), 0.5)), DimensionError);
    EXPECT_THROW(AgentMemory(0.0), ConfigError);
    EXPECT_THROW(AgentMemory(1.0, 0), ConfigError);
}

// ---------------------------------------------------------------------------
// Anchor selection
// ---------------------------------------------------------------------------

TEST(Anchor, EmptyMemorySignalsCommunication) {
    EXPECT_FALSE(select_anchor(AgentMemory(1.0), scalar(0.0)).has_value());
    EXPECT_FALSE(estimate_gradient(AgentMemory(1.0), scalar(0.0)).has_value());
}

TEST(Anchor, SingleRecord) {
    EXPECT_EQ(select_anchor(memory_with(half_square(), {3.0}), scalar(-1.0)), 0u);
}

TEST(Anchor, PicksTheLargestAffineMinorant) {
    // Minorants at v = 1: 0 + 0·1 = 0 and 4 + 2·(1 - 4) = -2.
    const auto mem = memory_with(half_square(), {0.0, 4.0});
    EXPECT_EQ(mem.records()[1].env_value, 4.0);
    EXPECT_EQ(mem.records()[1].grad[0], 2.0);
    EXPECT_EQ(select_anchor(mem, scalar(1.0)), 0u);
    EXPECT_EQ(select_anchor(mem, scalar(3.5)), 1u);
}

TEST(Anchor, TiesGoToTheLowestIndex) {
    EXPECT_EQ(select_anchor(memory_with(half_square(), {1.0, 1.0}), scalar(2.0)), 0u);
}

TEST(Anchor, NearestPointRuleIgnoresEnvelopeValues) {
    AgentMemory mem(1.0, std::nullopt, AnchorRule::nearest_point);
    for (double z : {0.0, 4.0}) {
        auto rec = make_query_record(half_square(), scalar(z), 1.0);
        rec.env_value = std::numeric_limits<double>::quiet_NaN();
        mem.record_communication(rec);
    }
    EXPECT_EQ(select_anchor(mem, scalar(3.0)), 1u);
    EXPECT_EQ(select_anchor(mem, scalar(1.0)), 0u);
}

TEST(Anchor, LowerBoundRuleNeedsEnvelopeValues) {
    AgentMemory mem(1.0);
    auto rec = make_query_record(half_square(), scalar(0.0), 1.0);
    rec.env_value = std::numeric_limits<double>::quiet_NaN();
    mem.record_communication(rec);
    EXPECT_THROW(select_anchor(mem, scalar(1.0)), ConfigError);
}

// ---------------------------------------------------------------------------
// Projection onto ball intersections
// ---------------------------------------------------------------------------

TEST(Projection, InteriorPointIsReturned) {
    const std::vector<GradientBall> balls{{Vec::Zero(2), 1.0}, {Vec::Ones(2), 2.0}};
    Vec p(2);
    p << 0.5, 0.5;
    EXPECT_EQ(project_onto_intersection(balls, p), p);
}

TEST(Projection, SingleBallClosedForm) {
    const std::vector<GradientBall> balls{{Vec::Zero(2), 1.0}};
    Vec p(2);
    p << 2.0, 0.0;
    EXPECT_TRUE(project_onto_intersection(balls, p).isApprox(Vec::Unit(2, 0)));
}

TEST(Projection, OneDimensionalIntervals) {
    const std::vector<GradientBall> balls{{scalar(1.0), 1.0}, {scalar(2.5), 1.0}};
    EXPECT_NEAR(project_onto_intersection(balls, scalar(0.0))[0], 1.5, 1e-7);
}

TEST(Projection, DisjointBallsAreInconsistent) {
    const std::vector<GradientBall> balls{{scalar(0.0), 1.0}, {scalar(5.0), 1.0}};
    EXPECT_THROW(project_onto_intersection(balls, scalar(2.0), {1e-8, 200}), InconsistentSetError);
    EXPECT_THROW(project_onto_intersection({}, scalar(0.0)), std::invalid_argument);
}

TEST(Projection, MatchesExactTwoDimensionalOracle) {
    Rng rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        Vec common;
        const auto balls = proxest::testing::random_balls_2d(rng, rng.integer(1, 5), common);
        const Vec p = common + rng.normal_vec(2, 2.0);
        const Vec got = project_onto_intersection(balls, p, {1e-10, 20000});
        const Vec want = proxest::testing::reference_projection_2d(balls, p);
        ASSERT_LE((got - want).norm(), 1e-5) << "trial " << trial;
        ASSERT_LE(max_violation(balls, got), 1e-9);
    }
}

TEST(Projection, GridOracleAgreesWithCandidateOracle) {
    Rng rng(32);
    for (int trial = 0; trial < 40; ++trial) {
        Vec common;
        const auto balls = proxest::testing::random_balls_2d(rng, rng.integer(1, 5), common);
        const Vec p = common + rng.normal_vec(2, 2.0);
        const Vec grid = proxest::testing::grid_projection_2d(balls, p);
        const Vec exact = proxest::testing::reference_projection_2d(balls, p);
        ASSERT_LE((grid - exact).norm(), 1e-7) << "trial " << trial;
    }
}

// ---------------------------------------------------------------------------
// Gradient estimates
// ---------------------------------------------------------------------------

TEST(Estimate, StoredPointPinsTheGradient) {
    const auto mem = memory_with(half_square(), {0.0, 2.0, 4.0});
    const auto est = estimate_gradient(mem, scalar(2.0));
    ASSERT_TRUE(est);
    EXPECT_EQ(est->g, mem.records()[1].grad);
    EXPECT_EQ(est->error_bound, 0.0);
}

TEST(Estimate, SingleRecordAnchorOnBoundary) {
    const auto est = estimate_gradient(memory_with(half_square(), {0.0}), scalar(2.0));
    ASSERT_TRUE(est);
    EXPECT_EQ(est->g[0], 0.0);
    EXPECT_FALSE(est->projected);
    EXPECT_DOUBLE_EQ(est->error_bound, 2.0);
}

TEST(Estimate, TwoRecordsCoincidentBalls) {
    const auto mem = memory_with(half_square(), {0.0, 4.0});
    const auto b0 = cocoercive_ball(mem.records()[0], scalar(2.0));
    const auto b1 = cocoercive_ball(mem.records()[1], scalar(2.0));
    EXPECT_EQ(b0.center[0], 1.0);
    EXPECT_EQ(b1.center[0], 1.0);
    EXPECT_EQ(b0.radius, 1.0);
    EXPECT_EQ(b1.radius, 1.0);
    const auto est = estimate_gradient(mem, scalar(2.0));
    ASSERT_TRUE(est);
    EXPECT_EQ(est->anchor_index, 0u);
    EXPECT_EQ(est->g[0], 0.0);
    EXPECT_FALSE(est->projected);
    // The true gradient 1 is interior to both.
    EXPECT_TRUE(b0.contains(envelope_gradient(half_square(), scalar(2.0), 1.0)));
}

TEST(EstimateProperties, FeasibleAndWithinErrorBound) {
    Rng rng(33);
    for (int trial = 0; trial < 400; ++trial) {
        const Eigen::Index n = rng.integer(1, 4);
        const ProximableFunction f = trial % 3 == 0   ? proxest::testing::random_box(rng, n)
                                     : trial % 3 == 1 ? proxest::testing::random_dense_quadratic(rng, n)
                                                      : proxest::testing::random_piecewise(rng, n);
        const double gamma = std::exp(rng.uniform(-2.0, 1.0));
        AgentMemory mem(gamma, trial % 2 ? std::optional<std::size_t>(3) : std::nullopt);
        const int records = rng.integer(1, 8);
        for (int j = 0; j < records; ++j) mem.record_communication(make_query_record(f, rng.normal_vec(n, 2.0), gamma));
        const Vec v = rng.normal_vec(n, 2.0);
        const auto est = estimate_gradient(mem, v);
        ASSERT_TRUE(est);
        const auto balls = gradient_balls(mem, v);
        ASSERT_LE(max_violation(balls, est->g), 1e-6);
        const Vec truth = envelope_gradient(f, v, gamma);
        ASSERT_LE((est->g - truth).norm(), est->error_bound + 1e-9);
        double smallest = std::numeric_limits<double>::infinity();
        for (const auto& rec : mem.records()) smallest = std::min(smallest, (v - rec.z).norm() / gamma);
        ASSERT_NEAR(est->error_bound, smallest, 1e-12 * std::max(1.0, smallest));
    }
}

TEST(EstimateProperties, AddingRecordsShrinksTheFeasibleSet) {
    Rng rng(34);
    for (int trial = 0; trial < 100; ++trial) {
        const auto f = proxest::testing::random_dense_quadratic(rng, 2);
        AgentMemory mem(1.0);
        mem.record_communication(make_query_record(f, rng.normal_vec(2, 2.0), 1.0));
        const Vec v = rng.normal_vec(2, 2.0);
        const auto before = gradient_balls(mem, v);
        mem.record_communication(make_query_record(f, rng.normal_vec(2, 2.0), 1.0));
        const auto after = gradient_balls(mem, v);
        for (int k = 0; k < 200; ++k) {
            const Vec g = before.front().center + rng.normal_vec(2, before.front().radius);
            if (max_violation(after, g) == 0.0) {
                ASSERT_EQ(max_violation(before, g), 0.0);
            }
        }
    }
}
