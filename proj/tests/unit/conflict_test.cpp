#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mtpd/conflict.hpp"
#include "mtpd/error.hpp"

namespace {

using namespace mtpd;

TEST(Similarity, Examples) {
    EXPECT_NEAR(gradient_similarity(2, 3, 1e-12), 6.0 / (6.0 + 1e-12), 1e-15);
    EXPECT_GT(gradient_similarity(2, 3, 1e-12), 0.999999);
    EXPECT_LT(gradient_similarity(2, -3, 1e-12), -0.999999);
    EXPECT_NEAR(gradient_similarity(1e-13, 1.0, 1e-12), 1e-13 / (1e-13 + 1e-12), 1e-15);
    EXPECT_NEAR(gradient_similarity(1e-13, 1.0, 1e-12), 0.0909, 1e-4);
}

TEST(Similarity, SymmetricAndScaleApproach) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double a = n(rng), b = n(rng);
        EXPECT_EQ(gradient_similarity(a, b, 1e-12), gradient_similarity(b, a, 1e-12));
    }
    // |xy| = 1 with eps large enough that the approach is visible.
    const double x = 0.5, y = 2.0, eps = 0.5;
    const double limit = 1.0;
    double prev = std::abs(gradient_similarity(x, y, eps) - limit);
    for (double k : {10.0, 100.0}) {
        const double d = std::abs(gradient_similarity(k * x, k * y, eps) - limit);
        EXPECT_LT(d, prev);
        prev = d;
    }
}

TEST(Penalty, FromSimilarities) {
    const std::vector<double> s{0.9, -0.6, 0.3};
    EXPECT_DOUBLE_EQ(penalty_from_similarities(s), 0.6);
    const std::vector<double> pos{0.1, 0.2, 0.3};
    EXPECT_EQ(penalty_from_similarities(pos), 0.0);
}

TEST(Penalty, VanishingTaskLeavesRemainingPair) {
    const std::vector<std::vector<double>> g{{0.0}, {1.0}, {-1.0}};
    const auto p = conflict_penalty(g, 1e-12);
    EXPECT_NEAR(p[0], 1.0, 1e-11);
    EXPECT_LT(p[0], 1.0);
}

TEST(Penalty, SameSignMeansZeroAndRangeHolds) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        const double s = i % 2 ? 1.0 : -1.0;
        const std::vector<std::vector<double>> same{{s * std::abs(n(rng))}, {s * std::abs(n(rng))}, {s * std::abs(n(rng))}};
        EXPECT_EQ(conflict_penalty(same, 1e-12)[0], 0.0);
        const std::vector<std::vector<double>> any{{n(rng)}, {n(rng)}, {n(rng)}};
        const double p = conflict_penalty(any, 1e-12)[0];
        EXPECT_GE(p, 0.0);
        EXPECT_LT(p, 1.0);
    }
}

TEST(Penalty, Errors) {
    const std::vector<std::vector<double>> one{{1.0}};
    EXPECT_THROW(conflict_penalty(one, 1e-12), ConfigError);
    const std::vector<std::vector<double>> two{{1.0}, {1.0, 2.0}};
    EXPECT_THROW(conflict_penalty(two, 1e-12), DimensionError);
}

TEST(Report, PairsAndRecord) {
    ChannelStatistics s("b2", 2);
    s.avg_grad = {std::vector<double>{1.0, -2.0}, std::vector<double>{-1.0, -1.0}, std::vector<double>{0.5, 3.0}};
    s.sample_count = {1, 1, 1};
    const ConflictReport r = conflict_report(s, 1e-12);
    EXPECT_EQ(r.pairwise_sim.size(), 3u);
    EXPECT_EQ(r.similarity(Task::da, Task::det), r.similarity(Task::det, Task::da));
    EXPECT_NEAR(r.penalty[0], 1.0, 1e-11);
    const ConflictReport back = parse_conflict_record(nlohmann::json::parse(conflict_record(r).dump()));
    EXPECT_EQ(back.layer_id, "b2");
    EXPECT_EQ(back.penalty, r.penalty);
    EXPECT_EQ(back.similarity(Task::lane, Task::da), r.similarity(Task::da, Task::lane));
    EXPECT_EQ(conflict_record(r)["kind"], "conflict");
}

}  // namespace
