#include <random>

#include <gtest/gtest.h>

#include "market_states/geometry.hpp"
#include "test_util.hpp"

using namespace market_states;

namespace {

// Elementwise average over the full dense N x N matrices.
double zeta_oracle(const CorrelationFrame& a, const CorrelationFrame& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.n; ++i) {
        for (std::size_t j = 0; j < a.n; ++j) s += std::abs(a(i, j) - b(i, j));
    }
    return s / static_cast<double>(a.n * a.n);
}

FrameSet random_set(std::mt19937_64& gen, std::size_t count, std::size_t n) {
    FrameSet set;
    set.n = n;
    set.epoch_len = 20;
    set.shift = 1;
    for (std::size_t f = 0; f < count; ++f) {
        set.frames.push_back(ms_test::random_frame(gen, n));
        set.frames.back().tau = Date{static_cast<std::int64_t>(f)};
    }
    return set;
}

}  // namespace

TEST(FrameDistance, HandComputedPair) {
    CorrelationFrame a, b;
    a.n = b.n = 2;
    a.upper = {0.5};
    b.upper = {0.1};
    EXPECT_NEAR(frame_distance(a, b), 0.2, 1e-16);
    EXPECT_EQ(frame_distance(a, a), 0.0);
}

TEST(FrameDistance, MatchesDenseLoopOracle) {
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = ms_test::random_frame(gen, 5);
        const auto b = ms_test::random_frame(gen, 5);
        EXPECT_NEAR(frame_distance(a, b), zeta_oracle(a, b), 1e-15);
    }
    // Larger than one accumulation chunk.
    const auto a = ms_test::random_frame(gen, 60);
    const auto b = ms_test::random_frame(gen, 60);
    EXPECT_NEAR(frame_distance(a, b), zeta_oracle(a, b), 1e-14);
}

TEST(FrameDistance, DimensionMismatch) {
    std::mt19937_64 gen(2);
    EXPECT_THROW(frame_distance(ms_test::random_frame(gen, 4), ms_test::random_frame(gen, 5)), UsageError);
}

TEST(FrameDistance, MetricAxioms) {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = ms_test::random_frame(gen, 6);
        const auto b = ms_test::random_frame(gen, 6);
        const auto c = ms_test::random_frame(gen, 6);
        const double ab = frame_distance(a, b), ba = frame_distance(b, a);
        EXPECT_GE(ab, 0.0);
        EXPECT_EQ(ab, ba);
        EXPECT_LE(frame_distance(a, c), ab + frame_distance(b, c) + 1e-12);
    }
}

TEST(PairwiseDistances, AgreesWithSingleDistanceBitForBit) {
    std::mt19937_64 gen(4);
    const auto set = random_set(gen, 37, 48);  // spans several tiles and chunks
    std::size_t last_done = 0, last_total = 0;
    const auto dist = pairwise_distances(set, [&](std::size_t done, std::size_t total) {
        last_done = done;
        last_total = total;
    });
    EXPECT_EQ(last_done, 37u * 36u / 2u);
    EXPECT_EQ(last_total, 37u * 36u / 2u);
    ASSERT_EQ(dist.size(), 37u);
    for (std::size_t a = 0; a < 37; ++a) {
        EXPECT_EQ(dist(a, a), 0.0);
        EXPECT_EQ(dist.frame_taus[a], set[a].tau);
        for (std::size_t b = 0; b < 37; ++b) {
            EXPECT_EQ(dist(a, b), dist(b, a));
            if (a != b) {
                EXPECT_EQ(dist(a, b), frame_distance(set[a], set[b]));
            }
        }
    }
}

TEST(PairwiseDistances, DuplicateFramesAndPermutation) {
    std::mt19937_64 gen(5);
    auto set = random_set(gen, 6, 7);
    set.frames.push_back(set.frames[2]);
    const auto dist = pairwise_distances(set);
    EXPECT_EQ(dist(2, 6), 0.0);

    std::vector<std::size_t> perm = {3, 0, 6, 1, 5, 2, 4};
    FrameSet shuffled = set;
    for (std::size_t f = 0; f < perm.size(); ++f) shuffled.frames[f] = set.frames[perm[f]];
    const auto pd = pairwise_distances(shuffled);
    for (std::size_t a = 0; a < perm.size(); ++a) {
        for (std::size_t b = 0; b < perm.size(); ++b) EXPECT_EQ(pd(a, b), dist(perm[a], perm[b]));
    }
}

TEST(PairwiseDistances, ThreadCountIndependent) {
    std::mt19937_64 gen(6);
    const auto set = random_set(gen, 40, 12);
    set_thread_count(1);
    const auto a = pairwise_distances(set);
    set_thread_count(3);
    const auto b = pairwise_distances(set);
    set_thread_count(0);
    EXPECT_TRUE(a.distances == b.distances);
}

TEST(PairwiseDistances, PairCountArithmetic) {
    const std::size_t f = 3503;
    std::size_t loop = 0;
    for (std::size_t a = 0; a < f; ++a) loop += f - a - 1;
    EXPECT_EQ(loop, 6133753u);
    EXPECT_EQ(f * (f - 1) / 2, loop);
}

TEST(PairwiseDistances, NeedsTwoFrames) {
    std::mt19937_64 gen(7);
    EXPECT_THROW(pairwise_distances(random_set(gen, 1, 4)), DataError);
}

TEST(PairwiseDistances, StorageRounding) {
    std::mt19937_64 gen(8);
    auto dist = pairwise_distances(random_set(gen, 5, 6));
    const auto before = dist.distances;
    dist.round_to_storage();
    for (Eigen::Index i = 0; i < before.size(); ++i) {
        EXPECT_EQ(dist.distances.data()[i], static_cast<double>(static_cast<float>(before.data()[i])));
        EXPECT_NEAR(dist.distances.data()[i], before.data()[i], 1e-7);
    }
}
