#include <gtest/gtest.h>

#include <set>

#include <liouville_flow/random.hpp>

using namespace liouville_flow;

// Known-answer vectors published with the Random123 library.
TEST(Philox, KnownAnswerZero)
{
    const auto out = philox4x32_10({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out, (philox_block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerOnes)
{
    const auto out = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out, (philox_block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi)
{
    const auto out = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out, (philox_block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(CounterRng, SameSeedSameStream)
{
    counter_rng a(42, "x");
    counter_rng b(42, "x");
    for (int i = 0; i < 100; ++i) {
        ASSERT_EQ(a(), b());
    }
}

TEST(CounterRng, StreamsAndSeedsDiffer)
{
    counter_rng a(42, "x");
    counter_rng b(42, "y");
    counter_rng c(43, "x");
    EXPECT_NE(a(), b());
    EXPECT_NE(counter_rng(42, "x")(), c());
}

TEST(CounterRng, UniformRange)
{
    counter_rng rng(1, "u");
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / 20000, 0.5, 0.01);
}

TEST(CounterRng, NoShortRepeats)
{
    counter_rng rng(9, 0);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        seen.insert(rng());
    }
    EXPECT_EQ(seen.size(), 1000u);
}

TEST(SampleBall, InsideAndCentered)
{
    counter_rng rng(3, "ball");
    Vector mean = Vector::Zero(2);
    for (int i = 0; i < 5000; ++i) {
        const Vector y = sample_ball(rng, 2);
        ASSERT_LT(y.norm(), 0.5);
        mean += y;
    }
    EXPECT_LT((mean / 5000).norm(), 0.01);
}
