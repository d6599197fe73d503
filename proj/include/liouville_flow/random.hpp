#ifndef LIOUVILLE_FLOW_RANDOM_HPP
#define LIOUVILLE_FLOW_RANDOM_HPP

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

#include <liouville_flow/core.hpp>

namespace liouville_flow
{

// Philox4x32-10 (Salmon et al., Random123). Counter-based, so a (seed, stream,
// index) triple fully determines the output and test vectors carry over to any
// other implementation of the same generator.
using philox_block = std::array<std::uint32_t, 4>;
using philox_key = std::array<std::uint32_t, 2>;

inline philox_block philox4x32_10(philox_block ctr, philox_key key)
{
    constexpr std::uint32_t m0 = 0xD2511F53u;
    constexpr std::uint32_t m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u;
    constexpr std::uint32_t w1 = 0xBB67AE85u;

    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += w0;
            key[1] += w1;
        }
        const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

// FNV-1a, used to turn a stream name into a stream id.
constexpr std::uint64_t stream_id(std::string_view name)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

// Sequential view over one Philox stream. Models UniformRandomBitGenerator.
class counter_rng
{
public:
    using result_type = std::uint64_t;

    counter_rng(std::uint64_t seed, std::uint64_t stream) : m_seed(seed), m_stream(stream) {}
    counter_rng(std::uint64_t seed, std::string_view stream) : counter_rng(seed, stream_id(stream)) {}

    static constexpr result_type min()
    {
        return 0;
    }
    static constexpr result_type max()
    {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()()
    {
        if (m_used == 2) {
            refill();
        }
        const auto hi = static_cast<std::uint64_t>(m_block[2 * m_used]);
        const auto lo = static_cast<std::uint64_t>(m_block[2 * m_used + 1]);
        ++m_used;
        return (hi << 32) | lo;
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform()
    {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi)
    {
        return lo + (hi - lo) * uniform();
    }

    std::uint64_t seed() const
    {
        return m_seed;
    }

private:
    void refill()
    {
        const philox_block ctr{static_cast<std::uint32_t>(m_index), static_cast<std::uint32_t>(m_index >> 32),
                               static_cast<std::uint32_t>(m_stream), static_cast<std::uint32_t>(m_stream >> 32)};
        const philox_key key{static_cast<std::uint32_t>(m_seed), static_cast<std::uint32_t>(m_seed >> 32)};
        m_block = philox4x32_10(ctr, key);
        ++m_index;
        m_used = 0;
    }

    std::uint64_t m_seed;
    std::uint64_t m_stream;
    std::uint64_t m_index = 0;
    philox_block m_block{};
    int m_used = 2;
};

// Uniform draw on the open ball of radius 1/2 by rejection from the cube.
template <typename Rng>
Vector sample_ball(Rng &rng, int d)
{
    Vector y(d);
    for (;;) {
        for (int i = 0; i < d; ++i) {
            y(i) = rng.uniform(-0.5, 0.5);
        }
        if (y.squaredNorm() < 0.25) {
            return y;
        }
    }
}

} // namespace liouville_flow

#endif
