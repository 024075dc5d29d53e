#include "driftlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace driftlab {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo)
{
    std::uint64_t p = std::uint64_t(a) * b;
    hi = std::uint32_t(p >> 32);
    lo = std::uint32_t(p);
}

inline std::uint64_t splitmix(std::uint64_t z)
{
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace

PhiloxCounter philox4x32_10(PhiloxCounter c, PhiloxKey k)
{
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, c[0], hi0, lo0);
        mulhilo(kMul1, c[2], hi1, lo1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
        k[0] += kWeyl0;
        k[1] += kWeyl1;
    }
    return c;
}

std::uint64_t derive_stream(std::initializer_list<std::uint64_t> ids)
{
    std::uint64_t h = 0x243F6A8885A308D3ull;
    for (auto id : ids)
        h = splitmix(h ^ splitmix(id));
    return h;
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t position)
    : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)}, stream_(stream), position_(position)
{
}

void CounterRng::refill()
{
    PhiloxCounter ctr{std::uint32_t(position_), std::uint32_t(position_ >> 32),
                      std::uint32_t(stream_), std::uint32_t(stream_ >> 32)};
    block_ = philox4x32_10(ctr, key_);
    ++position_;
    used_ = 0;
}

std::uint32_t CounterRng::next_u32()
{
    if (used_ == 4)
        refill();
    return block_[used_++];
}

std::uint64_t CounterRng::next_u64()
{
    std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
}

double CounterRng::uniform()
{
    return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
}

} // namespace driftlab
