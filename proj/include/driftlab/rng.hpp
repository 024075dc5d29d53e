#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace driftlab {

// Philox4x32-10 counter-based generator (Salmon et al. 2011 constants).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key);

// Mixes a list of identifiers into one 64-bit stream id (splitmix64 finalizer chain).
std::uint64_t derive_stream(std::initializer_list<std::uint64_t> ids);

/*!
 * Sequential view of one Philox stream. The counter layout is
 * (position lo, position hi, stream lo, stream hi) under key = seed, so any
 * (seed, stream, position) triple is reachable without generating the prefix.
 */
class CounterRng {
  public:
    CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t position = 0);

    std::uint32_t next_u32();
    std::uint64_t next_u64();
    // Uniform on the open interval (0, 1) with 53 random bits.
    double uniform();
    // Standard normal by the Box-Muller transform; pairs are cached.
    double normal();

    std::uint64_t position() const { return position_; }

  private:
    void refill();

    PhiloxKey key_;
    std::uint64_t stream_;
    std::uint64_t position_;
    PhiloxCounter block_{};
    int used_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace driftlab
