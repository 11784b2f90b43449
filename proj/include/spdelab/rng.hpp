#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace spdelab::rng {

/// Philox4x32-10 counter-based bijection (Salmon et al., SC'11).
/// Stateless: the output depends only on (counter, key).
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key);
};

/// What a block of random numbers is used for. Part of the counter, so
/// different purposes never share draws.
enum class Purpose : std::uint16_t {
    increment = 0,     // base Brownian increments, index = step
    bridge = 1,        // Brownian bridge refinement, purpose value 1 + level
    sampler = 64,      // state samplers (condition checks, random tests)
};

/// Standard normal draws addressed by (master_seed, substream, index,
/// purpose, node). Any address can be generated independently, so the
/// sequence seen by a path does not depend on how work is split across
/// threads.
class CounterNormals {
public:
    CounterNormals(std::uint64_t master_seed, std::uint32_t substream);

    std::uint64_t master_seed() const { return seed_; }
    std::uint32_t substream() const { return substream_; }

    /// Fill `out` with iid N(0,1). index < 2^48; purpose_code < 2^16.
    void fill(std::uint64_t index, std::uint16_t purpose_code, std::uint32_t node, std::span<double> out) const;
    void fill(std::uint64_t index, Purpose p, std::uint32_t node, std::span<double> out) const {
        fill(index, static_cast<std::uint16_t>(p), node, out);
    }

    /// Brownian increments over a step of length dt: out_j ~ N(0, dt).
    void increments(std::uint64_t step, double dt, std::span<double> out) const;

    /// Split an increment `parent` over an interval of length h into the two
    /// half-interval increments, conditioned on their sum (Brownian bridge).
    /// `level` >= 1 is the depth of the halves, `node` their parent's position.
    void bridge_split(std::uint64_t step, int level, std::uint32_t node, double h, std::span<const double> parent,
                      std::span<double> left, std::span<double> right) const;

private:
    std::uint64_t seed_;
    std::uint32_t substream_;
};

}  // namespace spdelab::rng
