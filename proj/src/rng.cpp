#include "spdelab/rng.hpp"

#include "spdelab/errors.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace spdelab::rng {

namespace {

constexpr std::uint32_t kMulA = 0xD2511F53u;
constexpr std::uint32_t kMulB = 0xCD9E8D57u;
constexpr std::uint32_t kWeylA = 0x9E3779B9u;
constexpr std::uint32_t kWeylB = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

inline double unit_open_left(std::uint32_t hi, std::uint32_t lo) {
    // (0, 1]
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32 | lo) >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

inline double unit_closed_left(std::uint32_t hi, std::uint32_t lo) {
    // [0, 1)
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32 | lo) >> 11;
    return static_cast<double>(bits) * 0x1.0p-53;
}

}  // namespace

Philox4x32::Counter Philox4x32::generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMulA, ctr[0], hi0, lo0);
        mulhilo(kMulB, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeylA;
        key[1] += kWeylB;
    }
    return ctr;
}

CounterNormals::CounterNormals(std::uint64_t master_seed, std::uint32_t substream)
    : seed_(master_seed), substream_(substream) {}

void CounterNormals::fill(std::uint64_t index, std::uint16_t purpose_code, std::uint32_t node,
                          std::span<double> out) const {
    if (index >> 48) throw ParameterError("random index exceeds 48 bits");
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
    const auto blocks = static_cast<std::uint32_t>((out.size() + 1) / 2);
    const std::uint32_t idx_lo = static_cast<std::uint32_t>(index);
    const std::uint32_t idx_hi = static_cast<std::uint32_t>(index >> 32) | (static_cast<std::uint32_t>(purpose_code) << 16);
    for (std::uint32_t b = 0; b < blocks; ++b) {
        const auto r = Philox4x32::generate({node * blocks + b, idx_lo, idx_hi, substream_}, key);
        // Box-Muller on two 53-bit uniforms.
        const double u1 = unit_open_left(r[0], r[1]);
        const double u2 = unit_closed_left(r[2], r[3]);
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        out[2 * b] = rad * std::cos(ang);
        if (2 * b + 1 < out.size()) out[2 * b + 1] = rad * std::sin(ang);
    }
}

void CounterNormals::increments(std::uint64_t step, double dt, std::span<double> out) const {
    fill(step, Purpose::increment, 0, out);
    const double s = std::sqrt(dt);
    for (double& v : out) v *= s;
}

void CounterNormals::bridge_split(std::uint64_t step, int level, std::uint32_t node, double h,
                                  std::span<const double> parent, std::span<double> left,
                                  std::span<double> right) const {
    if (level < 1 || level > 60) throw ParameterError("bridge level out of range");
    const std::size_t n = parent.size();
    thread_local std::vector<double> z;
    z.resize(n);
    fill(step, static_cast<std::uint16_t>(static_cast<std::uint16_t>(Purpose::bridge) + level), node, z);
    const double s = 0.5 * std::sqrt(h);
    for (std::size_t j = 0; j < n; ++j) {
        left[j] = 0.5 * parent[j] + s * z[j];
        right[j] = parent[j] - left[j];
    }
}

}  // namespace spdelab::rng
