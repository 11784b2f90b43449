#pragma once

#include "spdelab/models.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace spdelab {

/// Random states with coefficients c_j ~ scale * N(0, j^{-2}).
struct SamplerSpec {
    double scale = 1.0;
    bool operator==(const SamplerSpec&) const = default;
};

/// Empirical evidence (not proof) that the structural inequalities hold at
/// the current truncation level, with fitted constants.
struct ConditionReport {
    std::string condition;   ///< "monotonicity_porous_medium" or "monotonicity_fast_diffusion"
    int n_pairs = 0;
    int violations = 0;
    double fitted_K1 = 0.0;
    double fitted_delta1 = 0.0;
    double theta = 0.0;
    double worst_margin = 0.0;   ///< min over pairs of rhs - lhs

    // Coercivity: |v|_V^{r+1} form for porous media, h^{1+r} form for fast
    // diffusion. c3_coe and the additive growth constant c3_growth are distinct.
    std::string coercivity_condition;
    double c1_coe = 0.0;
    double c2_coe = 0.0;
    double c3_coe = 0.0;
    int coercivity_violations = 0;

    // Growth: |<A(u),v>| <= c3_growth + c5_growth (|u|_V^r + |v|_V^{r+1} + |u|^2 + |v|^2).
    double c3_growth = 0.0;
    double c5_growth = 0.0;

    /// Fitted c~ with |B(u)|_2^2 <= c~ (1 + |u|_V^{r+1} + |u|^2).
    double c_tilde = 0.0;

    std::vector<std::string> notes;

    bool pass() const {
        return n_pairs > 0 && violations == 0 && fitted_delta1 > 0.0 && coercivity_violations == 0 && c2_coe > 0.0;
    }
};

/// Throws ParameterError when theta (and q) fall outside the admissible
/// range for the model kind.
void check_theta_range(const ModelSpec& m, double theta);

/// 2<A(v1)-A(v2), v1-v2>_H + |B(v1)-B(v2)|_2^2.
double monotonicity_lhs(const Model& m, const SpectralVector& v1, const SpectralVector& v2);

/// The structural term multiplying delta_1:
///   porous medium:  |w|_{B0}^theta |w|^{r+1-theta}
///   fast diffusion: |w|_{B0}^theta / (|w|^{theta-2} (h(v1) v h(v2))^{1-r})
/// with w = v1 - v2; zero when w = 0.
double structural_term(const Model& m, double theta, const SpectralVector& v1, const SpectralVector& v2);

/// Draw sample `index` (node 0 or 1 for the two members of a pair).
SpectralVector sample_state(const Model& m, const SamplerSpec& s, std::uint64_t seed, std::uint32_t substream,
                            std::uint64_t index, std::uint32_t node);

ConditionReport check_conditions(const Model& m, double theta, int n_pairs, const SamplerSpec& sampler,
                                 std::uint64_t seed, std::uint32_t substream, int threads = 1);

}  // namespace spdelab
