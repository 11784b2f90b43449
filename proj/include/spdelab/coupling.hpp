#pragma once

#include "spdelab/integrator.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spdelab {

/// Which parameter constraints apply to (alpha, epsilon, theta).
///   lemma21: porous medium; theta(1-eps) in (max(0,r-1), min(2r,r+1)).
///   lemma22: fast diffusion; eps = theta/(theta+2).
///   free:    only 0 < alpha < eps < 1.
enum class CouplingMode { lemma21, lemma22, free };

std::string_view to_string(CouplingMode m);
CouplingMode parse_coupling_mode(std::string_view s);

struct CouplingConfig {
    std::optional<double> alpha;    ///< default: see resolved_alpha
    std::optional<double> epsilon;  ///< default: theta/(theta+2) for lemma22, else 1/2
    double theta = 3.0;
    double T = 0.5;
    double couple_tol = 1e-8;
    double drift_cap = 1e6;
    CouplingMode mode = CouplingMode::lemma21;
    StepperConfig stepper;
    /// Deepest bisection level of a base step (dt_min = dt / 2^max_level).
    int max_level = 10;

    double resolved_epsilon() const;
    /// eps/2 - (1 - g)/theta with 2g = r + 1 - theta(1 - eps) when that is
    /// positive, else eps/2.
    double resolved_alpha(const ModelSpec& m) const;

    std::vector<std::string> violations(const ModelSpec& m) const;
    void validate(const ModelSpec& m) const;
    bool operator==(const CouplingConfig&) const = default;
};

/// The exponent 2g = r + 1 - theta(1 - eps) used by the integral bound.
double gamma_hat(double r, double theta, double epsilon);

struct CouplingOutcome {
    bool coupled = false;
    double tau = 0.0;        ///< coupling time; equals T when not coupled
    double logR_T = 0.0;
    double I_theta = 0.0;
    double quad_var = 0.0;
    SpectralVector X_T, Y_T;
    long steps = 0;          ///< substeps taken before coupling
    long cap_events = 0;
    int max_level = 0;       ///< deepest bisection level used
};

/// Result of one coupled step.
struct CoupledStep {
    SpectralVector X, Y;
    double dlogR = 0.0;
    double dI_theta = 0.0;
    double dquad_var = 0.0;
    bool capped = false;
};

/// Advance the uncoupled pair by dt with shared increment dW. Y carries the
/// extra drift start_gap^alpha (X-Y)/|X-Y|^eps (capped at drift_cap).
/// Precondition: X != Y.
CoupledStep coupled_step(Stepper& st, const SpectralVector& X, const SpectralVector& Y, double dt,
                         const NoiseIncrement& dW, const CouplingConfig& c, double start_gap);

/// Run the coupled pair from (x, y) to T with increments from
/// (master_seed, substream). Base steps are bisected (Brownian bridge) while
/// the extra drift would move Y by more than half the gap in one substep, and
/// to the finest level once |X-Y| < 10 couple_tol.
CouplingOutcome run_coupling(Stepper& st, const SpectralVector& x, const SpectralVector& y, const CouplingConfig& c,
                             std::uint64_t master_seed, std::uint32_t substream);
CouplingOutcome run_coupling(const Model& m, const SpectralVector& x, const SpectralVector& y, const CouplingConfig& c,
                             std::uint64_t master_seed, std::uint32_t substream);

}  // namespace spdelab
