#pragma once

#include "spdelab/errors.hpp"
#include "spdelab/models.hpp"
#include "spdelab/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spdelab {

enum class Scheme { semi_implicit, tamed_explicit };

std::string_view to_string(Scheme s);
Scheme parse_scheme(std::string_view s);

struct StepperConfig {
    Scheme scheme = Scheme::semi_implicit;
    double dt = 1e-3;
    double newton_tol = 1e-10;
    int newton_max_iter = 50;
    std::optional<double> dt_min;  ///< defaults to dt / 1024

    double min_step() const { return dt_min ? *dt_min : dt / 1024.0; }
    std::vector<std::string> violations() const;
    void validate() const;
    bool operator==(const StepperConfig&) const = default;
};

/// Increment of the cylindrical Brownian motion over one step, in
/// H-orthonormal coordinates: dW_j ~ N(0, dt) iid. The matching change of
/// the L2 coefficient c_j is sigma_j(x) lambda_j^{gamma/2} dW_j.
struct NoiseIncrement {
    Eigen::VectorXd dW;

    static NoiseIncrement zero(int n) { return {Eigen::VectorXd::Zero(n)}; }
    static NoiseIncrement draw(const rng::CounterNormals& g, std::uint64_t step, double dt, int n);
};

/// Running totals for one stepper.
struct StepStats {
    long steps = 0;
    long newton_iterations = 0;
    long dt_splits = 0;
};

/// Penalty u -> gain * (u - target) / max(|u - target|_H, kappa) added to the
/// implicit part of a step (steering control).
struct ImplicitControl {
    const Eigen::VectorXd* target = nullptr;
    double gain = 0.0;
    double kappa = 1e-9;
};

/// Single-path time stepper. Holds scratch buffers, so one instance per
/// thread; the Model it references is shared read-only.
class Stepper {
public:
    Stepper(const Model& m, StepperConfig cfg);

    const Model& model() const { return *m_; }
    const StepperConfig& config() const { return cfg_; }
    StepStats& stats() { return stats_; }

    /// One step of length dt with increment dW (H coordinates), in place.
    /// `extra_drift` (coefficients) is added explicitly when given.
    void step_inplace(Eigen::VectorXd& x, double dt, const Eigen::Ref<const Eigen::VectorXd>& dW,
                      const Eigen::VectorXd* extra_drift = nullptr);
    SpectralVector step(const SpectralVector& x, double dt, const NoiseIncrement& dW);

    /// Coefficient change B(x) dW.
    void noise_increment(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& dW,
                         Eigen::Ref<Eigen::VectorXd> out);

    /// Solve u = b + h A(u) [- h control(u)] for u, splitting h on Newton
    /// failure down to dt_min. `u` is overwritten.
    void implicit_solve(const Eigen::Ref<const Eigen::VectorXd>& b, double h, Eigen::VectorXd& u,
                        const ImplicitControl* ctl = nullptr);

    /// ||u - h A(u) [+ h control(u)] - b||_H.
    double residual_norm(const Eigen::Ref<const Eigen::VectorXd>& b, double h, const Eigen::Ref<const Eigen::VectorXd>& u,
                         const ImplicitControl* ctl = nullptr);

private:
    bool newton(const Eigen::Ref<const Eigen::VectorXd>& b, double h, Eigen::VectorXd& u, const ImplicitControl* ctl,
                StepDiagnostics& diag);
    void solve_split(const Eigen::VectorXd& b, double h, Eigen::VectorXd& u, const ImplicitControl* ctl, int depth);
    void residual(const Eigen::Ref<const Eigen::VectorXd>& b, double h, const Eigen::Ref<const Eigen::VectorXd>& u,
                  const ImplicitControl* ctl, Eigen::Ref<Eigen::VectorXd> out, Eigen::VectorXd& ugrid);

    const Model* m_;
    StepperConfig cfg_;
    StepStats stats_;
    Eigen::VectorXd grid_, grid2_, ugrid_, ugrid_trial_, tmp_, res_, trial_, trial_res_, delta_, sigma_, b_;
    Eigen::MatrixXd jac_;
};

struct PathOptions {
    std::uint64_t master_seed = 0;
    std::uint32_t substream = 0;
    int save_stride = 0;  ///< > 0: record every save_stride-th step and the endpoint
};

struct PathResult {
    SpectralVector terminal;
    std::vector<double> times;               ///< empty unless save_stride > 0
    std::vector<Eigen::VectorXd> states;
    double sup_h_norm2 = 0.0;                ///< max over step endpoints of |X(t)|^2
    long steps = 0;
};

/// Number of steps for horizon T: ceil(T/dt), tolerant to rounding of T/dt.
long step_count(double T, double dt);

/// ceil(T/dt) steps, the last shortened to land on T. Deterministic given
/// (model, x0, T, cfg, master_seed, substream).
PathResult simulate_path(const Model& m, const SpectralVector& x0, double T, const StepperConfig& cfg,
                         const PathOptions& opt);
/// Same with a caller-owned stepper (reuses scratch buffers).
PathResult simulate_path(Stepper& st, const SpectralVector& x0, double T, const PathOptions& opt);

struct ConvergencePoint {
    double dt = 0.0;
    double mean_error = 0.0;
    double std_error = 0.0;
};

struct ConvergenceResult {
    std::vector<ConvergencePoint> points;
    double slope = 0.0;   ///< OLS slope of log error vs log dt over nonzero errors
    int n_paths = 0;
};

/// Strong errors E|X_dt(T) - X_ref(T)|_H against the finest dt with shared
/// noise (coarse increments are sums of the fine ones).
ConvergenceResult convergence_probe(const Model& m, const SpectralVector& x0, double T, const std::vector<double>& dt_list,
                                    int n_paths, const StepperConfig& base, std::uint64_t master_seed, int threads = 1);

/// Smallest C with mean_sup <= C (1 + e^{CT}) (T + |x0|^2).
double fit_moment_constant(double mean_sup, double T, double x0_norm2);

}  // namespace spdelab
