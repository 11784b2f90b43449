#pragma once

#include "spdelab/coupling.hpp"
#include "spdelab/integrator.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace spdelab {

/// Bounded test functions, |f| <= 1. Mode coordinates are taken in the
/// H-orthonormal basis: <x, e^_j>_H = lambda_j^{-gamma/2} c_j.
class TestFunction {
public:
    enum class Kind { cosine_mode, tanh_mode, ball_indicator };

    static TestFunction cosine_mode(int j, double k);
    static TestFunction tanh_mode(int j);
    static TestFunction ball_indicator(SpectralVector center, double radius);

    Kind kind() const { return kind_; }
    int mode() const { return j_; }
    double frequency() const { return k_; }
    double radius() const { return radius_; }
    const SpectralVector& center() const { return center_; }

    double operator()(const SpectralSpace& sp, const Eigen::Ref<const Eigen::VectorXd>& x) const;
    double sup_norm() const { return 1.0; }
    /// True when f is constant (cosine_mode with k = 0).
    bool is_constant() const { return kind_ == Kind::cosine_mode && k_ == 0.0; }

private:
    Kind kind_ = Kind::tanh_mode;
    int j_ = 1;
    double k_ = 1.0;
    double radius_ = 0.0;
    SpectralVector center_;
};

struct EstimateResult {
    double mean = 0.0;
    double std_error = 0.0;
    long n_samples = 0;
    double ci_level = 0.99;
    std::uint64_t master_seed = 0;
    std::uint32_t substream_begin = 0;
    std::uint32_t substream_end = 0;   ///< one past the last substream used

    /// Normal-approximation confidence interval at ci_level.
    double ci_low() const;
    double ci_high() const;
};

/// Sample mean and standard error (sample std / sqrt(n)).
EstimateResult summarize_samples(const std::vector<double>& v, std::uint64_t seed = 0, std::uint32_t begin = 0,
                                 std::uint32_t end = 0, double ci_level = 0.99);

// ---------------------------------------------------------------- gaps

struct GapOptions {
    std::uint64_t master_seed = 0;
    std::uint32_t substream_base = 0;
    int threads = 1;
};

/// |P_T f(x) - P_T f(y)| by common random numbers: path k from x and from y
/// share substream substream_base + k.
EstimateResult mc_gap(const Model& m, const TestFunction& f, const SpectralVector& x, const SpectralVector& y, double T,
                      int M, const StepperConfig& st, const GapOptions& opt);

/// Same for several y at once; the x paths are computed once and shared.
std::vector<EstimateResult> mc_gap_multi(const Model& m, const TestFunction& f, const SpectralVector& x,
                                         const std::vector<SpectralVector>& ys, double T, int M,
                                         const StepperConfig& st, const GapOptions& opt);

struct GapPoint {
    double distance = 0.0;
    double gap = 0.0;
    double std_error = 0.0;
};

struct HolderFit {
    double beta = 0.0;
    double intercept = 0.0;    ///< log C in gap ~ C d^beta
    double ci_low = 0.0;
    double ci_high = 0.0;
    double ci_level = 0.99;
    int n_used = 0;
    bool precise = true;       ///< every used point had std_error < gap/3
};

/// Least-squares slope of log gap against log distance with a Student-t
/// interval. Zero gaps are dropped; fewer than 3 usable points is an error.
HolderFit holder_fit(const std::vector<GapPoint>& pts, double ci_level = 0.99);

// ---------------------------------------------------------------- exponents

enum class BetaKind { lemma21, lemma22, corollary31 };
std::string_view to_string(BetaKind k);
BetaKind parse_beta_kind(std::string_view s);

struct EpsRange {
    double lo = 0.0;
    double hi = 0.0;
};

/// Range of eps with max(0, r-1) < theta(1-eps) < min(2r, r+1), clipped to (0,1).
EpsRange lemma21_epsilon_range(double r, double theta);
/// Range of eps with r-1 < theta(1-eps) < min(2(r-1), r+1), clipped to (0,1).
EpsRange corollary31_epsilon_range(double r, double theta);

/// The three exponents of the corollary for given (r, theta, eps, p).
struct Corollary31Alphas {
    double a1, a2, a3;
};
Corollary31Alphas corollary31_alphas(double r, double theta, double eps, double p);

/// Theoretical Hoelder exponents:
///   lemma21     (theta - r + 1)/(2 theta)
///   lemma22     min(2 theta/(3 theta + 4), 1/2)
///   corollary31 sup_eps [eps - inf_p max(a1, a2, a3)] on a grid of step `grid`.
double beta_theory(BetaKind kind, double r, double theta, double grid = 1e-4);

// ---------------------------------------------------------------- coupling audit

struct CouplingSample {
    bool coupled = false;
    double tau = 0.0;
    double logR = 0.0;
    double I_theta = 0.0;
    double quad_var = 0.0;
    long steps = 0;
    long cap_events = 0;
};

/// M coupled runs from (x, y); run k uses substream substream_base + k.
std::vector<CouplingSample> coupling_samples(const Model& m, const SpectralVector& x, const SpectralVector& y,
                                             const CouplingConfig& c, int M, const GapOptions& opt);

struct CouplingSummary {
    EstimateResult R;           ///< exp(logR_T)
    EstimateResult abs_1mR;     ///< |1 - R_T|
    EstimateResult p_tail;      ///< indicator tau >= T
    EstimateResult R_logR;      ///< R_T log R_T
    EstimateResult I_theta;
    EstimateResult tau;
    long total_steps = 0;
    long cap_events = 0;
    double cap_fraction = 0.0;
};

CouplingSummary summarize_coupling(const std::vector<CouplingSample>& s, double T, const GapOptions& opt);

/// Bound on P(tau >= T): gap^{eps-alpha} (e^{eps K1 T/2} - 1 + T^2)/T^2.
double coupling_tail_bound(double gap, double eps, double alpha, double K1, double T);
/// Bound on E int |D|_{B0}^theta/|D|^{theta eps}: e^{(1-g)K1 T}/((1-g) delta1) gap^{2-2g}.
double integral_bound(double gap, double r, double theta, double eps, double K1, double delta1, double T);

struct AuditRecord {
    EstimateResult lhs;
    CouplingSummary coupling;
    double sup_f = 1.0;
    double rhs = 0.0;          ///< E|1 - R_T| + P(tau >= T)
    double pooled_se = 0.0;
    double margin = 0.0;       ///< sup_f * rhs - lhs
    bool pass = false;         ///< margin >= -3 pooled_se
};

/// Combine a gap estimate and coupling summary into the audit record.
AuditRecord make_audit(const EstimateResult& lhs, const CouplingSummary& cs, double sup_f);

/// lhs = mc_gap on substreams [base, base + M); coupling runs on
/// [base + M, base + 2M).
AuditRecord coupling_bound_audit(const Model& m, const TestFunction& f, const SpectralVector& x, const SpectralVector& y,
                                 int M, const CouplingConfig& c, const GapOptions& opt);

// ---------------------------------------------------------------- irreducibility

enum class Verdict { pass, fail, positive, inconclusive };
std::string_view to_string(Verdict v);

struct IrreducibilityResult {
    EstimateResult frequency;
    long hits = 0;
    std::vector<double> distances;   ///< |X^x_k(T) - y|_H per path
    double cp_low = 0.0;       ///< exact (Clopper-Pearson) interval
    double cp_high = 1.0;
    Verdict verdict = Verdict::inconclusive;
};

/// Exact two-sided binomial interval.
std::pair<double, double> clopper_pearson(long hits, long n, double level);

/// P(|X^x(T) - y|_H <= l). Needs a noise family with inf_j b_j^2 > 0.
IrreducibilityResult irreducibility_probe(const Model& m, const SpectralVector& x, const SpectralVector& y, double l,
                                          double T, int M, const StepperConfig& st, const GapOptions& opt,
                                          double ci_level = 0.99);

// ---------------------------------------------------------------- steering

struct SteerOptions {
    double kappa = 1e-9;
    double slack = 0.01;       ///< relative slack on the decay bound
};

struct SteerResult {
    std::vector<double> times;
    std::vector<double> gaps;      ///< |z(t) - y|_H
    std::vector<double> bounds;    ///< |z0 - y| e^{K1 (T - t1)/2}
    double C_R = 0.0;
    double terminal_gap = 0.0;
    bool success = false;          ///< terminal_gap <= 10 kappa
    bool bound_ok = true;
    double first_violation = -1.0; ///< time of first bound violation, -1 if none
};

/// Gain (K1 (R + |y|))/(2 (1 - e^{-K1 (T - t1)/2})) + |A(y)|; the K1 -> 0
/// limit (R + |y|)/(T - t1) + |A(y)| when K1 = 0.
double steering_gain(const Model& m, const SpectralVector& y, double K1, double R, double t1, double T);

/// Integrate dz = A(z) dt - C_R (z - y)/max(|z - y|, kappa) dt on [t1, T]
/// from z(t1) = z0 with the implicit stepper and no noise.
SteerResult steer_deterministic(const Model& m, const SpectralVector& z0, const SpectralVector& y, double t1, double T,
                                double K1, double R, const StepperConfig& st, const SteerOptions& opt = {});

// ---------------------------------------------------------------- ergodic averages

struct ErgodicOptions {
    double T_long = 200.0;
    double burn_in = 20.0;
    int stride = 10;           ///< sample f every stride steps
    int batches = 20;          ///< batch means for the standard error
};

/// Time average of f along one path after burn-in; SE from batch means.
EstimateResult time_average(const Model& m, const TestFunction& f, const SpectralVector& x0, const StepperConfig& st,
                            const ErgodicOptions& eo, std::uint64_t master_seed, std::uint32_t substream);

struct ErgodicResult {
    std::vector<EstimateResult> averages;  ///< start i uses substream i
    double worst_ratio = 0.0;              ///< max |m_i - m_j| / pooled SE
    bool agree = false;                    ///< every pair within 3 pooled SE
};

ErgodicResult ergodic_average(const Model& m, const TestFunction& f, const std::vector<SpectralVector>& starts,
                              const StepperConfig& st, const ErgodicOptions& eo, std::uint64_t master_seed,
                              int threads = 1);

}  // namespace spdelab
