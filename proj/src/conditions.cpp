#include "spdelab/conditions.hpp"

#include "spdelab/errors.hpp"
#include "spdelab/parallel.hpp"
#include "spdelab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace spdelab {

namespace {

constexpr double kSafety = 0.05;

struct PairEval {
    bool degenerate = false;
    double lhs = 0.0;      // monotonicity left side
    double phi = 0.0;      // structural term
    double w2 = 0.0;       // |v1 - v2|^2
    double coe_lhs = 0.0;  // 2<A(v1),v1> + |B(v1)|^2
    double coe_drift = 0.0;  // -2<A(v1),v1>
    double h_pow = 0.0;    // h(v1)^{1+r}
    double v2norm = 0.0;   // |v1|^2
    double growth = 0.0;   // |<A(v1),v2>| / (1 + ...)
    double btilde = 0.0;   // |B(v1)|^2 / (1 + ...)
};

}  // namespace

void check_theta_range(const ModelSpec& m, double theta) {
    const double r = m.r;
    if (m.kind == ModelKind::porous_medium) {
        if (!(theta > r - 1.0 && theta <= r + 1.0)) {
            std::ostringstream os;
            os << "theta=" << theta << " outside (r-1, r+1] = (" << r - 1 << ", " << r + 1 << "]";
            throw ParameterError(os.str());
        }
        return;
    }
    const double lo = 4.0 / (r + 1.0), hi = (6.0 * r + 2.0) / (r + 1.0);
    if (!(theta > lo && theta < hi)) {
        std::ostringstream os;
        os << "theta=" << theta << " outside (4/(r+1), (6r+2)/(r+1)) = (" << lo << ", " << hi << ")";
        throw ParameterError(os.str());
    }
    const double qhi = (3.0 * r + 1.0) / (theta * (r + 1.0));
    if (!(m.noise.q > 0.5 && m.noise.q < qhi)) {
        std::ostringstream os;
        os << "q=" << m.noise.q << " outside (1/2, (3r+1)/(theta(r+1))) = (0.5, " << qhi << ")";
        throw ParameterError(os.str());
    }
}

double monotonicity_lhs(const Model& m, const SpectralVector& v1, const SpectralVector& v2) {
    const auto& sp = m.space();
    const Eigen::VectorXd da = m.drift(v1).coeffs() - m.drift(v2).coeffs();
    const Eigen::VectorXd w = v1.coeffs() - v2.coeffs();
    const double hs = m.hs_norm_diff(v1, v2);
    return 2.0 * sp.h_inner(da, w) + hs * hs;
}

double structural_term(const Model& m, double theta, const SpectralVector& v1, const SpectralVector& v2) {
    const auto& sp = m.space();
    const Eigen::VectorXd w = v1.coeffs() - v2.coeffs();
    const double wh = sp.h_norm(w);
    if (wh == 0.0) return 0.0;
    const double wb = sp.b0_norm(w, m.spec().noise.q);
    const double r = m.r();
    if (m.spec().kind == ModelKind::porous_medium) return std::pow(wb, theta) * std::pow(wh, r + 1.0 - theta);
    const double h = std::max(m.v_norm(v1.coeffs()), m.v_norm(v2.coeffs()));
    return std::pow(wb, theta) / (std::pow(wh, theta - 2.0) * std::pow(h, 1.0 - r));
}

SpectralVector sample_state(const Model& m, const SamplerSpec& s, std::uint64_t seed, std::uint32_t substream,
                            std::uint64_t index, std::uint32_t node) {
    const int n = m.n();
    Eigen::VectorXd c(n);
    rng::CounterNormals(seed, substream).fill(index, rng::Purpose::sampler, node, {c.data(), static_cast<std::size_t>(n)});
    for (int j = 0; j < n; ++j) c[j] *= s.scale / (j + 1.0);
    return SpectralVector(std::move(c));
}

ConditionReport check_conditions(const Model& m, double theta, int n_pairs, const SamplerSpec& sampler,
                                 std::uint64_t seed, std::uint32_t substream, int threads) {
    if (n_pairs < 1) throw ParameterError("check_conditions needs n_pairs >= 1");
    if (!(sampler.scale > 0.0)) throw ParameterError("sampler scale must be > 0");
    check_theta_range(m.spec(), theta);
    const auto& sp = m.space();
    const double r = m.r();
    const bool porous = m.spec().kind == ModelKind::porous_medium;

    auto evals = parallel_map(static_cast<std::size_t>(n_pairs), threads, [] { return 0; }, [&](int&, std::size_t i) {
        PairEval e;
        const SpectralVector v1 = sample_state(m, sampler, seed, substream, i, 0);
        const SpectralVector v2 = sample_state(m, sampler, seed, substream, i, 1);
        const Eigen::VectorXd a1 = m.drift(v1).coeffs();
        const Eigen::VectorXd w = v1.coeffs() - v2.coeffs();
        e.w2 = sp.h_inner(w, w);
        if (e.w2 == 0.0) {
            e.degenerate = true;
        } else {
            e.lhs = monotonicity_lhs(m, v1, v2);
            e.phi = structural_term(m, theta, v1, v2);
        }
        const double hs1 = m.hs_norm(v1);
        e.coe_lhs = 2.0 * sp.h_inner(a1, v1.coeffs()) + hs1 * hs1;
        e.coe_drift = -2.0 * sp.h_inner(a1, v1.coeffs());
        const double h1 = m.v_norm(v1.coeffs());
        const double h2 = m.v_norm(v2.coeffs());
        e.h_pow = std::pow(h1, 1.0 + r);
        e.v2norm = sp.h_inner(v1.coeffs(), v1.coeffs());
        const double u2n = e.v2norm, v2n = sp.h_inner(v2.coeffs(), v2.coeffs());
        e.growth = std::abs(sp.h_inner(a1, v2.coeffs())) / (1.0 + std::pow(h1, r) + std::pow(h2, r + 1.0) + u2n + v2n);
        e.btilde = hs1 * hs1 / (1.0 + e.h_pow + u2n);
        return e;
    });

    ConditionReport rep;
    rep.condition = porous ? "monotonicity_porous_medium" : "monotonicity_fast_diffusion";
    rep.coercivity_condition = porous ? "coercivity" : "coercivity_weighted";
    rep.n_pairs = n_pairs;
    rep.theta = theta;
    if (!porous) rep.notes.emplace_back("weighted coercivity uses c3|v|^2 for the quadratic term");
    rep.notes.emplace_back("fitted constants are empirical evidence at this truncation level, not a proof");

    // K1: smallest value that works with delta1 = 0, plus margin; delta1: largest
    // value compatible with that K1, minus margin.
    double kmax = 0.0;
    for (const auto& e : evals)
        if (!e.degenerate) kmax = std::max(kmax, e.lhs / e.w2);
    rep.fitted_K1 = (1.0 + kSafety) * kmax;
    double dmin = std::numeric_limits<double>::infinity();
    for (const auto& e : evals)
        if (!e.degenerate && e.phi > 0.0) dmin = std::min(dmin, (rep.fitted_K1 * e.w2 - e.lhs) / e.phi);
    rep.fitted_delta1 = std::isfinite(dmin) ? std::max(0.0, (1.0 - kSafety) * dmin) : 0.0;
    rep.worst_margin = std::numeric_limits<double>::infinity();
    for (const auto& e : evals) {
        if (e.degenerate) continue;
        const double rhs = -rep.fitted_delta1 * e.phi + rep.fitted_K1 * e.w2;
        const double margin = rhs - e.lhs;
        rep.worst_margin = std::min(rep.worst_margin, margin);
        if (margin < -1e-12 * (std::abs(e.lhs) + std::abs(rhs))) ++rep.violations;
    }
    if (!std::isfinite(rep.worst_margin)) rep.worst_margin = 0.0;

    // Coercivity: c2 is half the drift-only constant; c1 then absorbs the noise.
    rep.c3_coe = std::max(0.0, 2.0 * m.spec().c);
    double c2 = std::numeric_limits<double>::infinity();
    for (const auto& e : evals)
        if (e.h_pow > 0.0) c2 = std::min(c2, (e.coe_drift + rep.c3_coe * e.v2norm) / e.h_pow);
    rep.c2_coe = std::isfinite(c2) ? 0.5 * c2 : 0.0;
    double c1 = 0.0;
    for (const auto& e : evals) c1 = std::max(c1, e.coe_lhs + rep.c2_coe * e.h_pow - rep.c3_coe * e.v2norm);
    rep.c1_coe = (1.0 + kSafety) * c1;
    for (const auto& e : evals) {
        const double rhs = rep.c1_coe - rep.c2_coe * e.h_pow + rep.c3_coe * e.v2norm;
        if (e.coe_lhs > rhs + 1e-12 * (std::abs(rhs) + std::abs(e.coe_lhs))) ++rep.coercivity_violations;
    }

    double g = 0.0, bt = 0.0;
    for (const auto& e : evals) {
        g = std::max(g, e.growth);
        bt = std::max(bt, e.btilde);
    }
    rep.c5_growth = (1.0 + kSafety) * g;
    rep.c3_growth = rep.c5_growth;
    rep.c_tilde = (1.0 + kSafety) * bt;
    return rep;
}

}  // namespace spdelab
