#include "spdelab/coupling.hpp"

#include "spdelab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spdelab {

std::string_view to_string(CouplingMode m) {
    switch (m) {
        case CouplingMode::lemma21: return "lemma21";
        case CouplingMode::lemma22: return "lemma22";
        case CouplingMode::free: return "free";
    }
    return "?";
}

CouplingMode parse_coupling_mode(std::string_view s) {
    if (s == "lemma21") return CouplingMode::lemma21;
    if (s == "lemma22") return CouplingMode::lemma22;
    if (s == "free") return CouplingMode::free;
    throw ParameterError("unknown coupling mode '" + std::string(s) + "'");
}

double gamma_hat(double r, double theta, double epsilon) { return 0.5 * (r + 1.0 - theta * (1.0 - epsilon)); }

double CouplingConfig::resolved_epsilon() const {
    if (epsilon) return *epsilon;
    return mode == CouplingMode::lemma22 ? theta / (theta + 2.0) : 0.5;
}

double CouplingConfig::resolved_alpha(const ModelSpec& m) const {
    if (alpha) return *alpha;
    const double eps = resolved_epsilon();
    const double a = eps / 2.0 - (1.0 - gamma_hat(m.r, theta, eps)) / theta;
    return a > 0.0 ? a : eps / 2.0;
}

std::vector<std::string> CouplingConfig::violations(const ModelSpec& m) const {
    std::vector<std::string> v;
    const double eps = resolved_epsilon();
    const double a = resolved_alpha(m);
    if (!(eps > 0.0 && eps < 1.0)) v.emplace_back("coupling.epsilon must lie in (0, 1)");
    if (!(a > 0.0)) v.emplace_back("coupling.alpha must be > 0");
    if (!(a < eps)) {
        std::ostringstream os;
        os << "coupling.alpha < coupling.epsilon required (alpha=" << a << ", epsilon=" << eps << ")";
        v.push_back(os.str());
    }
    if (!(theta > 0.0)) v.emplace_back("coupling.theta must be > 0");
    if (!(T > 0.0) || !std::isfinite(T)) v.emplace_back("coupling.T must be > 0");
    if (!(couple_tol > 0.0)) v.emplace_back("coupling.couple_tol must be > 0");
    if (!(drift_cap > 0.0)) v.emplace_back("coupling.drift_cap must be > 0");
    if (max_level < 0 || max_level > 30) v.emplace_back("coupling.max_level must lie in [0, 30]");
    if (mode == CouplingMode::lemma21) {
        if (m.kind != ModelKind::porous_medium) v.emplace_back("coupling mode lemma21 needs a porous_medium model");
        const double lo = std::max(0.0, m.r - 1.0), hi = std::min(2.0 * m.r, m.r + 1.0);
        const double t = theta * (1.0 - eps);
        if (!(t > lo && t < hi)) {
            std::ostringstream os;
            os << "lemma21 needs theta(1-epsilon) in (" << lo << ", " << hi << "), got " << t;
            v.push_back(os.str());
        }
    } else if (mode == CouplingMode::lemma22) {
        if (m.kind != ModelKind::fast_diffusion) v.emplace_back("coupling mode lemma22 needs a fast_diffusion model");
        if (std::abs(eps - theta / (theta + 2.0)) > 1e-12) v.emplace_back("lemma22 needs epsilon = theta/(theta+2)");
    }
    for (auto& s : stepper.violations()) v.push_back(s);
    return v;
}

void CouplingConfig::validate(const ModelSpec& m) const {
    const auto v = violations(m);
    if (!v.empty()) throw ParameterError([&] {
        std::string msg = "invalid coupling:";
        for (const auto& s : v) msg += " " + s + ";";
        return msg;
    }());
}

namespace {

// Mutable state of one coupled run.
struct PairRun {
    Stepper& st;
    const CouplingConfig& cfg;
    const rng::CounterNormals& gen;
    const SpectralSpace& sp;
    double gap_alpha = 0.0;   // start_gap^alpha
    double eps = 0.0;
    double q = 0.0;
    Eigen::VectorXd X, Y, D, drift, sigma, hvec;
    bool coupled = false;
    double t = 0.0;
    double tau = 0.0;
    double logR = 0.0, I_theta = 0.0, quad_var = 0.0;
    long steps = 0, cap_events = 0;
    int deepest = 0;
    std::vector<Eigen::VectorXd> left, right;  // per level

    PairRun(Stepper& s, const CouplingConfig& c, const rng::CounterNormals& g)
        : st(s), cfg(c), gen(g), sp(s.model().space()) {}

    // One substep of the uncoupled pair with increment dW.
    void pair_step(double h, const Eigen::VectorXd& dW) {
        const Model& m = st.model();
        D = X - Y;
        const double dn = sp.h_norm(D);
        // Extra drift and its Girsanov integrand h = B~^{-1}(Y) drift, in H coordinates.
        double scale = gap_alpha / std::pow(dn, eps);
        const double mag = scale * dn;
        bool capped = false;
        if (mag > cfg.drift_cap) {
            scale *= cfg.drift_cap / mag;
            capped = true;
        }
        drift = scale * D;
        m.noise_diag_into(Y, sigma);
        for (Eigen::Index j = 0; j < D.size(); ++j) {
            if (!(sigma[j] >= 1e-300)) throw DegeneracyError("sigma_" + std::to_string(j + 1) + " below 1e-300");
            hvec[j] = drift[j] * sp.h_scale()[j] / sigma[j];
        }
        const double h2 = hvec.squaredNorm();
        logR += -hvec.dot(dW) - 0.5 * h2 * h;
        quad_var += h2 * h;
        const double b0 = sp.b0_norm(D, q);
        I_theta += std::pow(b0, cfg.theta) / std::pow(dn, cfg.theta * eps) * h;
        if (capped) ++cap_events;
        ++steps;

        st.step_inplace(X, h, dW);
        st.step_inplace(Y, h, dW, &drift);
        t += h;
        if (sp.h_norm(X - Y) <= cfg.couple_tol) {
            coupled = true;
            tau = t;
            Y = X;
        }
    }

    void advance(std::uint64_t step, int level, std::uint32_t node, double h, const Eigen::VectorXd& dW) {
        deepest = std::max(deepest, level);
        if (coupled) {
            st.step_inplace(X, h, dW);
            t += h;
            return;
        }
        bool split = false;
        if (level < cfg.max_level) {
            const double dn = sp.h_norm(X - Y);
            if (dn < 10.0 * cfg.couple_tol) split = true;
            else split = h * gap_alpha * std::pow(dn, -eps) > 0.5;
        }
        if (!split) {
            pair_step(h, dW);
            return;
        }
        auto& l = left[level + 1];
        auto& r = right[level + 1];
        gen.bridge_split(step, level + 1, node, h, {dW.data(), static_cast<std::size_t>(dW.size())},
                         {l.data(), static_cast<std::size_t>(l.size())}, {r.data(), static_cast<std::size_t>(r.size())});
        // Deeper levels use their own buffers, so l and r stay intact.
        advance(step, level + 1, 2 * node, h / 2.0, l);
        advance(step, level + 1, 2 * node + 1, h / 2.0, r);
    }
};

}  // namespace

CoupledStep coupled_step(Stepper& st, const SpectralVector& X, const SpectralVector& Y, double dt,
                         const NoiseIncrement& dW, const CouplingConfig& c, double start_gap) {
    const Model& m = st.model();
    const auto& sp = m.space();
    sp.check_size(X.coeffs());
    sp.check_size(Y.coeffs());
    sp.check_size(dW.dW);
    X.require_finite("coupled_step");
    Y.require_finite("coupled_step");
    if (X == Y) throw ParameterError("coupled_step requires X != Y; the pair is already coupled");
    if (!(dt > 0.0)) throw ParameterError("coupled_step needs dt > 0");
    if (!(start_gap >= 0.0)) throw ParameterError("start_gap must be >= 0");
    rng::CounterNormals gen(0, 0);
    PairRun run(st, c, gen);
    run.gap_alpha = std::pow(start_gap, c.resolved_alpha(m.spec()));
    run.eps = c.resolved_epsilon();
    run.q = m.spec().noise.q;
    run.X = X.coeffs();
    run.Y = Y.coeffs();
    const int n = m.n();
    run.sigma.resize(n);
    run.hvec.resize(n);
    run.pair_step(dt, dW.dW);
    CoupledStep out;
    out.X = SpectralVector(run.X);
    out.Y = SpectralVector(run.Y);
    out.dlogR = run.logR;
    out.dI_theta = run.I_theta;
    out.dquad_var = run.quad_var;
    out.capped = run.cap_events > 0;
    return out;
}

CouplingOutcome run_coupling(Stepper& st, const SpectralVector& x, const SpectralVector& y, const CouplingConfig& c,
                             std::uint64_t master_seed, std::uint32_t substream) {
    const Model& m = st.model();
    const auto& sp = m.space();
    sp.check_size(x.coeffs());
    sp.check_size(y.coeffs());
    x.require_finite("run_coupling");
    y.require_finite("run_coupling");
    c.validate(m.spec());
    const int n = m.n();
    rng::CounterNormals gen(master_seed, substream);
    PairRun run(st, c, gen);
    const double gap = sp.h_norm(x.coeffs() - y.coeffs());
    run.gap_alpha = std::pow(gap, c.resolved_alpha(m.spec()));
    run.eps = c.resolved_epsilon();
    run.q = m.spec().noise.q;
    run.X = x.coeffs();
    run.Y = y.coeffs();
    run.sigma.resize(n);
    run.hvec.resize(n);
    run.left.assign(c.max_level + 1, Eigen::VectorXd(n));
    run.right.assign(c.max_level + 1, Eigen::VectorXd(n));
    if (gap <= c.couple_tol) {
        run.coupled = true;
        run.tau = 0.0;
        run.Y = run.X;
    }

    const double dt = st.config().dt;
    const long N = step_count(c.T, dt);
    Eigen::VectorXd dW(n);
    for (long k = 0; k < N; ++k) {
        const double h = (k == N - 1) ? c.T - static_cast<double>(N - 1) * dt : dt;
        gen.increments(static_cast<std::uint64_t>(k), h, {dW.data(), static_cast<std::size_t>(n)});
        run.advance(static_cast<std::uint64_t>(k), 0, 0, h, dW);
    }

    CouplingOutcome out;
    out.coupled = run.coupled;
    out.tau = run.coupled ? run.tau : c.T;
    out.logR_T = run.logR;
    out.I_theta = run.I_theta;
    out.quad_var = run.quad_var;
    if (run.coupled) run.Y = run.X;
    out.X_T = SpectralVector(std::move(run.X));
    out.Y_T = SpectralVector(std::move(run.Y));
    out.steps = run.steps;
    out.cap_events = run.cap_events;
    out.max_level = run.deepest;
    return out;
}

CouplingOutcome run_coupling(const Model& m, const SpectralVector& x, const SpectralVector& y, const CouplingConfig& c,
                             std::uint64_t master_seed, std::uint32_t substream) {
    Stepper st(m, c.stepper);
    return run_coupling(st, x, y, c, master_seed, substream);
}

}  // namespace spdelab
