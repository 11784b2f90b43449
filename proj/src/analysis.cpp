#include "spdelab/analysis.hpp"

#include "spdelab/errors.hpp"
#include "spdelab/parallel.hpp"

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace spdelab {

// ---------------------------------------------------------------- test functions

TestFunction TestFunction::cosine_mode(int j, double k) {
    if (j < 1) throw IndexError("cosine_mode needs j >= 1");
    if (!std::isfinite(k)) throw ParameterError("cosine_mode needs a finite k");
    TestFunction f;
    f.kind_ = Kind::cosine_mode;
    f.j_ = j;
    f.k_ = k;
    return f;
}

TestFunction TestFunction::tanh_mode(int j) {
    if (j < 1) throw IndexError("tanh_mode needs j >= 1");
    TestFunction f;
    f.kind_ = Kind::tanh_mode;
    f.j_ = j;
    return f;
}

TestFunction TestFunction::ball_indicator(SpectralVector center, double radius) {
    if (!(radius >= 0.0)) throw ParameterError("ball_indicator needs radius >= 0");
    center.require_finite("ball_indicator");
    TestFunction f;
    f.kind_ = Kind::ball_indicator;
    f.center_ = std::move(center);
    f.radius_ = radius;
    return f;
}

double TestFunction::operator()(const SpectralSpace& sp, const Eigen::Ref<const Eigen::VectorXd>& x) const {
    sp.check_size(x);
    if (kind_ == Kind::ball_indicator) {
        sp.check_size(center_.coeffs());
        return sp.h_norm(x - center_.coeffs()) <= radius_ ? 1.0 : 0.0;
    }
    if (j_ > sp.n()) throw IndexError("test function mode " + std::to_string(j_) + " exceeds n_modes");
    const double coord = sp.h_scale()[j_ - 1] * x[j_ - 1];
    return kind_ == Kind::cosine_mode ? std::cos(k_ * coord) : std::tanh(coord);
}

// ---------------------------------------------------------------- estimates

namespace {

double normal_quantile(double level) {
    boost::math::normal nd;
    return boost::math::quantile(nd, 0.5 + level / 2.0);
}

}  // namespace

double EstimateResult::ci_low() const { return mean - normal_quantile(ci_level) * std_error; }
double EstimateResult::ci_high() const { return mean + normal_quantile(ci_level) * std_error; }

EstimateResult summarize_samples(const std::vector<double>& v, std::uint64_t seed, std::uint32_t begin,
                                 std::uint32_t end, double ci_level) {
    if (v.empty()) throw InsufficientDataError("no samples to summarize");
    EstimateResult e;
    e.n_samples = static_cast<long>(v.size());
    e.ci_level = ci_level;
    e.master_seed = seed;
    e.substream_begin = begin;
    e.substream_end = end;
    double s = 0.0;
    for (double x : v) s += x;
    e.mean = s / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - e.mean) * (x - e.mean);
        e.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    }
    return e;
}

// ---------------------------------------------------------------- gaps

std::vector<EstimateResult> mc_gap_multi(const Model& m, const TestFunction& f, const SpectralVector& x,
                                         const std::vector<SpectralVector>& ys, double T, int M,
                                         const StepperConfig& st, const GapOptions& opt) {
    if (M < 100) throw ParameterError("mc_gap needs M >= 100");
    if (!(T >= 0.0)) throw ParameterError("mc_gap needs T >= 0");
    const auto& sp = m.space();
    sp.check_size(x.coeffs());
    for (const auto& y : ys) sp.check_size(y.coeffs());
    auto diffs = parallel_map(
        static_cast<std::size_t>(M), opt.threads, [&] { return Stepper(m, st); },
        [&](Stepper& stp, std::size_t k) {
            PathOptions po{opt.master_seed, opt.substream_base + static_cast<std::uint32_t>(k), 0};
            const double fx = f(sp, simulate_path(stp, x, T, po).terminal.coeffs());
            std::vector<double> d(ys.size());
            for (std::size_t i = 0; i < ys.size(); ++i) {
                const double fy = ys[i] == x ? fx : f(sp, simulate_path(stp, ys[i], T, po).terminal.coeffs());
                d[i] = fx - fy;
            }
            return d;
        });
    std::vector<EstimateResult> out;
    std::vector<double> col(M);
    for (std::size_t i = 0; i < ys.size(); ++i) {
        for (int k = 0; k < M; ++k) col[k] = diffs[k][i];
        auto e = summarize_samples(col, opt.master_seed, opt.substream_base, opt.substream_base + M);
        e.mean = std::abs(e.mean);
        out.push_back(e);
    }
    return out;
}

EstimateResult mc_gap(const Model& m, const TestFunction& f, const SpectralVector& x, const SpectralVector& y, double T,
                      int M, const StepperConfig& st, const GapOptions& opt) {
    return mc_gap_multi(m, f, x, {y}, T, M, st, opt).front();
}

HolderFit holder_fit(const std::vector<GapPoint>& pts, double ci_level) {
    std::vector<double> lx, ly;
    HolderFit fit;
    fit.ci_level = ci_level;
    for (const auto& p : pts) {
        if (!(p.distance > 0.0)) throw ParameterError("holder_fit needs positive distances");
        if (!(p.gap > 0.0)) continue;
        lx.push_back(std::log(p.distance));
        ly.push_back(std::log(p.gap));
        if (!(p.std_error < p.gap / 3.0)) fit.precise = false;
    }
    const int n = static_cast<int>(lx.size());
    if (n < 3) throw InsufficientDataError("holder_fit needs at least 3 nonzero gaps, got " + std::to_string(n));
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (!(sxx > 0.0)) throw InsufficientDataError("holder_fit needs at least two distinct distances");
    fit.beta = sxy / sxx;
    fit.intercept = my - fit.beta * mx;
    double ssr = 0;
    for (int i = 0; i < n; ++i) {
        const double r = ly[i] - fit.intercept - fit.beta * lx[i];
        ssr += r * r;
    }
    const double se = std::sqrt(ssr / (n - 2) / sxx);
    boost::math::students_t td(n - 2);
    const double tq = boost::math::quantile(td, 0.5 + ci_level / 2.0);
    fit.ci_low = fit.beta - tq * se;
    fit.ci_high = fit.beta + tq * se;
    fit.n_used = n;
    return fit;
}

// ---------------------------------------------------------------- exponents

std::string_view to_string(BetaKind k) {
    switch (k) {
        case BetaKind::lemma21: return "lemma21";
        case BetaKind::lemma22: return "lemma22";
        case BetaKind::corollary31: return "corollary31";
    }
    return "?";
}

BetaKind parse_beta_kind(std::string_view s) {
    if (s == "lemma21") return BetaKind::lemma21;
    if (s == "lemma22") return BetaKind::lemma22;
    if (s == "corollary31") return BetaKind::corollary31;
    throw ParameterError("unknown exponent kind '" + std::string(s) + "'");
}

EpsRange lemma21_epsilon_range(double r, double theta) {
    if (!(theta > 0.0)) throw ParameterError("theta must be > 0");
    const double lo_t = std::max(0.0, r - 1.0), hi_t = std::min(2.0 * r, r + 1.0);
    return {std::max(0.0, 1.0 - hi_t / theta), std::min(1.0, 1.0 - lo_t / theta)};
}

EpsRange corollary31_epsilon_range(double r, double theta) {
    if (!(theta > 0.0)) throw ParameterError("theta must be > 0");
    const double hi_t = std::min(2.0 * (r - 1.0), r + 1.0);
    return {std::max(0.0, 1.0 - hi_t / theta), std::min(1.0, 1.0 - (r - 1.0) / theta)};
}

Corollary31Alphas corollary31_alphas(double r, double theta, double eps, double p) {
    const double t = theta * (1.0 - eps);
    const double g = 0.5 * (r + 1.0 - t);
    Corollary31Alphas a{};
    a.a1 = eps * (2.0 * (r - 1.0) - t) / (2.0 * (p * theta + 1.0) * (r - 1.0) - t);
    a.a2 = theta == 2.0 ? 0.0 : eps * (theta - 2.0) / (2.0 * (1.0 - p) * theta + theta - 2.0);
    a.a3 = (eps - 2.0 * (1.0 - g)) / (p * theta + 1.0);
    return a;
}

double beta_theory(BetaKind kind, double r, double theta, double grid) {
    if (!std::isfinite(r) || !std::isfinite(theta)) throw ParameterError("beta_theory needs finite r and theta");
    switch (kind) {
        case BetaKind::lemma21: {
            if (!(r >= 1.0)) throw ParameterError("lemma21 needs r >= 1");
            if (!(theta >= 2.0 && theta > r - 1.0)) throw ParameterError("lemma21 needs theta >= 2 and theta > r - 1");
            return (theta - r + 1.0) / (2.0 * theta);
        }
        case BetaKind::lemma22: {
            if (!(r > 0.0 && r < 1.0)) throw ParameterError("lemma22 needs 0 < r < 1");
            if (!(theta >= 4.0 / (r + 1.0))) throw ParameterError("lemma22 needs theta >= 4/(r+1)");
            return std::min(2.0 * theta / (3.0 * theta + 4.0), 0.5);
        }
        case BetaKind::corollary31: {
            if (!(r > 1.0)) throw ParameterError("corollary31 needs r > 1");
            if (!(theta >= 2.0 && theta > r - 1.0)) throw ParameterError("corollary31 needs theta >= 2 and theta > r - 1");
            if (!(grid > 0.0 && grid < 0.1)) throw ParameterError("corollary31 grid step must lie in (0, 0.1)");
            const auto rg = corollary31_epsilon_range(r, theta);
            if (!(rg.hi > rg.lo)) throw ParameterError("corollary31 epsilon range is empty");
            const long np = static_cast<long>(std::floor(1.0 / grid - 1e-9));
            double best = -std::numeric_limits<double>::infinity();
            for (long i = 1;; ++i) {
                const double eps = rg.lo + static_cast<double>(i) * grid;
                if (!(eps < rg.hi)) break;
                double inf = std::numeric_limits<double>::infinity();
                for (long k = 1; k <= np; ++k) {
                    const double p = static_cast<double>(k) * grid;
                    if (!(p < 1.0)) break;
                    const auto a = corollary31_alphas(r, theta, eps, p);
                    inf = std::min(inf, std::max({a.a1, a.a2, a.a3}));
                }
                best = std::max(best, eps - inf);
            }
            if (!std::isfinite(best)) throw ParameterError("corollary31 grid has no interior point; use a finer grid");
            return best;
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------- coupling audit

std::vector<CouplingSample> coupling_samples(const Model& m, const SpectralVector& x, const SpectralVector& y,
                                             const CouplingConfig& c, int M, const GapOptions& opt) {
    if (M < 1) throw ParameterError("coupling_samples needs M >= 1");
    c.validate(m.spec());
    return parallel_map(
        static_cast<std::size_t>(M), opt.threads, [&] { return Stepper(m, c.stepper); },
        [&](Stepper& st, std::size_t k) {
            const auto o = run_coupling(st, x, y, c, opt.master_seed, opt.substream_base + static_cast<std::uint32_t>(k));
            return CouplingSample{o.coupled, o.tau, o.logR_T, o.I_theta, o.quad_var, o.steps, o.cap_events};
        });
}

CouplingSummary summarize_coupling(const std::vector<CouplingSample>& s, double T, const GapOptions& opt) {
    const std::size_t M = s.size();
    std::vector<double> R(M), a(M), p(M), rl(M), it(M), tau(M);
    CouplingSummary out;
    for (std::size_t k = 0; k < M; ++k) {
        R[k] = std::exp(s[k].logR);
        a[k] = std::abs(1.0 - R[k]);
        p[k] = s[k].tau >= T ? 1.0 : 0.0;
        rl[k] = R[k] * s[k].logR;
        it[k] = s[k].I_theta;
        tau[k] = s[k].tau;
        out.total_steps += s[k].steps;
        out.cap_events += s[k].cap_events;
    }
    const auto b = opt.substream_base, e = opt.substream_base + static_cast<std::uint32_t>(M);
    out.R = summarize_samples(R, opt.master_seed, b, e);
    out.abs_1mR = summarize_samples(a, opt.master_seed, b, e);
    out.p_tail = summarize_samples(p, opt.master_seed, b, e);
    out.R_logR = summarize_samples(rl, opt.master_seed, b, e);
    out.I_theta = summarize_samples(it, opt.master_seed, b, e);
    out.tau = summarize_samples(tau, opt.master_seed, b, e);
    out.cap_fraction = out.total_steps > 0 ? static_cast<double>(out.cap_events) / out.total_steps : 0.0;
    return out;
}

double coupling_tail_bound(double gap, double eps, double alpha, double K1, double T) {
    return std::pow(gap, eps - alpha) * (std::exp(eps * K1 * T / 2.0) - 1.0 + T * T) / (T * T);
}

double integral_bound(double gap, double r, double theta, double eps, double K1, double delta1, double T) {
    const double g = gamma_hat(r, theta, eps);
    if (!(g < 1.0) || !(delta1 > 0.0)) throw ParameterError("integral_bound needs gamma < 1 and delta1 > 0");
    return std::exp((1.0 - g) * K1 * T) / ((1.0 - g) * delta1) * std::pow(gap, 2.0 - 2.0 * g);
}

AuditRecord make_audit(const EstimateResult& lhs, const CouplingSummary& cs, double sup_f) {
    AuditRecord a;
    a.lhs = lhs;
    a.coupling = cs;
    a.sup_f = sup_f;
    a.rhs = cs.abs_1mR.mean + cs.p_tail.mean;
    a.pooled_se = std::sqrt(lhs.std_error * lhs.std_error +
                            sup_f * sup_f * (cs.abs_1mR.std_error * cs.abs_1mR.std_error +
                                             cs.p_tail.std_error * cs.p_tail.std_error));
    a.margin = sup_f * a.rhs - lhs.mean;
    a.pass = a.margin >= -3.0 * a.pooled_se;
    return a;
}

AuditRecord coupling_bound_audit(const Model& m, const TestFunction& f, const SpectralVector& x, const SpectralVector& y,
                                 int M, const CouplingConfig& c, const GapOptions& opt) {
    const auto lhs = mc_gap(m, f, x, y, c.T, M, c.stepper, opt);
    GapOptions co = opt;
    co.substream_base = opt.substream_base + static_cast<std::uint32_t>(M);
    const auto cs = summarize_coupling(coupling_samples(m, x, y, c, M, co), c.T, co);
    return make_audit(lhs, cs, f.sup_norm());
}

// ---------------------------------------------------------------- irreducibility

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::pass: return "PASS";
        case Verdict::fail: return "FAIL";
        case Verdict::positive: return "POSITIVE";
        case Verdict::inconclusive: return "INCONCLUSIVE";
    }
    return "?";
}

std::pair<double, double> clopper_pearson(long hits, long n, double level) {
    if (n < 1 || hits < 0 || hits > n) throw ParameterError("clopper_pearson needs 0 <= hits <= n, n >= 1");
    const double a = 1.0 - level;
    double lo = 0.0, hi = 1.0;
    if (hits > 0) {
        boost::math::beta_distribution<> bd(static_cast<double>(hits), static_cast<double>(n - hits + 1));
        lo = boost::math::quantile(bd, a / 2.0);
    }
    if (hits < n) {
        boost::math::beta_distribution<> bd(static_cast<double>(hits + 1), static_cast<double>(n - hits));
        hi = boost::math::quantile(bd, 1.0 - a / 2.0);
    }
    return {lo, hi};
}

IrreducibilityResult irreducibility_probe(const Model& m, const SpectralVector& x, const SpectralVector& y, double l,
                                          double T, int M, const StepperConfig& st, const GapOptions& opt,
                                          double ci_level) {
    if (!(l > 0.0)) throw ParameterError("irreducibility_probe needs l > 0");
    if (M < 1) throw ParameterError("irreducibility_probe needs M >= 1");
    if (!m.state_independent_noise() && !m.spec().noise.rho_floor)
        throw ParameterError("irreducibility_probe needs a noise family with inf_j b_j^2 > 0 (set noise.rho_floor)");
    const auto& sp = m.space();
    sp.check_size(y.coeffs());
    IrreducibilityResult res;
    res.distances = parallel_map(
        static_cast<std::size_t>(M), opt.threads, [&] { return Stepper(m, st); },
        [&](Stepper& stp, std::size_t k) {
            PathOptions po{opt.master_seed, opt.substream_base + static_cast<std::uint32_t>(k), 0};
            return sp.h_norm(simulate_path(stp, x, T, po).terminal.coeffs() - y.coeffs());
        });
    std::vector<double> hits(M);
    for (int k = 0; k < M; ++k) {
        hits[k] = res.distances[k] <= l ? 1.0 : 0.0;
        res.hits += res.distances[k] <= l;
    }
    res.frequency = summarize_samples(hits, opt.master_seed, opt.substream_base, opt.substream_base + M, ci_level);
    std::tie(res.cp_low, res.cp_high) = clopper_pearson(res.hits, M, ci_level);
    res.verdict = res.cp_low > 0.0 ? Verdict::positive : Verdict::inconclusive;
    return res;
}

// ---------------------------------------------------------------- steering

double steering_gain(const Model& m, const SpectralVector& y, double K1, double R, double t1, double T) {
    if (!(T > t1)) throw ParameterError("steering needs T > t1");
    if (!(K1 >= 0.0)) throw ParameterError("steering needs K1 >= 0");
    const auto& sp = m.space();
    const double ay = sp.h_norm(m.drift(y).coeffs());
    const double yn = sp.h_norm(y.coeffs());
    const double s = T - t1;
    const double lead = K1 > 0.0 ? K1 * (R + yn) / (2.0 * (1.0 - std::exp(-K1 * s / 2.0))) : (R + yn) / s;
    return lead + ay;
}

SteerResult steer_deterministic(const Model& m, const SpectralVector& z0, const SpectralVector& y, double t1, double T,
                                double K1, double R, const StepperConfig& st, const SteerOptions& opt) {
    const auto& sp = m.space();
    sp.check_size(z0.coeffs());
    sp.check_size(y.coeffs());
    z0.require_finite("steer_deterministic");
    y.require_finite("steer_deterministic");
    if (!(opt.kappa > 0.0)) throw ParameterError("steering needs kappa > 0");
    if (sp.h_norm(z0.coeffs()) > R) throw ParameterError("steering needs |z0| <= R");
    SteerResult res;
    res.C_R = steering_gain(m, y, K1, R, t1, T);
    Stepper stp(m, st);
    const Eigen::VectorXd target = y.coeffs();
    ImplicitControl ctl{&target, res.C_R, opt.kappa};
    const double g0 = sp.h_norm(z0.coeffs() - target);
    const double bound = g0 * std::exp(K1 * (T - t1) / 2.0);
    auto record = [&](double t, const Eigen::VectorXd& z) {
        const double g = sp.h_norm(z - target);
        res.times.push_back(t);
        res.gaps.push_back(g);
        res.bounds.push_back(bound);
        if (res.bound_ok && g * g > (1.0 + opt.slack) * bound * bound) {
            res.bound_ok = false;
            res.first_violation = t;
        }
    };
    Eigen::VectorXd z = z0.coeffs(), next;
    record(t1, z);
    const double dt = st.dt;
    const long N = step_count(T - t1, dt);
    for (long k = 0; k < N; ++k) {
        const double h = (k == N - 1) ? (T - t1) - static_cast<double>(N - 1) * dt : dt;
        stp.implicit_solve(z, h, next, &ctl);
        z.swap(next);
        record(k == N - 1 ? T : t1 + static_cast<double>(k + 1) * dt, z);
    }
    res.terminal_gap = res.gaps.back();
    res.success = res.terminal_gap <= 10.0 * opt.kappa;
    return res;
}

// ---------------------------------------------------------------- ergodic averages

EstimateResult time_average(const Model& m, const TestFunction& f, const SpectralVector& x0, const StepperConfig& st,
                            const ErgodicOptions& eo, std::uint64_t master_seed, std::uint32_t substream) {
    if (!(eo.T_long > eo.burn_in) || eo.burn_in < 0.0) throw ParameterError("time_average needs T_long > burn_in >= 0");
    if (eo.stride < 1 || eo.batches < 2) throw ParameterError("time_average needs stride >= 1 and batches >= 2");
    const auto& sp = m.space();
    sp.check_size(x0.coeffs());
    Stepper stp(m, st);
    rng::CounterNormals gen(master_seed, substream);
    const int n = m.n();
    const double dt = st.dt;
    const long N = step_count(eo.T_long, dt);
    Eigen::VectorXd x = x0.coeffs(), dW(n);
    std::vector<double> samples;
    for (long k = 0; k < N; ++k) {
        const double h = (k == N - 1) ? eo.T_long - static_cast<double>(N - 1) * dt : dt;
        gen.increments(static_cast<std::uint64_t>(k), h, {dW.data(), static_cast<std::size_t>(n)});
        stp.step_inplace(x, h, dW);
        const double t = k == N - 1 ? eo.T_long : static_cast<double>(k + 1) * dt;
        if (t > eo.burn_in && (k + 1) % eo.stride == 0) samples.push_back(f(sp, x));
    }
    const std::size_t per = samples.size() / static_cast<std::size_t>(eo.batches);
    if (per < 1) throw InsufficientDataError("too few samples after burn-in for the requested batches");
    std::vector<double> means(eo.batches);
    for (int b = 0; b < eo.batches; ++b) {
        double s = 0;
        for (std::size_t i = 0; i < per; ++i) s += samples[b * per + i];
        means[b] = s / static_cast<double>(per);
    }
    auto e = summarize_samples(means, master_seed, substream, substream + 1);
    e.n_samples = static_cast<long>(per * eo.batches);
    return e;
}

ErgodicResult ergodic_average(const Model& m, const TestFunction& f, const std::vector<SpectralVector>& starts,
                              const StepperConfig& st, const ErgodicOptions& eo, std::uint64_t master_seed,
                              int threads) {
    if (starts.empty()) throw ParameterError("ergodic_average needs at least one start");
    if (m.spec().c > 0.0) throw ParameterError("ergodic_average needs a dissipative model (c <= 0)");
    ErgodicResult res;
    res.averages = parallel_map(starts.size(), threads, [] { return 0; }, [&](int&, std::size_t i) {
        return time_average(m, f, starts[i], st, eo, master_seed, static_cast<std::uint32_t>(i));
    });
    res.agree = true;
    for (std::size_t i = 0; i < starts.size(); ++i)
        for (std::size_t j = i + 1; j < starts.size(); ++j) {
            const auto& a = res.averages[i];
            const auto& b = res.averages[j];
            const double diff = std::abs(a.mean - b.mean);
            const double se = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
            const double ratio = se > 0.0 ? diff / se : (diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
            res.worst_ratio = std::max(res.worst_ratio, ratio);
            if (!(diff <= 3.0 * se)) res.agree = false;
        }
    return res;
}

}  // namespace spdelab
