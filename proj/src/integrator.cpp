#include "spdelab/integrator.hpp"

#include "spdelab/errors.hpp"
#include "spdelab/parallel.hpp"

#include <cmath>
#include <sstream>

namespace spdelab {

namespace {

// In-place Cholesky of a small column-major SPD matrix (lower triangle).
// Eigen's general LLT is slow at n ~ 16.
bool cholesky_factor(Eigen::MatrixXd& a) {
    const int n = static_cast<int>(a.rows());
    double* A = a.data();
    for (int j = 0; j < n; ++j) {
        double* cj = A + static_cast<std::ptrdiff_t>(j) * n;
        double d = cj[j];
        for (int k = 0; k < j; ++k) d -= A[k * n + j] * A[k * n + j];
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        d = std::sqrt(d);
        cj[j] = d;
        const double inv = 1.0 / d;
        for (int i = j + 1; i < n; ++i) {
            double v = cj[i];
            for (int k = 0; k < j; ++k) v -= A[k * n + i] * A[k * n + j];
            cj[i] = v * inv;
        }
    }
    return true;
}

// Solve L L^T x = rhs in place with the factor from cholesky_factor.
void cholesky_solve(const Eigen::MatrixXd& a, Eigen::VectorXd& rhs) {
    const int n = static_cast<int>(a.rows());
    const double* A = a.data();
    double* x = rhs.data();
    for (int i = 0; i < n; ++i) {
        double v = x[i];
        for (int k = 0; k < i; ++k) v -= A[k * n + i] * x[k];
        x[i] = v / A[i * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        const double* ci = A + static_cast<std::ptrdiff_t>(i) * n;
        double v = x[i];
        for (int k = i + 1; k < n; ++k) v -= ci[k] * x[k];
        x[i] = v / ci[i];
    }
}

}  // namespace

std::string_view to_string(Scheme s) { return s == Scheme::semi_implicit ? "semi_implicit" : "tamed_explicit"; }

Scheme parse_scheme(std::string_view s) {
    if (s == "semi_implicit") return Scheme::semi_implicit;
    if (s == "tamed_explicit") return Scheme::tamed_explicit;
    throw ParameterError("unknown scheme '" + std::string(s) + "'");
}

std::vector<std::string> StepperConfig::violations() const {
    std::vector<std::string> v;
    if (!(dt > 0.0) || !std::isfinite(dt)) v.emplace_back("stepper.dt must be > 0");
    if (dt_min && !(*dt_min > 0.0)) v.emplace_back("stepper.dt_min must be > 0");
    if (dt_min && !(*dt_min < dt)) v.emplace_back("stepper.dt_min must be < dt");
    if (!(newton_tol > 0.0)) v.emplace_back("stepper.newton_tol must be > 0");
    if (newton_max_iter < 1) v.emplace_back("stepper.newton_max_iter must be >= 1");
    return v;
}

void StepperConfig::validate() const {
    const auto v = violations();
    if (v.empty()) return;
    std::string msg = "invalid stepper:";
    for (const auto& s : v) msg += " " + s + ";";
    throw ParameterError(msg);
}

NoiseIncrement NoiseIncrement::draw(const rng::CounterNormals& g, std::uint64_t step, double dt, int n) {
    NoiseIncrement inc{Eigen::VectorXd(n)};
    g.increments(step, dt, {inc.dW.data(), static_cast<std::size_t>(n)});
    return inc;
}

Stepper::Stepper(const Model& m, StepperConfig cfg) : m_(&m), cfg_(std::move(cfg)) {
    cfg_.validate();
    const int n = m.n();
    const int g = m.space().grid_size();
    grid_.resize(g);
    grid2_.resize(g);
    ugrid_.resize(g);
    ugrid_trial_.resize(g);
    for (auto* v : {&tmp_, &res_, &trial_, &trial_res_, &delta_, &sigma_, &b_}) v->resize(n);
    jac_.resize(n, n);
}

void Stepper::noise_increment(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& dW,
                              Eigen::Ref<Eigen::VectorXd> out) {
    m_->noise_diag_into(x, sigma_);
    out = sigma_.cwiseProduct(dW).cwiseQuotient(m_->space().h_scale());
}

void Stepper::residual(const Eigen::Ref<const Eigen::VectorXd>& b, double h, const Eigen::Ref<const Eigen::VectorXd>& u,
                       const ImplicitControl* ctl, Eigen::Ref<Eigen::VectorXd> out, Eigen::VectorXd& ugrid) {
    const auto& sp = m_->space();
    sp.synthesize(u, ugrid);
    grid_ = ugrid;
    m_->apply_psi(grid_);
    sp.analyze(grid_, out);
    out.array() = h * sp.lambda_gamma().array() * out.array() + (1.0 - h * m_->spec().c) * u.array() - b.array();
    if (ctl) {
        tmp_ = u - *ctl->target;
        const double e = sp.h_norm(tmp_);
        out += (h * ctl->gain / std::max(e, ctl->kappa)) * tmp_;
    }
}

double Stepper::residual_norm(const Eigen::Ref<const Eigen::VectorXd>& b, double h,
                              const Eigen::Ref<const Eigen::VectorXd>& u, const ImplicitControl* ctl) {
    residual(b, h, u, ctl, res_, ugrid_);
    return m_->space().h_norm(res_);
}

bool Stepper::newton(const Eigen::Ref<const Eigen::VectorXd>& b, double h, Eigen::VectorXd& u,
                     const ImplicitControl* ctl, StepDiagnostics& diag) {
    const auto& sp = m_->space();
    const auto& metric = sp.metric();
    const double a0 = 1.0 - h * m_->spec().c;
    residual(b, h, u, ctl, res_, ugrid_);
    double r0 = sp.h_norm(res_);
    diag.dt = h;
    for (int it = 0; it < cfg_.newton_max_iter; ++it) {
        diag.iterations = it;
        diag.residual = r0;
        if (!std::isfinite(r0)) return false;
        if (r0 <= cfg_.newton_tol) return true;
        ++stats_.newton_iterations;

        // Symmetrized Jacobian Lambda^{-gamma} F'(u): SPD for monotone A.
        m_->apply_dpsi(ugrid_, grid2_);
        sp.weighted_gram(grid2_, jac_);
        jac_ *= h;
        jac_.diagonal() += a0 * metric;
        if (ctl) {
            tmp_ = u - *ctl->target;
            const double e = sp.h_norm(tmp_);
            const double g = h * ctl->gain;
            if (e <= ctl->kappa) {
                jac_.diagonal() += (g / ctl->kappa) * metric;
            } else {
                delta_ = metric.cwiseProduct(tmp_);
                jac_.diagonal() += (g / e) * metric;
                jac_.noalias() -= (g / (e * e * e)) * delta_ * delta_.transpose();
            }
        }
        if (!cholesky_factor(jac_)) return false;
        delta_ = metric.cwiseProduct(res_);
        cholesky_solve(jac_, delta_);

        double lam = 1.0;
        bool accepted = false;
        for (int k = 0; k < 40; ++k) {
            trial_ = u - lam * delta_;
            residual(b, h, trial_, ctl, trial_res_, ugrid_trial_);
            const double rn = sp.h_norm(trial_res_);
            if (std::isfinite(rn) && rn < r0) {
                u.swap(trial_);
                res_.swap(trial_res_);
                ugrid_.swap(ugrid_trial_);
                r0 = rn;
                accepted = true;
                break;
            }
            lam *= 0.5;
            ++diag.halvings;
        }
        if (!accepted) {
            diag.residual = r0;
            return r0 <= cfg_.newton_tol;
        }
    }
    diag.iterations = cfg_.newton_max_iter;
    diag.residual = r0;
    return r0 <= cfg_.newton_tol;
}

void Stepper::solve_split(const Eigen::VectorXd& b, double h, Eigen::VectorXd& u, const ImplicitControl* ctl,
                          int depth) {
    u = b;
    StepDiagnostics diag;
    bool ok = false;
    try {
        ok = newton(b, h, u, ctl, diag);
    } catch (const NumericalDomainError&) {
        ok = false;
    }
    if (ok) return;
    if (h / 2.0 < cfg_.min_step() * (1.0 - 1e-12)) {
        diag.dt = h;
        throw StepFailure("implicit step did not converge", diag);
    }
    ++stats_.dt_splits;
    Eigen::VectorXd mid(b.size());
    solve_split(b, h / 2.0, mid, ctl, depth + 1);
    solve_split(mid, h / 2.0, u, ctl, depth + 1);
}

void Stepper::implicit_solve(const Eigen::Ref<const Eigen::VectorXd>& b, double h, Eigen::VectorXd& u,
                             const ImplicitControl* ctl) {
    Eigen::VectorXd bb = b;
    u.resize(b.size());
    solve_split(bb, h, u, ctl, 0);
}

void Stepper::step_inplace(Eigen::VectorXd& x, double dt, const Eigen::Ref<const Eigen::VectorXd>& dW,
                           const Eigen::VectorXd* extra_drift) {
    ++stats_.steps;
    noise_increment(x, dW, b_);
    if (extra_drift) b_ += dt * *extra_drift;
    if (cfg_.scheme == Scheme::tamed_explicit) {
        m_->drift_into(x, res_, grid_);
        const double a = m_->space().h_norm(res_);
        x += (dt / (1.0 + dt * a)) * res_ + b_;
    } else {
        b_ += x;
        // Fast path: the whole step converges without splitting.
        x = b_;
        StepDiagnostics diag;
        bool ok = false;
        try {
            ok = newton(b_, dt, x, nullptr, diag);
        } catch (const NumericalDomainError&) {
            ok = false;
        }
        if (!ok) {
            Eigen::VectorXd b = b_;
            solve_split(b, dt, x, nullptr, 0);
        }
    }
    if (!x.allFinite()) {
        for (Eigen::Index i = 0; i < x.size(); ++i)
            if (!std::isfinite(x[i])) throw NumericalDomainError("non-finite state after step", static_cast<long>(i));
    }
}

SpectralVector Stepper::step(const SpectralVector& x, double dt, const NoiseIncrement& dW) {
    m_->space().check_size(x.coeffs());
    m_->space().check_size(dW.dW);
    x.require_finite("step");
    if (!(dt > 0.0)) throw ParameterError("step needs dt > 0");
    Eigen::VectorXd y = x.coeffs();
    step_inplace(y, dt, dW.dW);
    return SpectralVector(std::move(y));
}

long step_count(double T, double dt) {
    if (!(T > 0.0)) return 0;
    const double ratio = T / dt;
    long n = static_cast<long>(std::ceil(ratio - 1e-9 * std::max(1.0, ratio)));
    return std::max(n, 1L);
}

PathResult simulate_path(Stepper& st, const SpectralVector& x0, double T, const PathOptions& opt) {
    const Model& m = st.model();
    m.space().check_size(x0.coeffs());
    x0.require_finite("simulate_path");
    if (T < 0.0 || !std::isfinite(T)) throw ParameterError("simulate_path needs T >= 0");
    const double dt = st.config().dt;
    const long N = step_count(T, dt);
    const int n = m.n();
    rng::CounterNormals gen(opt.master_seed, opt.substream);
    Eigen::VectorXd x = x0.coeffs();
    Eigen::VectorXd dW(n);
    PathResult out;
    out.sup_h_norm2 = m.space().h_inner(x, x);
    const bool save = opt.save_stride > 0;
    if (save) {
        out.times.push_back(0.0);
        out.states.push_back(x);
    }
    for (long k = 0; k < N; ++k) {
        const double h = (k == N - 1) ? T - static_cast<double>(N - 1) * dt : dt;
        gen.increments(static_cast<std::uint64_t>(k), h, {dW.data(), static_cast<std::size_t>(n)});
        st.step_inplace(x, h, dW);
        out.sup_h_norm2 = std::max(out.sup_h_norm2, m.space().h_inner(x, x));
        if (save && ((k + 1) % opt.save_stride == 0 || k == N - 1)) {
            out.times.push_back(k == N - 1 ? T : static_cast<double>(k + 1) * dt);
            out.states.push_back(x);
        }
    }
    out.steps = N;
    out.terminal = SpectralVector(std::move(x));
    return out;
}

PathResult simulate_path(const Model& m, const SpectralVector& x0, double T, const StepperConfig& cfg,
                         const PathOptions& opt) {
    Stepper st(m, cfg);
    return simulate_path(st, x0, T, opt);
}

namespace {

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    return sxy / sxx;
}

}  // namespace

ConvergenceResult convergence_probe(const Model& m, const SpectralVector& x0, double T, const std::vector<double>& dt_list,
                                    int n_paths, const StepperConfig& base, std::uint64_t master_seed, int threads) {
    if (dt_list.empty()) throw ParameterError("convergence_probe needs a non-empty dt list");
    if (n_paths < 100) throw ParameterError("convergence_probe needs at least 100 paths");
    if (!(T > 0.0)) throw ParameterError("convergence_probe needs T > 0");
    for (std::size_t i = 1; i < dt_list.size(); ++i)
        if (!(dt_list[i] < dt_list[i - 1])) throw ParameterError("dt list must be strictly descending");
    const double fine = dt_list.back();
    const long n_fine = std::lround(T / fine);
    if (std::abs(n_fine * fine - T) > 1e-9 * T) throw ParameterError("T must be a multiple of the finest dt");
    std::vector<long> ratio;
    for (double dt : dt_list) {
        const long k = std::lround(dt / fine);
        if (k < 1 || std::abs(k * fine - dt) > 1e-9 * dt) throw ParameterError("each dt must be a multiple of the finest");
        if (n_fine % k != 0) throw ParameterError("T must be a multiple of every dt");
        ratio.push_back(k);
    }
    m.space().check_size(x0.coeffs());
    const int n = m.n();

    auto errs = parallel_map(
        static_cast<std::size_t>(n_paths), threads,
        [&] {
            StepperConfig c = base;
            c.dt = fine;
            c.dt_min.reset();
            return Stepper(m, c);
        },
        [&](Stepper& st, std::size_t p) {
            rng::CounterNormals gen(master_seed, static_cast<std::uint32_t>(p));
            Eigen::MatrixXd inc(n, n_fine);
            for (long k = 0; k < n_fine; ++k)
                gen.increments(static_cast<std::uint64_t>(k), fine, {inc.col(k).data(), static_cast<std::size_t>(n)});
            std::vector<Eigen::VectorXd> terminal;
            for (long r : ratio) {
                Eigen::VectorXd x = x0.coeffs();
                Eigen::VectorXd dW(n);
                const double h = static_cast<double>(r) * fine;
                for (long k = 0; k < n_fine; k += r) {
                    dW = inc.middleCols(k, r).rowwise().sum();
                    st.step_inplace(x, h, dW);
                }
                terminal.push_back(std::move(x));
            }
            std::vector<double> e(ratio.size());
            for (std::size_t i = 0; i < ratio.size(); ++i) e[i] = m.space().h_norm(terminal[i] - terminal.back());
            return e;
        });

    ConvergenceResult res;
    res.n_paths = n_paths;
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < dt_list.size(); ++i) {
        double s = 0, s2 = 0;
        for (const auto& e : errs) s += e[i];
        const double mean = s / n_paths;
        for (const auto& e : errs) s2 += (e[i] - mean) * (e[i] - mean);
        ConvergencePoint pt{dt_list[i], mean, std::sqrt(s2 / (n_paths - 1) / n_paths)};
        res.points.push_back(pt);
        if (i + 1 < dt_list.size() && mean > 0.0) {
            lx.push_back(std::log(dt_list[i]));
            ly.push_back(std::log(mean));
        }
    }
    res.slope = lx.size() >= 2 ? ols_slope(lx, ly) : std::nan("");
    return res;
}

double fit_moment_constant(double mean_sup, double T, double x0_norm2) {
    if (!(T > 0.0) || !(mean_sup >= 0.0)) throw ParameterError("fit_moment_constant needs T > 0, mean_sup >= 0");
    const double base = T + x0_norm2;
    auto f = [&](double C) { return C * (1.0 + std::exp(C * T)) * base; };
    if (mean_sup == 0.0) return 0.0;
    double hi = 1.0;
    while (f(hi) < mean_sup) hi *= 2.0;
    double lo = 0.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < mean_sup ? lo : hi) = mid;
    }
    return hi;
}

}  // namespace spdelab
