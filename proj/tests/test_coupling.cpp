#include "spdelab/analysis.hpp"
#include "spdelab/conditions.hpp"
#include "spdelab/coupling.hpp"
#include "spdelab/errors.hpp"

#include <doctest.h>

#include <cmath>

using namespace spdelab;

namespace {

SpectralVector along_e1(const Model& m, double d) {
    auto y = SpectralVector::zeros(m.n());
    y[0] = d / m.space().h_scale()[0];
    return y;
}

}  // namespace

TEST_SUITE("coupling") {

TEST_CASE("x = y couples at time zero") {
    Model m{ModelSpec{}};
    const auto x = SpectralVector::padded(16, {0.2});
    const auto o = run_coupling(m, x, x, CouplingConfig{}, 1, 0);
    CHECK(o.coupled);
    CHECK(o.tau == 0.0);
    CHECK(o.logR_T == 0.0);
    CHECK(o.I_theta == 0.0);
    CHECK(o.quad_var == 0.0);
    CHECK(o.X_T == o.Y_T);
}

TEST_CASE("coupled_step refuses an already coupled pair") {
    Model m{ModelSpec{}};
    Stepper st(m, StepperConfig{});
    const auto x = SpectralVector::padded(16, {0.2});
    CHECK_THROWS_AS(coupled_step(st, x, x, 1e-3, NoiseIncrement::zero(16), CouplingConfig{}, 0.1), ParameterError);
}

TEST_CASE("zero start gap gives no extra drift and no weight") {
    Model m{ModelSpec{}};
    Stepper st(m, StepperConfig{});
    const auto x = SpectralVector::padded(16, {0.2});
    const auto y = SpectralVector::padded(16, {0.25});
    NoiseIncrement dW = NoiseIncrement::draw(rng::CounterNormals(3, 0), 0, 1e-3, 16);
    const auto out = coupled_step(st, x, y, 1e-3, dW, CouplingConfig{}, 0.0);
    CHECK(out.dlogR == 0.0);
    CHECK(out.dquad_var == 0.0);
    Stepper plain(m, StepperConfig{});
    CHECK(out.Y == plain.step(y, 1e-3, dW));
}

TEST_CASE("scalar Girsanov increment by hand") {
    // b = 1, q = 1, one active mode: h = g^alpha D_1 lambda_1^{-1/2} / |D|^eps, sigma_1 = 1.
    ModelSpec s;
    s.noise.q = 1.0;
    Model m(s);
    Stepper st(m, StepperConfig{});
    CouplingConfig c;
    c.epsilon = 0.5;
    c.alpha = 0.1;
    const auto x = SpectralVector::zeros(16);
    const auto y = along_e1(m, 0.2);
    NoiseIncrement dW = NoiseIncrement::zero(16);
    dW.dW[0] = 0.03;
    dW.dW[4] = -0.02;
    const double dt = 1e-3;
    const auto out = coupled_step(st, x, y, dt, dW, c, 0.2);
    const double dn = 0.2;                            // |X - Y|_H
    const double D1 = -0.2 * M_PI;                    // coefficient of X - Y
    const double h1 = std::pow(0.2, 0.1) * D1 / std::pow(dn, 0.5) / M_PI;
    CHECK(out.dlogR == doctest::Approx(-h1 * 0.03 - 0.5 * h1 * h1 * dt).epsilon(1e-13));
    CHECK(out.dquad_var == doctest::Approx(h1 * h1 * dt).epsilon(1e-13));
    // B0 e_1 = e_1, so |D|_{B0} = |D|_H on mode 1.
    const double b0 = m.space().b0_norm((x - y).coeffs(), 1.0);
    CHECK(b0 == doctest::Approx(dn).epsilon(1e-14));
    CHECK(out.dI_theta == doctest::Approx(std::pow(b0, 3.0) / std::pow(dn, 1.5) * dt).epsilon(1e-13));
}

TEST_CASE("the density has mean one") {
    Model m{ModelSpec{}};
    const auto x = SpectralVector::zeros(16);
    const auto y = along_e1(m, 0.1);
    const auto s = coupling_samples(m, x, y, CouplingConfig{}, 300, GapOptions{41, 0, 1});
    const auto cs = summarize_coupling(s, 0.5, GapOptions{41, 0, 1});
    CHECK(std::abs(cs.R.mean - 1.0) <= 3.0 * cs.R.std_error);
    for (const auto& r : s) {
        CHECK(std::isfinite(r.logR));
        CHECK(std::exp(r.logR) > 0.0);
        CHECK(r.quad_var >= 0.0);
        CHECK(r.tau <= 0.5);
    }
    CHECK(cs.cap_fraction < 0.01);
}

TEST_CASE("importance sampling identity E[R f(Y_T)] = P_T f(y)") {
    // Short horizon and a large gap, so P_T f(y) is far from P_T f(x).
    Model m{ModelSpec{}};
    CouplingConfig c;
    c.T = 0.02;
    const auto x = SpectralVector::zeros(16);
    const auto y = along_e1(m, 0.6);
    const auto f = TestFunction::tanh_mode(1);
    const int M = 2000;
    Stepper st(m, c.stepper);
    double s = 0, s2 = 0, p = 0, p2 = 0, q = 0;
    for (int k = 0; k < M; ++k) {
        const auto o = run_coupling(st, x, y, c, 51, k);
        const double v = std::exp(o.logR_T) * f(m.space(), o.Y_T.coeffs());
        s += v;
        s2 += v * v;
        const double w = f(m.space(), simulate_path(st, y, c.T, PathOptions{52, uint32_t(k), 0}).terminal.coeffs());
        p += w;
        p2 += w * w;
        q += f(m.space(), o.X_T.coeffs());
    }
    const double ms = s / M, mp = p / M;
    const double se = std::sqrt((s2 / M - ms * ms) / M + (p2 / M - mp * mp) / M);
    CHECK(std::abs(ms - mp) <= 4.0 * se);
    // The identity is informative: P_T f(x) is far from P_T f(y).
    CHECK(std::abs(q / M - mp) > 10.0 * se);
}

TEST_CASE("couple_tol sensitivity") {
    Model m{ModelSpec{}};
    const auto x = SpectralVector::zeros(16);
    const auto y = along_e1(m, 0.1);
    std::vector<double> taus;
    for (double tol : {1e-6, 1e-8, 1e-10}) {
        CouplingConfig c;
        c.couple_tol = tol;
        const auto cs = summarize_coupling(coupling_samples(m, x, y, c, 200, GapOptions{61, 0, 1}), c.T, GapOptions{});
        CHECK(std::abs(cs.R.mean - 1.0) <= 3.0 * cs.R.std_error);
        CHECK(cs.cap_fraction < 0.01);
        taus.push_back(cs.tau.mean);
    }
    // Tighter tolerances only delay tau, and only slightly.
    CHECK(taus[0] <= taus[1] + 1e-12);
    CHECK(taus[1] <= taus[2] + 1e-12);
    CHECK(taus[2] - taus[0] < 0.05);
}

TEST_CASE("coupling runs are reproducible and thread independent") {
    Model m{ModelSpec{}};
    const auto x = SpectralVector::zeros(16);
    const auto y = along_e1(m, 0.1);
    const auto a = run_coupling(m, x, y, CouplingConfig{}, 7, 3);
    const auto b = run_coupling(m, x, y, CouplingConfig{}, 7, 3);
    CHECK(a.logR_T == b.logR_T);
    CHECK(a.tau == b.tau);
    CHECK(a.X_T == b.X_T);
    const auto s1 = coupling_samples(m, x, y, CouplingConfig{}, 12, GapOptions{7, 0, 1});
    const auto s3 = coupling_samples(m, x, y, CouplingConfig{}, 12, GapOptions{7, 0, 3});
    for (int k = 0; k < 12; ++k) {
        CHECK(s1[k].logR == s3[k].logR);
        CHECK(s1[k].I_theta == s3[k].I_theta);
    }
}

TEST_CASE("integral bound, tail bound and entropy sign over dyadic gaps") {
    Model m{ModelSpec{}};
    CouplingConfig c;
    const auto rep = check_conditions(m, c.theta, 5000, SamplerSpec{}, 71, 0x80000000u);
    const double eps = c.resolved_epsilon(), alpha = c.resolved_alpha(m.spec());
    double prev_I = 0.0;
    for (double g : {0.05, 0.1, 0.2}) {
        const auto cs = summarize_coupling(
            coupling_samples(m, SpectralVector::zeros(16), along_e1(m, g), c, 200, GapOptions{72, 0, 1}), c.T, GapOptions{});
        const double ib = integral_bound(g, m.r(), c.theta, eps, rep.fitted_K1, rep.fitted_delta1, c.T);
        CHECK(cs.I_theta.mean <= ib + 3.0 * cs.I_theta.std_error);
        CHECK(cs.p_tail.mean <= 1.5 * coupling_tail_bound(g, eps, alpha, rep.fitted_K1, c.T));
        CHECK(std::isfinite(cs.R_logR.mean));
        // E[R log R] >= 0 by Jensen; the sample mean may dip below zero by noise.
        CHECK(cs.R_logR.mean >= -3.0 * cs.R_logR.std_error);
        CHECK(cs.I_theta.mean > prev_I);
        prev_I = cs.I_theta.mean;
    }
}

TEST_CASE("config invariants") {
    ModelSpec s;
    CouplingConfig c;
    CHECK(c.violations(s).empty());
    CHECK(c.resolved_alpha(s) == doctest::Approx(0.5 - 1.0 / 3.0));
    c.alpha = 0.5;
    c.epsilon = 0.3;
    CHECK_FALSE(c.violations(s).empty());
    c = CouplingConfig{};
    c.mode = CouplingMode::lemma22;
    CHECK_FALSE(c.violations(s).empty());
    c = CouplingConfig{};
    c.epsilon = 0.9;   // theta(1 - eps) = 0.3 <= r - 1
    CHECK_FALSE(c.violations(s).empty());
    CHECK(parse_coupling_mode("free") == CouplingMode::free);
}

}
