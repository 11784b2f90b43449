#include "spdelab/analysis.hpp"
#include "spdelab/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace spdelab;

namespace {

SpectralVector along_e1(const Model& m, double d) {
    auto y = SpectralVector::zeros(m.n());
    y[0] = d / m.space().h_scale()[0];
    return y;
}

// Independent oracle: for each eps, max(a1, a3) decreases and a2 increases
// in p, so the inf over p of the max sits at their crossing (or an end).
double corollary_oracle(double r, double theta, double step) {
    const auto rg = corollary31_epsilon_range(r, theta);
    auto dec = [&](double eps, double p) {
        const double t = theta * (1 - eps), g = 0.5 * (r + 1 - t);
        const double a1 = eps * (2 * (r - 1) - t) / (2 * (p * theta + 1) * (r - 1) - t);
        const double a3 = (eps - 2 * (1 - g)) / (p * theta + 1);
        return std::max(a1, a3);
    };
    auto inc = [&](double eps, double p) {
        return theta == 2.0 ? 0.0 : eps * (theta - 2) / (2 * (1 - p) * theta + theta - 2);
    };
    double best = -1e300;
    for (double eps = rg.lo + step; eps < rg.hi; eps += step) {
        double lo = 0.0, hi = 1.0, inf;
        if (dec(eps, 0.0) <= inc(eps, 0.0)) {
            inf = inc(eps, 0.0);
        } else if (dec(eps, 1.0) >= inc(eps, 1.0)) {
            inf = dec(eps, 1.0);
        } else {
            for (int it = 0; it < 80; ++it) {
                const double mid = 0.5 * (lo + hi);
                (dec(eps, mid) > inc(eps, mid) ? lo : hi) = mid;
            }
            inf = std::max(dec(eps, lo), inc(eps, lo));
        }
        best = std::max(best, eps - inf);
    }
    return best;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("closed-form exponents") {
    CHECK(std::abs(beta_theory(BetaKind::lemma21, 3.0, 4.0) - 0.25) <= 1e-12);
    CHECK(std::abs(beta_theory(BetaKind::lemma22, 0.5, 4.0) - 0.5) <= 1e-12);
    CHECK(std::abs(beta_theory(BetaKind::lemma22, 0.5, 3.0) - 6.0 / 13.0) <= 1e-12);
    CHECK(std::abs(beta_theory(BetaKind::lemma21, 2.0, 3.0) - 1.0 / 3.0) <= 1e-12);
}

TEST_CASE("lemma21 exponent is increasing in theta and lies in (0, 1/2]") {
    for (double r : {1.0, 1.5, 2.0, 3.0, 5.0}) {
        double prev = -1;
        for (double theta = std::max(2.0, r - 1 + 0.05); theta < 20; theta += 0.25) {
            const double b = beta_theory(BetaKind::lemma21, r, theta);
            CHECK(b > 0.0);
            CHECK(b <= 0.5);
            CHECK(b >= prev);
            prev = b;
        }
    }
}

TEST_CASE("exponent parameter ranges") {
    CHECK_THROWS_AS(beta_theory(BetaKind::lemma21, 0.5, 3.0), ParameterError);
    CHECK_THROWS_AS(beta_theory(BetaKind::lemma21, 2.0, 1.5), ParameterError);
    CHECK_THROWS_AS(beta_theory(BetaKind::lemma22, 2.0, 3.0), ParameterError);
    CHECK_THROWS_AS(beta_theory(BetaKind::lemma22, 0.5, 2.0), ParameterError);
    CHECK_THROWS_AS(beta_theory(BetaKind::corollary31, 1.0, 3.0), ParameterError);
}

TEST_CASE("corollary grid search agrees with a finer independent oracle") {
    const double grid = beta_theory(BetaKind::corollary31, 3.0, 6.0, 1e-4);
    const double oracle = corollary_oracle(3.0, 6.0, 1e-5);
    CHECK(std::abs(grid - oracle) <= 1e-3);
    CHECK(grid > 0.0);
    const double g2 = beta_theory(BetaKind::corollary31, 2.0, 2.0, 1e-3);
    CHECK(std::abs(g2 - corollary_oracle(2.0, 2.0, 1e-5)) <= 1e-3);
}

TEST_CASE("epsilon ranges from both sources") {
    const auto a = lemma21_epsilon_range(3.0, 4.0);
    CHECK(a.lo == doctest::Approx(0.0));
    CHECK(a.hi == doctest::Approx(0.5));
    const auto b = corollary31_epsilon_range(3.0, 6.0);
    CHECK(b.lo == doctest::Approx(1.0 / 3.0));
    CHECK(b.hi == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("holder_fit on synthetic power laws") {
    std::vector<GapPoint> pts;
    for (int k = 0; k < 5; ++k) {
        const double d = 0.2 * std::ldexp(1.0, -k);
        pts.push_back({d, 3.0 * std::sqrt(d), 0.0});
    }
    auto fit = holder_fit(pts);
    CHECK(fit.beta == doctest::Approx(0.5).epsilon(1e-12));
    for (auto& p : pts) p.gap = 0.7;
    fit = holder_fit(pts);
    CHECK(std::abs(fit.beta) < 1e-12);
    std::vector<GapPoint> few{{0.1, 0.0, 0.0}, {0.05, 0.0, 0.0}, {0.025, 0.01, 0.0}, {0.0125, 0.004, 0.0}};
    CHECK_THROWS_AS(holder_fit(few), InsufficientDataError);
}

TEST_CASE("mc_gap: x = y and constant f give exactly zero") {
    Model m{ModelSpec{}};
    const auto x = SpectralVector::padded(16, {0.3});
    const StepperConfig st;
    auto e = mc_gap(m, TestFunction::tanh_mode(1), x, x, 0.05, 100, st, GapOptions{1, 0, 1});
    CHECK(e.mean == 0.0);
    CHECK(e.std_error == 0.0);
    e = mc_gap(m, TestFunction::cosine_mode(1, 0.0), x, along_e1(m, 0.1), 0.05, 100, st, GapOptions{1, 0, 1});
    CHECK(e.mean == 0.0);
    CHECK_THROWS_AS(mc_gap(m, TestFunction::tanh_mode(1), x, x, 0.05, 99, st, GapOptions{}), ParameterError);
}

TEST_CASE("mc_gap at distance 0.1 is resolved and consistent across sample sizes") {
    Model m{ModelSpec{}};
    const auto x = SpectralVector::zeros(16);
    const auto y = along_e1(m, 0.1);
    const auto a = mc_gap(m, TestFunction::tanh_mode(1), x, y, 0.5, 400, StepperConfig{}, GapOptions{81, 0, 1});
    const auto b = mc_gap(m, TestFunction::tanh_mode(1), x, y, 0.5, 800, StepperConfig{}, GapOptions{81, 1000, 1});
    CHECK(a.std_error < a.mean / 3.0);
    CHECK(std::abs(a.mean - b.mean) <= 3.0 * std::hypot(a.std_error, b.std_error));
}

TEST_CASE("paired estimator agreement over random configurations") {
    // Small M keeps this quick; every configuration is paired with a 2M run.
    int agree = 0;
    for (int i = 0; i < 50; ++i) {
        ModelSpec s;
        s.r = 1.5 + 0.03 * i;
        s.space.n_modes = 4 + i % 5;
        Model m(s);
        const auto x = SpectralVector::padded(m.n(), {0.1 * (i % 3)});
        const auto y = along_e1(m, 0.05 + 0.005 * i);
        const auto a = mc_gap(m, TestFunction::tanh_mode(1), x, y, 0.05, 100, StepperConfig{}, GapOptions{uint64_t(90 + i), 0, 1});
        const auto b = mc_gap(m, TestFunction::tanh_mode(1), x, y, 0.05, 200, StepperConfig{}, GapOptions{uint64_t(90 + i), 500, 1});
        agree += std::abs(a.mean - b.mean) <= 3.0 * std::hypot(a.std_error, b.std_error);
    }
    // Each pair agrees with probability about 0.997.
    CHECK(agree >= 48);
}

TEST_CASE("audit trivial cases") {
    Model m{ModelSpec{}};
    const auto x = SpectralVector::padded(16, {0.3});
    CouplingConfig c;
    auto a = coupling_bound_audit(m, TestFunction::tanh_mode(1), x, x, 100, c, GapOptions{5, 0, 1});
    CHECK(a.lhs.mean == 0.0);
    CHECK(a.rhs == 0.0);
    CHECK(a.pass);
    a = coupling_bound_audit(m, TestFunction::cosine_mode(1, 0.0), x, along_e1(m, 0.1), 100, c, GapOptions{5, 0, 1});
    CHECK(a.lhs.mean == 0.0);
    CHECK(a.pass);
}

TEST_CASE("audit passes at distance 0.1") {
    Model m{ModelSpec{}};
    const auto a = coupling_bound_audit(m, TestFunction::tanh_mode(1), SpectralVector::zeros(16), along_e1(m, 0.1), 200,
                                        CouplingConfig{}, GapOptions{6, 0, 1});
    CHECK(a.pass);
    CHECK(a.margin >= -3.0 * a.pooled_se);
}

TEST_CASE("Clopper-Pearson interval") {
    auto [lo, hi] = clopper_pearson(0, 10, 0.95);
    CHECK(lo == 0.0);
    CHECK(hi == doctest::Approx(1.0 - std::pow(0.025, 0.1)).epsilon(1e-10));
    std::tie(lo, hi) = clopper_pearson(10, 10, 0.95);
    CHECK(hi == 1.0);
    CHECK(lo == doctest::Approx(std::pow(0.025, 0.1)).epsilon(1e-10));
    std::tie(lo, hi) = clopper_pearson(5, 10, 0.95);
    CHECK(lo == doctest::Approx(0.187086).epsilon(1e-5));
    CHECK(hi == doctest::Approx(0.812914).epsilon(1e-5));
}

TEST_CASE("irreducibility verdict semantics") {
    ModelSpec s;
    s.noise.rho_floor = 1.0;
    Model m(s);
    const auto x = SpectralVector::padded(16, {0.2});
    auto r = irreducibility_probe(m, x, x, 1e3, 0.05, 100, StepperConfig{}, GapOptions{7, 0, 1});
    CHECK(r.frequency.mean == 1.0);
    CHECK(r.verdict == Verdict::positive);
    r = irreducibility_probe(m, x, SpectralVector::padded(16, {5.0}), 1e-6, 0.05, 100, StepperConfig{}, GapOptions{7, 0, 1});
    CHECK(r.hits == 0);
    CHECK(r.verdict == Verdict::inconclusive);
    ModelSpec w;
    w.noise.family = NoiseFamily::weyl_example;
    CHECK_THROWS_AS(irreducibility_probe(Model(w), x, x, 1.0, 0.05, 100, StepperConfig{}, GapOptions{}), ParameterError);
}

TEST_CASE("steering: target start stays put") {
    Model m{ModelSpec{}};
    const auto y = SpectralVector::padded(16, {0.2, 0.1});
    const auto r = steer_deterministic(m, y, y, 0.0, 0.2, 0.0, 1.0, StepperConfig{});
    for (double g : r.gaps) CHECK(g <= 1e-8);
    CHECK(r.success);
}

TEST_CASE("steering: linear single mode against the comparison ODE") {
    // With K1 = 0 the gain is (R + |y|)/T + |A(y)|.
    ModelSpec s;
    s.r = 1.0;
    Model m(s);
    const auto z0 = SpectralVector::padded(16, {0.1});
    const auto y = SpectralVector::padded(16, {0.05});
    const auto r = steer_deterministic(m, z0, y, 0.0, 1.0, 0.0, 1.0, StepperConfig{});
    CHECK(r.success);
    CHECK(r.bound_ok);
    CHECK(r.C_R == doctest::Approx((1.0 + 0.05 / M_PI) / 1.0 + 0.05 * M_PI * M_PI / M_PI));
}

TEST_CASE("steering: porous medium example succeeds within the decay bound") {
    Model m{ModelSpec{}};
    const auto r = steer_deterministic(m, SpectralVector::padded(16, {0.5}), SpectralVector::padded(16, {0.2, 0.1}), 0.0,
                                       1.0, 0.0, 1.0, StepperConfig{});
    CHECK(r.success);
    CHECK(r.bound_ok);
    CHECK(r.terminal_gap <= 1e-8);
    CHECK_THROWS_AS(steer_deterministic(m, SpectralVector::padded(16, {5.0}), SpectralVector::zeros(16), 0.0, 1.0, 0.0,
                                        1.0, StepperConfig{}),
                    ParameterError);
}

TEST_CASE("steering gain and its K1 -> 0 limit") {
    Model m{ModelSpec{}};
    const auto y = SpectralVector::padded(16, {0.2});
    const double g0 = steering_gain(m, y, 0.0, 1.0, 0.0, 1.0);
    const double g1 = steering_gain(m, y, 1e-9, 1.0, 0.0, 1.0);
    CHECK(g1 == doctest::Approx(g0).epsilon(1e-7));
}

TEST_CASE("ergodic averages: constant f and identical starts") {
    Model m{ModelSpec{}};
    ErgodicOptions eo;
    eo.T_long = 2.0;
    eo.burn_in = 0.5;
    const auto f = TestFunction::cosine_mode(1, 0.0);
    const auto r = ergodic_average(m, f, {SpectralVector::zeros(16), SpectralVector::padded(16, {0.5})}, StepperConfig{}, eo, 3);
    for (const auto& a : r.averages) CHECK(a.mean == 1.0);
    const auto x = SpectralVector::padded(16, {0.5});
    const auto a = time_average(m, TestFunction::tanh_mode(1), x, StepperConfig{}, eo, 3, 0);
    const auto b = time_average(m, TestFunction::tanh_mode(1), x, StepperConfig{}, eo, 3, 0);
    CHECK(a.mean == b.mean);
    ModelSpec bad;
    bad.c = 1.0;
    CHECK_THROWS_AS(ergodic_average(Model(bad), f, {x}, StepperConfig{}, eo, 3), ParameterError);
}

TEST_CASE("test functions are bounded and use H coordinates") {
    Model m{ModelSpec{}};
    const auto x = along_e1(m, 0.4);
    CHECK(TestFunction::tanh_mode(1)(m.space(), x.coeffs()) == doctest::Approx(std::tanh(0.4)));
    CHECK(TestFunction::cosine_mode(1, 2.0)(m.space(), x.coeffs()) == doctest::Approx(std::cos(0.8)));
    const auto ball = TestFunction::ball_indicator(SpectralVector::zeros(16), 0.5);
    CHECK(ball(m.space(), x.coeffs()) == 1.0);
    CHECK(ball(m.space(), along_e1(m, 0.6).coeffs()) == 0.0);
    CHECK_THROWS_AS(TestFunction::tanh_mode(17)(m.space(), x.coeffs()), IndexError);
}

}
