#include "spdelab/conditions.hpp"
#include "spdelab/errors.hpp"
#include "spdelab/models.hpp"

#include <doctest.h>

#include <cmath>

using namespace spdelab;

namespace {

ModelSpec porous(double r) {
    ModelSpec s;
    s.r = r;
    return s;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("linear drift of e_1 is -pi^2 e_1") {
    Model m(porous(1.0));
    const auto a = m.drift(SpectralVector::unit(16, 1));
    CHECK(a[0] == doctest::Approx(-M_PI * M_PI).epsilon(1e-13));
    for (int j = 1; j < 16; ++j) CHECK(std::abs(a[j]) < 1e-11);
}

TEST_CASE("cubic drift of e_1 by hand") {
    // (sqrt2 sin)^3 = 2 sqrt2 (3 sin - sin 3)/4, so the projections are 3/2 and -1/2.
    Model m(porous(3.0));
    const auto a = m.drift(SpectralVector::unit(16, 1));
    CHECK(a[0] == doctest::Approx(-1.5 * M_PI * M_PI).epsilon(1e-12));
    CHECK(a[2] == doctest::Approx(0.5 * 9.0 * M_PI * M_PI).epsilon(1e-12));
    CHECK(std::abs(a[1]) < 1e-10);
    for (int j = 3; j < 16; ++j) CHECK(std::abs(a[j]) < 1e-9);
}

TEST_CASE("linear term c x is added") {
    ModelSpec s = porous(1.0);
    s.c = 2.5;
    Model m(s);
    const auto a = m.drift(SpectralVector::unit(16, 2));
    CHECK(a[1] == doctest::Approx(-4 * M_PI * M_PI + 2.5).epsilon(1e-13));
}

TEST_CASE("drift is monotone: <A(u)-A(v), u-v>_H <= 0 for c = 0") {
    for (double r : {1.5, 2.0, 3.0}) {
        Model m(porous(r));
        for (int i = 0; i < 50; ++i) {
            const auto u = sample_state(m, SamplerSpec{}, 5, 0, i, 0);
            const auto v = sample_state(m, SamplerSpec{}, 5, 0, i, 1);
            const double ip = m.space().h_inner((m.drift(u) - m.drift(v)).coeffs(), (u - v).coeffs());
            CHECK(ip <= 1e-12);
        }
    }
    ModelSpec f;
    f.kind = ModelKind::fast_diffusion;
    f.r = 0.5;
    f.noise.q = 0.55;
    Model m(f);
    for (int i = 0; i < 50; ++i) {
        const auto u = sample_state(m, SamplerSpec{}, 6, 0, i, 0);
        const auto v = sample_state(m, SamplerSpec{}, 6, 0, i, 1);
        CHECK(m.space().h_inner((m.drift(u) - m.drift(v)).coeffs(), (u - v).coeffs()) <= 1e-12);
    }
}

TEST_CASE("hemicontinuity: t -> <A(u + t v), w> is continuous") {
    Model m(porous(2.0));
    const auto u = sample_state(m, SamplerSpec{}, 7, 0, 0, 0);
    const auto v = sample_state(m, SamplerSpec{}, 7, 0, 1, 0);
    const auto w = sample_state(m, SamplerSpec{}, 7, 0, 2, 0);
    auto phi = [&](double t) { return m.space().h_inner(m.drift(u + t * v).coeffs(), w.coeffs()); };
    const double p0 = phi(0.3);
    double prev = std::abs(phi(0.3 + 1e-2) - p0);
    for (double h : {1e-3, 1e-4, 1e-5, 1e-6}) {
        const double d = std::abs(phi(0.3 + h) - p0);
        CHECK(d <= prev * 1.0001 + 1e-12);
        prev = d;
    }
    CHECK(prev < 1e-3 * (1.0 + std::abs(p0)));
}

TEST_CASE("constant noise coefficients are b j^{-q}") {
    ModelSpec s = porous(2.0);
    s.noise.b = 2.0;
    Model m(s);
    const auto sig = m.noise_diag(SpectralVector::zeros(16));
    for (int j = 1; j <= 16; ++j) CHECK(sig[j - 1] == doctest::Approx(2.0 * std::pow(j, -0.6)));
    CHECK(m.state_independent_noise());
    CHECK(m.rho(SpectralVector::zeros(16)) == doctest::Approx(4.0));
}

TEST_CASE("state-dependent example noise at e_1") {
    ModelSpec s = porous(2.0);
    s.noise.family = NoiseFamily::weyl_example;
    Model m(s);
    const auto sig = m.noise_diag(SpectralVector::unit(16, 1));
    CHECK(sig[0] == doctest::Approx(0.5));
    CHECK(sig[1] == doctest::Approx(std::pow(2.0, -0.6)));
    CHECK_FALSE(m.state_independent_noise());
    CHECK(m.hs_norm_diff(SpectralVector::unit(16, 1), SpectralVector::unit(16, 1)) == 0.0);
}

TEST_CASE("tilde B inverse divides by sigma") {
    Model m(porous(2.0));
    const auto v = SpectralVector::padded(16, {1.0, 1.0});
    const auto w = m.tilde_b_inverse(SpectralVector::zeros(16), v);
    CHECK(w[0] == doctest::Approx(1.0));
    CHECK(w[1] == doctest::Approx(std::pow(2.0, 0.6)));
}

TEST_CASE("model validation lists every violation") {
    ModelSpec s = porous(0.5);
    s.noise.q = 0.4;
    s.noise.b = -1.0;
    const auto v = s.violations();
    CHECK(v.size() >= 3);
    CHECK_THROWS_AS(Model{s}, ParameterError);
    ModelSpec ok = porous(2.0);
    CHECK(ok.violations().empty());
    ModelSpec f;
    f.kind = ModelKind::fast_diffusion;
    f.r = 1.5;
    CHECK_FALSE(f.violations().empty());
}

TEST_CASE("gamma >= d q is required for porous media") {
    ModelSpec s = porous(2.0);
    s.space.gamma = 0.5;
    CHECK_FALSE(s.violations().empty());
}

TEST_CASE("rho_floor may not exceed the guaranteed infimum") {
    ModelSpec s = porous(2.0);
    s.noise.rho_floor = 2.0;
    CHECK_FALSE(s.violations().empty());
    s.noise.rho_floor = 0.5;
    CHECK(s.violations().empty());
}

TEST_CASE("V norm for porous media is the L^{r+1} norm") {
    Model m(porous(1.0));
    CHECK(m.v_norm(SpectralVector::unit(16, 1).coeffs()) == doctest::Approx(1.0).epsilon(1e-10));
}

}
