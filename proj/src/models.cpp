#include "spdelab/models.hpp"

#include "spdelab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spdelab {

std::string_view to_string(ModelKind k) {
    return k == ModelKind::porous_medium ? "porous_medium" : "fast_diffusion";
}

std::string_view to_string(NoiseFamily f) {
    switch (f) {
        case NoiseFamily::constant: return "constant";
        case NoiseFamily::weyl_example: return "weyl_example";
        case NoiseFamily::table: return "table";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view s) {
    if (s == "porous_medium") return ModelKind::porous_medium;
    if (s == "fast_diffusion") return ModelKind::fast_diffusion;
    throw ParameterError("unknown model kind '" + std::string(s) + "'");
}

NoiseFamily parse_noise_family(std::string_view s) {
    if (s == "constant") return NoiseFamily::constant;
    if (s == "weyl_example") return NoiseFamily::weyl_example;
    if (s == "table") return NoiseFamily::table;
    throw ParameterError("unknown noise family '" + std::string(s) + "'");
}

std::vector<std::string> ModelSpec::violations() const {
    std::vector<std::string> v;
    try {
        space.validate();
    } catch (const ParameterError& e) {
        v.emplace_back(e.what());
    }
    if (kind == ModelKind::porous_medium) {
        // r = 1 is admitted as the linear heat reference case.
        if (!(r >= 1.0)) v.emplace_back("porous_medium requires r >= 1 (r = 1 is the linear reference case)");
        if (!(space.gamma >= space.d * noise.q)) {
            std::ostringstream os;
            os << "porous_medium requires gamma >= d*q (gamma=" << space.gamma << ", d*q=" << space.d * noise.q << ")";
            v.push_back(os.str());
        }
    } else {
        if (!(r > 1.0 / 3.0 && r < 1.0)) v.emplace_back("fast_diffusion requires 1/3 < r < 1");
        if (space.gamma != 1.0) v.emplace_back("fast_diffusion requires gamma = 1");
        if (space.d != 1) v.emplace_back("fast_diffusion requires d = 1");
    }
    if (!std::isfinite(c)) v.emplace_back("model.c must be finite");
    if (!(noise.q > 0.5)) v.emplace_back("noise.q must be > 1/2 (B0 Hilbert-Schmidt)");
    if (trunc_radius && !(*trunc_radius > 0.0)) v.emplace_back("trunc_radius must be > 0");

    double inf_b = 0.0;  // guaranteed lower bound for inf_j b_j
    switch (noise.family) {
        case NoiseFamily::constant:
            if (!(noise.b > 0.0)) v.emplace_back("constant noise requires b > 0");
            inf_b = noise.b;
            break;
        case NoiseFamily::table:
            if (static_cast<int>(noise.table.size()) != space.n_modes) {
                v.emplace_back("table noise needs exactly n_modes values");
            } else {
                inf_b = noise.table.empty() ? 0.0 : noise.table[0];
                for (double b : noise.table) {
                    if (!(b > 0.0)) v.emplace_back("table noise values must be > 0");
                    inf_b = std::min(inf_b, b);
                }
            }
            break;
        case NoiseFamily::weyl_example:
            if (trunc_radius && *trunc_radius > 0.0 && space.n_modes >= 1 && space.d >= 1) {
                // |mu(x e_j)| = |c_j| <= lambda_j^{gamma/2} |x|_H <= lambda_j^{gamma/2} R
                try {
                    const auto lam = eigen_spectrum(space);
                    inf_b = 1.0;
                    for (int j = 1; j <= space.n_modes; ++j) {
                        const double w = std::pow(j, -2.0 * space.gamma / space.d);
                        inf_b = std::min(inf_b, 1.0 / (1.0 + w * std::pow(lam[j - 1], space.gamma / 2) * *trunc_radius));
                    }
                } catch (const Error&) {
                    inf_b = 0.0;
                }
            }
            break;
    }
    if (noise.rho_floor) {
        if (!(*noise.rho_floor > 0.0)) {
            v.emplace_back("noise.rho_floor must be > 0 when given");
        } else if (*noise.rho_floor > inf_b * inf_b * (1.0 + 1e-12)) {
            std::ostringstream os;
            os << "noise.rho_floor=" << *noise.rho_floor << " exceeds the guaranteed inf_j b_j^2=" << inf_b * inf_b;
            v.push_back(os.str());
        }
    }
    return v;
}

void ModelSpec::validate() const {
    const auto v = violations();
    if (v.empty()) return;
    std::string msg = "invalid model:";
    for (const auto& s : v) msg += " " + s + ";";
    throw ParameterError(msg);
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    space_ = std::make_shared<const SpectralSpace>(spec_.space);
    const int n = space_->n();
    if (spec_.r == 1.0) form_ = PsiForm::linear;
    else if (spec_.r == 2.0) form_ = PsiForm::square;
    else if (spec_.r == 3.0) form_ = PsiForm::cube;
    else form_ = PsiForm::general;
    decay_.resize(n);
    weyl_factor_.resize(n);
    for (int j = 1; j <= n; ++j) {
        decay_[j - 1] = std::pow(static_cast<double>(j), -spec_.noise.q);
        weyl_factor_[j - 1] = std::pow(static_cast<double>(j), -2.0 * spec_.space.gamma / spec_.space.d);
    }
}

double Model::psi(double u) const {
    switch (form_) {
        case PsiForm::linear: return u;
        case PsiForm::square: return u * std::abs(u);
        case PsiForm::cube: return u * u * u;
        case PsiForm::general: return std::copysign(std::pow(std::abs(u), spec_.r), u);
    }
    return 0.0;
}

double Model::dpsi(double u) const {
    switch (form_) {
        case PsiForm::linear: return 1.0;
        case PsiForm::square: return 2.0 * std::abs(u);
        case PsiForm::cube: return 3.0 * u * u;
        case PsiForm::general: {
            double a = std::abs(u);
            if (spec_.r < 1.0 && a < psi_floor()) a = psi_floor();
            return spec_.r * std::pow(a, spec_.r - 1.0);
        }
    }
    return 0.0;
}

void Model::apply_psi(Eigen::Ref<Eigen::VectorXd> grid) const {
    const Eigen::Index m = grid.size();
    switch (form_) {
        case PsiForm::linear: break;
        case PsiForm::square: grid.array() *= grid.array().abs(); break;
        case PsiForm::cube: grid.array() = grid.array().cube(); break;
        case PsiForm::general:
            for (Eigen::Index i = 0; i < m; ++i) grid[i] = psi(grid[i]);
            break;
    }
    if (!grid.allFinite()) {
        for (Eigen::Index i = 0; i < m; ++i)
            if (!std::isfinite(grid[i])) throw NumericalDomainError("non-finite Psi(u) on grid", static_cast<long>(i));
    }
}

void Model::apply_dpsi(const Eigen::Ref<const Eigen::VectorXd>& grid, Eigen::Ref<Eigen::VectorXd> out) const {
    switch (form_) {
        case PsiForm::linear: out.setOnes(); break;
        case PsiForm::square: out = 2.0 * grid.array().abs(); break;
        case PsiForm::cube: out = 3.0 * grid.array().square(); break;
        case PsiForm::general:
            for (Eigen::Index i = 0; i < grid.size(); ++i) out[i] = dpsi(grid[i]);
            break;
    }
}

void Model::drift_into(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> out,
                       Eigen::Ref<Eigen::VectorXd> grid) const {
    space_->synthesize(x, grid);
    apply_psi(grid);
    space_->analyze(grid, out);
    out.array() = -space_->lambda_gamma().array() * out.array() + spec_.c * x.array();
}

SpectralVector Model::drift(const SpectralVector& x) const {
    space_->check_size(x.coeffs());
    x.require_finite("drift");
    Eigen::VectorXd grid(space_->grid_size());
    Eigen::VectorXd out(n());
    drift_into(x.coeffs(), out, grid);
    return SpectralVector(std::move(out));
}

void Model::noise_diag_into(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> sigma) const {
    switch (spec_.noise.family) {
        case NoiseFamily::constant:
            sigma = spec_.noise.b * decay_;
            return;
        case NoiseFamily::table:
            for (int j = 0; j < n(); ++j) sigma[j] = spec_.noise.table[j] * decay_[j];
            return;
        case NoiseFamily::weyl_example: {
            double scale = 1.0;
            if (spec_.trunc_radius) {
                const double hn = space_->h_norm(x);
                if (hn > *spec_.trunc_radius) scale = *spec_.trunc_radius / hn;
            }
            // mu(x e_j) equals the coefficient c_j for band-limited x.
            for (int j = 0; j < n(); ++j)
                sigma[j] = decay_[j] / (1.0 + weyl_factor_[j] * std::abs(scale * x[j]));
            return;
        }
    }
}

Eigen::VectorXd Model::noise_diag(const SpectralVector& x) const {
    space_->check_size(x.coeffs());
    x.require_finite("noise_diag");
    Eigen::VectorXd s(n());
    noise_diag_into(x.coeffs(), s);
    return s;
}

SpectralVector Model::noise_apply(const SpectralVector& x, const SpectralVector& xi) const {
    space_->check_size(xi.coeffs());
    return SpectralVector(noise_diag(x).cwiseProduct(xi.coeffs()));
}

double Model::hs_norm_diff(const SpectralVector& x, const SpectralVector& y) const {
    if (spec_.noise.family != NoiseFamily::weyl_example) {
        space_->check_size(x.coeffs());
        space_->check_size(y.coeffs());
        return 0.0;
    }
    return (noise_diag(x) - noise_diag(y)).norm();
}

double Model::hs_norm(const SpectralVector& x) const { return noise_diag(x).norm(); }

SpectralVector Model::tilde_b_inverse(const SpectralVector& y, const SpectralVector& v) const {
    space_->check_size(v.coeffs());
    const Eigen::VectorXd s = noise_diag(y);
    for (int j = 0; j < n(); ++j)
        if (!(s[j] >= 1e-300)) throw DegeneracyError("sigma_" + std::to_string(j + 1) + " below 1e-300");
    return SpectralVector(v.coeffs().cwiseQuotient(s));
}

double Model::rho(const SpectralVector& x) const {
    const Eigen::VectorXd s = noise_diag(x).cwiseQuotient(decay_);
    return s.minCoeff() * s.minCoeff();
}

double Model::v_norm(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    const double lp = space_->lp_norm(v, spec_.r + 1.0);
    return spec_.kind == ModelKind::porous_medium ? lp : lp + space_->h_norm(v);
}

}  // namespace spdelab
