#pragma once

#include "spdelab/spectral_space.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spdelab {

enum class ModelKind { porous_medium, fast_diffusion };
enum class NoiseFamily { constant, weyl_example, table };

std::string_view to_string(ModelKind k);
std::string_view to_string(NoiseFamily f);
ModelKind parse_model_kind(std::string_view s);
NoiseFamily parse_noise_family(std::string_view s);

/// Diagonal multiplicative noise B(x) e_j = b_j(x) j^{-q} e_j.
struct NoiseSpec {
    double q = 0.6;
    NoiseFamily family = NoiseFamily::constant;
    double b = 1.0;                    ///< constant family
    std::vector<double> table;         ///< table family: b_j, state-independent
    std::optional<double> rho_floor;   ///< asserted lower bound on inf_j b_j^2

    bool operator==(const NoiseSpec&) const = default;
};

/// dX = (-(-Laplacian)^gamma Psi(X) + c X) dt + B(X) dW, Psi(s) = s|s|^{r-1}.
struct ModelSpec {
    ModelKind kind = ModelKind::porous_medium;
    double r = 2.0;
    double c = 0.0;
    SpaceConfig space;
    NoiseSpec noise;
    std::optional<double> trunc_radius;

    /// All violated invariants (empty when valid).
    std::vector<std::string> violations() const;
    /// Throws ParameterError listing every violation.
    void validate() const;
    bool operator==(const ModelSpec&) const = default;
};

/// Evaluates drift and noise of a validated ModelSpec. Immutable after
/// construction and safe to share between threads.
class Model {
public:
    explicit Model(ModelSpec spec);

    const ModelSpec& spec() const { return spec_; }
    const SpectralSpace& space() const { return *space_; }
    std::shared_ptr<const SpectralSpace> space_ptr() const { return space_; }
    int n() const { return space_->n(); }
    double r() const { return spec_.r; }

    double psi(double u) const;
    /// Psi'(u) = r|u|^{r-1}; for r < 1 |u| is floored at psi_floor() to stay finite.
    double dpsi(double u) const;
    static constexpr double psi_floor() { return 1e-8; }

    /// Apply Psi to grid values in place; NaN input or output raises
    /// NumericalDomainError with the grid index.
    void apply_psi(Eigen::Ref<Eigen::VectorXd> grid) const;
    void apply_dpsi(const Eigen::Ref<const Eigen::VectorXd>& grid, Eigen::Ref<Eigen::VectorXd> out) const;

    /// A(x) = -(-Laplacian)^gamma Psi(x) + c x, Psi evaluated on the grid.
    SpectralVector drift(const SpectralVector& x) const;
    /// Allocation-free variant; `grid` is scratch of size grid_size.
    void drift_into(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> out,
                    Eigen::Ref<Eigen::VectorXd> grid) const;

    /// sigma_j(x) = b_j(x) j^{-q}, with the B_R truncation when configured.
    Eigen::VectorXd noise_diag(const SpectralVector& x) const;
    void noise_diag_into(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> sigma) const;
    /// True when sigma does not depend on the state.
    bool state_independent_noise() const { return spec_.noise.family != NoiseFamily::weyl_example; }

    SpectralVector noise_apply(const SpectralVector& x, const SpectralVector& xi) const;
    /// Hilbert-Schmidt norm of B(x) - B(y) on H^gamma.
    double hs_norm_diff(const SpectralVector& x, const SpectralVector& y) const;
    /// |B(x)|_2.
    double hs_norm(const SpectralVector& x) const;
    /// B~^{-1}(y) v = B*(y)(B(y)B*(y))^{-1} v; componentwise v_j / sigma_j(y).
    SpectralVector tilde_b_inverse(const SpectralVector& y, const SpectralVector& v) const;
    /// rho(x) = inf_j b_j(x)^2.
    double rho(const SpectralVector& x) const;

    /// |v|_V: L^{r+1} norm for porous media, L^{r+1} + H norm for fast diffusion.
    double v_norm(const Eigen::Ref<const Eigen::VectorXd>& v) const;

private:
    enum class PsiForm { linear, square, cube, general };

    ModelSpec spec_;
    std::shared_ptr<const SpectralSpace> space_;
    PsiForm form_;
    Eigen::VectorXd decay_;        // j^{-q}
    Eigen::VectorXd weyl_factor_;  // j^{-2 gamma / d}
};

}  // namespace spdelab
