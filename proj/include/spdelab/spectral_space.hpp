#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <string_view>
#include <vector>

namespace spdelab {

struct SpaceConfig {
    int d = 1;            ///< spatial dimension of the unit box (0,1)^d
    int n_modes = 16;     ///< Galerkin truncation level
    double gamma = 1.0;   ///< fractional power of the Dirichlet Laplacian
    int oversample = 4;   ///< grid points per retained mode along each axis

    /// Throws ParameterError when an invariant is violated.
    void validate() const;
    bool operator==(const SpaceConfig&) const = default;
};

/// Coefficients against the L2-orthonormal Dirichlet eigenfunctions e_j.
class SpectralVector {
public:
    SpectralVector() = default;
    explicit SpectralVector(Eigen::VectorXd coeffs) : c_(std::move(coeffs)) {}
    SpectralVector(std::initializer_list<double> coeffs);

    static SpectralVector zeros(int n) { return SpectralVector(Eigen::VectorXd::Zero(n)); }
    /// The eigenfunction e_j (1-based mode index).
    static SpectralVector unit(int n, int j);
    /// Leading coefficients taken from `head`, zero-padded to length n.
    static SpectralVector padded(int n, const std::vector<double>& head);

    int size() const { return static_cast<int>(c_.size()); }
    const Eigen::VectorXd& coeffs() const { return c_; }
    Eigen::VectorXd& coeffs() { return c_; }
    double operator[](int i) const { return c_[i]; }
    double& operator[](int i) { return c_[i]; }

    bool all_finite() const { return c_.allFinite(); }
    /// Throws NumericalDomainError carrying the first non-finite index.
    void require_finite(std::string_view context) const;

    SpectralVector& operator+=(const SpectralVector& o);
    SpectralVector& operator-=(const SpectralVector& o);
    SpectralVector& operator*=(double s) {
        c_ *= s;
        return *this;
    }
    friend SpectralVector operator+(SpectralVector a, const SpectralVector& b) { return a += b; }
    friend SpectralVector operator-(SpectralVector a, const SpectralVector& b) { return a -= b; }
    friend SpectralVector operator*(double s, SpectralVector a) { return a *= s; }
    bool operator==(const SpectralVector& o) const {
        return c_.size() == o.c_.size() && c_ == o.c_;
    }

private:
    Eigen::VectorXd c_;
};

enum class NormKind { H_gamma, B0_intrinsic, L_rplus1, V };
enum class TransformDirection { to_grid, from_grid };

NormKind parse_norm_kind(std::string_view s);

/// Eigenvalues of -Laplacian on the unit box, ascending with multiplicity.
std::vector<double> eigen_spectrum(const SpaceConfig& cfg);

/// Multi-indices k (one per retained mode) ordered like eigen_spectrum:
/// by |k|^2, ties broken lexicographically.
std::vector<std::vector<int>> mode_multi_indices(const SpaceConfig& cfg);

/// Dirichlet eigenbasis on (0,1)^d together with the collocation grid used
/// for pseudo-spectral evaluation of nonlinear terms.
///
/// Grid points along each axis are s_g = g / (m + 1), g = 1..m, where
/// m = oversample * (largest axis wavenumber). On this grid the uniform
/// weight 1/(m+1)^d integrates products e_j e_k exactly, so synthesis
/// followed by analysis is the identity on retained modes.
class SpectralSpace {
public:
    explicit SpectralSpace(SpaceConfig cfg);

    const SpaceConfig& config() const { return cfg_; }
    int n() const { return cfg_.n_modes; }
    int grid_size() const { return grid_size_; }
    int axis_grid_size() const { return axis_m_; }
    double quadrature_weight() const { return weight_; }

    const Eigen::VectorXd& eigenvalues() const { return lambda_; }
    /// lambda_j^gamma
    const Eigen::VectorXd& lambda_gamma() const { return lam_g_; }
    /// lambda_j^{-gamma}: the diagonal metric of the H^gamma inner product.
    const Eigen::VectorXd& metric() const { return metric_; }
    /// lambda_j^{-gamma/2}: maps coefficients to H-orthonormal coordinates.
    const Eigen::VectorXd& h_scale() const { return h_scale_; }
    const std::vector<std::vector<int>>& multi_indices() const { return kidx_; }
    /// Synthesis matrix, entry (g, j) = e_j(s_g).
    const Eigen::MatrixXd& synthesis() const { return synth_; }

    Eigen::VectorXd to_grid(const SpectralVector& x) const;
    SpectralVector from_grid(const Eigen::VectorXd& values) const;
    /// Dispatching form; the unused operand may be empty.
    Eigen::VectorXd transform(const Eigen::VectorXd& input, TransformDirection dir) const;

    // Allocation-free kernels.
    void synthesize(const Eigen::Ref<const Eigen::VectorXd>& c, Eigen::Ref<Eigen::VectorXd> grid) const;
    void analyze(const Eigen::Ref<const Eigen::VectorXd>& grid, Eigen::Ref<Eigen::VectorXd> c) const;
    /// out(j,k) = sum_g weight * w_g e_j(s_g) e_k(s_g).
    void weighted_gram(const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::Ref<Eigen::MatrixXd> out) const;
    /// Same product through the generic dense route (any d). Used as a cross-check.
    void weighted_gram_dense(const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::Ref<Eigen::MatrixXd> out) const;

    double h_inner(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) const;
    double h_norm(const Eigen::Ref<const Eigen::VectorXd>& a) const;
    double b0_norm(const Eigen::Ref<const Eigen::VectorXd>& a, double q) const;
    double lp_norm(const Eigen::Ref<const Eigen::VectorXd>& a, double p) const;

    /// q is used by B0_intrinsic, r by L_rplus1 and V.
    double norm(const SpectralVector& x, NormKind kind, double q = 1.0, double r = 1.0) const;

    /// Integral of x e_j over D. For band-limited x this is the coefficient c_j.
    double functional_mu(const SpectralVector& x, int j) const;
    /// Grid quadrature of the same integral.
    double functional_mu_quadrature(const SpectralVector& x, int j) const;

    void check_size(const Eigen::Ref<const Eigen::VectorXd>& c) const;

private:
    SpaceConfig cfg_;
    std::vector<std::vector<int>> kidx_;
    Eigen::VectorXd lambda_, lam_g_, metric_, h_scale_, mode_number_;
    int axis_m_ = 0;
    int grid_size_ = 0;
    double weight_ = 0.0;
    Eigen::MatrixXd synth_;       // grid_size x n
    Eigen::MatrixXd cos_table_;   // d = 1 only: (2n+1) x grid_size, cos(pi m s_g)
};

}  // namespace spdelab
