#include "spdelab/spectral_space.hpp"

#include "spdelab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace spdelab {

void SpaceConfig::validate() const {
    if (d < 1) throw ParameterError("space.d must be >= 1");
    if (n_modes < 1) throw ParameterError("space.n_modes must be >= 1");
    if (!(gamma > 0.0)) throw ParameterError("space.gamma must be > 0");
    if (oversample < 2) throw ParameterError("space.oversample must be >= 2");
}

SpectralVector::SpectralVector(std::initializer_list<double> coeffs) : c_(coeffs.size()) {
    int i = 0;
    for (double v : coeffs) c_[i++] = v;
}

SpectralVector SpectralVector::unit(int n, int j) {
    if (j < 1 || j > n) throw IndexError("mode index " + std::to_string(j) + " outside 1.." + std::to_string(n));
    SpectralVector v = zeros(n);
    v.c_[j - 1] = 1.0;
    return v;
}

SpectralVector SpectralVector::padded(int n, const std::vector<double>& head) {
    if (static_cast<int>(head.size()) > n)
        throw ShapeError("vector of length " + std::to_string(head.size()) + " exceeds n_modes=" + std::to_string(n));
    SpectralVector v = zeros(n);
    for (std::size_t i = 0; i < head.size(); ++i) v.c_[static_cast<Eigen::Index>(i)] = head[i];
    return v;
}

void SpectralVector::require_finite(std::string_view context) const {
    for (Eigen::Index i = 0; i < c_.size(); ++i)
        if (!std::isfinite(c_[i]))
            throw NumericalDomainError(std::string(context) + ": non-finite coefficient", static_cast<long>(i + 1));
}

SpectralVector& SpectralVector::operator+=(const SpectralVector& o) {
    if (o.size() != size()) throw ShapeError("spectral vector length mismatch");
    c_ += o.c_;
    return *this;
}

SpectralVector& SpectralVector::operator-=(const SpectralVector& o) {
    if (o.size() != size()) throw ShapeError("spectral vector length mismatch");
    c_ -= o.c_;
    return *this;
}

NormKind parse_norm_kind(std::string_view s) {
    if (s == "H_gamma") return NormKind::H_gamma;
    if (s == "B0_intrinsic") return NormKind::B0_intrinsic;
    if (s == "L_rplus1") return NormKind::L_rplus1;
    if (s == "V") return NormKind::V;
    throw ParameterError("unknown norm kind '" + std::string(s) + "'");
}

std::vector<std::vector<int>> mode_multi_indices(const SpaceConfig& cfg) {
    cfg.validate();
    const int d = cfg.d;
    const int n = cfg.n_modes;
    if (d == 1) {
        std::vector<std::vector<int>> out;
        out.reserve(n);
        for (int j = 1; j <= n; ++j) out.push_back({j});
        return out;
    }
    // Grow the per-axis bound until the n smallest |k|^2 are certainly inside:
    // any k with max_a k_a > K has |k|^2 > K^2 >= the n-th value found.
    for (int K = 1;; K *= 2) {
        std::vector<std::vector<int>> all;
        std::vector<int> k(d, 1);
        while (true) {
            all.push_back(k);
            int a = d - 1;
            while (a >= 0 && k[a] == K) {
                k[a] = 1;
                --a;
            }
            if (a < 0) break;
            ++k[a];
        }
        auto sq = [](const std::vector<int>& v) {
            long s = 0;
            for (int x : v) s += static_cast<long>(x) * x;
            return s;
        };
        std::sort(all.begin(), all.end(), [&](const auto& a, const auto& b) {
            const long sa = sq(a), sb = sq(b);
            if (sa != sb) return sa < sb;
            return a < b;
        });
        if (static_cast<int>(all.size()) >= n && sq(all[n - 1]) <= static_cast<long>(K) * K) {
            all.resize(n);
            return all;
        }
    }
}

std::vector<double> eigen_spectrum(const SpaceConfig& cfg) {
    const auto idx = mode_multi_indices(cfg);
    std::vector<double> lam;
    lam.reserve(idx.size());
    const double pi2 = std::numbers::pi * std::numbers::pi;
    for (const auto& k : idx) {
        double s = 0.0;
        for (int x : k) s += static_cast<double>(x) * x;
        lam.push_back(pi2 * s);
    }
    return lam;
}

SpectralSpace::SpectralSpace(SpaceConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const int n = cfg_.n_modes;
    const int d = cfg_.d;
    kidx_ = mode_multi_indices(cfg_);
    const auto lam = eigen_spectrum(cfg_);
    lambda_ = Eigen::Map<const Eigen::VectorXd>(lam.data(), n);
    lam_g_ = lambda_.array().pow(cfg_.gamma);
    metric_ = lam_g_.cwiseInverse();
    h_scale_ = metric_.cwiseSqrt();
    mode_number_ = Eigen::VectorXd::LinSpaced(n, 1.0, static_cast<double>(n));

    int kmax = 1;
    for (const auto& k : kidx_)
        for (int x : k) kmax = std::max(kmax, x);
    axis_m_ = cfg_.oversample * kmax;
    grid_size_ = 1;
    for (int a = 0; a < d; ++a) grid_size_ *= axis_m_;
    weight_ = std::pow(1.0 / (axis_m_ + 1), d);

    const double pi = std::numbers::pi;
    const double h = 1.0 / (axis_m_ + 1);
    // Per-axis tables sqrt(2) sin(pi k s_g).
    Eigen::MatrixXd axis(axis_m_, kmax);
    for (int g = 0; g < axis_m_; ++g)
        for (int k = 1; k <= kmax; ++k) axis(g, k - 1) = std::sqrt(2.0) * std::sin(pi * k * (g + 1) * h);

    synth_.resize(grid_size_, n);
    std::vector<int> gi(d, 0);
    for (int g = 0; g < grid_size_; ++g) {
        int rem = g;
        for (int a = d - 1; a >= 0; --a) {
            gi[a] = rem % axis_m_;
            rem /= axis_m_;
        }
        for (int j = 0; j < n; ++j) {
            double v = 1.0;
            for (int a = 0; a < d; ++a) v *= axis(gi[a], kidx_[j][a] - 1);
            synth_(g, j) = v;
        }
    }

    if (d == 1) {
        cos_table_.resize(2 * n + 1, grid_size_);
        for (int m = 0; m <= 2 * n; ++m)
            for (int g = 0; g < grid_size_; ++g) cos_table_(m, g) = std::cos(pi * m * (g + 1) * h);
    }
}

void SpectralSpace::check_size(const Eigen::Ref<const Eigen::VectorXd>& c) const {
    if (c.size() != n())
        throw ShapeError("expected " + std::to_string(n()) + " coefficients, got " + std::to_string(c.size()));
}

void SpectralSpace::synthesize(const Eigen::Ref<const Eigen::VectorXd>& c, Eigen::Ref<Eigen::VectorXd> grid) const {
    grid.noalias() = synth_ * c;
}

void SpectralSpace::analyze(const Eigen::Ref<const Eigen::VectorXd>& grid, Eigen::Ref<Eigen::VectorXd> c) const {
    c.noalias() = weight_ * (synth_.transpose() * grid);
}

Eigen::VectorXd SpectralSpace::to_grid(const SpectralVector& x) const {
    check_size(x.coeffs());
    Eigen::VectorXd g(grid_size_);
    synthesize(x.coeffs(), g);
    return g;
}

SpectralVector SpectralSpace::from_grid(const Eigen::VectorXd& values) const {
    if (values.size() != grid_size_)
        throw ShapeError("expected " + std::to_string(grid_size_) + " grid values, got " + std::to_string(values.size()));
    Eigen::VectorXd c(n());
    analyze(values, c);
    return SpectralVector(std::move(c));
}

Eigen::VectorXd SpectralSpace::transform(const Eigen::VectorXd& input, TransformDirection dir) const {
    if (dir == TransformDirection::to_grid) return to_grid(SpectralVector(input));
    return from_grid(input).coeffs();
}

void SpectralSpace::weighted_gram(const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::Ref<Eigen::MatrixXd> out) const {
    if (cfg_.d != 1) {
        weighted_gram_dense(w, out);
        return;
    }
    // 2 sin(a) sin(b) = cos(a-b) - cos(a+b): the Gram matrix is Toeplitz minus Hankel
    // in the cosine moments of w.
    const int n = cfg_.n_modes;
    thread_local Eigen::VectorXd moments;
    moments.resize(2 * n + 1);
    moments.noalias() = weight_ * (cos_table_ * w);
    const double* mo = moments.data();
    for (int k = 1; k <= n; ++k) {
        double* col = &out(0, k - 1);
        for (int j = 1; j <= n; ++j) col[j - 1] = mo[std::abs(k - j)] - mo[j + k];
    }
}

void SpectralSpace::weighted_gram_dense(const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::Ref<Eigen::MatrixXd> out) const {
    out.noalias() = weight_ * (synth_.transpose() * w.asDiagonal() * synth_);
}

double SpectralSpace::h_inner(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) const {
    if (a.size() != n() || b.size() != n()) throw ShapeError("expected " + std::to_string(n()) + " coefficients");
    return (a.array() * b.array() * metric_.array()).sum();
}

double SpectralSpace::h_norm(const Eigen::Ref<const Eigen::VectorXd>& a) const {
    return std::sqrt(h_inner(a, a));
}

double SpectralSpace::b0_norm(const Eigen::Ref<const Eigen::VectorXd>& a, double q) const {
    // B0 e_j = j^{-q} e_j, so |u|_{B0} = |B0^{-1} u|_H.
    const Eigen::ArrayXd jq = mode_number_.array().pow(q);
    return std::sqrt((a.array().square() * jq.square() * metric_.array()).sum());
}

double SpectralSpace::lp_norm(const Eigen::Ref<const Eigen::VectorXd>& a, double p) const {
    Eigen::VectorXd g(grid_size_);
    synthesize(a, g);
    double s = 0.0;
    if (p == 2.0) {
        s = g.squaredNorm();
    } else {
        for (Eigen::Index i = 0; i < g.size(); ++i) s += std::pow(std::abs(g[i]), p);
    }
    return std::pow(weight_ * s, 1.0 / p);
}

double SpectralSpace::norm(const SpectralVector& x, NormKind kind, double q, double r) const {
    check_size(x.coeffs());
    x.require_finite("norm");
    switch (kind) {
        case NormKind::H_gamma:
            return h_norm(x.coeffs());
        case NormKind::B0_intrinsic:
            if (!(q > 0.5)) throw ParameterError("B0_intrinsic norm requires q > 1/2");
            return b0_norm(x.coeffs(), q);
        case NormKind::L_rplus1:
            if (!(r > 0.0)) throw ParameterError("L_rplus1 norm requires r > 0");
            return lp_norm(x.coeffs(), r + 1.0);
        case NormKind::V:
            if (!(r > 0.0)) throw ParameterError("V norm requires r > 0");
            return lp_norm(x.coeffs(), r + 1.0) + h_norm(x.coeffs());
    }
    throw ParameterError("unknown norm kind");
}

double SpectralSpace::functional_mu(const SpectralVector& x, int j) const {
    check_size(x.coeffs());
    if (j < 1 || j > n()) throw IndexError("mode index " + std::to_string(j) + " outside 1.." + std::to_string(n()));
    return x[j - 1];
}

double SpectralSpace::functional_mu_quadrature(const SpectralVector& x, int j) const {
    check_size(x.coeffs());
    if (j < 1 || j > n()) throw IndexError("mode index " + std::to_string(j) + " outside 1.." + std::to_string(n()));
    Eigen::VectorXd g(grid_size_);
    synthesize(x.coeffs(), g);
    return weight_ * g.dot(synth_.col(j - 1));
}

}  // namespace spdelab
