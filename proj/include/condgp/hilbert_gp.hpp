// Reduced-rank ("Hilbert space") Gaussian-process representation on a box.
//
// A function on the box Ω = [lower, upper] is written as a finite expansion
// in the Dirichlet eigenfunctions of the Laplacian on Ω,
//
//     f(x) = Σ_n w_n φ_n(x),
//     φ_n(x) = Π_i L_i^{-1/2} sin(π j_{n,i} (x_i - lower_i) / (2 L_i)),
//
// with L_i the half-width of Ω. The squared-exponential prior enters through
// its spectral density evaluated at the square roots of the eigenvalues.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "condgp/errors.hpp"

namespace condgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Axis-aligned box [lower, upper].
struct Domain {
    VectorXd lower;
    VectorXd upper;

    Domain() = default;
    Domain(VectorXd lo, VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
        if (lower.size() == 0 || lower.size() != upper.size())
            throw InputError("Domain: lower/upper must be non-empty and of equal length");
        for (Eigen::Index i = 0; i < lower.size(); ++i)
            if (!(lower(i) < upper(i)) || !std::isfinite(lower(i)) || !std::isfinite(upper(i)))
                throw InputError("Domain: lower[" + std::to_string(i) + "] must be < upper[" + std::to_string(i) + "]");
    }

    /// 1-D convenience.
    static Domain interval(double lo, double hi) { return Domain(VectorXd::Constant(1, lo), VectorXd::Constant(1, hi)); }

    /// The symmetric box [-L, L].
    static Domain symmetric(double half_width) { return interval(-half_width, half_width); }

    Eigen::Index dim() const { return lower.size(); }
    double half_width(Eigen::Index i) const { return 0.5 * (upper(i) - lower(i)); }
    double center(Eigen::Index i) const { return 0.5 * (upper(i) + lower(i)); }

    bool contains(const VectorXd& x) const {
        if (x.size() != dim()) return false;
        for (Eigen::Index i = 0; i < dim(); ++i)
            if (!(x(i) >= lower(i) && x(i) <= upper(i))) return false;
        return true;
    }

    bool operator==(const Domain& o) const { return lower == o.lower && upper == o.upper; }
};

/// Box enclosing [data_lower, data_upper] widened by `padding` (fraction of the width) in total per dimension.
inline Domain padded_domain(const VectorXd& data_lower, const VectorXd& data_upper, double padding = 0.25) {
    if (data_lower.size() != data_upper.size()) throw InputError("padded_domain: dimension mismatch");
    VectorXd lo = data_lower, hi = data_upper;
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
        double width = hi(i) - lo(i);
        if (!(width > 0.0)) width = 1.0;
        lo(i) -= 0.5 * padding * width;
        hi(i) += 0.5 * padding * width;
    }
    return Domain(lo, hi);
}

/// Squared-exponential kernel hyperparameters plus the observation noise variance.
struct Hyperparameters {
    double signal_variance = 1.0;  ///< σ²
    double lengthscale = 1.0;      ///< l
    double noise_variance = 1e-4;  ///< σ_ξ²

    Hyperparameters() = default;
    Hyperparameters(double s2, double l, double n2) : signal_variance(s2), lengthscale(l), noise_variance(n2) {
        validate();
    }

    void validate() const {
        if (!(signal_variance > 0.0) || !(lengthscale > 0.0) || !(noise_variance > 0.0) ||
            !std::isfinite(signal_variance) || !std::isfinite(lengthscale) || !std::isfinite(noise_variance))
            throw InputError("Hyperparameters: all values must be finite and strictly positive");
    }

    bool operator==(const Hyperparameters&) const = default;
};

inline double se_kernel(const Hyperparameters& h, const VectorXd& x, const VectorXd& xp) {
    if (x.size() != xp.size()) throw InputError("se_kernel: dimension mismatch");
    return h.signal_variance * std::exp(-(x - xp).squaredNorm() / (2.0 * h.lengthscale * h.lengthscale));
}

inline double se_kernel(const Hyperparameters& h, double x, double xp) {
    const double d = x - xp;
    return h.signal_variance * std::exp(-d * d / (2.0 * h.lengthscale * h.lengthscale));
}

/// Spectral density of the SE kernel in `dim` input dimensions, S(ω) = σ² (2π l²)^{dim/2} exp(-l² ω² / 2).
inline double se_spectral_density(const Hyperparameters& h, double omega, int dim = 1) {
    const double l2 = h.lengthscale * h.lengthscale;
    return h.signal_variance * std::pow(2.0 * std::numbers::pi * l2, 0.5 * dim) * std::exp(-0.5 * l2 * omega * omega);
}

/// log S(ω); finite even where S itself underflows.
inline double se_log_spectral_density(const Hyperparameters& h, double omega, int dim = 1) {
    const double l2 = h.lengthscale * h.lengthscale;
    return std::log(h.signal_variance) + 0.5 * dim * std::log(2.0 * std::numbers::pi * l2) - 0.5 * l2 * omega * omega;
}

using IndexTuple = std::vector<int>;

namespace detail {

inline double tuple_eigenvalue(const Domain& d, const IndexTuple& j) {
    double lam = 0.0;
    for (Eigen::Index i = 0; i < d.dim(); ++i) {
        const double a = std::numbers::pi * j[static_cast<std::size_t>(i)] / (2.0 * d.half_width(i));
        lam += a * a;
    }
    return lam;
}

// Strict weak order: larger spectral density first (smaller eigenvalue), ties lexicographic.
struct PriorityLess {
    const Domain* domain;
    bool operator()(const IndexTuple& a, const IndexTuple& b) const {
        const double la = tuple_eigenvalue(*domain, a), lb = tuple_eigenvalue(*domain, b);
        if (la != lb) return la < lb;
        return a < b;
    }
};

}  // namespace detail

/// Domain, index tuples and hyperparameters of a Hilbert-GP expansion.
///
/// Indices are always stored in priority order: decreasing S(√λ_n), i.e.
/// increasing λ_n, with ties broken lexicographically on the tuple.
class BasisSpec {
public:
    BasisSpec() = default;

    BasisSpec(Domain domain, std::vector<IndexTuple> indices, Hyperparameters hyper)
        : domain_(std::move(domain)), indices_(std::move(indices)), hyper_(hyper) {
        hyper_.validate();
        const auto nx = static_cast<std::size_t>(domain_.dim());
        std::set<IndexTuple> seen;
        for (const auto& t : indices_) {
            if (t.size() != nx) throw InputError("BasisSpec: index tuple length must equal the input dimension");
            for (int j : t)
                if (j < 1) throw InputError("BasisSpec: index entries must be >= 1");
            if (!seen.insert(t).second) throw InputError("BasisSpec: duplicate index tuple");
        }
        std::sort(indices_.begin(), indices_.end(), detail::PriorityLess{&domain_});
        max_index_.assign(nx, 0);
        for (const auto& t : indices_)
            for (std::size_t i = 0; i < nx; ++i) max_index_[i] = std::max(max_index_[i], t[i]);
    }

    const Domain& domain() const { return domain_; }
    const std::vector<IndexTuple>& indices() const { return indices_; }
    const Hyperparameters& hyper() const { return hyper_; }
    std::size_t count() const { return indices_.size(); }
    Eigen::Index input_dim() const { return domain_.dim(); }
    const std::vector<int>& max_index() const { return max_index_; }

    BasisSpec with_hyper(const Hyperparameters& h) const { return BasisSpec(domain_, indices_, h); }

    /// The first `d` basis functions in priority order.
    BasisSpec truncated(std::size_t d) const {
        if (d > count()) throw InputError("BasisSpec::truncated: d exceeds basis count");
        return BasisSpec(domain_, std::vector<IndexTuple>(indices_.begin(), indices_.begin() + static_cast<long>(d)),
                         hyper_);
    }

    bool operator==(const BasisSpec& o) const {
        return domain_ == o.domain_ && indices_ == o.indices_ && hyper_ == o.hyper_;
    }

private:
    Domain domain_;
    std::vector<IndexTuple> indices_;
    Hyperparameters hyper_;
    std::vector<int> max_index_;
};

/// The N highest-priority index tuples on `domain` (best-first enumeration of the index lattice).
inline BasisSpec make_basis_spec(const Domain& domain, std::size_t count, const Hyperparameters& hyper) {
    const auto nx = static_cast<std::size_t>(domain.dim());
    detail::PriorityLess less{&domain};
    auto greater = [&](const IndexTuple& a, const IndexTuple& b) { return less(b, a); };
    std::priority_queue<IndexTuple, std::vector<IndexTuple>, decltype(greater)> frontier(greater);
    std::set<IndexTuple> queued;
    std::vector<IndexTuple> chosen;
    chosen.reserve(count);
    if (count > 0) {
        IndexTuple start(nx, 1);
        frontier.push(start);
        queued.insert(start);
    }
    while (chosen.size() < count) {
        IndexTuple t = frontier.top();
        frontier.pop();
        chosen.push_back(t);
        for (std::size_t i = 0; i < nx; ++i) {
            IndexTuple next = t;
            ++next[i];
            if (queued.insert(next).second) frontier.push(next);
        }
    }
    return BasisSpec(domain, std::move(chosen), hyper);
}

/// λ_n = Σ_i (π j_i / (2 L_i))². `n` is zero-based.
inline double eigenvalue(const BasisSpec& spec, std::size_t n) {
    if (n >= spec.count()) throw InputError("eigenvalue: basis index out of range");
    return detail::tuple_eigenvalue(spec.domain(), spec.indices()[n]);
}

inline VectorXd eigenvalues(const BasisSpec& spec) {
    VectorXd lam(static_cast<Eigen::Index>(spec.count()));
    for (std::size_t n = 0; n < spec.count(); ++n) lam(static_cast<Eigen::Index>(n)) = eigenvalue(spec, n);
    return lam;
}

/// Prior variances S(√λ_n): the diagonal of the regularization matrix V.
inline VectorXd prior_variances(const BasisSpec& spec) {
    VectorXd s(static_cast<Eigen::Index>(spec.count()));
    const int dim = static_cast<int>(spec.input_dim());
    for (std::size_t n = 0; n < spec.count(); ++n)
        s(static_cast<Eigen::Index>(n)) = se_spectral_density(spec.hyper(), std::sqrt(eigenvalue(spec, n)), dim);
    return s;
}

inline VectorXd log_prior_variances(const BasisSpec& spec) {
    VectorXd s(static_cast<Eigen::Index>(spec.count()));
    const int dim = static_cast<int>(spec.input_dim());
    for (std::size_t n = 0; n < spec.count(); ++n)
        s(static_cast<Eigen::Index>(n)) = se_log_spectral_density(spec.hyper(), std::sqrt(eigenvalue(spec, n)), dim);
    return s;
}

inline void require_inside(const Domain& d, const VectorXd& x, const char* who) {
    if (!d.contains(x)) throw DomainError(std::string(who) + ": point outside the expansion domain");
}

/// φ_n(x) by direct evaluation. `n` is zero-based.
inline double eigenfunction(const BasisSpec& spec, std::size_t n, const VectorXd& x) {
    if (n >= spec.count()) throw InputError("eigenfunction: basis index out of range");
    const Domain& d = spec.domain();
    require_inside(d, x, "eigenfunction");
    double value = 1.0;
    for (Eigen::Index i = 0; i < d.dim(); ++i) {
        const double L = d.half_width(i);
        if (x(i) == d.lower(i) || x(i) == d.upper(i)) return 0.0;
        const double j = spec.indices()[n][static_cast<std::size_t>(i)];
        value *= std::sin(std::numbers::pi * j * (x(i) - d.center(i) + L) / (2.0 * L)) / std::sqrt(L);
    }
    return value;
}

inline double eigenfunction(const BasisSpec& spec, std::size_t n, double x) {
    return eigenfunction(spec, n, VectorXd::Constant(1, x));
}

/// φ(x) for all N basis functions at once.
///
/// Uses the three-term recurrence sin((j+1)θ) = 2cosθ sin(jθ) - sin((j-1)θ)
/// per dimension; exact zeros on the boundary.
inline void basis_vector(const BasisSpec& spec, const VectorXd& x, VectorXd& out) {
    const Domain& d = spec.domain();
    require_inside(d, x, "basis_vector");
    const auto nx = static_cast<std::size_t>(d.dim());
    const auto N = spec.count();
    out.resize(static_cast<Eigen::Index>(N));
    thread_local std::vector<std::vector<double>> sines;
    sines.resize(nx);
    for (std::size_t i = 0; i < nx; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const int jmax = spec.max_index()[i];
        auto& s = sines[i];
        s.assign(static_cast<std::size_t>(jmax) + 1, 0.0);
        if (x(ii) == d.lower(ii) || x(ii) == d.upper(ii)) continue;
        const double theta = std::numbers::pi * (x(ii) - d.lower(ii)) / (d.upper(ii) - d.lower(ii));
        const double scale = 1.0 / std::sqrt(d.half_width(ii));
        if (jmax >= 1) s[1] = std::sin(theta);
        const double two_cos = 2.0 * std::cos(theta);
        for (int j = 2; j <= jmax; ++j) s[static_cast<std::size_t>(j)] = two_cos * s[j - 1] - s[j - 2];
        for (auto& v : s) v *= scale;
    }
    for (std::size_t n = 0; n < N; ++n) {
        double v = 1.0;
        const auto& t = spec.indices()[n];
        for (std::size_t i = 0; i < nx; ++i) v *= sines[i][static_cast<std::size_t>(t[i])];
        out(static_cast<Eigen::Index>(n)) = v;
    }
}

inline VectorXd basis_vector(const BasisSpec& spec, const VectorXd& x) {
    VectorXd out;
    basis_vector(spec, x, out);
    return out;
}

inline VectorXd basis_vector(const BasisSpec& spec, double x) { return basis_vector(spec, VectorXd::Constant(1, x)); }

/// K×N matrix Φ with rows φ(x_k)ᵀ; `inputs` is K×n_x.
inline MatrixXd basis_matrix(const BasisSpec& spec, const MatrixXd& inputs) {
    if (inputs.cols() != spec.input_dim()) throw InputError("basis_matrix: input dimension mismatch");
    MatrixXd phi(inputs.rows(), static_cast<Eigen::Index>(spec.count()));
    VectorXd row;
    for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
        basis_vector(spec, inputs.row(k).transpose(), row);
        phi.row(k) = row.transpose();
    }
    return phi;
}

/// Σ_n S(√λ_n) φ_n(x) φ_n(x').
inline double kernel_approximation(const BasisSpec& spec, const VectorXd& x, const VectorXd& xp) {
    if (spec.count() == 0) {
        require_inside(spec.domain(), x, "kernel_approximation");
        require_inside(spec.domain(), xp, "kernel_approximation");
        return 0.0;
    }
    const VectorXd a = basis_vector(spec, x);
    const VectorXd b = basis_vector(spec, xp);
    return (prior_variances(spec).array() * a.array() * b.array()).sum();
}

inline double kernel_approximation(const BasisSpec& spec, double x, double xp) {
    return kernel_approximation(spec, VectorXd::Constant(1, x), VectorXd::Constant(1, xp));
}

/// A BasisSpec with fitted coefficients w.
struct HilbertGpModel {
    BasisSpec spec;
    VectorXd w;

    HilbertGpModel() = default;
    HilbertGpModel(BasisSpec s, VectorXd coeffs) : spec(std::move(s)), w(std::move(coeffs)) {
        if (static_cast<std::size_t>(w.size()) != spec.count())
            throw InputError("HilbertGpModel: coefficient length must equal the basis count");
    }
};

inline double evaluate_expansion(const HilbertGpModel& model, const VectorXd& x) {
    return model.w.dot(basis_vector(model.spec, x));
}

inline double evaluate_expansion(const HilbertGpModel& model, double x) {
    return evaluate_expansion(model, VectorXd::Constant(1, x));
}

/// K samples (x_k, ξ_k) of one function realization.
struct Dataset {
    MatrixXd inputs;   ///< K×n_x
    VectorXd targets;  ///< K
    std::string label;

    Eigen::Index size() const { return targets.size(); }
};

namespace detail {

// Symmetrically scaled normal equations: with D = diag(√S),
//   (ΦᵀΦ + σ_ξ² V⁻¹) w = Φᵀξ   ⇔   (D ΦᵀΦ D + σ_ξ² I) u = D Φᵀξ,  w = D u.
// The scaled form stays finite when S_n underflows.
inline VectorXd solve_regularized(const MatrixXd& gram, const VectorXd& phi_t_y, const VectorXd& sqrt_s,
                                  double noise_variance) {
    MatrixXd a = sqrt_s.asDiagonal() * gram * sqrt_s.asDiagonal();
    a.diagonal().array() += noise_variance;
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw NumericError("fit_coefficients: regularized system is not positive definite");
    const VectorXd u = llt.solve(sqrt_s.cwiseProduct(phi_t_y));
    return sqrt_s.cwiseProduct(u);
}

}  // namespace detail

/// Regularized least-squares coefficients w = (ΦᵀΦ + σ_ξ² V⁻¹)⁻¹ Φᵀξ.
inline HilbertGpModel fit_coefficients(const BasisSpec& spec, const MatrixXd& inputs, const VectorXd& targets) {
    if (inputs.rows() < 1) throw InputError("fit_coefficients: at least one sample required");
    if (inputs.rows() != targets.size()) throw InputError("fit_coefficients: inputs/targets length mismatch");
    if (!targets.allFinite()) throw InputError("fit_coefficients: non-finite target value");
    if (spec.count() == 0) return HilbertGpModel(spec, VectorXd());
    const MatrixXd phi = basis_matrix(spec, inputs);
    const VectorXd sqrt_s = prior_variances(spec).cwiseSqrt();
    const MatrixXd gram = phi.transpose() * phi;
    const VectorXd rhs = phi.transpose() * targets;
    return HilbertGpModel(spec, detail::solve_regularized(gram, rhs, sqrt_s, spec.hyper().noise_variance));
}

inline HilbertGpModel fit_coefficients(const BasisSpec& spec, const Dataset& data) {
    return fit_coefficients(spec, data.inputs, data.targets);
}

}  // namespace condgp
