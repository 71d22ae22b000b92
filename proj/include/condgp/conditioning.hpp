// Data-driven conditioning: SVD of stacked coefficient vectors into a few
// expressive basis functions ρ_m(x) = z_mᵀ φ(x).
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "condgp/errors.hpp"
#include "condgp/hilbert_gp.hpp"

namespace condgp {

/// J×N matrix whose row j is the coefficient vector of realization j.
struct CoefficientStack {
    BasisSpec spec;
    MatrixXd W;
    std::vector<std::string> realization_ids;

    Eigen::Index realizations() const { return W.rows(); }
};

inline CoefficientStack stack_coefficients(std::span<const HilbertGpModel> models,
                                           std::vector<std::string> ids = {}) {
    if (models.empty()) throw InputError("stack_coefficients: at least one model required");
    const BasisSpec& spec = models.front().spec;
    for (const auto& m : models)
        if (!(m.spec == spec)) throw InputError("stack_coefficients: models do not share one BasisSpec");
    if (!ids.empty() && ids.size() != models.size())
        throw InputError("stack_coefficients: one id per model required");
    CoefficientStack out;
    out.spec = spec;
    out.W.resize(static_cast<Eigen::Index>(models.size()), static_cast<Eigen::Index>(spec.count()));
    for (std::size_t j = 0; j < models.size(); ++j) out.W.row(static_cast<Eigen::Index>(j)) = models[j].w.transpose();
    if (ids.empty())
        for (std::size_t j = 0; j < models.size(); ++j) ids.push_back(std::to_string(j + 1));
    out.realization_ids = std::move(ids);
    return out;
}

/// Z_M (N×M, orthonormal columns) and the leading singular values of a CoefficientStack.
struct ConditionedBasis {
    BasisSpec spec;
    MatrixXd Z;                ///< N×M
    VectorXd singular_values;  ///< length M, non-increasing
    double explained_energy = 0.0;

    Eigen::Index rank() const { return Z.cols(); }
};

/// Full singular-value spectrum of W, descending.
inline VectorXd singular_spectrum(const CoefficientStack& stack) {
    Eigen::JacobiSVD<MatrixXd> svd(stack.W);
    return svd.singularValues();
}

/// Cumulative energy Σ_{m≤M} σ_m² / Σ σ_j² for M = 1..len.
inline VectorXd cumulative_energy(const VectorXd& spectrum) {
    VectorXd out(spectrum.size());
    const double total = spectrum.squaredNorm();
    double acc = 0.0;
    for (Eigen::Index m = 0; m < spectrum.size(); ++m) {
        acc += spectrum(m) * spectrum(m);
        out(m) = total > 0.0 ? acc / total : 0.0;
    }
    return out;
}

/// Smallest M with explained energy ≥ threshold.
inline Eigen::Index rank_for_energy(const VectorXd& spectrum, double threshold) {
    const VectorXd e = cumulative_energy(spectrum);
    for (Eigen::Index m = 0; m < e.size(); ++m)
        if (e(m) >= threshold) return m + 1;
    return e.size();
}

namespace detail {

// Largest-magnitude entry positive; ties go to the lowest index.
inline void fix_column_signs(MatrixXd& z) {
    for (Eigen::Index m = 0; m < z.cols(); ++m) {
        Eigen::Index arg = 0;
        double best = -1.0;
        for (Eigen::Index n = 0; n < z.rows(); ++n) {
            const double a = std::abs(z(n, m));
            if (a > best) {
                best = a;
                arg = n;
            }
        }
        if (z(arg, m) < 0.0) z.col(m) = -z.col(m);
    }
}

}  // namespace detail

/// Thin SVD W = U Σ Zᵀ truncated to the first M right-singular vectors.
inline ConditionedBasis svd_condition(const CoefficientStack& stack, Eigen::Index rank) {
    const Eigen::Index max_rank = std::min(stack.W.rows(), stack.W.cols());
    if (rank < 1 || rank > max_rank)
        throw InputError("svd_condition: M must lie in [1, min(J, N)] = [1, " + std::to_string(max_rank) + "]");
    if (!stack.W.allFinite()) throw NumericError("svd_condition: non-finite coefficient matrix");
    if (stack.W.squaredNorm() == 0.0) throw InputError("svd_condition: no signal energy (W is zero)");
    Eigen::JacobiSVD<MatrixXd> svd(stack.W, Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) throw NumericError("svd_condition: SVD failed");
    ConditionedBasis out;
    out.spec = stack.spec;
    out.Z = svd.matrixV().leftCols(rank);
    detail::fix_column_signs(out.Z);
    const VectorXd& s = svd.singularValues();
    out.singular_values = s.head(rank);
    out.explained_energy = cumulative_energy(s)(rank - 1);
    return out;
}

/// Optional mean-centering of W before the SVD (off by default).
inline CoefficientStack centered(const CoefficientStack& stack) {
    CoefficientStack out = stack;
    const VectorXd mean = stack.W.colwise().mean().transpose();
    out.W.rowwise() -= mean.transpose();
    return out;
}

inline void evaluate_rho(const ConditionedBasis& basis, const VectorXd& x, VectorXd& out) {
    thread_local VectorXd phi;
    basis_vector(basis.spec, x, phi);
    out.noalias() = basis.Z.transpose() * phi;
}

/// ρ(x) = Z_Mᵀ φ(x).
inline VectorXd evaluate_rho(const ConditionedBasis& basis, const VectorXd& x) {
    VectorXd out;
    evaluate_rho(basis, x, out);
    return out;
}

inline VectorXd evaluate_rho(const ConditionedBasis& basis, double x) {
    return evaluate_rho(basis, VectorXd::Constant(1, x));
}

inline void require_rank(const ConditionedBasis& basis, const VectorXd& v, const char* who) {
    if (v.size() != basis.rank()) throw InputError(std::string(who) + ": coefficient length must equal M");
}

/// vᵀρ(x).
inline double evaluate_reduced(const ConditionedBasis& basis, const VectorXd& v, const VectorXd& x) {
    require_rank(basis, v, "evaluate_reduced");
    return v.dot(evaluate_rho(basis, x));
}

inline double evaluate_reduced(const ConditionedBasis& basis, const VectorXd& v, double x) {
    return evaluate_reduced(basis, v, VectorXd::Constant(1, x));
}

/// v = Z_Mᵀ w, the least-squares coordinates of w in span(Z_M).
inline VectorXd project(const ConditionedBasis& basis, const VectorXd& w) {
    if (w.size() != basis.Z.rows()) throw InputError("project: coefficient length must equal N");
    return basis.Z.transpose() * w;
}

/// Z_M v, the full-basis coefficients of a reduced expansion.
inline VectorXd reconstruct(const ConditionedBasis& basis, const VectorXd& v) {
    require_rank(basis, v, "reconstruct");
    return basis.Z * v;
}

/// ‖w - Z_M v‖², equal to the squared L2(Ω) distance between the two expansions.
inline double subspace_distance(const ConditionedBasis& basis, const VectorXd& w, const VectorXd& v) {
    if (w.size() != basis.Z.rows()) throw InputError("subspace_distance: coefficient length must equal N");
    require_rank(basis, v, "subspace_distance");
    return (w - basis.Z * v).squaredNorm();
}

/// Composite trapezoid rule on a tensor grid with `points` nodes per dimension.
inline double trapezoid_integral(const Domain& domain, Eigen::Index points,
                                 const std::function<double(const VectorXd&)>& integrand) {
    if (points < 2) throw InputError("trapezoid_integral: at least two grid points required");
    const Eigen::Index dim = domain.dim();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(dim), 0);
    VectorXd h(dim), x(dim);
    for (Eigen::Index i = 0; i < dim; ++i) h(i) = (domain.upper(i) - domain.lower(i)) / static_cast<double>(points - 1);
    double total = 0.0;
    while (true) {
        double weight = 1.0;
        for (Eigen::Index i = 0; i < dim; ++i) {
            const auto k = idx[static_cast<std::size_t>(i)];
            x(i) = k == points - 1 ? domain.upper(i) : domain.lower(i) + static_cast<double>(k) * h(i);
            weight *= (k == 0 || k == points - 1 ? 0.5 : 1.0) * h(i);
        }
        total += weight * integrand(x);
        Eigen::Index d = 0;
        while (d < dim && ++idx[static_cast<std::size_t>(d)] == points) idx[static_cast<std::size_t>(d++)] = 0;
        if (d == dim) break;
    }
    return total;
}

/// Gram matrix ∫ ρ_i ρ_j over Ω by trapezoid quadrature.
inline MatrixXd rho_gram_quadrature(const ConditionedBasis& basis, Eigen::Index points) {
    const Eigen::Index m = basis.rank();
    MatrixXd gram = MatrixXd::Zero(m, m);
    const Domain& domain = basis.spec.domain();
    const Eigen::Index dim = domain.dim();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(dim), 0);
    VectorXd h(dim), x(dim), rho;
    for (Eigen::Index i = 0; i < dim; ++i) h(i) = (domain.upper(i) - domain.lower(i)) / static_cast<double>(points - 1);
    while (true) {
        double weight = 1.0;
        for (Eigen::Index i = 0; i < dim; ++i) {
            const auto k = idx[static_cast<std::size_t>(i)];
            x(i) = k == points - 1 ? domain.upper(i) : domain.lower(i) + static_cast<double>(k) * h(i);
            weight *= (k == 0 || k == points - 1 ? 0.5 : 1.0) * h(i);
        }
        evaluate_rho(basis, x, rho);
        gram.noalias() += weight * rho * rho.transpose();
        Eigen::Index d = 0;
        while (d < dim && ++idx[static_cast<std::size_t>(d)] == points) idx[static_cast<std::size_t>(d++)] = 0;
        if (d == dim) break;
    }
    return gram;
}

/// max_{i,j} |∫ρ_iρ_j - δ_ij| using `grid_points` trapezoid nodes per dimension.
inline double orthonormality_defect(const ConditionedBasis& basis, Eigen::Index grid_points) {
    if (grid_points < 1001) throw InputError("orthonormality_defect: grid_points must be >= 1001");
    const MatrixXd gram = rho_gram_quadrature(basis, grid_points);
    return (gram - MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

/// ∫(wᵀφ - vᵀρ)² over Ω by quadrature, evaluating both expansions pointwise.
inline double function_distance_quadrature(const ConditionedBasis& basis, const VectorXd& w, const VectorXd& v,
                                           Eigen::Index grid_points) {
    const HilbertGpModel full(basis.spec, w);
    require_rank(basis, v, "function_distance_quadrature");
    return trapezoid_integral(basis.spec.domain(), grid_points, [&](const VectorXd& x) {
        const double d = evaluate_expansion(full, x) - evaluate_reduced(basis, v, x);
        return d * d;
    });
}

/// One row of the singular-value scree table.
struct ScreeRow {
    Eigen::Index m;  ///< 1-based
    double sigma;
    double cumulative_energy;
};

inline std::vector<ScreeRow> scree_table(const VectorXd& spectrum) {
    const VectorXd e = cumulative_energy(spectrum);
    std::vector<ScreeRow> rows;
    for (Eigen::Index m = 0; m < spectrum.size(); ++m) rows.push_back({m + 1, spectrum(m), e(m)});
    return rows;
}

}  // namespace condgp
