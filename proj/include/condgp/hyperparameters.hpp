// Marginal-likelihood hyperparameter selection for the reduced-rank GP.
#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "condgp/hilbert_gp.hpp"

namespace condgp {

inline constexpr double kMinNoiseVariance = 1e-10;

/// Hyperparameter-independent sufficient statistics of one dataset.
struct LikelihoodCache {
    MatrixXd gram;      ///< ΦᵀΦ
    VectorXd phi_t_y;   ///< Φᵀξ
    double yy = 0.0;    ///< ξᵀξ
    Eigen::Index samples = 0;

    LikelihoodCache(const BasisSpec& spec, const Dataset& data) {
        if (!data.targets.allFinite()) throw InputError("LikelihoodCache: non-finite target value");
        const MatrixXd phi = basis_matrix(spec, data.inputs);
        gram = phi.transpose() * phi;
        phi_t_y = phi.transpose() * data.targets;
        yy = data.targets.squaredNorm();
        samples = data.size();
    }
};

/// log p(ξ | θ) under the reduced-rank prior, i.e. ξ ~ N(0, Φ V Φᵀ + σ_ξ² I).
///
/// With Φ̃ = Φ V^{1/2} and A = Φ̃ᵀΦ̃ + σ_ξ² I:
///   log det C = (K - N) log σ_ξ² + log det A
///   ξᵀC⁻¹ξ   = (ξᵀξ - ξᵀΦ̃ A⁻¹ Φ̃ᵀξ) / σ_ξ²
/// Returns -inf when A fails to factor.
inline double log_marginal_likelihood(const BasisSpec& spec, const LikelihoodCache& cache) {
    const double s2 = spec.hyper().noise_variance;
    const auto n = static_cast<double>(spec.count());
    const auto k = static_cast<double>(cache.samples);
    const VectorXd sqrt_s = prior_variances(spec).cwiseSqrt();
    MatrixXd a = sqrt_s.asDiagonal() * cache.gram * sqrt_s.asDiagonal();
    a.diagonal().array() += s2;
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const VectorXd b = sqrt_s.cwiseProduct(cache.phi_t_y);
    const double log_det_a = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const VectorXd half = llt.matrixL().solve(b);
    const double quad = (cache.yy - half.squaredNorm()) / s2;
    const double log_det = (k - n) * std::log(s2) + log_det_a;
    return -0.5 * (log_det + quad + k * std::log(2.0 * std::numbers::pi));
}

inline double log_marginal_likelihood(const BasisSpec& spec, const Dataset& data) {
    return log_marginal_likelihood(spec, LikelihoodCache(spec, data));
}

/// Maps (log σ², log l, log σ_ξ²) to hyperparameters, flooring σ_ξ² at kMinNoiseVariance.
inline Hyperparameters hyper_from_log(const std::array<double, 3>& theta) {
    Hyperparameters h;
    h.signal_variance = std::exp(theta[0]);
    h.lengthscale = std::exp(theta[1]);
    h.noise_variance = std::max(std::exp(theta[2]), kMinNoiseVariance);
    return h;
}

/// Σ_j log p(ξ_j | θ) over realizations, all sharing the template's domain and indices.
inline double joint_log_marginal_likelihood(const BasisSpec& spec_template, std::span<const LikelihoodCache> caches,
                                            const Hyperparameters& h) {
    const BasisSpec spec = spec_template.with_hyper(h);
    double total = 0.0;
    for (const auto& c : caches) total += log_marginal_likelihood(spec, c);
    return total;
}

struct HyperparameterSearch {
    int max_iterations = 200;
    double simplex_tolerance = 1e-6;
    double initial_step = 1.0;  ///< simplex edge in log space
};

namespace detail {

struct ObjectiveContext {
    const BasisSpec* spec;
    std::span<const LikelihoodCache> caches;
};

inline double negative_objective(const gsl_vector* v, void* params) {
    const auto* ctx = static_cast<const ObjectiveContext*>(params);
    const std::array<double, 3> theta{gsl_vector_get(v, 0), gsl_vector_get(v, 1), gsl_vector_get(v, 2)};
    for (double t : theta)
        if (!std::isfinite(t) || std::abs(t) > 60.0) return std::numeric_limits<double>::max();
    const double value = joint_log_marginal_likelihood(*ctx->spec, ctx->caches, hyper_from_log(theta));
    return std::isfinite(value) ? -value : std::numeric_limits<double>::max();
}

}  // namespace detail

/// Default starting points: the data's mean square as σ², three lengthscales
/// spanning the domain, and a noise variance at 1% of the signal.
inline std::vector<std::array<double, 3>> default_starts(const BasisSpec& spec, std::span<const Dataset> datasets) {
    double ms = 0.0;
    Eigen::Index count = 0;
    for (const auto& d : datasets) {
        ms += d.targets.squaredNorm();
        count += d.size();
    }
    ms = count > 0 && ms > 0.0 ? ms / static_cast<double>(count) : 1.0;
    double width = 0.0;
    for (Eigen::Index i = 0; i < spec.input_dim(); ++i) width += 2.0 * spec.domain().half_width(i);
    width /= static_cast<double>(spec.input_dim());
    std::vector<std::array<double, 3>> starts;
    for (double frac : {0.05, 0.15, 0.4})
        starts.push_back({std::log(ms), std::log(frac * width), std::log(std::max(0.01 * ms, kMinNoiseVariance))});
    return starts;
}

/// Maximizes the joint reduced-rank log marginal likelihood with a Nelder-Mead
/// simplex over log-parameters, restarted from each start; the best end point wins.
inline Hyperparameters optimize_hyperparameters(const BasisSpec& spec_template, std::span<const Dataset> datasets,
                                                const HyperparameterSearch& search = {},
                                                std::vector<std::array<double, 3>> starts = {}) {
    if (datasets.empty()) throw InputError("optimize_hyperparameters: at least one dataset required");
    std::vector<LikelihoodCache> caches;
    caches.reserve(datasets.size());
    for (const auto& d : datasets) caches.emplace_back(spec_template, d);
    if (starts.empty()) starts = default_starts(spec_template, datasets);

    detail::ObjectiveContext ctx{&spec_template, caches};
    gsl_multimin_function fn{&detail::negative_objective, 3, &ctx};

    gsl_error_handler_t* previous = gsl_set_error_handler_off();
    double best_value = std::numeric_limits<double>::max();
    std::array<double, 3> best{};
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x_owner(gsl_vector_alloc(3), &gsl_vector_free);
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> step_owner(gsl_vector_alloc(3), &gsl_vector_free);
    std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> solver_owner(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 3), &gsl_multimin_fminimizer_free);
    gsl_vector* x = x_owner.get();
    gsl_vector* step = step_owner.get();
    gsl_multimin_fminimizer* solver = solver_owner.get();
    for (const auto& start : starts) {
        for (std::size_t i = 0; i < 3; ++i) {
            gsl_vector_set(x, i, start[i]);
            gsl_vector_set(step, i, search.initial_step);
        }
        if (gsl_multimin_fminimizer_set(solver, &fn, x, step) != GSL_SUCCESS) continue;
        for (int it = 0; it < search.max_iterations; ++it) {
            if (gsl_multimin_fminimizer_iterate(solver) != GSL_SUCCESS) break;
            if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(solver), search.simplex_tolerance) == GSL_SUCCESS)
                break;
        }
        const double value = gsl_multimin_fminimizer_minimum(solver);
        if (value < best_value) {
            best_value = value;
            const gsl_vector* xm = gsl_multimin_fminimizer_x(solver);
            best = {gsl_vector_get(xm, 0), gsl_vector_get(xm, 1), gsl_vector_get(xm, 2)};
        }
    }
    gsl_set_error_handler(previous);

    if (!(best_value < std::numeric_limits<double>::max()))
        throw OptimizationError("optimize_hyperparameters: objective non-finite at every start");
    return hyper_from_log(best);
}

}  // namespace condgp
