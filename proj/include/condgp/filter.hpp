// Noise-adaptive bootstrap particle filter over the augmented state (x, v_1..v_nξ).
//
// Each particle carries its own inverse-Wishart statistics (ν, Λ) for the
// measurement-noise covariance. Per step and particle: discount the statistics
// by λ_f, propagate through the dynamics with the nested function evaluated
// from the particle's own subspace coefficients, weight with the Student-t
// predictive, then fold the residual into (ν, Λ). Weights are normalized,
// estimates formed, and the set is resampled systematically.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "condgp/conditioning.hpp"
#include "condgp/errors.hpp"
#include "condgp/rng.hpp"

namespace condgp {

/// Inverse-Wishart hyperparameters IW(ν, Λ) of the measurement-noise covariance.
struct NoiseStats {
    double nu = 3.0;
    MatrixXd Lambda;

    Eigen::Index dim() const { return Lambda.rows(); }
    bool operator==(const NoiseStats&) const = default;
};

inline NoiseStats time_update_stats(const NoiseStats& stats, double lambda_f) {
    if (!(lambda_f > 0.0 && lambda_f <= 1.0)) throw InputError("time_update_stats: lambda_f must lie in (0, 1]");
    return {lambda_f * stats.nu, lambda_f * stats.Lambda};
}

/// ν ← ν + 1, Λ ← Λ + p pᵀ.
inline NoiseStats measurement_update_stats(const NoiseStats& stats, const VectorXd& residual) {
    if (residual.size() != stats.dim()) throw InputError("measurement_update_stats: residual length mismatch");
    NoiseStats out{stats.nu + 1.0, stats.Lambda};
    out.Lambda.noalias() += residual * residual.transpose();
    return out;
}

/// Multivariate Student-t log density with location `loc`, scale matrix `scale` and `dof` degrees of freedom.
inline double student_t_log_pdf(const VectorXd& x, const VectorXd& loc, const MatrixXd& scale, double dof) {
    if (!(dof > 0.0)) throw StatsError("student_t_log_pdf: degrees of freedom must be positive");
    Eigen::LLT<MatrixXd> llt(scale);
    if (llt.info() != Eigen::Success) throw NumericError("student_t_log_pdf: scale matrix is not positive definite");
    const auto p = static_cast<double>(x.size());
    const VectorXd delta = llt.matrixL().solve(x - loc);
    const double maha = delta.squaredNorm();
    double log_det_half = 0.0;
    for (Eigen::Index i = 0; i < scale.rows(); ++i) log_det_half += std::log(llt.matrixLLT()(i, i));
    return std::lgamma(0.5 * (dof + p)) - std::lgamma(0.5 * dof) - 0.5 * p * std::log(dof * std::numbers::pi) -
           log_det_half - 0.5 * (dof + p) * std::log1p(maha / dof);
}

/// Predictive log-likelihood of y: Student-t with ν' = ν - n_y + 1 and scale Λ / ν'.
inline double student_t_log_likelihood(const VectorXd& y, const VectorXd& y_pred, const NoiseStats& stats) {
    if (y.size() != stats.dim() || y_pred.size() != stats.dim())
        throw InputError("student_t_log_likelihood: dimension mismatch");
    const double dof = stats.nu - static_cast<double>(stats.dim()) + 1.0;
    if (!(dof > 0.0)) throw StatsError("student_t_log_likelihood: nu - n_y + 1 must be positive");
    return student_t_log_pdf(y, y_pred, stats.Lambda / dof, dof);
}

/// Ξ̂_i(feature) = v_iᵀ ρ_i(feature) for the coefficients of one particle.
class NestedFunction {
public:
    NestedFunction(const std::vector<ConditionedBasis>& bases, const std::vector<VectorXd>& coefficients)
        : bases_(&bases), coefficients_(&coefficients) {}

    double operator()(std::size_t target, const VectorXd& feature) const {
        thread_local VectorXd rho;
        evaluate_rho((*bases_)[target], feature, rho);
        return (*coefficients_)[target].dot(rho);
    }

    double operator()(std::size_t target, double feature) const {
        thread_local VectorXd x(1);
        x.resize(1);
        x(0) = feature;
        return (*this)(target, x);
    }

    std::size_t targets() const { return bases_->size(); }

private:
    const std::vector<ConditionedBasis>* bases_;
    const std::vector<VectorXd>* coefficients_;
};

/// How the parameter random-walk covariance is built from the singular values.
enum class ParameterNoise {
    sigma,          ///< c·Σ_i
    sigma_squared,  ///< c·Σ_i²
};

/// F, h, the conditioned bases and the block-diagonal process noise Q̃ = diag(Q, cΣ_1, ..., cΣ_nξ).
class AugmentedStateModel {
public:
    using Dynamics = std::function<VectorXd(const VectorXd& x, const VectorXd& u, const NestedFunction& xi)>;
    using Measurement = std::function<VectorXd(const VectorXd& x, const VectorXd& u)>;

    AugmentedStateModel(Dynamics dynamics, Measurement measurement, std::vector<ConditionedBasis> bases, MatrixXd Q,
                        double c, Eigen::Index output_dim, ParameterNoise noise = ParameterNoise::sigma)
        : dynamics_(std::move(dynamics)),
          measurement_(std::move(measurement)),
          bases_(std::move(bases)),
          Q_(std::move(Q)),
          c_(c),
          output_dim_(output_dim),
          noise_(noise) {
        if (!dynamics_ || !measurement_) throw InputError("AugmentedStateModel: dynamics and measurement required");
        if (!(c_ > 0.0)) throw InputError("AugmentedStateModel: exploration scale c must be positive");
        if (Q_.rows() != Q_.cols() || Q_.rows() == 0) throw InputError("AugmentedStateModel: Q must be square");
        if (!Q_.isApprox(Q_.transpose(), 1e-12)) throw InputError("AugmentedStateModel: Q must be symmetric");
        Eigen::LLT<MatrixXd> llt(Q_);
        if (llt.info() != Eigen::Success) throw InputError("AugmentedStateModel: Q must be positive definite");
        q_factor_ = llt.matrixL();
        for (const auto& b : bases_) {
            VectorXd var = noise_ == ParameterNoise::sigma ? VectorXd(c_ * b.singular_values)
                                                           : VectorXd(c_ * b.singular_values.array().square().matrix());
            param_sd_.push_back(var.cwiseSqrt());
        }
    }

    const Dynamics& dynamics() const { return dynamics_; }
    const Measurement& measurement() const { return measurement_; }
    const std::vector<ConditionedBasis>& bases() const { return bases_; }
    const MatrixXd& Q() const { return Q_; }
    double c() const { return c_; }
    ParameterNoise parameter_noise() const { return noise_; }
    Eigen::Index state_dim() const { return Q_.rows(); }
    Eigen::Index output_dim() const { return output_dim_; }

    Eigen::Index augmented_dim() const {
        Eigen::Index d = state_dim();
        for (const auto& b : bases_) d += b.rank();
        return d;
    }

    /// Q̃ as a dense matrix.
    MatrixXd augmented_process_covariance() const {
        const Eigen::Index n = augmented_dim();
        MatrixXd out = MatrixXd::Zero(n, n);
        out.topLeftCorner(state_dim(), state_dim()) = Q_;
        Eigen::Index offset = state_dim();
        for (const auto& sd : param_sd_) {
            out.block(offset, offset, sd.size(), sd.size()) = sd.array().square().matrix().asDiagonal();
            offset += sd.size();
        }
        return out;
    }

    const MatrixXd& state_noise_factor() const { return q_factor_; }
    const std::vector<VectorXd>& parameter_noise_sd() const { return param_sd_; }

private:
    Dynamics dynamics_;
    Measurement measurement_;
    std::vector<ConditionedBasis> bases_;
    MatrixXd Q_;
    double c_;
    Eigen::Index output_dim_;
    ParameterNoise noise_;
    MatrixXd q_factor_;
    std::vector<VectorXd> param_sd_;
};

struct Particle {
    VectorXd x;
    std::vector<VectorXd> v;
    double weight = 0.0;
    NoiseStats stats;
    bool valid = true;  ///< false once the nested function or the model was evaluated outside its domain
};

struct ParticleSet {
    std::vector<Particle> particles;
    std::size_t step = 0;
    std::uint64_t seed = 0;  ///< with `step`, the full generator state (streams are counter-keyed)

    std::size_t size() const { return particles.size(); }
};

/// Concatenates x and v_1..v_nξ.
inline VectorXd augmented_vector(const Particle& p) {
    Eigen::Index n = p.x.size();
    for (const auto& v : p.v) n += v.size();
    VectorXd out(n);
    out.head(p.x.size()) = p.x;
    Eigen::Index offset = p.x.size();
    for (const auto& v : p.v) {
        out.segment(offset, v.size()) = v;
        offset += v.size();
    }
    return out;
}

inline void split_augmented(const AugmentedStateModel& model, const VectorXd& aug, Particle& p) {
    p.x = aug.head(model.state_dim());
    p.v.clear();
    Eigen::Index offset = model.state_dim();
    for (const auto& b : model.bases()) {
        p.v.push_back(aug.segment(offset, b.rank()));
        offset += b.rank();
    }
}

/// Np draws from N(prior_mean, prior_cov), uniform weights, stats (ν0, Λ0) each.
inline ParticleSet init_particles(const AugmentedStateModel& model, const VectorXd& prior_mean,
                                  const MatrixXd& prior_cov, double nu0, const MatrixXd& lambda0, std::size_t count,
                                  std::uint64_t seed) {
    if (count < 1) throw InputError("init_particles: Np must be >= 1");
    const Eigen::Index n = model.augmented_dim();
    if (prior_mean.size() != n || prior_cov.rows() != n || prior_cov.cols() != n)
        throw InputError("init_particles: prior dimension must equal the augmented state dimension");
    if (lambda0.rows() != model.output_dim() || lambda0.cols() != model.output_dim())
        throw InputError("init_particles: Lambda0 must be n_y x n_y");
    Eigen::LLT<MatrixXd> lam(lambda0);
    if (lam.info() != Eigen::Success) throw InputError("init_particles: Lambda0 must be positive definite");
    if (!(nu0 - static_cast<double>(model.output_dim()) + 1.0 > 0.0))
        throw InputError("init_particles: nu0 must exceed n_y - 1");
    Eigen::LLT<MatrixXd> llt(prior_cov);
    if (llt.info() != Eigen::Success || !prior_cov.isApprox(prior_cov.transpose(), 1e-12))
        throw InputError("init_particles: prior covariance must be symmetric positive definite");
    const MatrixXd factor = llt.matrixL();
    ParticleSet set;
    set.seed = seed;
    set.particles.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        Stream rng(seed, StreamDomain::init, i);
        Particle& p = set.particles[i];
        split_augmented(model, prior_mean + factor * rng.normal_vector(n), p);
        p.weight = 1.0 / static_cast<double>(count);
        p.stats = NoiseStats{nu0, lambda0};
    }
    return set;
}

/// x ← F(x, u, Ξ̂ at the particle's v) + e_x, v_i ← v_i + e_{v_i}.
/// A domain error inside the dynamics invalidates the particle (weight 0).
inline Particle propagate(const Particle& particle, const VectorXd& u, const AugmentedStateModel& model, Stream& rng) {
    Particle out = particle;
    if (!out.valid) {
        out.weight = 0.0;
        return out;
    }
    try {
        const NestedFunction xi(model.bases(), particle.v);
        out.x = model.dynamics()(particle.x, u, xi);
    } catch (const DomainError&) {
        out.valid = false;
        out.weight = 0.0;
        return out;
    }
    out.x.noalias() += model.state_noise_factor() * rng.normal_vector(model.state_dim());
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        const VectorXd& sd = model.parameter_noise_sd()[i];
        for (Eigen::Index m = 0; m < sd.size(); ++m) out.v[i](m) += sd(m) * rng.normal();
    }
    if (!out.x.allFinite()) {
        out.valid = false;
        out.weight = 0.0;
    }
    return out;
}

/// Weighted means of x and each v, plus the effective sample size.
struct Estimates {
    VectorXd x;
    std::vector<VectorXd> v;
    double ess = 0.0;
};

/// Scales weights to sum to one and forms weighted-mean estimates.
inline Estimates normalize_and_estimate(ParticleSet& set) {
    if (set.particles.empty()) throw InputError("normalize_and_estimate: empty particle set");
    double total = 0.0;
    for (const auto& p : set.particles) {
        if (!(p.weight >= 0.0) || !std::isfinite(p.weight))
            throw InputError("normalize_and_estimate: weights must be finite and non-negative");
        total += p.weight;
    }
    if (!(total > 0.0)) throw FilterDivergence(set.step, "all particle weights are zero");
    Estimates est;
    const Particle& first = set.particles.front();
    est.x = VectorXd::Zero(first.x.size());
    for (const auto& v : first.v) est.v.push_back(VectorXd::Zero(v.size()));
    double sum_sq = 0.0;
    for (auto& p : set.particles) {
        p.weight /= total;
        sum_sq += p.weight * p.weight;
        if (p.weight == 0.0) continue;
        est.x.noalias() += p.weight * p.x;
        for (std::size_t i = 0; i < est.v.size(); ++i) est.v[i].noalias() += p.weight * p.v[i];
    }
    est.ess = 1.0 / sum_sq;
    return est;
}

/// Ancestor indices for systematic resampling with positions (m + offset) / Np, offset ∈ [0, 1).
inline std::vector<std::size_t> systematic_resample_indices(const std::vector<double>& weights, double offset) {
    const std::size_t n = weights.size();
    std::vector<std::size_t> out(n);
    double cumulative = weights.empty() ? 0.0 : weights[0];
    std::size_t i = 0;
    for (std::size_t m = 0; m < n; ++m) {
        const double position = (static_cast<double>(m) + offset) / static_cast<double>(n);
        while (position >= cumulative && i + 1 < n) cumulative += weights[++i];
        out[m] = i;
    }
    return out;
}

/// Systematic resampling; offspring copy the ancestor's full record including NoiseStats.
inline void systematic_resample(ParticleSet& set, Stream& rng) {
    const std::size_t n = set.particles.size();
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = set.particles[i].weight;
    const auto ancestors = systematic_resample_indices(w, rng.uniform());
    std::vector<Particle> next;
    next.reserve(n);
    for (std::size_t a : ancestors) next.push_back(set.particles[a]);
    const double uniform = 1.0 / static_cast<double>(n);
    for (auto& p : next) p.weight = uniform;
    set.particles = std::move(next);
}

enum class ResampleMode { always, ess };

struct FilterSettings {
    double lambda_f = 0.995;
    ResampleMode resample = ResampleMode::always;
    double ess_threshold = 0.5;  ///< fraction of Np; only used with ResampleMode::ess
};

/// What one filter step reports.
struct StepRecord {
    std::size_t step = 0;
    VectorXd x_hat;
    std::vector<VectorXd> v_hat;
    double ess = 0.0;
    double mean_nu = 0.0;
    double log_evidence_increment = 0.0;
    double wall_time_us = 0.0;
};

class ParticleFilter {
public:
    ParticleFilter(AugmentedStateModel model, FilterSettings settings = {})
        : model_(std::move(model)), settings_(settings) {
        if (!(settings_.lambda_f > 0.0 && settings_.lambda_f <= 1.0))
            throw InputError("ParticleFilter: lambda_f must lie in (0, 1]");
    }

    const AugmentedStateModel& model() const { return model_; }
    const FilterSettings& settings() const { return settings_; }

    ParticleSet init(const VectorXd& prior_mean, const MatrixXd& prior_cov, double nu0, const MatrixXd& lambda0,
                     std::size_t count, std::uint64_t seed) const {
        return init_particles(model_, prior_mean, prior_cov, nu0, lambda0, count, seed);
    }

    /// Assimilates y_k given u_{k-1}. Throws FilterDivergence when every weight vanishes.
    StepRecord step(ParticleSet& set, const VectorXd& u_prev, const VectorXd& y) const {
        const auto start = std::chrono::steady_clock::now();
        if (y.size() != model_.output_dim()) throw InputError("ParticleFilter::step: measurement dimension mismatch");
        const std::size_t k = set.step + 1;
        const std::size_t n = set.particles.size();
        std::vector<double> log_w(n, -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < n; ++i) {
            Particle& p = set.particles[i];
            const double prior_weight = p.weight;
            p.stats = time_update_stats(p.stats, settings_.lambda_f);
            Stream rng(set.seed, StreamDomain::propagate, k, i);
            p = propagate(p, u_prev, model_, rng);
            if (!p.valid || !(prior_weight > 0.0)) continue;
            try {
                const VectorXd y_pred = model_.measurement()(p.x, u_prev);
                log_w[i] = std::log(prior_weight) + student_t_log_likelihood(y, y_pred, p.stats);
                p.stats = measurement_update_stats(p.stats, y - y_pred);
            } catch (const DomainError&) {
                p.valid = false;
            }
        }
        double max_log = -std::numeric_limits<double>::infinity();
        for (double lw : log_w) max_log = std::max(max_log, lw);
        set.step = k;
        if (!std::isfinite(max_log)) {
            for (auto& p : set.particles) p.weight = 0.0;
            throw FilterDivergence(k, "all particle weights are zero");
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = std::isfinite(log_w[i]) ? std::exp(log_w[i] - max_log) : 0.0;
            set.particles[i].weight = w;
            sum += w;
        }
        StepRecord rec;
        rec.step = k;
        rec.log_evidence_increment = max_log + std::log(sum);
        Estimates est = normalize_and_estimate(set);
        rec.x_hat = std::move(est.x);
        rec.v_hat = std::move(est.v);
        rec.ess = est.ess;
        for (const auto& p : set.particles) rec.mean_nu += p.weight * p.stats.nu;
        const bool resample = settings_.resample == ResampleMode::always ||
                              est.ess < settings_.ess_threshold * static_cast<double>(n);
        if (resample) {
            Stream rng(set.seed, StreamDomain::resample, k);
            systematic_resample(set, rng);
        }
        rec.wall_time_us =
            std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
        return rec;
    }

private:
    AugmentedStateModel model_;
    FilterSettings settings_;
};

}  // namespace condgp
