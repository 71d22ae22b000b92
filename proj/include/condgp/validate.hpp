// Built-in invariant suite run by `condgp validate`.
#pragma once

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "condgp/harness.hpp"

namespace condgp {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

namespace checks {

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

/// J = 30 sinc realizations on Ω = [-15, 15], N = 50.
inline const OfflineResult& sinc_offline() {
    static const OfflineResult r = offline_pipeline(sinc_preset());
    return r;
}

inline ScenarioConfig short_battery_config(std::size_t steps) {
    ScenarioConfig cfg = battery_preset();
    cfg.schedule.steps = steps;
    cfg.schedule.switch_step = steps / 2;
    return cfg;
}

inline const OfflineResult& battery_offline() {
    static const OfflineResult r = offline_pipeline(battery_preset());
    return r;
}

inline CheckResult orthonormality() {
    double worst = 0.0;
    for (Eigen::Index m = 1; m <= 10; ++m)
        worst = std::max(worst, orthonormality_defect(svd_condition(sinc_offline().stack, m), 20001));
    return {"orthonormality of rho (M = 1..10)", worst <= 1e-6, "max defect " + fmt(worst) + " <= 1e-6"};
}

inline CheckResult distance_equality() {
    const auto& off = sinc_offline();
    Stream rng(1, StreamDomain::test, 2);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto basis = svd_condition(off.stack, 1 + t % 10);
        const VectorXd w = rng.normal_vector(static_cast<Eigen::Index>(off.spec.count()));
        const VectorXd v = rng.normal_vector(basis.rank());
        const double coeff = subspace_distance(basis, w, v);
        worst = std::max(worst, std::abs(function_distance_quadrature(basis, w, v, 20001) - coeff) / coeff);
    }
    return {"function-space distance equals coefficient distance", worst <= 1e-4,
            "max relative gap " + fmt(worst) + " <= 1e-4"};
}

inline CheckResult full_rank_recovery() {
    const auto& off = sinc_offline();
    const auto basis = svd_condition(off.stack, std::min(off.stack.W.rows(), off.stack.W.cols()));
    double worst = 0.0;
    for (const auto& m : off.models)
        worst = std::max(worst, subspace_distance(basis, m.w, project(basis, m.w)) / m.w.squaredNorm());
    return {"full-rank conditioning recovers every w_j", worst <= 1e-10,
            "max relative distance " + fmt(worst) + " <= 1e-10"};
}

inline CheckResult rk4_order() {
    auto error = [](double dt) {
        double x = 1.0;
        for (int k = 0; k < static_cast<int>(std::lround(2.0 / dt)); ++k)
            x = rk4_step([](double s) { return -s; }, x, dt);
        return std::abs(x - std::exp(-2.0));
    };
    const double r1 = error(0.04) / error(0.02), r2 = error(0.02) / error(0.01);
    const bool ok = r1 >= 8.0 && r1 <= 32.0 && r2 >= 8.0 && r2 <= 32.0;
    return {"RK4 fourth-order scaling", ok, "error ratios " + fmt(r1) + ", " + fmt(r2) + " within [8, 32]"};
}

/// Static scalar state with a small random walk, observed in unit Gaussian noise.
struct LinearGaussianSanity {
    double q = 1e-4, r = 1.0, prior_var = 4.0;
    std::size_t steps = 500, particles = 500;

    /// (particle-filter RMSE, Kalman RMSE) summed over `seeds` runs.
    std::pair<double, double> rmse(std::size_t seeds) const {
        const AugmentedStateModel model([](const VectorXd& x, const VectorXd&, const NestedFunction&) { return x; },
                                        [](const VectorXd& x, const VectorXd&) { return x; }, {},
                                        q * MatrixXd::Identity(1, 1), 1.0, 1);
        const ParticleFilter pf(model, {1.0, ResampleMode::always, 0.5});
        double pf_total = 0.0, kf_total = 0.0;
        for (std::size_t s = 0; s < seeds; ++s) {
            Stream data(1000 + s, StreamDomain::test);
            double x = 1.0, m = 0.0, p = prior_var, pf_sq = 0.0, kf_sq = 0.0;
            const double nu0 = 1e6;
            auto set = pf.init(VectorXd::Zero(1), prior_var * MatrixXd::Identity(1, 1), nu0,
                               nu0 * r * MatrixXd::Identity(1, 1), particles, s);
            for (std::size_t k = 0; k < steps; ++k) {
                x += std::sqrt(q) * data.normal();
                const double y = x + std::sqrt(r) * data.normal();
                p += q;
                const double gain = p / (p + r);
                m += gain * (y - m);
                p *= 1.0 - gain;
                const double est = pf.step(set, VectorXd::Zero(1), VectorXd::Constant(1, y)).x_hat(0);
                pf_sq += (est - x) * (est - x);
                kf_sq += (m - x) * (m - x);
            }
            pf_total += std::sqrt(pf_sq / static_cast<double>(steps));
            kf_total += std::sqrt(kf_sq / static_cast<double>(steps));
        }
        return {pf_total, kf_total};
    }
};

inline CheckResult kalman_sanity() {
    const auto [pf, kf] = LinearGaussianSanity{}.rmse(20);
    const double gap = std::abs(pf - kf) / kf;
    return {"particle filter matches Kalman RMSE (linear-Gaussian)", gap <= 0.2,
            "relative RMSE gap " + fmt(gap) + " <= 0.2"};
}

/// Runs the battery filter for `steps` and checks weights, ESS and noise statistics after every step.
inline CheckResult filter_step_invariants() {
    ScenarioConfig cfg = short_battery_config(300);
    const ParticleFilter pf(battery_filter_model(cfg, battery_offline().basis), filter_settings(cfg));
    const auto traj = simulate(battery_simulation(cfg), cfg.schedule.steps, 3);
    const Eigen::Index m = battery_offline().basis.rank();
    VectorXd mean(3 + m);
    mean << traj.states[0], project(battery_offline().basis, battery_offline().models[4].w);
    MatrixXd cov = pf.model().augmented_process_covariance();
    cov.topLeftCorner(3, 3) = Eigen::Vector3d(1e-4, 1e-4, 1e-2).asDiagonal();
    auto set = pf.init(mean, cov, 3.0, MatrixXd::Identity(3, 3), 100, 3);
    std::string failure;
    for (std::size_t k = 1; k < traj.size() && failure.empty(); ++k) {
        ParticleSet before = set;
        const auto rec = pf.step(set, traj.inputs[k - 1], traj.outputs[k]);
        double total = 0.0;
        for (const auto& p : set.particles) {
            total += p.weight;
            if (p.weight != 1.0 / 100.0) failure = "weights not reset to 1/Np at step " + std::to_string(k);
            Eigen::SelfAdjointEigenSolver<MatrixXd> eig(p.stats.Lambda);
            if (!(eig.eigenvalues().minCoeff() > 0.0)) failure = "Lambda not SPD at step " + std::to_string(k);
            if (!(p.stats.nu > 2.0)) failure = "nu <= n_y - 1 at step " + std::to_string(k);
        }
        if (std::abs(total - 1.0) > 1e-12) failure = "weights do not sum to 1 at step " + std::to_string(k);
        if (set.size() != 100) failure = "particle count changed at step " + std::to_string(k);
        if (!(rec.ess >= 1.0 - 1e-12 && rec.ess <= 100.0 + 1e-9)) failure = "ESS outside [1, Np] at step " + std::to_string(k);
    }
    return {"weights normalized, Lambda SPD, ESS in [1, Np] (battery, 300 steps)", failure.empty(),
            failure.empty() ? "all steps satisfied" : failure};
}

/// λ_f = 1 with h ≡ 0: ν_k = ν_0 + k and Λ_k = Λ_0 + Σ y_i y_iᵀ bit-exactly.
inline CheckResult noise_recursion() {
    const AugmentedStateModel model([](const VectorXd& x, const VectorXd&, const NestedFunction&) { return x; },
                                    [](const VectorXd&, const VectorXd&) { return VectorXd::Zero(3).eval(); }, {},
                                    1e-4 * MatrixXd::Identity(1, 1), 1.0, 3);
    const ParticleFilter pf(model, {1.0, ResampleMode::always, 0.5});
    auto set = pf.init(VectorXd::Zero(1), MatrixXd::Identity(1, 1), 3.0, MatrixXd::Identity(3, 3), 50, 1);
    MatrixXd expected = MatrixXd::Identity(3, 3);
    Stream rng(7, StreamDomain::test);
    for (std::size_t k = 1; k <= 200; ++k) {
        const VectorXd y = 0.1 * rng.normal_vector(3);
        expected.noalias() += y * y.transpose();
        pf.step(set, VectorXd::Zero(1), y);
        for (const auto& p : set.particles)
            if (p.stats.nu != 3.0 + static_cast<double>(k) || p.stats.Lambda != expected)
                return {"noise statistics recursion (lambda_f = 1)", false, "mismatch at step " + std::to_string(k)};
    }
    return {"noise statistics recursion (lambda_f = 1)", true, "nu_k = nu_0 + k and Lambda exact for 200 steps"};
}

inline bool same_rows(const RunRecord& a, const RunRecord& b, std::size_t count) {
    if (a.rows.size() < count || b.rows.size() < count) return false;
    for (std::size_t k = 0; k < count; ++k) {
        const auto &x = a.rows[k], &y = b.rows[k];
        if (x.x_hat != y.x_hat || x.v_hat != y.v_hat || x.ess != y.ess || x.mean_nu != y.mean_nu ||
            std::memcmp(&x.function_error, &y.function_error, sizeof(double)) != 0 ||
            std::memcmp(&x.log_evidence_increment, &y.log_evidence_increment, sizeof(double)) != 0)
            return false;
    }
    return true;
}

inline CheckResult determinism() {
    const auto cfg = short_battery_config(300);
    const auto a = run_online_scenario(cfg, battery_offline(), 11);
    const auto b = run_online_scenario(cfg, battery_offline(), 11);
    const bool ok = !a.failed && same_rows(a, b, a.rows.size());
    return {"bit-identical reruns under a fixed seed", ok, ok ? "300 steps identical" : "runs differ"};
}

/// Shortening the scenario must not change any earlier estimate.
inline CheckResult causality() {
    const auto full = run_online_scenario(short_battery_config(300), battery_offline(), 12);
    auto cfg = short_battery_config(300);
    cfg.schedule.steps = 180;
    const auto cut = run_online_scenario(cfg, battery_offline(), 12);
    const bool ok = !full.failed && !cut.failed && cut.rows.size() == 180 && same_rows(full, cut, 180);
    return {"causality: truncated run reproduces the prefix", ok, ok ? "first 180 steps identical" : "prefix differs"};
}

}  // namespace checks

/// Every invariant check, in order; `progress` sees each result as it completes.
inline std::vector<CheckResult> run_invariant_suite(const std::function<void(const CheckResult&)>& progress = {}) {
    const std::vector<std::function<CheckResult()>> suite{
        checks::orthonormality, checks::distance_equality, checks::full_rank_recovery,
        checks::rk4_order,      checks::kalman_sanity,     checks::filter_step_invariants,
        checks::noise_recursion, checks::determinism,      checks::causality};
    std::vector<CheckResult> out;
    for (const auto& check : suite) {
        const auto t0 = std::chrono::steady_clock::now();
        CheckResult r;
        try {
            r = check();
        } catch (const std::exception& e) {
            r.name = "check raised an exception";
            r.passed = false;
            r.detail = e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (progress) progress(r);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace condgp
