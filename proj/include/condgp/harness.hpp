// Experiment orchestration: offline capture and conditioning, the
// degree-of-freedom error sweep, online battery runs and Monte-Carlo studies.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "condgp/conditioning.hpp"
#include "condgp/config.hpp"
#include "condgp/filter.hpp"
#include "condgp/hilbert_gp.hpp"
#include "condgp/hyperparameters.hpp"
#include "condgp/models.hpp"
#include "condgp/serialization.hpp"

namespace condgp {

namespace fs = std::filesystem;

/// Receives one-line progress messages (may be empty).
using ProgressFn = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// Error metric
// ---------------------------------------------------------------------------

inline std::vector<double> uniform_grid(double lower, double upper, std::size_t points) {
    if (points < 2) throw InputError("uniform_grid: at least two points required");
    std::vector<double> g(points);
    for (std::size_t i = 0; i < points; ++i)
        g[i] = lower + (upper - lower) * static_cast<double>(i) / static_cast<double>(points - 1);
    g.back() = upper;
    return g;
}

/// RMS of estimate - truth over `grid`.
template <class Estimate, class Truth>
double function_error(Estimate&& estimate, Truth&& truth, const std::vector<double>& grid) {
    if (grid.empty()) throw InputError("function_error: empty grid");
    double s = 0.0;
    for (double x : grid) {
        const double e = estimate(x) - truth(x);
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(grid.size()));
}

/// Evaluation grid of the config's target family.
inline std::vector<double> error_grid(const ScenarioConfig& cfg) {
    const auto [lo, hi] = family_range(cfg.family());
    return uniform_grid(lo, hi, cfg.sweep.grid_points);
}

inline TargetFunction target_of(const ScenarioConfig& cfg, double j) {
    return {cfg.family(), j, parse_sinc_convention(cfg.model.sinc_convention)};
}

// ---------------------------------------------------------------------------
// Offline pipeline
// ---------------------------------------------------------------------------

inline Domain basis_domain(const ScenarioConfig& cfg) {
    if (!cfg.offline.domain.empty()) return Domain::interval(cfg.offline.domain[0], cfg.offline.domain[1]);
    const auto [lo, hi] = family_range(cfg.family());
    return padded_domain(VectorXd::Constant(1, lo), VectorXd::Constant(1, hi), cfg.offline.padding);
}

inline std::vector<Dataset> offline_datasets(const ScenarioConfig& cfg, std::optional<double> sigma_xi = {}) {
    const auto [lo, hi] = family_range(cfg.family());
    const InputGrid grid = cfg.offline.grid == "midpoint" ? InputGrid::midpoint : InputGrid::uniform_random;
    return generate_offline_dataset(cfg.family(), cfg.offline.realizations, cfg.offline.samples,
                                    sigma_xi.value_or(cfg.offline.sigma_xi), lo, hi, cfg.offline.seed, grid,
                                    parse_sinc_convention(cfg.model.sinc_convention));
}

struct OfflineResult {
    std::vector<Dataset> data;
    BasisSpec spec;
    std::vector<HilbertGpModel> models;
    CoefficientStack stack;
    VectorXd spectrum;
    ConditionedBasis basis;

    std::vector<ScreeRow> scree() const { return scree_table(spectrum); }
};

/// M from the config: explicit rank, or the energy rule when a threshold is set; at most min(J, N).
inline Eigen::Index select_rank(const ScenarioConfig& cfg, const VectorXd& spectrum) {
    const auto cap = std::min<Eigen::Index>(static_cast<Eigen::Index>(cfg.offline.realizations),
                                            static_cast<Eigen::Index>(cfg.offline.basis_size));
    const Eigen::Index m = cfg.offline.energy_threshold > 0.0 ? rank_for_energy(spectrum, cfg.offline.energy_threshold)
                                                              : static_cast<Eigen::Index>(cfg.offline.rank);
    return std::clamp<Eigen::Index>(m, 1, cap);
}

/// Fits one coefficient vector per realization on a shared basis and conditions the stack.
inline OfflineResult condition_datasets(const ScenarioConfig& cfg, std::vector<Dataset> data) {
    OfflineResult r;
    r.data = std::move(data);
    BasisSpec tmpl = make_basis_spec(basis_domain(cfg), cfg.offline.basis_size, cfg.offline.hyper);
    if (cfg.offline.optimize_hyper) {
        const auto start = cfg.offline.hyper;
        const std::vector<std::array<double, 3>> starts{
            {std::log(start.signal_variance), std::log(start.lengthscale), std::log(start.noise_variance)}};
        auto all = default_starts(tmpl, r.data);
        all.insert(all.begin(), starts.begin(), starts.end());
        tmpl = tmpl.with_hyper(optimize_hyperparameters(tmpl, r.data, {}, all));
    }
    r.spec = tmpl;
    std::vector<std::string> ids;
    for (const auto& d : r.data) {
        r.models.push_back(fit_coefficients(r.spec, d));
        ids.push_back(d.label);
    }
    r.stack = stack_coefficients(r.models, ids);
    r.spectrum = singular_spectrum(r.stack);
    r.basis = svd_condition(r.stack, select_rank(cfg, r.spectrum));
    return r;
}

inline void write_config(const fs::path& dir, const ScenarioConfig& cfg) {
    write_json_file(dir / "config.json", config_to_json(cfg));
}

inline void write_scree_csv(const fs::path& path, const VectorXd& spectrum) {
    CsvWriter csv(path, {"m", "sigma_m", "cumulative_energy"});
    for (const auto& row : scree_table(spectrum))
        csv.write_row(std::vector<std::string>{std::to_string(row.m), format_double(row.sigma),
                                               format_double(row.cumulative_energy)});
}

inline void write_datasets_csv(const fs::path& path, const std::vector<Dataset>& data) {
    CsvWriter csv(path, {"realization", "x", "xi"});
    for (std::size_t j = 0; j < data.size(); ++j)
        for (Eigen::Index k = 0; k < data[j].size(); ++k)
            csv.write_row(std::vector<std::string>{std::to_string(j + 1), format_double(data[j].inputs(k, 0)),
                                                   format_double(data[j].targets(k))});
}

inline void write_offline_artifacts(const fs::path& dir, const OfflineResult& r) {
    json models = json::array();
    for (std::size_t j = 0; j < r.models.size(); ++j) {
        json m = r.models[j];
        m["label"] = r.data[j].label;
        models.push_back(std::move(m));
    }
    write_json_file(dir / "models.json", models);
    write_json_file(dir / "basis.json", r.basis);
    write_scree_csv(dir / "scree.csv", r.spectrum);
}

/// Generates D, optionally optimizes hyperparameters, fits, stacks and conditions.
/// Artifacts go to `out_dir` when given.
inline OfflineResult offline_pipeline(const ScenarioConfig& cfg, const std::optional<fs::path>& out_dir = {}) {
    OfflineResult r = condition_datasets(cfg, offline_datasets(cfg));
    if (out_dir) write_offline_artifacts(*out_dir, r);
    return r;
}

// ---------------------------------------------------------------------------
// Degree-of-freedom sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    std::size_t dof = 0;
    Eigen::Index conditioned_rank = 0;
    double mean_error_original = 0.0;
    double mean_error_conditioned = 0.0;
    std::vector<double> original;     ///< per realization
    std::vector<double> conditioned;  ///< per realization
};

/// For d = 1..d_max: the d highest-priority original basis functions refit per
/// realization, against the conditioned basis with M = min(d, J, N) and v = project(w_j).
inline std::vector<SweepRow> dof_error_sweep(const ScenarioConfig& cfg, const OfflineResult& off) {
    const auto grid = error_grid(cfg);
    const std::size_t n_real = off.data.size();
    const MatrixXd phi_grid = basis_matrix(off.spec, Eigen::Map<const VectorXd>(grid.data(), static_cast<Eigen::Index>(grid.size())));
    std::vector<VectorXd> truth(n_real);
    for (std::size_t j = 0; j < n_real; ++j) {
        const auto f = target_of(cfg, static_cast<double>(j + 1));
        truth[j].resize(static_cast<Eigen::Index>(grid.size()));
        for (std::size_t g = 0; g < grid.size(); ++g) truth[j](static_cast<Eigen::Index>(g)) = f(grid[g]);
    }
    auto rms = [](const VectorXd& e) { return std::sqrt(e.squaredNorm() / static_cast<double>(e.size())); };

    const Eigen::Index cap = std::min<Eigen::Index>(off.stack.W.rows(), off.stack.W.cols());
    std::vector<SweepRow> rows;
    for (std::size_t d = 1; d <= cfg.sweep.d_max; ++d) {
        SweepRow row;
        row.dof = d;
        row.conditioned_rank = std::min<Eigen::Index>(static_cast<Eigen::Index>(d), cap);
        const BasisSpec truncated = off.spec.truncated(d);
        const auto di = static_cast<Eigen::Index>(d);
        const ConditionedBasis basis = svd_condition(off.stack, row.conditioned_rank);
        const MatrixXd rho_grid = phi_grid * basis.Z;
        for (std::size_t j = 0; j < n_real; ++j) {
            const VectorXd w = fit_coefficients(truncated, off.data[j]).w;
            row.original.push_back(rms(phi_grid.leftCols(di) * w - truth[j]));
            const VectorXd v = project(basis, off.models[j].w);
            row.conditioned.push_back(rms(rho_grid * v - truth[j]));
        }
        for (std::size_t j = 0; j < n_real; ++j) {
            row.mean_error_original += row.original[j] / static_cast<double>(n_real);
            row.mean_error_conditioned += row.conditioned[j] / static_cast<double>(n_real);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
    std::vector<std::string> header{"dof", "conditioned_rank", "mean_error_original", "mean_error_conditioned"};
    const std::size_t n = rows.empty() ? 0 : rows.front().original.size();
    for (std::size_t j = 1; j <= n; ++j) header.push_back("original_j" + std::to_string(j));
    for (std::size_t j = 1; j <= n; ++j) header.push_back("conditioned_j" + std::to_string(j));
    CsvWriter csv(path, header);
    for (const auto& r : rows) {
        std::vector<std::string> cells{std::to_string(r.dof), std::to_string(r.conditioned_rank),
                                       format_double(r.mean_error_original), format_double(r.mean_error_conditioned)};
        for (double e : r.original) cells.push_back(format_double(e));
        for (double e : r.conditioned) cells.push_back(format_double(e));
        csv.write_row(cells);
    }
}

// ---------------------------------------------------------------------------
// Online scenario
// ---------------------------------------------------------------------------

inline BatterySimulation battery_simulation(const ScenarioConfig& cfg) {
    BatterySimulation sim;
    sim.params = cfg.model.battery;
    sim.input = cfg.model.input;
    sim.x0 = Eigen::Vector3d(cfg.model.x0[0], cfg.model.x0[1], cfg.model.x0[2]);
    sim.Q = cfg.model.process_noise * Eigen::Matrix3d::Identity();
    sim.R = cfg.model.measurement_noise * Eigen::Matrix3d::Identity();
    sim.j_schedule = {cfg.schedule.j_before, cfg.schedule.j_after, cfg.schedule.switch_step};
    sim.dt = cfg.model.dt;
    return sim;
}

/// The basis the filter learns in: the conditioned one, or the full original
/// basis (Z = I, singular values replaced by the prior variances) for the baseline.
inline ConditionedBasis online_basis(const ScenarioConfig& cfg, const OfflineResult& off) {
    if (!cfg.filter.baseline) return off.basis;
    ConditionedBasis b;
    b.spec = off.spec;
    const auto n = static_cast<Eigen::Index>(off.spec.count());
    b.Z = MatrixXd::Identity(n, n);
    b.singular_values = prior_variances(off.spec);
    b.explained_energy = 1.0;
    return b;
}

/// Battery dynamics with the nested α taken from the particle's coefficients.
inline AugmentedStateModel battery_filter_model(const ScenarioConfig& cfg, ConditionedBasis basis) {
    const BatteryParams params = cfg.model.battery;
    const double dt = cfg.model.dt;
    const auto noise =
        cfg.filter.parameter_noise == "sigma" ? ParameterNoise::sigma : ParameterNoise::sigma_squared;
    return AugmentedStateModel(
        [params, dt](const VectorXd& x, const VectorXd& u, const NestedFunction& xi) -> VectorXd {
            return battery_step(Eigen::Vector3d(x), u(0), dt, [&xi](double z) { return xi(0, z); }, params);
        },
        [params](const VectorXd& x, const VectorXd& u) -> VectorXd {
            return battery_measurement(Eigen::Vector3d(x), u(0), params);
        },
        {std::move(basis)}, cfg.model.process_noise * MatrixXd::Identity(3, 3), cfg.filter.exploration,
        kBatteryOutputs, noise);
}

inline FilterSettings filter_settings(const ScenarioConfig& cfg) {
    return {cfg.filter.lambda_f, cfg.filter.resample == "always" ? ResampleMode::always : ResampleMode::ess,
            cfg.filter.ess_threshold};
}

struct StepRow {
    std::size_t step = 0;
    double j = 0.0;
    VectorXd x_true;
    VectorXd x_hat;
    VectorXd v_hat;
    double function_error = 0.0;
    double ess = 0.0;
    double mean_nu = 0.0;
    double log_evidence_increment = 0.0;
    double wall_time_us = 0.0;
};

struct RunRecord {
    std::uint64_t seed = 0;
    std::vector<StepRow> rows;
    bool failed = false;
    std::size_t failure_step = 0;
    std::string failure_message;
    long convergence_step = -1;  ///< -1: never converged
    double steady_error_pre = 0.0;
    double steady_error_post = 0.0;
    double wall_time_s = 0.0;
};

/// Mean function error over rows [first, last] (clamped).
inline double mean_error(const std::vector<StepRow>& rows, std::size_t first, std::size_t last) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t k = first; k <= last && k < rows.size(); ++k, ++n) s += rows[k].function_error;
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

/// First k whose trailing 50-step mean error is below twice the steady value
/// (mean over the last 100 steps of the first segment).
inline void summarize_run(RunRecord& rec, std::size_t switch_step) {
    const std::size_t n = rec.rows.size();
    if (n == 0) return;
    const std::size_t seg_end = std::min(n, std::max<std::size_t>(switch_step, 1));
    rec.steady_error_pre = mean_error(rec.rows, seg_end > 100 ? seg_end - 100 : 0, seg_end - 1);
    rec.steady_error_post = mean_error(rec.rows, n > 100 ? n - 100 : 0, n - 1);
    double window = 0.0;
    for (std::size_t k = 0; k < seg_end; ++k) {
        window += rec.rows[k].function_error;
        if (k >= 50) window -= rec.rows[k - 50].function_error;
        if (k >= 49 && window / 50.0 < 2.0 * rec.steady_error_pre) {
            rec.convergence_step = static_cast<long>(k);
            break;
        }
    }
}

/// Simulates the true system, then feeds (u_{k-1}, y_k) to the filter one step at a time.
/// Row 0 is the prior estimate.
inline RunRecord run_online_scenario(const ScenarioConfig& cfg, const OfflineResult& off, std::uint64_t seed) {
    if (cfg.family() != TargetFamily::battery_alpha)
        throw ConfigError("model.family", "online scenarios require the battery family");
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.seed = seed;

    const ConditionedBasis basis = online_basis(cfg, off);
    const ParticleFilter pf(battery_filter_model(cfg, basis), filter_settings(cfg));
    const auto& model = pf.model();

    const auto grid = error_grid(cfg);
    const MatrixXd rho_grid =
        basis_matrix(basis.spec, Eigen::Map<const VectorXd>(grid.data(), static_cast<Eigen::Index>(grid.size()))) *
        basis.Z;
    auto error_at = [&](const VectorXd& v, double j) {
        const VectorXd est = rho_grid * v;
        double s = 0.0;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const double e = est(static_cast<Eigen::Index>(g)) - true_alpha(grid[g], j);
            s += e * e;
        }
        return std::sqrt(s / static_cast<double>(grid.size()));
    };

    Trajectory traj;
    try {
        traj = simulate(battery_simulation(cfg), cfg.schedule.steps, seed);
    } catch (const SimulationError& e) {
        rec.failed = true;
        rec.failure_step = e.step();
        rec.failure_message = e.what();
        return rec;
    }

    const Eigen::Index m = basis.rank();
    VectorXd mean(3 + m);
    mean << Eigen::Map<const VectorXd>(cfg.model.x0.data(), 3), project(basis, off.models[cfg.filter.init_j - 1].w);
    MatrixXd cov = MatrixXd::Zero(3 + m, 3 + m);
    for (Eigen::Index i = 0; i < 3; ++i) cov(i, i) = cfg.filter.prior_x_var[static_cast<std::size_t>(i)];
    cov.bottomRightCorner(m, m) = model.augmented_process_covariance().bottomRightCorner(m, m);
    const MatrixXd lambda0 = cfg.filter.lambda0 * MatrixXd::Identity(3, 3);
    ParticleSet set = pf.init(mean, cov, cfg.filter.nu0, lambda0, cfg.filter.particles, seed);

    {
        ParticleSet copy = set;
        const Estimates est = normalize_and_estimate(copy);
        StepRow row;
        row.step = 0;
        row.j = traj.j[0];
        row.x_true = traj.states[0];
        row.x_hat = est.x;
        row.v_hat = est.v[0];
        row.function_error = error_at(row.v_hat, row.j);
        row.ess = est.ess;
        row.mean_nu = cfg.filter.nu0;
        rec.rows.push_back(std::move(row));
    }
    for (std::size_t k = 1; k < traj.size(); ++k) {
        StepRecord s;
        try {
            s = pf.step(set, traj.inputs[k - 1], traj.outputs[k]);
        } catch (const FilterDivergence& e) {
            rec.failed = true;
            rec.failure_step = k;
            rec.failure_message = e.what();
            break;
        }
        StepRow row;
        row.step = k;
        row.j = traj.j[k];
        row.x_true = traj.states[k];
        row.x_hat = std::move(s.x_hat);
        row.v_hat = std::move(s.v_hat[0]);
        row.function_error = error_at(row.v_hat, row.j);
        row.ess = s.ess;
        row.mean_nu = s.mean_nu;
        row.log_evidence_increment = s.log_evidence_increment;
        row.wall_time_us = s.wall_time_us;
        rec.rows.push_back(std::move(row));
    }
    summarize_run(rec, cfg.schedule.switch_step);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

inline std::vector<std::string> steps_header(Eigen::Index m) {
    std::vector<std::string> h{"step", "j", "x_hat_0", "x_hat_1", "x_hat_2", "x_true_0", "x_true_1", "x_true_2"};
    for (Eigen::Index i = 0; i < m; ++i) h.push_back("v_hat_" + std::to_string(i));
    for (const char* c : {"function_error", "ess", "mean_nu", "log_evidence_increment", "wall_time_us"}) h.push_back(c);
    return h;
}

inline void write_steps_csv(const fs::path& path, const RunRecord& rec, Eigen::Index m) {
    CsvWriter csv(path, steps_header(m));
    for (const auto& r : rec.rows) {
        std::vector<double> cells{static_cast<double>(r.step), r.j};
        for (Eigen::Index i = 0; i < 3; ++i) cells.push_back(r.x_hat(i));
        for (Eigen::Index i = 0; i < 3; ++i) cells.push_back(r.x_true(i));
        for (Eigen::Index i = 0; i < m; ++i) cells.push_back(r.v_hat(i));
        for (double v : {r.function_error, r.ess, r.mean_nu, r.log_evidence_increment, r.wall_time_us})
            cells.push_back(v);
        csv.write_row(cells);
    }
}

inline json run_summary_json(const RunRecord& r) {
    return json{{"seed", r.seed},
                {"failed", r.failed},
                {"failure_step", r.failure_step},
                {"failure_message", r.failure_message},
                {"steps_completed", r.rows.size()},
                {"convergence_step", r.convergence_step},
                {"steady_error_pre", r.steady_error_pre},
                {"steady_error_post", r.steady_error_post},
                {"wall_time_s", r.wall_time_s}};
}

// ---------------------------------------------------------------------------
// Monte-Carlo study
// ---------------------------------------------------------------------------

/// Per-step mean and standard deviation across successful runs.
struct McSummary {
    std::size_t runs = 0;
    std::size_t failed = 0;
    std::vector<std::string> columns;           ///< metric names
    std::vector<std::vector<double>> mean;      ///< [step][metric]
    std::vector<std::vector<double>> stddev;    ///< [step][metric]
    std::vector<double> j;                      ///< scheduling variable per step
    std::vector<RunRecord> records;
    double wall_time_s = 0.0;

    double failure_rate() const { return runs ? static_cast<double>(failed) / static_cast<double>(runs) : 0.0; }
    std::size_t metric(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw InputError("McSummary: no metric '" + name + "'");
    }
};

/// Metric columns aggregated across runs.
inline std::vector<std::string> mc_metric_names() {
    return {"function_error", "abs_error_z", "abs_error_v1", "abs_error_tc", "ess", "mean_nu"};
}

inline std::vector<double> mc_metrics(const StepRow& r) {
    return {r.function_error,
            std::abs(r.x_hat(0) - r.x_true(0)),
            std::abs(r.x_hat(1) - r.x_true(1)),
            std::abs(r.x_hat(2) - r.x_true(2)),
            r.ess,
            r.mean_nu};
}

/// Mean and sample standard deviation (0 for a single run).
inline void aggregate(McSummary& s, std::size_t steps) {
    s.columns = mc_metric_names();
    const std::size_t nm = s.columns.size();
    s.mean.assign(steps, std::vector<double>(nm, 0.0));
    s.stddev.assign(steps, std::vector<double>(nm, 0.0));
    std::size_t ok = 0;
    for (const auto& r : s.records)
        if (!r.failed) ++ok;
    if (ok == 0) return;
    for (const auto& r : s.records) {
        if (r.failed) continue;
        for (std::size_t k = 0; k < steps; ++k) {
            const auto m = mc_metrics(r.rows[k]);
            for (std::size_t i = 0; i < nm; ++i) s.mean[k][i] += m[i] / static_cast<double>(ok);
        }
    }
    if (ok < 2) return;
    for (const auto& r : s.records) {
        if (r.failed) continue;
        for (std::size_t k = 0; k < steps; ++k) {
            const auto m = mc_metrics(r.rows[k]);
            for (std::size_t i = 0; i < nm; ++i) {
                const double d = m[i] - s.mean[k][i];
                s.stddev[k][i] += d * d / static_cast<double>(ok - 1);
            }
        }
    }
    for (auto& row : s.stddev)
        for (double& v : row) v = std::sqrt(v);
}

inline void write_mc_summary(const fs::path& dir, const McSummary& s) {
    std::vector<std::string> header{"step", "j", "runs_ok"};
    for (const auto& c : s.columns) {
        header.push_back(c + "_mean");
        header.push_back(c + "_std");
    }
    CsvWriter csv(dir / "mc_summary.csv", header);
    const double ok = static_cast<double>(s.runs - s.failed);
    for (std::size_t k = 0; k < s.mean.size(); ++k) {
        std::vector<double> cells{static_cast<double>(k), s.j[k], ok};
        for (std::size_t i = 0; i < s.columns.size(); ++i) {
            cells.push_back(s.mean[k][i]);
            cells.push_back(s.stddev[k][i]);
        }
        csv.write_row(cells);
    }
    json runs = json::array();
    for (const auto& r : s.records) runs.push_back(run_summary_json(r));
    write_json_file(dir / "mc_summary.json", json{{"runs", s.runs},
                                                  {"failed", s.failed},
                                                  {"failure_rate", s.failure_rate()},
                                                  {"wall_time_s", s.wall_time_s},
                                                  {"per_run", runs}});
}

inline std::string run_dir_name(std::size_t r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "run_%03zu", r);
    return buf;
}

/// Runs seeds base_seed + r for r < runs, concurrently; failed runs are
/// counted and excluded from the per-step statistics. Writes per-run and
/// aggregate files under `out_dir` when given.
inline McSummary monte_carlo_study(const ScenarioConfig& cfg, const OfflineResult& off, std::size_t runs,
                                   std::uint64_t base_seed, const std::optional<fs::path>& out_dir = {},
                                   const ProgressFn& progress = {}) {
    if (runs < 1) throw InputError("monte_carlo_study: runs must be >= 1");
    const auto t0 = std::chrono::steady_clock::now();
    McSummary s;
    s.runs = runs;
    s.records.resize(runs);
    std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, runs);
    std::atomic<std::size_t> next{0};
    std::mutex report;
    std::exception_ptr error;
    auto worker = [&] {
        while (true) {
            const std::size_t r = next.fetch_add(1);
            if (r >= runs) return;
            try {
                s.records[r] = run_online_scenario(cfg, off, base_seed + r);
                if (out_dir) {
                    ScenarioConfig run_cfg = cfg;
                    run_cfg.seed = base_seed + r;
                    run_cfg.runs = 1;
                    const fs::path dir = *out_dir / run_dir_name(r);
                    write_config(dir, run_cfg);
                    write_steps_csv(dir / "steps.csv", s.records[r], online_basis(cfg, off).rank());
                }
            } catch (...) {
                std::lock_guard lock(report);
                if (!error) error = std::current_exception();
                return;
            }
            if (progress) {
                std::lock_guard lock(report);
                const auto& rec = s.records[r];
                progress(run_dir_name(r) + (rec.failed ? " failed: " + rec.failure_message : " done"));
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);

    for (const auto& r : s.records)
        if (r.failed) ++s.failed;
    const std::size_t steps = cfg.schedule.steps;
    aggregate(s, steps);
    const auto sim = battery_simulation(cfg);
    for (std::size_t k = 0; k < steps; ++k) s.j.push_back(sim.j_schedule.at(k));
    s.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out_dir) write_mc_summary(*out_dir, s);
    return s;
}

}  // namespace condgp
