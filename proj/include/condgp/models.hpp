// Ground-truth systems: a lumped battery model with a nested RC decay rate
// α(z), the sinc target family, RK4 discretization and noisy simulation.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "condgp/errors.hpp"
#include "condgp/hilbert_gp.hpp"
#include "condgp/rng.hpp"

namespace condgp {

/// Physical constants and surrogate sub-models of the battery.
///
/// V0(z) = v0_offset + v0_slope·z, β(z) = beta, R0(z, I) = r0.
struct BatteryParams {
    double capacity = 3600.0;            ///< Q_bat [A·s]
    double heat_capacity = 60.0;         ///< C_c [J/K]
    double thermal_resistance = 2.0;     ///< R_c [K/W]
    double ambient_temperature = 298.15; ///< T_a [K]
    double v0_offset = 3.0;              ///< [V]
    double v0_slope = 0.7;               ///< [V]
    double beta = 1.0;                   ///< [V/(A·s)]
    double r0 = 0.05;                    ///< [Ω]

    double open_circuit_voltage(double z) const { return v0_offset + v0_slope * z; }
    double input_gain(double /*z*/) const { return beta; }
    double series_resistance(double /*z*/, double /*current*/) const { return r0; }

    void validate() const {
        for (double v : {capacity, heat_capacity, thermal_resistance, ambient_temperature})
            if (!(v > 0.0) || !std::isfinite(v)) throw InputError("BatteryParams: physical constants must be positive");
    }
};

inline constexpr Eigen::Index kBatteryStates = 3;   // (z, V1, Tc)
inline constexpr Eigen::Index kBatteryOutputs = 3;

inline void require_soc(double z, const char* who) {
    if (!(z >= 0.0 && z <= 1.0)) throw DomainError(std::string(who) + ": state of charge outside [0, 1]");
}

/// ẋ for x = (z, V1, Tc) with current I and decay rate α already evaluated.
inline Eigen::Vector3d battery_rhs(const Eigen::Vector3d& x, double current, double alpha_value,
                                   const BatteryParams& p) {
    const double z = x(0), v1 = x(1), tc = x(2);
    require_soc(z, "battery_rhs");
    Eigen::Vector3d dx;
    dx(0) = current / p.capacity;
    dx(1) = -alpha_value * v1 + p.input_gain(z) * current;
    dx(2) = (v1 * current + p.series_resistance(z, current) * current * current -
             (tc - p.ambient_temperature) / p.thermal_resistance) /
            p.heat_capacity;
    return dx;
}

/// y = (z, V0(z) + V1 + R0(z, I)·I, Tc).
inline Eigen::Vector3d battery_measurement(const Eigen::Vector3d& x, double current, const BatteryParams& p) {
    const double z = x(0);
    require_soc(z, "battery_measurement");
    return {z, p.open_circuit_voltage(z) + x(1) + p.series_resistance(z, current) * current, x(2)};
}

/// α(z, j) = 4j - 8j(0.5 - z)³.
inline double true_alpha(double z, double j) {
    const double d = 0.5 - z;
    return 4.0 * j - 8.0 * j * d * d * d;
}

enum class SincConvention { normalized, unnormalized };

inline SincConvention parse_sinc_convention(const std::string& s) {
    if (s == "normalized") return SincConvention::normalized;
    if (s == "unnormalized") return SincConvention::unnormalized;
    throw InputError("unknown sinc convention '" + s + "'");
}

inline double sinc(double t, SincConvention convention = SincConvention::normalized) {
    if (t == 0.0) return 1.0;
    const double a = convention == SincConvention::normalized ? std::numbers::pi * t : t;
    return std::sin(a) / a;
}

/// Ξ(x, j) = 10 sinc(j x / 100).
inline double sinc_target(double x, double j, SincConvention convention = SincConvention::normalized) {
    return 10.0 * sinc(j * x / 100.0, convention);
}

/// One classical RK4 step of ẋ = rhs(x); rhs is re-evaluated at each stage state.
template <class State, class Rhs>
State rk4_step(Rhs&& rhs, const State& x, double dt) {
    if (!(dt > 0.0)) throw InputError("rk4_step: dt must be positive");
    const State k1 = rhs(x);
    const State k2 = rhs(State(x + 0.5 * dt * k1));
    const State k3 = rhs(State(x + 0.5 * dt * k2));
    const State k4 = rhs(State(x + dt * k3));
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Battery transition with a nested α evaluated at every RK4 stage's state of charge.
template <class AlphaFn>
Eigen::Vector3d battery_step(const Eigen::Vector3d& x, double current, double dt, AlphaFn&& alpha,
                             const BatteryParams& p) {
    return rk4_step(
        [&](const Eigen::Vector3d& s) { return battery_rhs(s, current, alpha(s(0)), p); }, x, dt);
}

/// I(t) = amplitude·sin(2π·frequency·t) + offset.
struct InputSchedule {
    double amplitude = 1.0;  ///< [A]
    double frequency = 0.05; ///< [Hz]
    double offset = 0.5;     ///< [A]

    double at(double t) const { return amplitude * std::sin(2.0 * std::numbers::pi * frequency * t) + offset; }
};

/// Piecewise-constant scheduling variable with one switch.
struct JSchedule {
    double before = 1.0;
    double after = 10.0;
    std::size_t switch_step = 1000;

    double at(std::size_t k) const { return k < switch_step ? before : after; }
};

/// x_k, u_k, y_k for k = 0..steps-1 and the scheduling variable in effect at k.
///
/// x_{k+1} = f(x_k, u_k, α(·, j_k)) + e_x and y_k = h(x_k, u_{k-1}) + e_y with
/// u_{-1} := u_0: the input is held over each interval and the output is read
/// at the end of it, so a filter processing y_k only needs u_{k-1}.
struct Trajectory {
    std::vector<Eigen::VectorXd> states;
    std::vector<Eigen::VectorXd> inputs;
    std::vector<Eigen::VectorXd> outputs;
    std::vector<double> j;
    double dt = 0.01;
    std::uint64_t seed = 0;

    std::size_t size() const { return states.size(); }
};

struct BatterySimulation {
    BatteryParams params;
    InputSchedule input;
    Eigen::Vector3d x0{0.5, 0.0, 298.15};
    Eigen::Matrix3d Q = 1e-5 * Eigen::Matrix3d::Identity();
    Eigen::Matrix3d R = 1e-2 * Eigen::Matrix3d::Identity();
    JSchedule j_schedule;
    double dt = 0.01;
};

namespace detail {

// Lower Cholesky factor of a PSD covariance (zero matrix allowed).
inline Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov, const char* who) {
    if (cov.isZero(0.0)) return Eigen::MatrixXd::Zero(cov.rows(), cov.cols());
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw InputError(std::string(who) + ": covariance is not positive definite");
    return llt.matrixL();
}

}  // namespace detail

/// Noisy battery trajectory of `steps` samples. Step k draws from a stream keyed (seed, k).
inline Trajectory simulate(const BatterySimulation& sim, std::size_t steps, std::uint64_t seed) {
    sim.params.validate();
    if (!(sim.dt > 0.0)) throw InputError("simulate: dt must be positive");
    const Eigen::MatrixXd lq = detail::covariance_factor(sim.Q, "simulate (Q)");
    const Eigen::MatrixXd lr = detail::covariance_factor(sim.R, "simulate (R)");
    Trajectory traj;
    traj.dt = sim.dt;
    traj.seed = seed;
    traj.states.reserve(steps);
    traj.inputs.reserve(steps);
    traj.outputs.reserve(steps);
    Eigen::Vector3d x = sim.x0;
    for (std::size_t k = 0; k < steps; ++k) {
        if (!(x(0) >= 0.0 && x(0) <= 1.0) || !x.allFinite())
            throw SimulationError(k, "state of charge left [0, 1]");
        Stream rng(seed, StreamDomain::simulate, k);
        const double u = sim.input.at(static_cast<double>(k) * sim.dt);
        const double u_meas = k == 0 ? u : traj.inputs.back()(0);
        const double jk = sim.j_schedule.at(k);
        traj.states.push_back(x);
        traj.inputs.push_back(Eigen::VectorXd::Constant(1, u));
        traj.j.push_back(jk);
        traj.outputs.push_back(battery_measurement(x, u_meas, sim.params) + lr * rng.normal_vector(3));
        if (k + 1 < steps) {
            try {
                x = battery_step(x, u, sim.dt, [jk](double z) { return true_alpha(z, jk); }, sim.params);
            } catch (const DomainError& e) {
                throw SimulationError(k, e.what());
            }
            x += lq * rng.normal_vector(3);
        }
    }
    return traj;
}

enum class TargetFamily { battery_alpha, sinc };

inline TargetFamily parse_family(const std::string& s) {
    if (s == "battery" || s == "battery_alpha") return TargetFamily::battery_alpha;
    if (s == "sinc") return TargetFamily::sinc;
    throw InputError("unknown target family '" + s + "'");
}

inline std::string family_name(TargetFamily f) { return f == TargetFamily::battery_alpha ? "battery" : "sinc"; }

/// Input range the family is defined on: [0, 1] for α, [-15, 15] for sinc.
inline std::pair<double, double> family_range(TargetFamily f) {
    return f == TargetFamily::battery_alpha ? std::pair{0.0, 1.0} : std::pair{-15.0, 15.0};
}

struct TargetFunction {
    TargetFamily family = TargetFamily::battery_alpha;
    double j = 1.0;
    SincConvention convention = SincConvention::normalized;

    double operator()(double x) const {
        return family == TargetFamily::battery_alpha ? true_alpha(x, j) : sinc_target(x, j, convention);
    }
};

enum class InputGrid { midpoint, uniform_random };

/// Offline samples of realizations j = 1..J: K inputs on [lower, upper] with N(0, σ_ξ²) target noise.
inline std::vector<Dataset> generate_offline_dataset(TargetFamily family, std::size_t realizations,
                                                     std::size_t samples, double sigma_xi, double lower, double upper,
                                                     std::uint64_t seed, InputGrid grid = InputGrid::midpoint,
                                                     SincConvention convention = SincConvention::normalized) {
    if (realizations < 1 || samples < 1) throw InputError("generate_offline_dataset: J and K must be >= 1");
    if (!(sigma_xi >= 0.0)) throw InputError("generate_offline_dataset: sigma_xi must be >= 0");
    if (!(lower < upper)) throw InputError("generate_offline_dataset: empty input range");
    std::vector<Dataset> out;
    out.reserve(realizations);
    const double width = upper - lower;
    for (std::size_t j = 1; j <= realizations; ++j) {
        Stream rng(seed, StreamDomain::dataset, j);
        const TargetFunction f{family, static_cast<double>(j), convention};
        Dataset d;
        d.label = "j=" + std::to_string(j);
        d.inputs.resize(static_cast<Eigen::Index>(samples), 1);
        d.targets.resize(static_cast<Eigen::Index>(samples));
        for (std::size_t k = 0; k < samples; ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            const double x = grid == InputGrid::midpoint
                                 ? lower + (static_cast<double>(k) + 0.5) * width / static_cast<double>(samples)
                                 : lower + rng.uniform() * width;
            d.inputs(kk, 0) = x;
            d.targets(kk) = f(x) + sigma_xi * rng.normal();
        }
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace condgp
