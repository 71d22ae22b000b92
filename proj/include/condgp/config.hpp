// Scenario configuration: one JSON document with sections mirroring the
// modules, strict key checking against the preset defaults, and dotted
// command-line overrides.
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "condgp/errors.hpp"
#include "condgp/filter.hpp"
#include "condgp/hilbert_gp.hpp"
#include "condgp/models.hpp"
#include "condgp/serialization.hpp"

namespace condgp {

struct ModelConfig {
    std::string family = "battery";
    std::string sinc_convention = "normalized";
    BatteryParams battery;
    double dt = 0.01;
    std::vector<double> x0{0.5, 0.0, 298.15};
    double process_noise = 1e-5;
    double measurement_noise = 1e-2;
    InputSchedule input;
};

struct OfflineConfig {
    std::uint64_t seed = 1;
    std::size_t realizations = 10;
    std::size_t samples = 200;
    double sigma_xi = 0.01;
    std::string grid = "midpoint";
    std::size_t basis_size = 50;
    std::size_t rank = 2;
    double energy_threshold = 0.0;  ///< 0 selects `rank`
    std::vector<double> domain;     ///< [lower, upper]; empty pads the data range
    double padding = 0.25;
    bool optimize_hyper = true;
    Hyperparameters hyper{1.0, 0.1, 1e-4};
};

struct FilterConfig {
    std::size_t particles = 100;
    double exploration = 3e-4;
    double lambda_f = 0.995;
    double nu0 = 3.0;
    double lambda0 = 1.0;
    std::string parameter_noise = "sigma";
    std::string resample = "always";
    double ess_threshold = 0.5;
    std::vector<double> prior_x_var{1e-4, 1e-4, 1e-2};
    std::size_t init_j = 5;
    bool baseline = false;
};

struct ScheduleConfig {
    std::size_t steps = 2000;
    std::size_t switch_step = 1000;
    double j_before = 1.0;
    double j_after = 10.0;
};

struct SweepConfig {
    std::size_t d_max = 50;
    std::size_t grid_points = 201;
};

struct ScenarioConfig {
    std::string preset = "battery";
    std::string name = "battery";
    std::uint64_t seed = 1;
    std::size_t runs = 50;
    std::string output_dir = "runs";
    std::size_t threads = 0;  ///< 0: hardware concurrency
    ModelConfig model;
    OfflineConfig offline;
    FilterConfig filter;
    ScheduleConfig schedule;
    SweepConfig sweep;

    TargetFamily family() const { return parse_family(model.family); }
    std::filesystem::path study_dir() const { return std::filesystem::path(output_dir) / name; }
    void validate() const;
};

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

inline ScenarioConfig battery_preset() { return ScenarioConfig{}; }

/// Sinc family on the literal Ω = [-15, 15] with J = 30 realizations.
inline ScenarioConfig sinc_preset() {
    ScenarioConfig c;
    c.preset = "sinc";
    c.name = "sinc";
    c.model.family = "sinc";
    c.offline.realizations = 30;
    c.offline.rank = 6;
    c.offline.domain = {-15.0, 15.0};
    c.offline.hyper = {25.0, 2.0, 1e-4};
    c.offline.optimize_hyper = false;
    c.filter.init_j = 1;
    return c;
}

inline ScenarioConfig preset_config(const std::string& name) {
    if (name == "battery") return battery_preset();
    if (name == "sinc") return sinc_preset();
    throw ConfigError("preset", "must be 'battery' or 'sinc'");
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline json config_to_json(const ScenarioConfig& c) {
    const auto& m = c.model;
    const auto& o = c.offline;
    const auto& f = c.filter;
    return json{
        {"preset", c.preset},
        {"name", c.name},
        {"seed", c.seed},
        {"runs", c.runs},
        {"output_dir", c.output_dir},
        {"threads", c.threads},
        {"model",
         {{"family", m.family},
          {"sinc_convention", m.sinc_convention},
          {"capacity", m.battery.capacity},
          {"heat_capacity", m.battery.heat_capacity},
          {"thermal_resistance", m.battery.thermal_resistance},
          {"ambient_temperature", m.battery.ambient_temperature},
          {"v0_offset", m.battery.v0_offset},
          {"v0_slope", m.battery.v0_slope},
          {"beta", m.battery.beta},
          {"r0", m.battery.r0},
          {"dt", m.dt},
          {"x0", m.x0},
          {"process_noise", m.process_noise},
          {"measurement_noise", m.measurement_noise},
          {"input_amplitude", m.input.amplitude},
          {"input_frequency", m.input.frequency},
          {"input_offset", m.input.offset}}},
        {"offline",
         {{"seed", o.seed},
          {"realizations", o.realizations},
          {"samples", o.samples},
          {"sigma_xi", o.sigma_xi},
          {"grid", o.grid},
          {"basis_size", o.basis_size},
          {"rank", o.rank},
          {"energy_threshold", o.energy_threshold},
          {"domain", o.domain},
          {"padding", o.padding},
          {"optimize_hyper", o.optimize_hyper},
          {"sigma2", o.hyper.signal_variance},
          {"lengthscale", o.hyper.lengthscale},
          {"noise_variance", o.hyper.noise_variance}}},
        {"filter",
         {{"np", f.particles},
          {"c", f.exploration},
          {"lambda_f", f.lambda_f},
          {"nu0", f.nu0},
          {"lambda0", f.lambda0},
          {"parameter_noise", f.parameter_noise},
          {"resample", f.resample},
          {"ess_threshold", f.ess_threshold},
          {"prior_x_var", f.prior_x_var},
          {"init_j", f.init_j},
          {"baseline", f.baseline}}},
        {"schedule",
         {{"steps", c.schedule.steps},
          {"switch_step", c.schedule.switch_step},
          {"j_before", c.schedule.j_before},
          {"j_after", c.schedule.j_after}}},
        {"sweep", {{"d_max", c.sweep.d_max}, {"grid_points", c.sweep.grid_points}}},
    };
}

namespace detail {

template <class T>
void read_key(const json& j, const std::string& section, const char* key, T& out) {
    const json& node = section.empty() ? j : j.at(section);
    const std::string path = section.empty() ? key : section + "." + key;
    try {
        out = node.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path, "has the wrong type");
    }
}

}  // namespace detail

/// Reads a complete document (every key present, as produced by `config_to_json`).
inline ScenarioConfig config_from_json(const json& j) {
    using detail::read_key;
    ScenarioConfig c;
    read_key(j, "", "preset", c.preset);
    read_key(j, "", "name", c.name);
    read_key(j, "", "seed", c.seed);
    read_key(j, "", "runs", c.runs);
    read_key(j, "", "output_dir", c.output_dir);
    read_key(j, "", "threads", c.threads);

    auto& m = c.model;
    read_key(j, "model", "family", m.family);
    read_key(j, "model", "sinc_convention", m.sinc_convention);
    read_key(j, "model", "capacity", m.battery.capacity);
    read_key(j, "model", "heat_capacity", m.battery.heat_capacity);
    read_key(j, "model", "thermal_resistance", m.battery.thermal_resistance);
    read_key(j, "model", "ambient_temperature", m.battery.ambient_temperature);
    read_key(j, "model", "v0_offset", m.battery.v0_offset);
    read_key(j, "model", "v0_slope", m.battery.v0_slope);
    read_key(j, "model", "beta", m.battery.beta);
    read_key(j, "model", "r0", m.battery.r0);
    read_key(j, "model", "dt", m.dt);
    read_key(j, "model", "x0", m.x0);
    read_key(j, "model", "process_noise", m.process_noise);
    read_key(j, "model", "measurement_noise", m.measurement_noise);
    read_key(j, "model", "input_amplitude", m.input.amplitude);
    read_key(j, "model", "input_frequency", m.input.frequency);
    read_key(j, "model", "input_offset", m.input.offset);

    auto& o = c.offline;
    read_key(j, "offline", "seed", o.seed);
    read_key(j, "offline", "realizations", o.realizations);
    read_key(j, "offline", "samples", o.samples);
    read_key(j, "offline", "sigma_xi", o.sigma_xi);
    read_key(j, "offline", "grid", o.grid);
    read_key(j, "offline", "basis_size", o.basis_size);
    read_key(j, "offline", "rank", o.rank);
    read_key(j, "offline", "energy_threshold", o.energy_threshold);
    read_key(j, "offline", "domain", o.domain);
    read_key(j, "offline", "padding", o.padding);
    read_key(j, "offline", "optimize_hyper", o.optimize_hyper);
    read_key(j, "offline", "sigma2", o.hyper.signal_variance);
    read_key(j, "offline", "lengthscale", o.hyper.lengthscale);
    read_key(j, "offline", "noise_variance", o.hyper.noise_variance);

    auto& f = c.filter;
    read_key(j, "filter", "np", f.particles);
    read_key(j, "filter", "c", f.exploration);
    read_key(j, "filter", "lambda_f", f.lambda_f);
    read_key(j, "filter", "nu0", f.nu0);
    read_key(j, "filter", "lambda0", f.lambda0);
    read_key(j, "filter", "parameter_noise", f.parameter_noise);
    read_key(j, "filter", "resample", f.resample);
    read_key(j, "filter", "ess_threshold", f.ess_threshold);
    read_key(j, "filter", "prior_x_var", f.prior_x_var);
    read_key(j, "filter", "init_j", f.init_j);
    read_key(j, "filter", "baseline", f.baseline);

    read_key(j, "schedule", "steps", c.schedule.steps);
    read_key(j, "schedule", "switch_step", c.schedule.switch_step);
    read_key(j, "schedule", "j_before", c.schedule.j_before);
    read_key(j, "schedule", "j_after", c.schedule.j_after);

    read_key(j, "sweep", "d_max", c.sweep.d_max);
    read_key(j, "sweep", "grid_points", c.sweep.grid_points);
    return c;
}

// ---------------------------------------------------------------------------
// Key registry (for --help)
// ---------------------------------------------------------------------------

struct ConfigKeyInfo {
    const char* key;
    const char* unit;
    const char* description;
};

inline const std::vector<ConfigKeyInfo>& config_keys() {
    static const std::vector<ConfigKeyInfo> keys{
        {"preset", "-", "defaults the document starts from: battery | sinc"},
        {"name", "-", "study name; outputs go to <output_dir>/<name>"},
        {"seed", "-", "online seed (MC run r uses seed + r)"},
        {"runs", "count", "Monte-Carlo runs"},
        {"output_dir", "path", "root directory for study outputs"},
        {"threads", "count", "worker threads for MC runs (0 = all cores)"},
        {"model.family", "-", "target family: battery | sinc"},
        {"model.sinc_convention", "-", "normalized | unnormalized"},
        {"model.capacity", "A*s", "battery capacity Q_bat"},
        {"model.heat_capacity", "J/K", "core heat capacity C_c"},
        {"model.thermal_resistance", "K/W", "thermal resistance R_c"},
        {"model.ambient_temperature", "K", "ambient temperature T_a"},
        {"model.v0_offset", "V", "open-circuit voltage at z = 0"},
        {"model.v0_slope", "V", "open-circuit voltage slope in z"},
        {"model.beta", "V/(A*s)", "RC input gain"},
        {"model.r0", "Ohm", "series resistance"},
        {"model.dt", "s", "RK4 step"},
        {"model.x0", "(1, V, K)", "initial state (z, V1, Tc)"},
        {"model.process_noise", "state units^2", "diagonal of Q"},
        {"model.measurement_noise", "output units^2", "diagonal of R"},
        {"model.input_amplitude", "A", "current amplitude"},
        {"model.input_frequency", "Hz", "current frequency"},
        {"model.input_offset", "A", "current offset"},
        {"offline.seed", "-", "seed of the offline data"},
        {"offline.realizations", "count", "J, realizations j = 1..J"},
        {"offline.samples", "count", "K, samples per realization"},
        {"offline.sigma_xi", "target units", "offline noise standard deviation"},
        {"offline.grid", "-", "midpoint | uniform_random"},
        {"offline.basis_size", "count", "N, Hilbert-GP basis functions"},
        {"offline.rank", "count", "M, conditioned basis functions"},
        {"offline.energy_threshold", "fraction", "if > 0, smallest M reaching this explained energy"},
        {"offline.domain", "input units", "[lower, upper] of the basis box; [] pads the data range"},
        {"offline.padding", "fraction", "total widening of the data range when domain is []"},
        {"offline.optimize_hyper", "bool", "maximize the joint marginal likelihood"},
        {"offline.sigma2", "target units^2", "SE signal variance (start/fixed value)"},
        {"offline.lengthscale", "input units", "SE lengthscale (start/fixed value)"},
        {"offline.noise_variance", "target units^2", "regression noise variance (start/fixed value)"},
        {"filter.np", "count", "particles"},
        {"filter.c", "-", "exploration scale of the parameter random walk"},
        {"filter.lambda_f", "-", "forgetting factor in (0, 1]"},
        {"filter.nu0", "-", "initial inverse-Wishart degrees of freedom"},
        {"filter.lambda0", "output units^2", "initial inverse-Wishart scale (times identity)"},
        {"filter.parameter_noise", "-", "sigma | sigma_squared"},
        {"filter.resample", "-", "always | ess"},
        {"filter.ess_threshold", "fraction of np", "ESS trigger when resample = ess"},
        {"filter.prior_x_var", "state units^2", "prior variances of (z, V1, Tc)"},
        {"filter.init_j", "-", "realization whose coefficients initialize v"},
        {"filter.baseline", "bool", "filter the full N coefficients instead of the conditioned ones"},
        {"schedule.steps", "count", "samples per run"},
        {"schedule.switch_step", "step", "first step using j_after"},
        {"schedule.j_before", "-", "scheduling variable before the switch"},
        {"schedule.j_after", "-", "scheduling variable from the switch on"},
        {"sweep.d_max", "count", "largest degree-of-freedom count in the sweep"},
        {"sweep.grid_points", "count", "evaluation grid of the error metric"},
    };
    return keys;
}

// ---------------------------------------------------------------------------
// Merging and overrides
// ---------------------------------------------------------------------------

namespace detail {

inline bool same_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) return true;
    return a.type() == b.type();
}

// Writes `value` at `path` of `target`, rejecting paths absent from `target`.
inline void assign_known(json& target, const std::string& path, const json& value) {
    json* node = &target;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string part = path.substr(start, dot - start);
        if (!node->is_object() || !node->contains(part)) throw ConfigError(path, "unknown key");
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (node->is_object()) {
        if (!value.is_object()) throw ConfigError(path, "must be an object");
        for (const auto& [k, v] : value.items()) assign_known(target, path + "." + k, v);
        return;
    }
    if (!same_kind(*node, value)) throw ConfigError(path, std::string("expected a ") + node->type_name());
    if (node->is_number_unsigned() && value.is_number_integer() && value.get<long long>() < 0)
        throw ConfigError(path, "must be non-negative");
    if (node->is_number_integer() && value.is_number_float()) throw ConfigError(path, "must be an integer");
    *node = value;
}

}  // namespace detail

/// Overlays `doc` on the defaults of its preset; unknown keys are errors.
inline ScenarioConfig resolve_config(const json& doc, const std::string& preset_override = "") {
    if (!doc.is_object()) throw ConfigError("(root)", "configuration must be a JSON object");
    std::string preset = preset_override;
    if (preset.empty()) preset = doc.contains("preset") && doc["preset"].is_string() ? doc["preset"].get<std::string>() : "battery";
    json base = config_to_json(preset_config(preset));
    for (const auto& [k, v] : doc.items()) detail::assign_known(base, k, v);
    base["preset"] = preset;
    return config_from_json(base);
}

/// "a.b=value": value is parsed as JSON, or taken as a string if that fails.
inline void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    // Build the nested object so the merge reports unknown keys by full path.
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot - start);
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
        node = &(*node)[part];
        start = dot + 1;
    }
}

/// Loads `path` (may be empty), applies overrides, resolves and validates.
inline ScenarioConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                                  const std::string& preset = "") {
    json doc = json::object();
    if (!path.empty()) {
        try {
            doc = read_json_file(path);
        } catch (const json::parse_error& e) {
            throw ConfigError("(file)", std::string("not valid JSON: ") + e.what());
        } catch (const std::runtime_error& e) {
            throw ConfigError("(file)", e.what());
        }
    }
    for (const auto& o : overrides) apply_override(doc, o);
    ScenarioConfig c = resolve_config(doc, preset);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

inline void ScenarioConfig::validate() const {
    auto require = [](bool ok, const char* key, const char* constraint) {
        if (!ok) throw ConfigError(key, constraint);
    };
    auto positive = [&](double v, const char* key) { require(v > 0.0 && std::isfinite(v), key, "must be > 0"); };
    auto one_of = [&](const std::string& v, std::initializer_list<const char*> options, const char* key) {
        for (const char* o : options)
            if (v == o) return;
        std::string msg = "must be one of";
        for (const char* o : options) msg += std::string(" ") + o;
        throw ConfigError(key, msg);
    };

    one_of(preset, {"battery", "sinc"}, "preset");
    require(!name.empty() && name.find('/') == std::string::npos, "name", "must be a non-empty plain name");
    require(runs >= 1, "runs", "must be >= 1");

    one_of(model.family, {"battery", "sinc"}, "model.family");
    one_of(model.sinc_convention, {"normalized", "unnormalized"}, "model.sinc_convention");
    positive(model.battery.capacity, "model.capacity");
    positive(model.battery.heat_capacity, "model.heat_capacity");
    positive(model.battery.thermal_resistance, "model.thermal_resistance");
    positive(model.battery.ambient_temperature, "model.ambient_temperature");
    positive(model.dt, "model.dt");
    require(model.x0.size() == 3, "model.x0", "must have 3 entries (z, V1, Tc)");
    require(model.x0[0] >= 0.0 && model.x0[0] <= 1.0, "model.x0", "state of charge must lie in [0, 1]");
    require(model.process_noise >= 0.0, "model.process_noise", "must be >= 0");
    require(model.measurement_noise >= 0.0, "model.measurement_noise", "must be >= 0");
    require(model.input.frequency >= 0.0, "model.input_frequency", "must be >= 0");

    require(offline.realizations >= 1, "offline.realizations", "must be >= 1");
    require(offline.samples >= 1, "offline.samples", "must be >= 1");
    require(offline.sigma_xi >= 0.0, "offline.sigma_xi", "must be >= 0");
    one_of(offline.grid, {"midpoint", "uniform_random"}, "offline.grid");
    require(offline.basis_size >= 1, "offline.basis_size", "must be >= 1");
    require(offline.rank >= 1, "offline.rank", "must be >= 1");
    require(offline.energy_threshold >= 0.0 && offline.energy_threshold <= 1.0, "offline.energy_threshold",
            "must lie in [0, 1]");
    require(offline.domain.empty() || (offline.domain.size() == 2 && offline.domain[0] < offline.domain[1]),
            "offline.domain", "must be [] or [lower, upper] with lower < upper");
    if (!offline.domain.empty()) {
        const auto [lo, hi] = family_range(family());
        if (family() == TargetFamily::battery_alpha)
            require(offline.domain[0] <= lo && offline.domain[1] >= hi, "offline.domain",
                    "must contain the state-of-charge range [0, 1]");
        else
            require(offline.domain[0] <= lo && offline.domain[1] >= hi, "offline.domain", "must contain [-15, 15]");
    }
    require(offline.padding >= 0.0, "offline.padding", "must be >= 0");
    positive(offline.hyper.signal_variance, "offline.sigma2");
    positive(offline.hyper.lengthscale, "offline.lengthscale");
    positive(offline.hyper.noise_variance, "offline.noise_variance");

    require(filter.particles >= 1, "filter.np", "must be >= 1");
    positive(filter.exploration, "filter.c");
    require(filter.lambda_f > 0.0 && filter.lambda_f <= 1.0, "filter.lambda_f", "must lie in (0, 1]");
    require(filter.nu0 > static_cast<double>(kBatteryOutputs) - 1.0, "filter.nu0", "must exceed n_y - 1 = 2");
    positive(filter.lambda0, "filter.lambda0");
    one_of(filter.parameter_noise, {"sigma", "sigma_squared"}, "filter.parameter_noise");
    one_of(filter.resample, {"always", "ess"}, "filter.resample");
    require(filter.ess_threshold > 0.0 && filter.ess_threshold <= 1.0, "filter.ess_threshold", "must lie in (0, 1]");
    require(filter.prior_x_var.size() == 3, "filter.prior_x_var", "must have 3 entries");
    for (double v : filter.prior_x_var) positive(v, "filter.prior_x_var");
    require(filter.init_j >= 1 && filter.init_j <= offline.realizations, "filter.init_j",
            "must name an offline realization (1..offline.realizations)");

    require(schedule.steps >= 1, "schedule.steps", "must be >= 1");
    positive(schedule.j_before, "schedule.j_before");
    positive(schedule.j_after, "schedule.j_after");

    require(sweep.d_max >= 1 && sweep.d_max <= offline.basis_size, "sweep.d_max",
            "must lie in [1, offline.basis_size]");
    require(sweep.grid_points >= 2, "sweep.grid_points", "must be >= 2");
}

}  // namespace condgp
