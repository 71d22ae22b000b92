#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "condgp/config.hpp"

using namespace condgp;

namespace {

void collect_keys(const json& j, const std::string& prefix, std::set<std::string>& out) {
    for (const auto& [k, v] : j.items()) {
        const std::string path = prefix.empty() ? k : prefix + "." + k;
        if (v.is_object())
            collect_keys(v, path, out);
        else
            out.insert(path);
    }
}

std::string error_key(const json& doc) {
    try {
        resolve_config(doc).validate();
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "";
}

std::string override_error_key(const std::string& assignment) {
    json doc = json::object();
    try {
        apply_override(doc, assignment);
        resolve_config(doc).validate();
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "";
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
    for (const auto& preset : {battery_preset(), sinc_preset()}) {
        const json j = config_to_json(preset);
        EXPECT_EQ(config_to_json(config_from_json(j)), j);
        EXPECT_NO_THROW(preset.validate());
    }
}

TEST(Config, PresetValues) {
    const auto b = battery_preset();
    EXPECT_EQ(b.offline.basis_size, 50u);
    EXPECT_EQ(b.offline.rank, 2u);
    EXPECT_EQ(b.filter.particles, 100u);
    EXPECT_EQ(b.filter.nu0, 3.0);
    EXPECT_EQ(b.filter.lambda0, 1.0);
    EXPECT_EQ(b.model.dt, 0.01);
    EXPECT_EQ(b.model.process_noise, 1e-5);
    EXPECT_EQ(b.model.measurement_noise, 1e-2);
    EXPECT_EQ(b.schedule.switch_step, 1000u);
    EXPECT_EQ(b.schedule.steps, 2000u);
    EXPECT_EQ(b.runs, 50u);
    const auto s = sinc_preset();
    EXPECT_EQ(s.offline.realizations, 30u);
    EXPECT_EQ(s.offline.domain, (std::vector<double>{-15.0, 15.0}));
}

TEST(Config, RegistryListsEveryKey) {
    std::set<std::string> keys;
    collect_keys(config_to_json(battery_preset()), "", keys);
    std::set<std::string> registry;
    for (const auto& k : config_keys()) {
        registry.insert(k.key);
        EXPECT_FALSE(std::string(k.unit).empty()) << k.key;
    }
    EXPECT_EQ(keys, registry);
}

TEST(Config, UnknownKeysAreRejectedByName) {
    EXPECT_EQ(override_error_key("npp=5"), "npp");
    EXPECT_EQ(override_error_key("filter.npp=5"), "filter.npp");
    EXPECT_EQ(error_key(json{{"filter", {{"np", 10}, {"extra", 1}}}}), "filter.extra");
    EXPECT_EQ(error_key(json{{"model", 3}}), "model");
}

TEST(Config, TypeChecks) {
    EXPECT_EQ(override_error_key("filter.np=\"many\""), "filter.np");
    EXPECT_EQ(override_error_key("filter.np=2.5"), "filter.np");
    EXPECT_EQ(override_error_key("runs=-1"), "runs");
    EXPECT_EQ(override_error_key("offline.optimize_hyper=1"), "offline.optimize_hyper");
    EXPECT_EQ(override_error_key("filter.c=1"), "");  // integers are accepted for real-valued keys
}

TEST(Config, OverridesApply) {
    json doc = json::object();
    apply_override(doc, "runs=50");
    apply_override(doc, "seed=7");
    apply_override(doc, "filter.np=100");
    apply_override(doc, "filter.resample=ess");
    apply_override(doc, "name=\"study\"");
    apply_override(doc, "filter.prior_x_var=[1e-3,1e-3,1e-1]");
    const auto c = resolve_config(doc);
    EXPECT_EQ(c.runs, 50u);
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.filter.resample, "ess");
    EXPECT_EQ(c.name, "study");
    EXPECT_EQ(c.filter.prior_x_var[2], 0.1);
    json bad = json::object();
    EXPECT_THROW(apply_override(bad, "=3"), ConfigError);
    EXPECT_THROW(apply_override(bad, "novalue"), ConfigError);
}

TEST(Config, PresetSelection) {
    EXPECT_EQ(resolve_config(json{{"preset", "sinc"}}).model.family, "sinc");
    EXPECT_EQ(resolve_config(json::object(), "sinc").offline.realizations, 30u);
    EXPECT_EQ(resolve_config(json{{"preset", "battery"}}, "sinc").preset, "sinc");
    EXPECT_THROW(resolve_config(json{{"preset", "other"}}), ConfigError);
}

TEST(Config, ValidationNamesKeyAndConstraint) {
    EXPECT_EQ(override_error_key("filter.lambda_f=0"), "filter.lambda_f");
    EXPECT_EQ(override_error_key("filter.np=0"), "filter.np");
    EXPECT_EQ(override_error_key("filter.nu0=2"), "filter.nu0");
    EXPECT_EQ(override_error_key("filter.init_j=11"), "filter.init_j");
    EXPECT_EQ(override_error_key("model.dt=0"), "model.dt");
    EXPECT_EQ(override_error_key("model.x0=[1.5,0,298]"), "model.x0");
    EXPECT_EQ(override_error_key("offline.domain=[0.2,1.0]"), "offline.domain");
    EXPECT_EQ(override_error_key("offline.grid=\"random\""), "offline.grid");
    EXPECT_EQ(override_error_key("sweep.d_max=51"), "sweep.d_max");
    try {
        resolve_config(json{{"filter", {{"lambda_f", 1.5}}}}).validate();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("(0, 1]"), std::string::npos);
    }
}

TEST(Config, LoadFromFile) {
    const auto path = std::filesystem::temp_directory_path() / "condgp_test_config.json";
    {
        std::ofstream out(path);
        out << R"({"name": "from_file", "filter": {"np": 64}})";
    }
    const auto c = load_config(path.string(), {"filter.np=32"});
    EXPECT_EQ(c.name, "from_file");
    EXPECT_EQ(c.filter.particles, 32u);
    {
        std::ofstream out(path);
        out << "{ not json";
    }
    EXPECT_THROW(load_config(path.string(), {}), ConfigError);
    std::filesystem::remove(path);
}
