#pragma once

// Experiment configuration: strict-schema structured text (JSON dialect)
// with defaults, canonical hashing, and translation into the module
// parameter structs.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "nwtwin/cavity.hpp"
#include "nwtwin/constants.hpp"
#include "nwtwin/errors.hpp"
#include "nwtwin/mechanics.hpp"
#include "nwtwin/optoforce.hpp"
#include "nwtwin/scan.hpp"
#include "nwtwin/servo.hpp"

namespace nwtwin::config {

using nlohmann::json;

struct EstimationSettings {
    double triplet_spacing = 50.0;  // Hz
    double block_length = 0.1;      // s
    double tracker_gain = 10.0;     // Hz per unit imbalance
    double tracker_max_step = 5.0;  // Hz
    double response_fmin = 45e3;    // Hz
    double response_fmax = 65e3;    // Hz
    int response_points = 81;
};

struct ExperimentConfig {
    int schema_version = 1;
    cavity::CavityGeometry geometry{};
    cavity::NanowireScatterer wire{};
    bool wire_calibrated = false;
    double calibration_length_shift = 0.0;
    double calibration_linewidth_ratio = 0.0;
    mechanics::ModePair modes{};
    double input_power = 1e-6;       // W
    double modulation_power = 0.0;   // W
    optoforce::PhotothermalConfig photothermal{};
    servo::LockConfig lock{};
    servo::DriftModel drift{};
    servo::ProbeReadoutModel probe{};
    scan::ScanPlan scan_plan{};
    EstimationSettings estimation{};
    std::uint64_t seed = 1;
    std::string hash;    // FNV-1a of the canonical form, hex
    json canonical;      // defaults-merged, key-sorted
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline json schema_defaults() {
    return json{
        {"schema_version", 1},
        {"geometry",
         {{"length", 12e-6},
          {"roc1", 28e-6},
          {"roc2", 28e-6},
          {"wavelength", 767e-9},
          {"t1", 0.002},
          {"t2", 0.001},
          {"l1", 0.0137},
          {"l2", 0.0137}}},
        {"wire",
         {{"optical",
           {{"zeta0", json::array({0.0, 0.0})},
            {"calibrate", {{"length_shift", 12e-9}, {"linewidth_ratio", 2.0}}},
            {"radius", 65e-9},
            {"position", json::array({0.0, -1e-4, 0.0})}}},
          {"mechanical",
           {{"frequency1", 50e3},
            {"mode_split", 1.2},
            {"theta1_deg", 20.0},
            {"quality", 5000.0},
            {"mass", 1e-15},
            {"temperature", 300.0}}}}},
        {"drive",
         {{"input_power", 1e-6},
          {"modulation_power", 0.0},
          {"photothermal",
           {{"coefficient", 0.0}, {"time_constant", 1e-3},
            {"direction", json::array({1.0, 0.0})}}}}},
        {"servo",
         {{"demod_frequency", 250e3},
          {"demod_time_constant", 50e-6},
          {"control_rate", 100e3},
          {"fast", {{"kp", 0.05}, {"ki_hz", 2e3}, {"range", 100e-9}}},
          {"slow", {{"kp", 0.0}, {"ki_hz", 5.0}, {"range", 5e-6}}},
          {"loop_bandwidth", 2e3},
          {"drift",
           {{"linear_rate", 0.0}, {"sine_amplitude", 0.0}, {"sine_period", 1200.0}}}}},
        {"probe",
         {{"wavelength", 633e-9},
          {"visibility", 0.6},
          {"phase_offset", 1.5707963267948966},
          {"envelope_waist", 2e-6},
          {"mean_power", 2e-6},
          {"power_noise_psd", 0.0},
          {"displacement_noise_floor", 0.0}}},
        {"scan",
         {{"plane", "XZ"},
          {"origin", json::array({0.0, 0.0})},
          {"extent", json::array({767e-9, 1e-6})},
          {"pixels", json::array({100, 100})},
          {"dwell", 0.1},
          {"channels",
           json::array({"transmission", "scatter", "cavity_shift", "linewidth",
                        "resonance_shift"})}}},
        {"estimation",
         {{"triplet_spacing", 50.0},
          {"block_length", 0.1},
          {"tracker_gain", 10.0},
          {"tracker_max_step", 5.0},
          {"response", {{"fmin", 45e3}, {"fmax", 65e3}, {"points", 81}}}}},
        {"seed", 1},
    };
}

// Merge user keys over defaults; unknown keys or type mismatches are
// reported with their JSON-pointer path.
inline void merge_strict(json& base, const json& user, const std::string& path) {
    if (!user.is_object())
        throw ConfigError("config: expected an object at '" + (path.empty() ? "/" : path) + "'");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string here = path + "/" + it.key();
        if (!base.contains(it.key()))
            throw ConfigError("config: unknown key '" + here + "'");
        json& slot = base[it.key()];
        if (slot.is_object() && it.value().is_object()) {
            merge_strict(slot, it.value(), here);
        } else if (slot.is_object() != it.value().is_object()) {
            throw ConfigError("config: type mismatch at '" + here + "'");
        } else if (slot.is_number() && !it.value().is_number()) {
            throw ConfigError("config: expected a number at '" + here + "'");
        } else {
            slot = it.value();
        }
    }
}

} // namespace detail

// Parses, validates against the strict schema, fills defaults, resolves
// the wire polarizability (direct or by calibration) and computes the
// canonical config hash.
inline ExperimentConfig parse_config(const json& user) {
    for (const char* block : {"geometry", "wire"})
        if (!user.contains(block))
            throw ConfigError(std::string("config: missing required block '") + block + "'");

    json merged = detail::schema_defaults();
    detail::merge_strict(merged, user, "");

    ExperimentConfig cfg;
    cfg.canonical = merged;
    {
        std::ostringstream hex;
        hex << std::hex << detail::fnv1a(merged.dump());
        cfg.hash = hex.str();
    }
    cfg.schema_version = merged["schema_version"].get<int>();
    if (cfg.schema_version != 1)
        throw ConfigError("config: unsupported schema_version " +
                          std::to_string(cfg.schema_version));

    try {
        const auto& g = merged["geometry"];
        cfg.geometry = {g["length"], g["roc1"], g["roc2"], g["wavelength"],
                        g["t1"],     g["t2"],   g["l1"],   g["l2"]};
        cfg.geometry.validate();

        const auto& wo = merged["wire"]["optical"];
        cfg.wire.radius = wo["radius"];
        cfg.wire.tip_position = Eigen::Vector3d(wo["position"][0].get<double>(),
                                                wo["position"][1].get<double>(),
                                                wo["position"][2].get<double>());
        const double z_re = wo["zeta0"][0], z_im = wo["zeta0"][1];
        if (z_re == 0.0 && z_im == 0.0) {
            cfg.wire_calibrated = true;
            cfg.calibration_length_shift = wo["calibrate"]["length_shift"];
            cfg.calibration_linewidth_ratio = wo["calibrate"]["linewidth_ratio"];
            cfg.wire.zeta0 = cavity::calibrate_scatterer(cfg.geometry, cfg.calibration_length_shift,
                                                         cfg.calibration_linewidth_ratio);
        } else {
            cfg.wire.zeta0 = {z_re, z_im};
        }

        const auto& wm = merged["wire"]["mechanical"];
        cfg.modes.omega1 = angular(wm["frequency1"].get<double>());
        cfg.modes.omega2 = wm["mode_split"].get<double>() * cfg.modes.omega1;
        cfg.modes.theta1 = wm["theta1_deg"].get<double>() * constants::pi / 180.0;
        const double q = wm["quality"].get<double>();
        cfg.modes.gamma1 = cfg.modes.omega1 / q;
        cfg.modes.gamma2 = cfg.modes.omega2 / q;
        cfg.modes.effective_mass = wm["mass"];
        cfg.modes.temperature = wm["temperature"];
        cfg.modes.validate();

        const auto& d = merged["drive"];
        cfg.input_power = d["input_power"];
        cfg.modulation_power = d["modulation_power"];
        cfg.photothermal.coefficient = d["photothermal"]["coefficient"];
        cfg.photothermal.time_constant = d["photothermal"]["time_constant"];
        cfg.photothermal.direction =
            Eigen::Vector2d(d["photothermal"]["direction"][0].get<double>(),
                            d["photothermal"]["direction"][1].get<double>());
        if (!(cfg.input_power > 0.0)) throw ConfigError("config: drive/input_power must be > 0");
        if (cfg.modulation_power < 0.0 || cfg.modulation_power > cfg.input_power)
            throw ConfigError("config: drive/modulation_power must be in [0, input_power]");

        const auto& s = merged["servo"];
        cfg.lock.demod_frequency = s["demod_frequency"];
        cfg.lock.demod_time_constant = s["demod_time_constant"];
        cfg.lock.control_rate = s["control_rate"];
        cfg.lock.pi_fast = {s["fast"]["kp"], constants::two_pi * s["fast"]["ki_hz"].get<double>(),
                            s["fast"]["range"]};
        cfg.lock.pi_slow = {s["slow"]["kp"], constants::two_pi * s["slow"]["ki_hz"].get<double>(),
                            s["slow"]["range"]};
        cfg.lock.loop_bandwidth_target = s["loop_bandwidth"];
        cfg.drift.linear_rate = s["drift"]["linear_rate"];
        cfg.drift.sine_amplitude = s["drift"]["sine_amplitude"];
        cfg.drift.sine_period = s["drift"]["sine_period"];

        const auto& p = merged["probe"];
        cfg.probe.probe_wavelength = p["wavelength"];
        cfg.probe.visibility = p["visibility"];
        cfg.probe.phase_offset = p["phase_offset"];
        cfg.probe.envelope_waist = p["envelope_waist"];
        cfg.probe.mean_power = p["mean_power"];
        cfg.probe.power_noise_psd = p["power_noise_psd"];
        cfg.probe.displacement_noise_floor = p["displacement_noise_floor"];

        const auto& sc = merged["scan"];
        const std::string plane = sc["plane"];
        if (plane == "XZ")
            cfg.scan_plan.plane = scan::ScanPlane::XZ;
        else if (plane == "YZ")
            cfg.scan_plan.plane = scan::ScanPlane::YZ;
        else if (plane == "axis-1D")
            cfg.scan_plan.plane = scan::ScanPlane::Axis1D;
        else
            throw ConfigError("config: scan/plane must be XZ, YZ or axis-1D");
        cfg.scan_plan.origin_fast = sc["origin"][0];
        cfg.scan_plan.origin_slow = sc["origin"][1];
        cfg.scan_plan.extent_fast = sc["extent"][0];
        cfg.scan_plan.extent_slow = sc["extent"][1];
        cfg.scan_plan.pixels_fast = sc["pixels"][0];
        cfg.scan_plan.pixels_slow = sc["pixels"][1];
        cfg.scan_plan.dwell = sc["dwell"];
        cfg.scan_plan.channels = sc["channels"].get<std::vector<std::string>>();
        cfg.scan_plan.validate();

        const auto& e = merged["estimation"];
        cfg.estimation.triplet_spacing = e["triplet_spacing"];
        cfg.estimation.block_length = e["block_length"];
        cfg.estimation.tracker_gain = e["tracker_gain"];
        cfg.estimation.tracker_max_step = e["tracker_max_step"];
        cfg.estimation.response_fmin = e["response"]["fmin"];
        cfg.estimation.response_fmax = e["response"]["fmax"];
        cfg.estimation.response_points = e["response"]["points"];
        if (cfg.estimation.triplet_spacing < 2.0 / cfg.estimation.block_length)
            throw ConfigError("config: estimation/triplet_spacing must be >= 2/block_length");

        cfg.scan_plan.seed = cfg.seed = merged["seed"].get<std::uint64_t>();
    } catch (const ConfigError&) {
        throw;
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("config: malformed value (") + ex.what() + ")");
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(std::string("config: ") + ex.what());
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    json user;
    try {
        user = json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
    } catch (const json::parse_error& ex) {
        throw ConfigError("config: parse error in '" + path + "': " + ex.what());
    }
    return parse_config(user);
}

} // namespace nwtwin::config
