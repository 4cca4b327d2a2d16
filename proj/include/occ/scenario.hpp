#pragma once

// Scenario loading: JSON config with layered defaults (built-in table ->
// file), unit-suffixed keys, validation that names the offending field, and
// the sweep block.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "occ/errors.hpp"
#include "occ/indoor.hpp"
#include "occ/vehicle.hpp"

namespace occ {

using nlohmann::json;

struct RunParams {
    double dt = 1.0;
    double duration = 50.0;
    uint64_t seed = 1;
    double decode_latency = 0.08;
    double accuracy_radius = 0.1;
    double alarm_threshold_px = 5000.0;
    int suspend_threshold = 5;
    double kf_process_intensity = 0.01;
};

struct SweepSpec {
    std::string parameter;
    std::vector<double> values;
};

struct ScenarioConfig {
    std::string kind;  // "indoor" or "vehicle"
    json merged;       // defaults + file, kept for sweep patching

    CameraIntrinsics camera;
    ChannelParams channel;
    RunParams run;
    std::optional<SweepSpec> sweep;

    // indoor
    Room room;
    SmartphoneAgent agent;
    MeasurementNoise indoor_noise;

    // vehicle
    RoadScene road;
    VehicleNoise vehicle_noise;
};

namespace detail {

inline json builtin_defaults(const std::string& kind) {
    json j;
    j["kind"] = kind;
    j["camera"] = {
        {"focal_length_mm", 16.0},   {"pixel_pitch_um", 3.5},
        {"sensor_width_mm", 36.0},   {"sensor_height_mm", 24.0},
        {"fov_semi_angle_deg", 60.0}, {"fps", 30.0},
        {"exposure", 1.0 / 2000.0},  {"megapixels", 0.0},
        {"skew", 0.0}};
    j["channel"] = {{"kappa", 0.54},          {"iota", 1.0},
                    {"noise_density", 1e-17}, {"bandwidth", 20e3},
                    {"optical_filter_gain", 1.0},
                    {"concentrator_gain", 1.0},
                    {"responsivity", 1.0},
                    {"alpha", 1.0},
                    {"beta", 0.1},
                    {"spatial_bandwidth", 100.0}};
    j["noise"] = {{"eta_sigma", 0.02},
                  {"quantize_eta", true},
                  {"speed_sigma", 0.05},
                  {"s2psk_delta", 1.0},
                  {"interference_coupling", kind == "vehicle" ? 0.05 : 0.0},
                  {"interferers", json::array()}};
    j["run"] = {{"dt", kind == "vehicle" ? 0.1 : 1.0},
                {"duration", 50.0},
                {"seed", 1},
                {"decode_latency", 0.08},
                {"accuracy_radius", kind == "vehicle" ? 1.0 : 0.1},
                {"alarm_threshold_px", 5000.0},
                {"suspend_threshold", 5},
                {"kf_process_intensity", 0.01}};
    if (kind == "indoor") {
        j["world"] = {{"width", 12.0},
                      {"depth", 12.0},
                      {"ceiling_height", 3.0},
                      {"grid_spacing", 2.0},
                      {"fixture",
                       {{"shape", "square"},
                        {"size", 0.1},
                        {"power", 2.0},
                        {"half_power_semi_angle_deg", 60.0},
                        {"clock_hz", 125.0}}}};
        j["agent"] = {{"waypoints", json::array({{2.0, 2.0, 1.2}, {10.0, 10.0, 1.2}})},
                      {"speed", 0.5}};
    } else {
        j["world"] = {{"sl_height", 7.0},
                      {"sl_spacing", 25.0},
                      {"sl_count", 0},
                      {"sl_area", 0.04},
                      {"sl_power", 150.0},
                      {"sl_half_power_deg", 80.0},
                      {"sl_clock_hz", 125.0},
                      {"lane_width", 10.0},
                      {"fv_power", 12.0},
                      {"fv_half_power_deg", 60.0},
                      {"fv_clock_hz", 125.0},
                      {"hv", {{"x0", 5.0}, {"y", 5.0}, {"z", 1.5}, {"speed_kmh", 50.0}}},
                      {"fvs", json::array({{{"id", 1001},
                                            {"x0", 25.0},
                                            {"y", 5.0},
                                            {"z", 1.5},
                                            {"speed_kmh", 50.0},
                                            {"taillight_separation", 1.2},
                                            {"taillight_area", 0.015}}})}};
    }
    return j;
}

inline void deep_merge(json& base, const json& over) {
    for (auto it = over.begin(); it != over.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) &&
            base[it.key()].is_object()) {
            deep_merge(base[it.key()], *it);
        } else {
            base[it.key()] = *it;
        }
    }
}

inline double num_at(const json& j, const std::string& dotted) {
    const json* cur = &j;
    std::string rest = dotted;
    while (true) {
        const auto pos = rest.find('.');
        const std::string key = rest.substr(0, pos);
        if (!cur->contains(key))
            throw ValidationError(dotted, "missing config entry");
        cur = &(*cur)[key];
        if (pos == std::string::npos) break;
        rest = rest.substr(pos + 1);
    }
    if (!cur->is_number())
        throw ValidationError(dotted, "expected a number");
    return cur->get<double>();
}

inline double positive(const json& j, const std::string& dotted) {
    const double v = num_at(j, dotted);
    if (!(v > 0)) throw ValidationError(dotted, "must be > 0");
    return v;
}

inline double nonneg(const json& j, const std::string& dotted) {
    const double v = num_at(j, dotted);
    if (!(v >= 0)) throw ValidationError(dotted, "must be >= 0");
    return v;
}

inline bool is_index(const std::string& key) {
    return !key.empty() &&
           key.find_first_not_of("0123456789") == std::string::npos;
}

// Dotted paths descend through objects by key and arrays by numeric index.
inline const json* find_path(const json& j, const std::string& dotted) {
    const json* cur = &j;
    std::string rest = dotted;
    while (true) {
        const auto pos = rest.find('.');
        const std::string key = rest.substr(0, pos);
        if (cur->is_array() && is_index(key)) {
            const size_t idx = std::stoul(key);
            if (idx >= cur->size()) return nullptr;
            cur = &(*cur)[idx];
        } else if (cur->is_object() && cur->contains(key)) {
            cur = &(*cur)[key];
        } else {
            return nullptr;
        }
        if (pos == std::string::npos) return cur;
        rest = rest.substr(pos + 1);
    }
}

inline void set_path(json& j, const std::string& dotted, double value) {
    json* cur = &j;
    std::string rest = dotted;
    while (true) {
        const auto pos = rest.find('.');
        const std::string key = rest.substr(0, pos);
        const bool last = pos == std::string::npos;
        if (cur->is_array() && is_index(key)) {
            const size_t idx = std::stoul(key);
            if (idx >= cur->size())
                throw ValidationError(dotted, "array index out of range");
            if (last) {
                (*cur)[idx] = value;
                return;
            }
            cur = &(*cur)[idx];
        } else {
            if (last) {
                (*cur)[key] = value;
                return;
            }
            cur = &(*cur)[key];
        }
        rest = rest.substr(pos + 1);
    }
}

inline CameraIntrinsics parse_camera(const json& j) {
    CameraIntrinsics cam;
    cam.focal_length = positive(j, "camera.focal_length_mm") * 1e-3;
    cam.sensor_width = positive(j, "camera.sensor_width_mm") * 1e-3;
    cam.sensor_height = positive(j, "camera.sensor_height_mm") * 1e-3;
    const double mp = nonneg(j, "camera.megapixels");
    if (mp > 0) {
        // Resolution sweep knob: megapixels at fixed sensor size sets the
        // pixel pitch, which is what changes the count granularity.
        cam.pixel_pitch =
            std::sqrt(cam.sensor_width * cam.sensor_height / (mp * 1e6));
    } else {
        cam.pixel_pitch = positive(j, "camera.pixel_pitch_um") * 1e-6;
    }
    cam.fov_semi_angle =
        positive(j, "camera.fov_semi_angle_deg") * std::numbers::pi / 180.0;
    if (cam.fov_semi_angle >= std::numbers::pi / 2)
        throw ValidationError("camera.fov_semi_angle_deg", "must be < 90");
    cam.fps = positive(j, "camera.fps");
    cam.exposure = positive(j, "camera.exposure");
    cam.skew = num_at(j, "camera.skew");
    cam.finalize();
    return cam;
}

inline ChannelParams parse_channel(const json& j) {
    ChannelParams ch;
    ch.kappa = positive(j, "channel.kappa");
    ch.iota = positive(j, "channel.iota");
    ch.noise_density = positive(j, "channel.noise_density");
    ch.bandwidth = positive(j, "channel.bandwidth");
    ch.optical_filter_gain = positive(j, "channel.optical_filter_gain");
    ch.concentrator_gain = positive(j, "channel.concentrator_gain");
    ch.responsivity = positive(j, "channel.responsivity");
    ch.alpha = nonneg(j, "channel.alpha");
    ch.beta = positive(j, "channel.beta");
    ch.spatial_bandwidth = positive(j, "channel.spatial_bandwidth");
    ch.validate();
    return ch;
}

inline std::vector<std::pair<double, double>> parse_interferers(const json& j) {
    std::vector<std::pair<double, double>> out;
    for (const auto& entry : j.at("noise").at("interferers")) {
        if (!entry.is_array() || entry.size() != 2)
            throw ValidationError("noise.interferers", "expected [power, gain] pairs");
        out.emplace_back(entry[0].get<double>(), entry[1].get<double>());
    }
    return out;
}

inline FixtureShape parse_fixture_shape(const json& fix) {
    const std::string shape = fix.at("shape").get<std::string>();
    if (shape == "circle") return Circle{fix.at("size").get<double>()};
    if (shape == "rectangle") {
        const auto& s = fix.at("size");
        if (!s.is_array() || s.size() != 2)
            throw ValidationError("world.fixture.size",
                                  "rectangle needs [a, b]");
        return Rectangle{s[0].get<double>(), s[1].get<double>()};
    }
    if (shape == "square") return Square{fix.at("size").get<double>()};
    throw ValidationError("world.fixture.shape",
                          "must be circle, rectangle, or square");
}

}  // namespace detail

namespace detail {
inline ScenarioConfig parse_scenario_impl(const json& merged);
}

/// Parses a merged config document into a validated ScenarioConfig.
inline ScenarioConfig parse_scenario(const json& merged) {
    try {
        return detail::parse_scenario_impl(merged);
    } catch (const json::exception& e) {
        throw ParseError("bad scenario structure: " + std::string(e.what()));
    }
}

namespace detail {

inline ScenarioConfig parse_scenario_impl(const json& merged) {
    ScenarioConfig cfg;
    cfg.merged = merged;
    cfg.kind = merged.at("kind").get<std::string>();
    if (cfg.kind != "indoor" && cfg.kind != "vehicle")
        throw ValidationError("kind", "must be indoor or vehicle");

    cfg.camera = detail::parse_camera(merged);
    cfg.channel = detail::parse_channel(merged);

    cfg.run.dt = detail::positive(merged, "run.dt");
    cfg.run.duration = detail::nonneg(merged, "run.duration");
    cfg.run.seed = static_cast<uint64_t>(detail::nonneg(merged, "run.seed"));
    cfg.run.decode_latency = detail::nonneg(merged, "run.decode_latency");
    cfg.run.accuracy_radius = detail::positive(merged, "run.accuracy_radius");
    cfg.run.alarm_threshold_px =
        detail::positive(merged, "run.alarm_threshold_px");
    cfg.run.suspend_threshold = static_cast<int>(
        detail::positive(merged, "run.suspend_threshold"));
    cfg.run.kf_process_intensity =
        detail::nonneg(merged, "run.kf_process_intensity");

    if (merged.contains("sweep") && !merged["sweep"].is_null()) {
        SweepSpec sweep;
        sweep.parameter = merged["sweep"].at("parameter").get<std::string>();
        for (const auto& v : merged["sweep"].at("values"))
            sweep.values.push_back(v.get<double>());
        if (sweep.values.empty())
            throw ValidationError("sweep.values", "must be non-empty");
        if (!detail::find_path(merged, sweep.parameter))
            throw ValidationError("sweep.parameter",
                                  "does not name an existing config path");
        cfg.sweep = sweep;
    }

    const json& noise = merged.at("noise");
    if (cfg.kind == "indoor") {
        const json& world = merged.at("world");
        const double width = detail::positive(merged, "world.width");
        const double depth = detail::positive(merged, "world.depth");
        const double ceiling = detail::positive(merged, "world.ceiling_height");
        const auto& fix = world.at("fixture");
        const FixtureShape shape = detail::parse_fixture_shape(fix);
        const double power = detail::positive(merged, "world.fixture.power");
        const double half_power =
            detail::positive(merged, "world.fixture.half_power_semi_angle_deg") *
            std::numbers::pi / 180.0;
        const double clock = detail::positive(merged, "world.fixture.clock_hz");
        if (world.contains("fixtures")) {
            std::vector<std::pair<uint32_t, Vector2d>> xy;
            for (const auto& f : world["fixtures"]) {
                if (!f.is_array() || f.size() != 3)
                    throw ValidationError("world.fixtures",
                                          "expected [id, x, y] triples");
                xy.emplace_back(f[0].get<uint32_t>(),
                                Vector2d(f[1].get<double>(), f[2].get<double>()));
            }
            cfg.room = make_explicit_room(width, depth, ceiling, xy, shape,
                                          power, half_power, clock);
        } else {
            const double spacing = detail::positive(merged, "world.grid_spacing");
            cfg.room = make_grid_room(width, depth, ceiling, spacing, shape,
                                      power, half_power, clock);
        }
        cfg.room.validate();

        const json& agent = merged.at("agent");
        cfg.agent.camera = cfg.camera;
        cfg.agent.trajectory.speed = detail::nonneg(merged, "agent.speed");
        cfg.agent.trajectory.waypoints.clear();
        for (const auto& w : agent.at("waypoints")) {
            if (!w.is_array() || w.size() != 3)
                throw ValidationError("agent.waypoints", "expected [x, y, z]");
            cfg.agent.trajectory.waypoints.emplace_back(
                w[0].get<double>(), w[1].get<double>(), w[2].get<double>());
        }
        if (cfg.agent.trajectory.waypoints.empty())
            throw ValidationError("agent.waypoints", "must be non-empty");
        for (const auto& w : cfg.agent.trajectory.waypoints)
            if (w.z() <= 0 || w.z() >= cfg.room.ceiling_height)
                throw ValidationError("agent.waypoints",
                                      "z must lie between floor and ceiling");
        if (cfg.room.grid_spacing > 0) validate_fov_coverage(cfg.room, cfg.agent);

        cfg.indoor_noise.eta_sigma = detail::nonneg(merged, "noise.eta_sigma");
        cfg.indoor_noise.quantize_eta = noise.at("quantize_eta").get<bool>();
        cfg.indoor_noise.interferers = detail::parse_interferers(merged);
    } else {
        const double spacing = detail::positive(merged, "world.sl_spacing");
        const double height = detail::positive(merged, "world.sl_height");
        int count = static_cast<int>(detail::nonneg(merged, "world.sl_count"));

        cfg.road.sl_area = detail::positive(merged, "world.sl_area");
        cfg.road.sl_power = detail::positive(merged, "world.sl_power");
        cfg.road.sl_half_power =
            detail::positive(merged, "world.sl_half_power_deg") *
            std::numbers::pi / 180.0;
        cfg.road.sl_clock = detail::positive(merged, "world.sl_clock_hz");
        cfg.road.lane_width = detail::positive(merged, "world.lane_width");
        cfg.road.fv_power = detail::positive(merged, "world.fv_power");
        cfg.road.fv_half_power =
            detail::positive(merged, "world.fv_half_power_deg") *
            std::numbers::pi / 180.0;
        cfg.road.fv_clock = detail::positive(merged, "world.fv_clock_hz");

        cfg.road.hv.id = 999;
        cfg.road.hv.x0 = detail::num_at(merged, "world.hv.x0");
        cfg.road.hv.y = detail::positive(merged, "world.hv.y");
        cfg.road.hv.z = detail::positive(merged, "world.hv.z");
        cfg.road.hv.speed = detail::nonneg(merged, "world.hv.speed_kmh") / 3.6;
        cfg.road.camera = cfg.camera;

        cfg.road.fvs.clear();
        for (const auto& f : merged.at("world").at("fvs")) {
            VehicleAgent fv;
            fv.id = f.at("id").get<uint32_t>();
            fv.x0 = f.at("x0").get<double>();
            fv.y = f.at("y").get<double>();
            fv.z = f.at("z").get<double>();
            fv.speed = f.at("speed_kmh").get<double>() / 3.6;
            fv.taillight_separation = f.at("taillight_separation").get<double>();
            fv.taillight_area = f.at("taillight_area").get<double>();
            cfg.road.fvs.push_back(fv);
        }

        if (count <= 0) {
            const double reach = cfg.road.hv.x0 +
                                 cfg.road.hv.speed *
                                     detail::nonneg(merged, "run.duration") +
                                 300.0;
            count = static_cast<int>(std::ceil(reach / spacing)) + 2;
        }
        cfg.road.chart = make_sl_chart(spacing, height, count);
        cfg.road.validate();

        cfg.vehicle_noise.eta_sigma = detail::nonneg(merged, "noise.eta_sigma");
        cfg.vehicle_noise.quantize_eta = noise.at("quantize_eta").get<bool>();
        cfg.vehicle_noise.speed_sigma = detail::nonneg(merged, "noise.speed_sigma");
        cfg.vehicle_noise.s2psk_delta = detail::nonneg(merged, "noise.s2psk_delta");
        cfg.vehicle_noise.interference_coupling =
            detail::nonneg(merged, "noise.interference_coupling");
        cfg.vehicle_noise.interferers = detail::parse_interferers(merged);
    }
    return cfg;
}

}  // namespace detail

/// Loads a scenario file: built-in defaults for its kind, overlaid with the
/// file's entries, validated.
inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario file: " + path.string());
    json fromFile;
    try {
        fromFile = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("malformed scenario file " + path.string() + ": " +
                         e.what());
    }
    std::string kind = "indoor";
    if (fromFile.contains("kind") && fromFile["kind"].is_string())
        kind = fromFile["kind"].get<std::string>();
    json merged = detail::builtin_defaults(kind);
    detail::deep_merge(merged, fromFile);
    return parse_scenario(merged);
}

}  // namespace occ
