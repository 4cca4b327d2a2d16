#pragma once

// Seeded experiment execution: runs a scenario's tick loop, emits per-tick
// CSV rows and summary metrics, and drives parameter sweeps with derived
// per-value seeds.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "occ/scenario.hpp"

namespace occ {

struct Summary {
    long n_ticks = 0;
    bool empty = true;
    double rms_error_raw = 0.0;
    double rms_error_tracked = 0.0;
    double mean_decode_failure_rate = 0.0;
    double ber_empirical = 0.0;
    double accuracy_percent = 0.0;
    double mean_possibility = 0.0;
    // Last raw fix, indoor z reported as distance below the ceiling.
    bool has_final_estimate = false;
    Vector3d final_estimate{0, 0, 0};
};

struct RunReport {
    Summary summary;
    std::filesystem::path csv_path;
};

/// splitmix64; sweep point i runs with seed ^ hash(i) so points are
/// independent but reproducible.
inline uint64_t derive_seed(uint64_t seed, uint64_t index) {
    uint64_t z = index + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z = z ^ (z >> 31);
    return seed ^ z;
}

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace detail

inline std::vector<IndoorTickRecord> run_indoor_collect(
    const ScenarioConfig& cfg, uint64_t seed) {
    IndoorSim sim = make_indoor_sim(cfg.room, cfg.agent, cfg.channel,
                                    cfg.indoor_noise, seed,
                                    cfg.run.suspend_threshold,
                                    cfg.run.kf_process_intensity);
    const long n = static_cast<long>(std::floor(cfg.run.duration / cfg.run.dt));
    std::vector<IndoorTickRecord> rows;
    rows.reserve(n);
    for (long i = 0; i < n; ++i) rows.push_back(tick_indoor(sim, cfg.run.dt));
    return rows;
}

inline std::vector<VehicleTickRecord> run_vehicle_collect(
    const ScenarioConfig& cfg, uint64_t seed) {
    VehicleSim sim =
        make_vehicle_sim(cfg.road, cfg.channel, cfg.vehicle_noise, seed,
                         cfg.run.decode_latency, cfg.run.alarm_threshold_px);
    const long n = static_cast<long>(std::floor(cfg.run.duration / cfg.run.dt));
    std::vector<VehicleTickRecord> rows;
    for (long i = 0; i < n; ++i) {
        auto tick_rows = tick_vehicle(sim, cfg.run.dt);
        rows.insert(rows.end(), tick_rows.begin(), tick_rows.end());
    }
    return rows;
}

inline Summary summarize_indoor(const std::vector<IndoorTickRecord>& rows,
                                const ScenarioConfig& cfg) {
    Summary s;
    s.n_ticks = static_cast<long>(rows.size());
    s.empty = rows.empty();
    if (rows.empty()) return s;
    double raw2 = 0, tracked2 = 0, possibility = 0;
    long raw_n = 0, accurate = 0, failures = 0, attempts = 0;
    long flips = 0, states = 0;
    for (const auto& r : rows) {
        if (r.estimate) {
            const double err = (*r.estimate - r.true_position).norm();
            raw2 += err * err;
            raw_n += 1;
            if (err <= cfg.run.accuracy_radius) accurate += 1;
        }
        const double terr =
            (r.kf_position - r.true_position.head<2>()).norm();
        tracked2 += terr * terr;
        possibility += r.possibility;
        failures += r.decode_failures;
        attempts += r.n_visible;
        flips += r.flipped_states;
        states += r.total_states;
    }
    s.rms_error_raw = raw_n ? std::sqrt(raw2 / raw_n) : 0.0;
    s.rms_error_tracked = std::sqrt(tracked2 / rows.size());
    s.mean_decode_failure_rate =
        attempts ? static_cast<double>(failures) / attempts : 0.0;
    s.ber_empirical = states ? static_cast<double>(flips) / states : 0.0;
    s.accuracy_percent = 100.0 * accurate / rows.size();
    s.mean_possibility = possibility / rows.size();
    for (auto it = rows.rbegin(); it != rows.rend(); ++it)
        if (it->estimate) {
            s.has_final_estimate = true;
            s.final_estimate = *it->estimate;
            // The paper reports z as the camera's distance below the ceiling.
            s.final_estimate.z() = cfg.room.ceiling_height - it->estimate->z();
            break;
        }
    return s;
}

inline Summary summarize_vehicle(const std::vector<VehicleTickRecord>& rows,
                                 const ScenarioConfig& cfg) {
    Summary s;
    s.empty = rows.empty();
    if (rows.empty()) return s;
    double raw2 = 0, tracked2 = 0, possibility = 0;
    long hv_n = 0, fv_n = 0, accurate = 0, fail = 0, tick_n = 0;
    long flips = 0, states = 0;
    long last_tick = -1;
    for (const auto& r : rows) {
        if (r.tick != last_tick) {  // HV metrics once per tick
            last_tick = r.tick;
            tick_n += 1;
            possibility += localization_possibility(r.min_eta);
            flips += r.flipped_states;
            states += r.total_states;
            if (r.hv_fix) {
                const double ex = r.hv_est_x - r.hv_true_x;
                const double ey = r.hv_est_y - r.hv_true_y;
                const double err = std::hypot(ex, ey);
                raw2 += err * err;
                hv_n += 1;
                if (err <= cfg.run.accuracy_radius) accurate += 1;
            }
        } else {
            flips += r.flipped_states;
            states += r.total_states;
        }
        if (r.fv_estimated) {
            const double ex = r.fv_est_x - r.fv_true_x;
            const double ey = r.fv_est_y - r.fv_true_y;
            tracked2 += ex * ex + ey * ey;
            fv_n += 1;
        }
        if (r.decode_fail) fail += 1;
    }
    s.n_ticks = tick_n;
    s.rms_error_raw = hv_n ? std::sqrt(raw2 / hv_n) : 0.0;
    s.rms_error_tracked = fv_n ? std::sqrt(tracked2 / fv_n) : 0.0;
    s.mean_decode_failure_rate = static_cast<double>(fail) / rows.size();
    s.ber_empirical = states ? static_cast<double>(flips) / states : 0.0;
    s.accuracy_percent = 100.0 * accurate / tick_n;
    s.mean_possibility = possibility / tick_n;
    return s;
}

inline void write_indoor_csv(const std::filesystem::path& path,
                             const std::vector<IndoorTickRecord>& rows,
                             const Room& room) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "tick,t_s,true_x,true_y,true_z,est_x,est_y,est_z,kf_x,kf_y,"
           "n_visible,n_decoded,min_eta,possibility\n";
    for (const auto& r : rows) {
        using detail::fmt;
        out << r.tick << ',' << fmt(r.t) << ',' << fmt(r.true_position.x())
            << ',' << fmt(r.true_position.y()) << ','
            << fmt(room.ceiling_height - r.true_position.z()) << ',';
        if (r.estimate)
            out << fmt(r.estimate->x()) << ',' << fmt(r.estimate->y()) << ','
                << fmt(room.ceiling_height - r.estimate->z());
        else
            out << "nan,nan,nan";
        out << ',' << fmt(r.kf_position.x()) << ',' << fmt(r.kf_position.y())
            << ',' << r.n_visible << ',' << r.n_decoded << ','
            << fmt(r.min_eta) << ',' << fmt(r.possibility) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline void write_vehicle_csv(const std::filesystem::path& path,
                              const std::vector<VehicleTickRecord>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "tick,t_s,hv_true_x,hv_true_y,hv_c,hv_h,fv_id,fv_true_x,fv_true_y,"
           "fv_est_x,fv_est_y,range_m,theta_rad,eta_tail,alarm,decode_fail\n";
    for (const auto& r : rows) {
        using detail::fmt;
        out << r.tick << ',' << fmt(r.t) << ',' << fmt(r.hv_true_x) << ','
            << fmt(r.hv_true_y) << ',';
        if (r.hv_fix)
            out << fmt(r.hv_c) << ',' << fmt(r.hv_h);
        else
            out << "nan,nan";
        out << ',' << r.fv_id << ',' << fmt(r.fv_true_x) << ','
            << fmt(r.fv_true_y) << ',';
        if (r.fv_estimated)
            out << fmt(r.fv_est_x) << ',' << fmt(r.fv_est_y) << ','
                << fmt(r.range_m) << ',' << fmt(r.theta_rad);
        else
            out << "nan,nan,nan,nan";
        out << ',' << fmt(r.eta_tail) << ',' << (r.alarm ? 1 : 0) << ','
            << (r.decode_fail ? 1 : 0) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

/// Executes the scenario once; writes <out_dir>/<kind>_ticks.csv. Outputs are
/// byte-identical for identical (config, seed).
inline RunReport run(const ScenarioConfig& cfg,
                     const std::filesystem::path& out_dir,
                     std::optional<uint64_t> seed_override = {}) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string());
    const uint64_t seed = seed_override.value_or(cfg.run.seed);
    RunReport report;
    if (cfg.kind == "indoor") {
        const auto rows = run_indoor_collect(cfg, seed);
        report.summary = summarize_indoor(rows, cfg);
        report.csv_path = out_dir / "indoor_ticks.csv";
        write_indoor_csv(report.csv_path, rows, cfg.room);
    } else {
        const auto rows = run_vehicle_collect(cfg, seed);
        report.summary = summarize_vehicle(rows, cfg);
        report.csv_path = out_dir / "vehicle_ticks.csv";
        write_vehicle_csv(report.csv_path, rows);
    }
    return report;
}

struct SweepPoint {
    double value = 0.0;
    Summary summary;
};

/// Runs every sweep value with its derived seed; emits one per-value tick CSV
/// plus aggregate.csv with one row per value.
inline std::vector<SweepPoint> sweep(const ScenarioConfig& cfg,
                                     const std::filesystem::path& out_dir) {
    if (!cfg.sweep) throw ValidationError("sweep", "no sweep block in scenario");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string());

    std::vector<SweepPoint> points;
    for (size_t i = 0; i < cfg.sweep->values.size(); ++i) {
        const double value = cfg.sweep->values[i];
        json patched = cfg.merged;
        detail::set_path(patched, cfg.sweep->parameter, value);
        patched.erase("sweep");
        const ScenarioConfig point_cfg = parse_scenario(patched);
        const uint64_t seed = derive_seed(cfg.run.seed, i);
        const auto dir = out_dir / ("sweep_" + std::to_string(i));
        const RunReport rep = run(point_cfg, dir, seed);
        points.push_back({value, rep.summary});
    }

    const auto agg_path = out_dir / "aggregate.csv";
    std::ofstream out(agg_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + agg_path.string());
    out << "sweep_value,rms_raw,rms_tracked,ber,accuracy_pct,mean_possibility\n";
    for (const auto& p : points) {
        using detail::fmt;
        out << fmt(p.value) << ',' << fmt(p.summary.rms_error_raw) << ','
            << fmt(p.summary.rms_error_tracked) << ','
            << fmt(p.summary.ber_empirical) << ','
            << fmt(p.summary.accuracy_percent) << ','
            << fmt(p.summary.mean_possibility) << '\n';
    }
    if (!out) throw IoError("write failed: " + agg_path.string());
    return points;
}

}  // namespace occ
