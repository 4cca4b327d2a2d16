#pragma once

// The vehicle scheme: street-light geometry, host-vehicle virtual
// coordinates, forwarding-vehicle localization via taillight S2-PSK, and
// angular displacement from image-plane offsets.
//
// Road frame: x along the road, y lateral (left of travel), z up, origin at
// the first street light's foot. Street lights stand on the line y = 0; the
// HV drives at y = h > 0. The HV's virtual coordinate c is its along-road
// offset forward of the reference street light (the last one passed), so
// 0 <= c < spacing and c grows with travel, wrapping at each handoff.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "occ/camera.hpp"
#include "occ/errors.hpp"
#include "occ/link.hpp"
#include "occ/photometry.hpp"
#include "occ/ranging.hpp"

namespace occ {

/// c = ((a2^2 - a1^2) - d^2) / (2 d), h = sqrt(a1^2 - c^2): along-road gap to
/// the nearer light of the pair and the lateral offset from the light line,
/// both from flat (height-corrected) distances. Exact by algebraic expansion.
inline std::pair<double, double> sl_flat_offsets(double a1, double a2,
                                                 double spacing) {
    if (!(spacing > 0))
        throw GeometryInconsistent("sl_flat_offsets: spacing must be > 0");
    if (!(a2 > a1 && a1 > 0))
        throw GeometryInconsistent("sl_flat_offsets: requires a2 > a1 > 0");
    const double c = ((a2 * a2 - a1 * a1) - spacing * spacing) / (2.0 * spacing);
    if (c < -1e-9 * std::max(1.0, spacing))
        throw GeometryInconsistent("sl_flat_offsets: negative along-road gap");
    const double cc = std::max(c, 0.0);
    const double h2 = a1 * a1 - cc * cc;
    if (h2 < -1e-9 * std::max(1.0, a1 * a1))
        throw GeometryInconsistent("sl_flat_offsets: negative lateral radicand");
    return {cc, std::sqrt(std::max(h2, 0.0))};
}

/// Flat (ground-plane) distance from the direct slant distance and the
/// height difference: a = sqrt(D^2 - (sl_height - cam_height)^2).
inline double flat_distance_from_direct(double direct, double sl_height,
                                        double cam_height) {
    const double diff = sl_height - cam_height;
    if (diff < 0)
        throw GeometryInconsistent(
            "flat_distance_from_direct: camera above the light");
    if (direct < diff)
        throw GeometryInconsistent(
            "flat_distance_from_direct: distance below height difference");
    return std::sqrt(std::max(direct * direct - diff * diff, 0.0));
}

/// Signed bearing of an image column offset: theta = atan(hd * rho / f).
/// Positive hd (right of the centre plane) means the target sits right of
/// the heading.
inline double angular_displacement(double hd_pixels,
                                   const CameraIntrinsics& intr) {
    const double offset = hd_pixels * intr.pixel_pitch;
    if (std::abs(offset) > intr.sensor_width / 2.0 + 1e-12)
        throw GeometryInconsistent(
            "angular_displacement: offset beyond sensor half-width");
    return std::atan2(offset, intr.focal_length);
}

struct HvVirtualPosition {
    double c = 0.0;                // along-road offset past the reference SL
    double h = 0.0;                // lateral offset from the SL line
    uint32_t nearest_sl_id = 0;    // reference SL (last one passed)
    uint32_t bearing_sl_id = 0;    // SL the bearing was measured against
    double theta_sl = 0.0;         // bearing of the nearest measured SL
    double delta_theta = 0.0;      // successive-bearing change (curvature hook)
    double timestamp = 0.0;
    bool dead_reckoned = false;
    bool curvature_suspect = false;
};

struct StreetLightChart {
    // Along-road foot coordinates of each SL, keyed by id; ids ascend with x.
    std::map<uint32_t, double> foot_x;
    double spacing = 25.0;
    double height = 7.0;
};

/// Fresh virtual fix from at least two decoded street lights: flatten the
/// direct distances, solve the Pythagorean pair for the two nearest lights,
/// and re-anchor c on the reference SL behind the vehicle.
inline HvVirtualPosition update_hv_virtual_position(
    const HvVirtualPosition& prev, std::vector<RangeMeasurement> sls,
    double dt, const StreetLightChart& chart, double cam_height,
    double hv_speed, double curvature_delta_max = 0.35) {
    if (sls.size() < 2)
        throw GeometryInconsistent(
            "update_hv_virtual_position: needs two street lights");
    std::sort(sls.begin(), sls.end(),
              [](const RangeMeasurement& a, const RangeMeasurement& b) {
                  return a.distance < b.distance;
              });
    const RangeMeasurement& near = sls[0];
    const RangeMeasurement& far = sls[1];

    const double a1 =
        flat_distance_from_direct(near.distance, chart.height, cam_height);
    const double a2 =
        flat_distance_from_direct(far.distance, chart.height, cam_height);
    const double baseline = std::abs(chart.foot_x.at(far.beacon_id) -
                                     chart.foot_x.at(near.beacon_id));
    const auto [gap, h] = sl_flat_offsets(a1, a2, baseline);

    // Both lights sit ahead; the vehicle is `gap` short of the nearer one.
    const double x_hv = chart.foot_x.at(near.beacon_id) - gap;

    // Reference SL: last foot at or behind the vehicle.
    uint32_t ref_id = chart.foot_x.begin()->first;
    double ref_x = chart.foot_x.begin()->second;
    for (const auto& [id, x] : chart.foot_x) {
        if (x <= x_hv + 1e-9) {
            ref_id = id;
            ref_x = x;
        } else {
            break;
        }
    }

    HvVirtualPosition out;
    out.c = x_hv - ref_x;
    out.h = h;
    out.nearest_sl_id = ref_id;
    out.bearing_sl_id = near.beacon_id;
    out.theta_sl = std::atan2(h, gap);
    out.timestamp = prev.timestamp + dt;
    out.dead_reckoned = false;
    if (prev.bearing_sl_id == near.beacon_id && prev.timestamp > 0.0) {
        out.delta_theta = out.theta_sl - prev.theta_sl;
        out.curvature_suspect = std::abs(out.delta_theta) > curvature_delta_max;
    }
    (void)hv_speed;
    return out;
}

/// Rolls a virtual position along the road by `dist` metres (either sign),
/// wrapping c past SL feet and stepping the reference light accordingly.
inline HvVirtualPosition advance_hv(const HvVirtualPosition& prev, double dist,
                                    const StreetLightChart& chart) {
    HvVirtualPosition out = prev;
    out.c += dist;
    while (out.c >= chart.spacing) {
        out.c -= chart.spacing;
        auto it = chart.foot_x.find(out.nearest_sl_id);
        if (it != chart.foot_x.end() && std::next(it) != chart.foot_x.end())
            out.nearest_sl_id = std::next(it)->first;
    }
    while (out.c < 0.0) {
        out.c += chart.spacing;
        auto it = chart.foot_x.find(out.nearest_sl_id);
        if (it != chart.foot_x.end() && it != chart.foot_x.begin())
            out.nearest_sl_id = std::prev(it)->first;
    }
    return out;
}

/// Dead-reckoned roll-forward when fewer than two lights decode: advance c by
/// the (noisy) odometry speed, wrapping past each SL foot.
inline HvVirtualPosition dead_reckon_hv(const HvVirtualPosition& prev,
                                        double dt, const StreetLightChart& chart,
                                        double speed_estimate) {
    HvVirtualPosition out = advance_hv(prev, speed_estimate * dt, chart);
    out.timestamp = prev.timestamp + dt;
    out.dead_reckoned = true;
    out.delta_theta = 0.0;
    return out;
}

/// Road-frame position of the HV camera implied by a virtual fix.
inline Vector2d hv_road_position(const HvVirtualPosition& hv,
                                 const StreetLightChart& chart) {
    return {chart.foot_x.at(hv.nearest_sl_id) + hv.c, hv.h};
}

struct FvEstimate {
    Vector2d position{0, 0};   // road frame
    double range = 0.0;        // flat range HV -> FV
    double theta = 0.0;        // signed bearing off the heading
    double range_rate = 0.0;   // d(range)/dt against the previous fix
    double stereo_range = 0.0; // baseline cross-check, diagnostic only
};

/// Composes the FV road-frame position from the HV virtual fix, the taillight
/// pair ranges, and the image-plane angular displacement. Both taillights are
/// required; a single decoded light cannot carry S2-PSK. The pair mean is
/// corrected for the height difference and the half-separation baseline to
/// give the range to the pair centre.
inline FvEstimate localize_fv(const HvVirtualPosition& hv,
                              const StreetLightChart& chart,
                              const std::optional<RangeMeasurement>& left,
                              const std::optional<RangeMeasurement>& right,
                              double hd_pixels, const CameraIntrinsics& intr,
                              double taillight_height, double cam_height,
                              double taillight_separation = 0.0,
                              std::optional<double> prev_range = {},
                              double dt = 0.0) {
    if (!left || !right)
        throw TaillightOccluded("localize_fv: taillight pair incomplete");
    const double direct = (left->distance + right->distance) / 2.0;
    const double height_diff = std::abs(taillight_height - cam_height);
    double flat2 = direct * direct - height_diff * height_diff -
                   taillight_separation * taillight_separation / 4.0;
    const double flat = flat2 > 0 ? std::sqrt(flat2) : 0.0;
    FvEstimate est;
    est.range = flat;
    est.theta = angular_displacement(hd_pixels, intr);
    const Vector2d hv_xy = hv_road_position(hv, chart);
    // Positive theta = right of heading = toward -y in the road frame.
    est.position = hv_xy + Vector2d(flat * std::cos(est.theta),
                                    -flat * std::sin(est.theta));
    if (prev_range && dt > 0.0) est.range_rate = (flat - *prev_range) / dt;
    return est;
}

struct VehicleAgent {
    uint32_t id = 1000;
    double x0 = 0.0;   // road frame at t = 0
    double y = 5.0;    // lane offset from the SL line
    double z = 1.5;    // camera / taillight height
    double speed = 13.89;  // m/s
    double taillight_separation = 1.2;
    double taillight_area = 0.015;  // m^2
    uint8_t flags = 0;

    double x_at(double t) const { return x0 + speed * t; }
};

struct RoadScene {
    StreetLightChart chart;
    double sl_area = 0.04;     // m^2 per SL head
    double sl_power = 150.0;   // optical W
    double sl_half_power = 1.396;  // rad (~80 deg, wide street optic)
    double sl_clock = 125.0;
    double lane_width = 10.0;
    VehicleAgent hv;
    CameraIntrinsics camera;   // mounted on the HV, facing +x
    std::vector<VehicleAgent> fvs;
    double fv_power = 12.0;    // optical W per taillight array
    double fv_half_power = std::numbers::pi / 3.0;
    double fv_clock = 125.0;
    int sl_roi_budget = 2;     // simultaneous SL decode streams

    void validate() const {
        if (!(chart.spacing > 0))
            throw ValidationError("world.sl_spacing", "must be > 0");
        if (!(chart.height > 0))
            throw ValidationError("world.sl_height", "must be > 0");
        if (!(lane_width > 0))
            throw ValidationError("world.lane_width", "must be > 0");
        if (chart.foot_x.size() < 2)
            throw ValidationError("world.street_lights", "need at least 2");
        for (const auto& fv : fvs) {
            if (fv.speed < 0 || fv.speed > 80.0 / 3.6 * 1.5)
                throw ValidationError("world.fv.speed",
                                      "outside the 0-120 km/h envelope");
            for (const auto& other : fvs)
                if (&fv != &other && fv.id == other.id)
                    throw ValidationError("world.fv.id", "duplicate FV id");
        }
    }
};

/// Builds the SL chart along +x starting at x = 0, sized to cover the run.
inline StreetLightChart make_sl_chart(double spacing, double height, int count,
                                      uint32_t first_id = 1) {
    StreetLightChart chart;
    chart.spacing = spacing;
    chart.height = height;
    for (int i = 0; i < count; ++i)
        chart.foot_x[first_id + static_cast<uint32_t>(i)] = i * spacing;
    return chart;
}

/// Forward-looking camera pose: optical axis +x, image right toward -y.
inline Pose hv_camera_pose(double x, double y, double z) {
    Pose p;
    p.position = Vector3d(x, y, z);
    p.orientation << 0, -1, 0, 0, 0, -1, 1, 0, 0;
    return p;
}

struct VehicleNoise {
    double eta_sigma = 0.02;
    bool quantize_eta = true;
    double speed_sigma = 0.05;            // odometry noise for dead reckoning
    double s2psk_delta = 1.0;
    double interference_coupling = 0.05;  // neighbor-light ROI leakage (Eq 5)
    std::vector<std::pair<double, double>> interferers;  // ambient terms
};

struct VehicleTickRecord {
    long tick = 0;
    double t = 0.0;
    double hv_true_x = 0.0, hv_true_y = 0.0;
    bool hv_fix = false;
    double hv_c = 0.0, hv_h = 0.0;
    double hv_est_x = 0.0, hv_est_y = 0.0;
    bool hv_dead_reckoned = false;
    uint32_t fv_id = 0;
    double fv_true_x = 0.0, fv_true_y = 0.0;
    bool fv_estimated = false;
    double fv_est_x = 0.0, fv_est_y = 0.0;
    double range_m = 0.0;
    double theta_rad = 0.0;
    double eta_tail = 0.0;
    bool alarm = false;
    bool decode_fail = false;
    bool occluded = false;
    double stereo_range = 0.0;
    double min_eta = 0.0;
    long flipped_states = 0;
    long total_states = 0;
};

struct VehicleSim {
    RoadScene scene;
    ChannelParams channel;
    VehicleNoise noise;
    double decode_latency = 0.08;   // capture-to-estimate lag
    double alarm_threshold_px = 5000.0;
    std::mt19937_64 rng{1};
    double time = 0.0;
    long tick = 0;
    HvVirtualPosition hv_pos;
    bool hv_valid = false;
    double odo_bias = 0.0;          // per-run odometer scale error
    // Active SL decode pair and how long it has been the active pair: each
    // handoff re-syncs the decoder, so the pair streams a full packet before
    // it can range.
    uint32_t pair_near = 0, pair_far = 0;
    double pair_since = 0.0;
    std::map<uint32_t, double> fv_prev_range;
};

inline VehicleSim make_vehicle_sim(RoadScene scene, ChannelParams channel,
                                   VehicleNoise noise, uint64_t seed,
                                   double decode_latency = 0.08,
                                   double alarm_threshold_px = 5000.0) {
    VehicleSim sim;
    sim.scene = std::move(scene);
    sim.channel = channel;
    sim.noise = noise;
    sim.decode_latency = decode_latency;
    sim.alarm_threshold_px = alarm_threshold_px;
    sim.rng.seed(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    sim.odo_bias = noise.speed_sigma * gauss(sim.rng);
    return sim;
}

namespace detail {

// One decodability evaluation of a beacon-like source against the HV camera.
struct SourceLink {
    bool visible = false;
    double eta = 0.0;        // noisy, quantized pixel count
    double gain = 0.0;       // channel DC gain H
    double distance = 0.0;
    double u_offset_px = 0.0;  // image column offset from the principal point
};

inline SourceLink evaluate_source(const Vector3d& source_pos,
                                  const Vector3d& emission_axis,
                                  double half_power, double area,
                                  const Pose& camera,
                                  const CameraIntrinsics& intr,
                                  const ChannelParams& channel,
                                  const VehicleNoise& noise,
                                  std::mt19937_64& rng) {
    SourceLink link;
    if (!in_fov(source_pos, camera, intr)) return link;
    const Vector3d ray = source_pos - camera.position;
    link.distance = ray.norm();
    link.visible = true;

    const double tau =
        ranging_constant(intr.focal_length, intr.pixel_pitch, area);
    double eta = eta_from_distance(tau, link.distance);
    const double sigma = noise.eta_sigma +
                         blur_extra_sigma(intr.exposure, 125.0);
    if (sigma > 0) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        eta *= 1.0 + sigma * gauss(rng);
    }
    if (noise.quantize_eta) eta = std::round(eta);
    link.eta = std::max(eta, 0.0);

    const double m = lambertian_order(half_power);
    const double phi = std::acos(
        std::clamp(emission_axis.dot(-ray) / link.distance, -1.0, 1.0));
    const double theta = std::acos(std::clamp(
        camera.optical_axis().dot(ray) / link.distance, -1.0, 1.0));
    link.gain = channel_dc_gain({link.distance, phi, theta, m},
                                intr.sensor_area(), intr.fov_semi_angle,
                                channel);
    const auto img = project_point(source_pos, camera, intr);
    if (img) link.u_offset_px = img->x() - intr.principal_x;
    return link;
}

}  // namespace detail

/// One simulation step of the road scene. Measurements are taken at
/// t - decode_latency (processing lag) and compared against truth at t, which
/// is what couples estimation error to vehicle speed. Returns one record per
/// forwarding vehicle.
inline std::vector<VehicleTickRecord> tick_vehicle(VehicleSim& sim, double dt) {
    if (!(dt > 0)) throw Error("tick_vehicle: dt must be > 0");
    const double t = sim.time;
    const double t_m = std::max(0.0, t - sim.decode_latency);
    const RoadScene& sc = sim.scene;

    VehicleTickRecord base;
    base.tick = sim.tick;
    base.t = t;
    base.hv_true_x = sc.hv.x_at(t);
    base.hv_true_y = sc.hv.y;

    const Pose camera = hv_camera_pose(sc.hv.x_at(t_m), sc.hv.y, sc.hv.z);
    const CameraIntrinsics& intr = sc.camera;
    std::normal_distribution<double> gauss(0.0, 1.0);

    // --- Street lights: evaluate links, decode, track acquisition age.
    const Vector3d sl_axis(0, 0, -1);
    std::vector<std::pair<uint32_t, detail::SourceLink>> sl_links;
    double min_eta = std::numeric_limits<double>::infinity();
    for (const auto& [id, foot] : sc.chart.foot_x) {
        const Vector3d pos(foot, 0.0, sc.chart.height);
        auto link = detail::evaluate_source(pos, sl_axis, sc.sl_half_power,
                                            sc.sl_area, camera, intr,
                                            sim.channel, sim.noise, sim.rng);
        if (link.visible) {
            sl_links.emplace_back(id, link);
            min_eta = std::min(min_eta, link.eta);
        }
    }

    // ROI budget: only the nearest lights get decode streams, as with the
    // projected-area priority rule. The rest still shine into the channel.
    std::vector<std::pair<uint32_t, detail::SourceLink>> roi;
    for (const auto& entry : sl_links)
        if (entry.second.eta >= 1.0) roi.push_back(entry);  // Eq-50 guard
    std::sort(roi.begin(), roi.end(), [](const auto& a, const auto& b) {
        return a.second.distance < b.second.distance;
    });
    if (static_cast<int>(roi.size()) > sc.sl_roi_budget)
        roi.resize(sc.sl_roi_budget);

    // Each handoff of the active pair re-syncs the decoder; the pair must
    // stream one full packet before its ranges are usable. Runs shorter than
    // a packet get the head start an HV already driving would have.
    const double packet_s = 2.0 * (8 + 66) / sc.sl_clock;
    if (roi.size() >= 2) {
        if (roi[0].first != sim.pair_near || roi[1].first != sim.pair_far) {
            sim.pair_near = roi[0].first;
            sim.pair_far = roi[1].first;
            sim.pair_since = t_m;
        }
    } else {
        sim.pair_near = sim.pair_far = 0;
    }
    const bool pair_mature =
        roi.size() >= 2 &&
        (t_m - sim.pair_since + 1e-9 >= packet_s || t_m <= packet_s);

    std::vector<RangeMeasurement> usable_sls;
    if (pair_mature) {
        for (const auto& [id, link] : roi) {
            // Other visible lights leak into this ROI's interference sum.
            std::vector<std::pair<double, double>> interferers =
                sim.noise.interferers;
            for (const auto& [oid, other] : sl_links)
                if (oid != id)
                    interferers.emplace_back(
                        sc.sl_power,
                        sim.noise.interference_coupling * other.gain);
            const double p_e = ber_from_snir(
                snir(sim.channel, sc.sl_power, link.gain, interferers));
            const double q = std::min(1.0, sim.noise.s2psk_delta * p_e);

            LedIdPacket pkt;
            pkt.id = static_cast<uint16_t>(id);
            pkt.payload = StreetLightPayload{
                static_cast<uint16_t>(
                    std::min(65535.0, std::round(sc.chart.height * 1000))),
                static_cast<uint16_t>(
                    std::min(65535.0, std::round(sc.chart.spacing * 1000))),
                0};
            CorruptionStats stats;
            const auto decoded = s2psk_corrupt_and_decode(
                encode_s2psk(pkt, sc.sl_clock), q, sim.rng, 16, &stats);
            base.flipped_states += stats.flipped;
            base.total_states += stats.total;
            if (!decoded) continue;
            const double dist = distance_from_pixels(
                link.eta, intr.focal_length, intr.pixel_pitch, sc.sl_area);
            usable_sls.push_back(make_range_measurement(
                id, Vector3d(sc.chart.foot_x.at(id), 0.0, sc.chart.height),
                dist, link.eta, t_m));
        }
    }

    // --- HV virtual position: fresh fix (rolled forward over the decode
    // latency using odometry) or dead reckoning. Odometry carries a per-run
    // scale bias plus small per-tick jitter.
    const double odo_speed =
        sc.hv.speed * (1.0 + sim.odo_bias +
                       0.2 * sim.noise.speed_sigma * gauss(sim.rng));
    HvVirtualPosition hv_at_capture = sim.hv_pos;
    bool fresh = false;
    if (usable_sls.size() >= 2) {
        try {
            sim.hv_pos = update_hv_virtual_position(
                sim.hv_pos, usable_sls, dt, sc.chart, sc.hv.z, sc.hv.speed);
            sim.hv_valid = true;
            fresh = true;
            hv_at_capture = sim.hv_pos;
            if (t > t_m) {
                HvVirtualPosition now =
                    dead_reckon_hv(sim.hv_pos, t - t_m, sc.chart, odo_speed);
                now.dead_reckoned = false;
                now.timestamp = sim.hv_pos.timestamp;
                sim.hv_pos = now;
            }
        } catch (const GeometryInconsistent&) {
            fresh = false;
        }
    }
    if (!fresh && sim.hv_valid) {
        sim.hv_pos = dead_reckon_hv(sim.hv_pos, dt, sc.chart, odo_speed);
        hv_at_capture = advance_hv(sim.hv_pos, -odo_speed * (t - t_m), sc.chart);
    }
    base.hv_fix = sim.hv_valid;
    if (sim.hv_valid) {
        base.hv_c = sim.hv_pos.c;
        base.hv_h = sim.hv_pos.h;
        const Vector2d xy = hv_road_position(sim.hv_pos, sc.chart);
        base.hv_est_x = xy.x();
        base.hv_est_y = xy.y();
        base.hv_dead_reckoned = sim.hv_pos.dead_reckoned;
    }

    // --- Forwarding vehicles.
    std::vector<VehicleTickRecord> records;
    const Vector3d fv_axis(-1, 0, 0);  // taillights face rearward
    for (const auto& fv : sc.fvs) {
        VehicleTickRecord rec = base;
        rec.fv_id = fv.id;
        rec.fv_true_x = fv.x_at(t);
        rec.fv_true_y = fv.y;

        const double x_fv = fv.x_at(t_m);
        const Vector3d left(x_fv, fv.y + fv.taillight_separation / 2, fv.z);
        const Vector3d right(x_fv, fv.y - fv.taillight_separation / 2, fv.z);
        auto l_link = detail::evaluate_source(left, fv_axis, sc.fv_half_power,
                                              fv.taillight_area, camera, intr,
                                              sim.channel, sim.noise, sim.rng);
        auto r_link = detail::evaluate_source(right, fv_axis, sc.fv_half_power,
                                              fv.taillight_area, camera, intr,
                                              sim.channel, sim.noise, sim.rng);
        const bool l_ok = l_link.visible && l_link.eta >= 1.0;
        const bool r_ok = r_link.visible && r_link.eta >= 1.0;
        if (l_ok) min_eta = std::min(min_eta, l_link.eta);
        if (r_ok) min_eta = std::min(min_eta, r_link.eta);
        rec.eta_tail = (l_ok ? l_link.eta : 0.0) + (r_ok ? r_link.eta : 0.0);
        rec.alarm = rec.eta_tail >= sim.alarm_threshold_px;

        if (l_ok != r_ok) {
            // One taillight blocked or unresolvable: S2-PSK needs the pair.
            rec.occluded = true;
            rec.decode_fail = true;
            sim.fv_prev_range.erase(fv.id);
            records.push_back(rec);
            continue;
        }
        if (!l_ok) {  // neither light usable; out of view this tick
            rec.decode_fail = true;
            sim.fv_prev_range.erase(fv.id);
            records.push_back(rec);
            continue;
        }

        const double p_e = ber_from_snir(snir(
            sim.channel, sc.fv_power, (l_link.gain + r_link.gain) / 2.0,
            sim.noise.interferers));
        const double q = std::min(1.0, sim.noise.s2psk_delta * p_e);
        LedIdPacket pkt;
        pkt.id = static_cast<uint16_t>(fv.id);
        pkt.payload = VehiclePayload{
            static_cast<uint16_t>(std::round(fv.taillight_area * 1e6)),
            fv.flags};
        CorruptionStats stats;
        const auto decoded = s2psk_corrupt_and_decode(
            encode_s2psk(pkt, sc.fv_clock), q, sim.rng, 16, &stats);
        rec.flipped_states += stats.flipped;
        rec.total_states += stats.total;
        if (!decoded || !sim.hv_valid) {
            rec.decode_fail = true;
            sim.fv_prev_range.erase(fv.id);
            records.push_back(rec);
            continue;
        }

        const auto& payload = std::get<VehiclePayload>(decoded->payload);
        const double area = payload.area_mm2 * 1e-6;
        const auto meas_of = [&](const detail::SourceLink& link,
                                 const Vector3d& pos) {
            return make_range_measurement(
                decoded->id, pos,
                distance_from_pixels(link.eta, intr.focal_length,
                                     intr.pixel_pitch, area),
                link.eta, t_m);
        };
        const double hd_px = (l_link.u_offset_px + r_link.u_offset_px) / 2.0;
        std::optional<double> prev;
        if (auto it = sim.fv_prev_range.find(fv.id); it != sim.fv_prev_range.end())
            prev = it->second;
        try {
            // Anchored at capture time: the estimate is stale by the decode
            // latency, which is what couples FV speed to its error.
            const FvEstimate est = localize_fv(
                hv_at_capture, sc.chart, meas_of(l_link, left),
                meas_of(r_link, right), hd_px, intr, fv.z, sc.hv.z,
                fv.taillight_separation, prev, dt);
            rec.fv_estimated = true;
            rec.fv_est_x = est.position.x();
            rec.fv_est_y = est.position.y();
            rec.range_m = est.range;
            rec.theta_rad = est.theta;
            const double du = l_link.u_offset_px - r_link.u_offset_px;
            if (std::abs(du) > 1e-9)
                rec.stereo_range = fv.taillight_separation *
                                   (intr.focal_length / intr.pixel_pitch) /
                                   std::abs(du);
            sim.fv_prev_range[fv.id] = est.range;
        } catch (const Error&) {
            rec.decode_fail = true;
            sim.fv_prev_range.erase(fv.id);
        }
        records.push_back(rec);
    }
    if (sc.fvs.empty()) records.push_back(base);

    for (auto& rec : records)
        rec.min_eta = std::isfinite(min_eta) ? min_eta : 0.0;

    sim.time += dt;
    sim.tick += 1;
    return records;
}

}  // namespace occ
