#pragma once

// The indoor scheme end-to-end: ceiling LED grid, moving smartphone with an
// up-facing camera, per-tick capture -> decode -> range -> estimate -> track
// loop, and the lighting-server suspend behavior.
//
// World frame: z up, floor at z = 0, fixtures at z = ceiling_height. The
// paper reports the smartphone z as its distance below the ceiling; CSV
// emission applies that convention, the in-memory state is world-frame.
//
// Measurement model: the per-beacon pixel count follows the ranging law
// eta = (tau / d)^2 with multiplicative noise and optional integer
// quantization. A geometric ray-trace of fixed-orientation ceiling panels
// would make eta depend on the vertical drop only (the ceiling plane projects
// at one uniform scale), which carries no slant-range information at all; the
// scheme's premise is the idealized law, which the rasterizer oracle pins to
// ground truth on axial poses.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "occ/camera.hpp"
#include "occ/errors.hpp"
#include "occ/kalman.hpp"
#include "occ/link.hpp"
#include "occ/photometry.hpp"
#include "occ/ranging.hpp"
#include "occ/trilateration.hpp"

namespace occ {

struct Room {
    double width = 12.0;
    double depth = 12.0;
    double ceiling_height = 3.0;
    double grid_spacing = 2.0;
    std::vector<Beacon> fixtures;
    std::map<uint32_t, Vector3d> registry;

    void validate() const {
        if (!(width > 0 && depth > 0))
            throw ValidationError("world.size", "room dimensions must be > 0");
        if (!(ceiling_height > 0))
            throw ValidationError("world.ceiling_height", "must be > 0");
        for (const auto& b : fixtures) {
            b.validate();
            if (std::abs(b.pose.position.z() - ceiling_height) > 1e-9)
                throw ValidationError("world.fixtures",
                                      "fixture not on the ceiling plane");
        }
        if (registry.size() != fixtures.size())
            throw ValidationError("world.fixtures", "duplicate fixture ids");
    }
};

/// Downward-facing fixture orientation (emission axis = -z world).
inline Matrix3d ceiling_orientation() {
    Matrix3d r = Matrix3d::Identity();
    r(1, 1) = -1.0;
    r(2, 2) = -1.0;
    return r;
}

inline Room make_grid_room(double width, double depth, double ceiling_height,
                           double spacing, const FixtureShape& shape,
                           double power, double half_power_semi_angle,
                           double clock_hz) {
    Room room;
    room.width = width;
    room.depth = depth;
    room.ceiling_height = ceiling_height;
    room.grid_spacing = spacing;
    const int nx = std::max(1, static_cast<int>(std::floor(width / spacing)) + 1);
    const int ny = std::max(1, static_cast<int>(std::floor(depth / spacing)) + 1);
    const double x0 = (width - (nx - 1) * spacing) / 2.0;
    const double y0 = (depth - (ny - 1) * spacing) / 2.0;
    uint32_t id = 1;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            Pose pose;
            pose.position = Vector3d(x0 + i * spacing, y0 + j * spacing,
                                     ceiling_height);
            pose.orientation = ceiling_orientation();
            room.fixtures.push_back(make_beacon(id, pose, shape, power,
                                                half_power_semi_angle, clock_hz));
            room.registry[id] = pose.position;
            ++id;
        }
    return room;
}

inline Room make_explicit_room(double width, double depth, double ceiling_height,
                               const std::vector<std::pair<uint32_t, Vector2d>>& xy,
                               const FixtureShape& shape, double power,
                               double half_power_semi_angle, double clock_hz) {
    Room room;
    room.width = width;
    room.depth = depth;
    room.ceiling_height = ceiling_height;
    room.grid_spacing = 0.0;
    for (const auto& [id, p] : xy) {
        Pose pose;
        pose.position = Vector3d(p.x(), p.y(), ceiling_height);
        pose.orientation = ceiling_orientation();
        room.fixtures.push_back(
            make_beacon(id, pose, shape, power, half_power_semi_angle, clock_hz));
        room.registry[id] = pose.position;
    }
    return room;
}

/// Piecewise-linear waypoint path traversed at constant speed; a single
/// waypoint is a static pose.
struct Trajectory {
    std::vector<Vector3d> waypoints{{2.0, 2.0, 1.2}};
    double speed = 0.5;  // m/s

    Vector3d at(double t) const {
        if (waypoints.size() == 1 || speed <= 0) return waypoints.front();
        double remaining = t * speed;
        for (size_t i = 0; i + 1 < waypoints.size(); ++i) {
            const double seg = (waypoints[i + 1] - waypoints[i]).norm();
            if (remaining <= seg || i + 2 == waypoints.size()) {
                const double f = seg > 0 ? std::min(remaining / seg, 1.0) : 0.0;
                return waypoints[i] + f * (waypoints[i + 1] - waypoints[i]);
            }
            remaining -= seg;
        }
        return waypoints.back();
    }
};

struct SmartphoneAgent {
    Trajectory trajectory;
    CameraIntrinsics camera;

    /// Up-facing camera pose at time t (optical axis = +z world).
    Pose pose_at(double t) const {
        Pose p;
        p.position = trajectory.at(t);
        p.orientation = Matrix3d::Identity();
        return p;
    }
};

struct LightingServerState {
    std::optional<Vector3d> last_estimate;
    KalmanState tracker;
    int missed_ticks = 0;
    bool broadcasting = true;
    int suspend_threshold = 5;
};

/// Fixtures in the camera FOV, nearest incidence angle first (ties by id).
inline std::vector<const Beacon*> visible_beacons(const Pose& camera,
                                                  const Room& room,
                                                  const CameraIntrinsics& intr) {
    std::vector<std::pair<double, const Beacon*>> hits;
    const Vector3d axis = camera.optical_axis();
    for (const auto& b : room.fixtures) {
        if (!in_fov(b.pose.position, camera, intr)) continue;
        const Vector3d ray = b.pose.position - camera.position;
        const double theta =
            std::acos(std::clamp(axis.dot(ray) / ray.norm(), -1.0, 1.0));
        hits.emplace_back(theta, &b);
    }
    std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second->id < b.second->id;
    });
    std::vector<const Beacon*> out;
    out.reserve(hits.size());
    for (const auto& [theta, b] : hits) out.push_back(b);
    return out;
}

/// Localization possibility of a pixel count: zero below one pixel, saturated
/// at the four-pixel anchor.
inline double localization_possibility(double eta) {
    if (eta < 1.0) return 0.0;
    return std::min(1.0, eta / 4.0);
}

/// Suspend bookkeeping: a tick with no decoded IDs counts as a miss; enough
/// consecutive misses stop the broadcast until the next success.
inline LightingServerState suspend_if_absent(LightingServerState server,
                                             int decoded_count) {
    if (decoded_count == 0) {
        server.missed_ticks += 1;
        if (server.missed_ticks >= server.suspend_threshold)
            server.broadcasting = false;
    } else {
        server.missed_ticks = 0;
        server.broadcasting = true;
    }
    return server;
}

/// Signed image-plane bearing of a collinear beacon line, used to pin the
/// lateral offset of the collinear trilateration branch. Exact inverse of the
/// solver's lateral parameterization for an undistorted pinhole.
inline double collinear_bearing_hint(const Pose& camera,
                                     const CameraIntrinsics& intr,
                                     std::span<const Vector3d> positions) {
    const LineFrame frame = beacon_line_frame(positions);
    const Vector3d row0 = camera.orientation.row(0).transpose();
    const Vector3d row1 = camera.orientation.row(1).transpose();
    Vector2d dir_img(frame.lateral.dot(row0), frame.lateral.dot(row1));
    if (dir_img.norm() < 1e-12) return 0.0;
    dir_img.normalize();
    double offset_px = 0.0;
    int n = 0;
    for (const auto& p : positions) {
        const auto img = project_point(p, camera, intr);
        if (!img) continue;
        offset_px += (img->x() - intr.principal_x) * dir_img.x() +
                     (img->y() - intr.principal_y) * dir_img.y();
        ++n;
    }
    if (n == 0) return 0.0;
    offset_px /= n;
    return -std::atan2(offset_px * intr.pixel_pitch, intr.focal_length);
}

struct MeasurementNoise {
    double eta_sigma = 0.02;  // multiplicative sigma on eta
    bool quantize_eta = true; // round to whole pixels
    std::vector<std::pair<double, double>> interferers;  // ambient (P, H)
};

struct IndoorTickRecord {
    long tick = 0;
    double t = 0.0;
    Vector3d true_position{0, 0, 0};
    std::optional<Vector3d> estimate;   // raw trilateration/multilateration
    Eigen::Vector2d kf_position{0, 0};
    int n_visible = 0;
    int n_decoded = 0;
    int decode_failures = 0;
    double min_eta = 0.0;
    double possibility = 0.0;
    bool broadcasting = true;
    long flipped_states = 0;
    long total_states = 0;
};

struct IndoorSim {
    Room room;
    SmartphoneAgent agent;
    ChannelParams channel;
    MeasurementNoise noise;
    LightingServerState server;
    std::mt19937_64 rng{1};
    double time = 0.0;
    long tick = 0;
};

/// Checks the at-least-three-fixtures-in-FOV rule over the room interior at
/// the agent's operating height. Called at scenario load.
inline void validate_fov_coverage(const Room& room, const SmartphoneAgent& agent) {
    const double z = agent.trajectory.waypoints.front().z();
    const double step = room.grid_spacing > 0 ? room.grid_spacing / 2.0 : 1.0;
    const double margin = std::min({1.0, room.width / 4.0, room.depth / 4.0});
    for (double x = margin; x <= room.width - margin + 1e-9; x += step)
        for (double y = margin; y <= room.depth - margin + 1e-9; y += step) {
            Pose pose;
            pose.position = Vector3d(x, y, z);
            pose.orientation = Matrix3d::Identity();
            if (visible_beacons(pose, room, agent.camera).size() < 3)
                throw ValidationError(
                    "world.grid_spacing",
                    "fewer than 3 fixtures in FOV at interior position");
        }
}

inline IndoorSim make_indoor_sim(Room room, SmartphoneAgent agent,
                                 ChannelParams channel, MeasurementNoise noise,
                                 uint64_t seed, int suspend_threshold = 5,
                                 double kf_process_intensity = 0.01) {
    IndoorSim sim;
    sim.room = std::move(room);
    sim.agent = std::move(agent);
    sim.channel = channel;
    sim.noise = noise;
    sim.rng.seed(seed);
    sim.server.suspend_threshold = suspend_threshold;
    // Uninformed prior at the room centre; the measurement sigma scales with
    // the ranging noise at ceiling distance. A zero sigma degenerates to a
    // pass-through filter (gain 1), which the noiseless fixed point relies on.
    const double meas_sigma = noise.eta_sigma * sim.room.ceiling_height;
    sim.server.tracker = make_cv_tracker(
        Eigen::Vector2d(sim.room.width / 2.0, sim.room.depth / 2.0), 0.3, 0.1,
        meas_sigma, kf_process_intensity);
    return sim;
}

inline IndoorTickRecord tick_indoor(IndoorSim& sim, double dt) {
    if (!(dt > 0)) throw Error("tick_indoor: dt must be > 0");
    IndoorTickRecord rec;
    rec.tick = sim.tick;
    rec.t = sim.time;

    const Pose camera = sim.agent.pose_at(sim.time);
    rec.true_position = camera.position;
    const CameraIntrinsics& intr = sim.agent.camera;

    const auto visible = visible_beacons(camera, sim.room, intr);
    rec.n_visible = static_cast<int>(visible.size());

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<RangeMeasurement> usable;
    double min_eta = std::numeric_limits<double>::infinity();

    for (const Beacon* b : visible) {
        const Vector3d ray = b->pose.position - camera.position;
        const double d = ray.norm();

        // Ranging observable, Eq.-19 law with noise and pixel quantization.
        const double tau =
            ranging_constant(intr.focal_length, intr.pixel_pitch, b->area);
        const double sigma = sim.noise.eta_sigma +
                             blur_extra_sigma(intr.exposure, b->clock_hz);
        double eta = eta_from_distance(tau, d);
        if (sigma > 0) eta *= 1.0 + sigma * gauss(sim.rng);
        if (sim.noise.quantize_eta) eta = std::round(eta);
        eta = std::max(eta, 0.0);
        min_eta = std::min(min_eta, eta);

        // Link budget for this fixture and the decode attempt.
        const double m = lambertian_order(b->half_power_semi_angle);
        const double phi =
            std::acos(std::clamp(b->emission_axis().dot(-ray) / d, -1.0, 1.0));
        const double theta = std::acos(
            std::clamp(camera.optical_axis().dot(ray) / d, -1.0, 1.0));
        const LinkGeometry geom{d, phi, theta, m};
        const double gain =
            channel_dc_gain(geom, intr.sensor_area(), intr.fov_semi_angle,
                            sim.channel);
        const double p_e = ber_from_snir(
            snir(sim.channel, b->power, gain, sim.noise.interferers));

        LedIdPacket pkt;
        pkt.id = static_cast<uint16_t>(b->id);
        pkt.payload = IndoorPayload{
            static_cast<uint16_t>(std::lround(b->pose.position.x() * 1000.0)),
            static_cast<uint16_t>(std::lround(b->pose.position.y() * 1000.0))};
        const SymbolStream stream = encode_ook_manchester(pkt, b->clock_hz);
        CorruptionStats stats;
        const auto decoded = corrupt_and_decode(stream.s1, p_e, sim.rng, &stats);
        rec.flipped_states += stats.flipped;
        rec.total_states += stats.total;
        if (!decoded) {
            rec.decode_failures += 1;
            continue;
        }
        rec.n_decoded += 1;
        if (eta < 1.0) continue;  // ID received but range unresolvable

        const double dist = distance_from_pixels(eta, intr.focal_length,
                                                 intr.pixel_pitch, b->area);
        usable.push_back(make_range_measurement(
            decoded->id, sim.room.registry.at(decoded->id), dist, eta, sim.time,
            tau));
    }
    rec.min_eta = std::isfinite(min_eta) ? min_eta : 0.0;
    rec.possibility = localization_possibility(rec.min_eta);

    // Estimation: trilateration for exactly three usable ranges,
    // least-squares multilateration beyond.
    if (usable.size() >= 3) {
        std::vector<Vector3d> positions;
        positions.reserve(usable.size());
        for (const auto& m : usable) positions.push_back(m.beacon_position);
        double hint = 0.0;
        if (positions_collinear(positions, 1e-9))
            hint = collinear_bearing_hint(camera, intr, positions);
        try {
            const PositionEstimate est =
                usable.size() == 3 ? trilaterate(usable, hint)
                                   : multilaterate(usable, hint);
            rec.estimate = choose_candidate(est, usable, 0.0,
                                            sim.room.ceiling_height);
        } catch (const Error&) {
            rec.estimate.reset();  // inconsistent noisy ranges this tick
        }
    }

    // Tracker: predict every tick, update on a successful fix.
    sim.server.tracker = kf_predict(sim.server.tracker, dt);
    if (rec.estimate) {
        const MatrixXd gain = kf_gain(sim.server.tracker.covariance,
                                      sim.server.tracker.measurement_matrix,
                                      sim.server.tracker.measurement_noise);
        sim.server.tracker =
            kf_update(sim.server.tracker, gain, rec.estimate->head<2>());
        sim.server.last_estimate = rec.estimate;
    }
    rec.kf_position = sim.server.tracker.state.head<2>();

    sim.server = suspend_if_absent(std::move(sim.server), rec.n_decoded);
    rec.broadcasting = sim.server.broadcasting;

    sim.time += dt;
    sim.tick += 1;
    return rec;
}

}  // namespace occ
