#pragma once

// Pinhole camera geometry: projection, field-of-view tests, and a brute-force
// fixture rasterizer that produces ground-truth pixel counts for ranging.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <variant>
#include <vector>

#include "occ/errors.hpp"

namespace occ {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

/// Rigid pose. `orientation` maps world vectors into the local frame
/// (x_local = orientation * (x_world - position)); for a camera the rows are
/// the camera axes in world coordinates and the optical axis is row 2.
struct Pose {
    Vector3d position{0.0, 0.0, 0.0};
    Matrix3d orientation{Matrix3d::Identity()};

    void validate() const {
        const Matrix3d residual =
            orientation * orientation.transpose() - Matrix3d::Identity();
        if (residual.cwiseAbs().maxCoeff() > 1e-9)
            throw ValidationError("pose.orientation", "not orthonormal");
        if (std::abs(orientation.determinant() - 1.0) > 1e-9)
            throw ValidationError("pose.orientation", "determinant is not +1");
    }

    Vector3d optical_axis() const { return orientation.row(2).transpose(); }
};

struct CameraIntrinsics {
    double focal_length = 16e-3;   // m
    double pixel_pitch = 3.5e-6;   // m
    double sensor_width = 36e-3;   // m
    double sensor_height = 24e-3;  // m
    double principal_x = 0.0;      // px; defaulted to the sensor centre in validate()
    double principal_y = 0.0;      // px
    double skew = 0.0;
    double fov_semi_angle = std::numbers::pi / 3.0;  // rad
    double fps = 30.0;
    double exposure = 1.0 / 2000.0;  // s
    int width_px = 0;                // 0 = fill the sensor at pixel_pitch
    int height_px = 0;

    double fx() const { return focal_length / pixel_pitch; }
    double fy() const { return focal_length / pixel_pitch; }
    double sensor_area() const { return sensor_width * sensor_height; }

    /// Fills derived defaults (resolution, principal point) and checks invariants.
    void finalize() {
        if (width_px == 0) width_px = static_cast<int>(sensor_width / pixel_pitch);
        if (height_px == 0) height_px = static_cast<int>(sensor_height / pixel_pitch);
        if (principal_x == 0.0) principal_x = width_px / 2.0;
        if (principal_y == 0.0) principal_y = height_px / 2.0;
        validate();
    }

    void validate() const {
        if (!(focal_length > 0))
            throw ValidationError("camera.focal_length", "must be > 0");
        if (!(pixel_pitch > 0))
            throw ValidationError("camera.pixel_pitch", "must be > 0");
        if (!(sensor_width > 0 && sensor_height > 0))
            throw ValidationError("camera.sensor", "sensor dimensions must be > 0");
        if (!(fov_semi_angle > 0 && fov_semi_angle < std::numbers::pi / 2))
            throw ValidationError("camera.fov_semi_angle", "must be in (0, pi/2)");
        if (!(fps > 0)) throw ValidationError("camera.fps", "must be > 0");
        if (!(exposure > 0)) throw ValidationError("camera.exposure", "must be > 0");
        if (width_px * pixel_pitch > sensor_width * (1 + 1e-12))
            throw ValidationError("camera.resolution", "width exceeds sensor");
        if (height_px * pixel_pitch > sensor_height * (1 + 1e-12))
            throw ValidationError("camera.resolution", "height exceeds sensor");
    }
};

// Fixture silhouettes as sold: circular, rectangular, or square panels.
struct Circle {
    double radius;
};
struct Rectangle {
    double a, b;
};
struct Square {
    double a;
};
using FixtureShape = std::variant<Circle, Rectangle, Square>;

inline double shape_area(const FixtureShape& s) {
    if (const auto* c = std::get_if<Circle>(&s))
        return std::numbers::pi * c->radius * c->radius;
    if (const auto* r = std::get_if<Rectangle>(&s)) return r->a * r->b;
    return std::get<Square>(s).a * std::get<Square>(s).a;
}

/// An LED transmitter: ceiling fixture, street light head, or taillight.
/// The fixture is planar; its surface normal (emission direction) is the
/// pose's local +z axis.
struct Beacon {
    uint32_t id = 0;
    Pose pose;
    FixtureShape shape{Square{0.1}};
    double area = 0.01;                  // m^2, consistent with shape
    double power = 2.0;                  // optical W
    double half_power_semi_angle = std::numbers::pi / 3.0;  // rad
    double clock_hz = 125.0;             // LED modulation clock

    Vector3d emission_axis() const { return pose.orientation.row(2).transpose(); }

    void validate() const {
        pose.validate();
        if (std::abs(area - shape_area(shape)) > 1e-9 * std::max(1.0, area))
            throw ValidationError("beacon.area", "inconsistent with shape");
        if (!(power > 0)) throw ValidationError("beacon.power", "must be > 0");
        if (!(half_power_semi_angle > 0 &&
              half_power_semi_angle < std::numbers::pi / 2))
            throw ValidationError("beacon.half_power_semi_angle",
                                  "must be in (0, pi/2)");
    }
};

inline Beacon make_beacon(uint32_t id, Pose pose, FixtureShape shape,
                          double power = 2.0,
                          double half_power_semi_angle = std::numbers::pi / 3.0,
                          double clock_hz = 125.0) {
    Beacon b;
    b.id = id;
    b.pose = std::move(pose);
    b.shape = shape;
    b.area = shape_area(shape);
    b.power = power;
    b.half_power_semi_angle = half_power_semi_angle;
    b.clock_hz = clock_hz;
    return b;
}

/// Projects a world point through the pinhole. Returns the image point in
/// pixels, or nullopt when the point is at or behind the camera plane.
inline std::optional<Vector2d> project_point(const Vector3d& world,
                                             const Pose& camera,
                                             const CameraIntrinsics& intr) {
    const Vector3d cam = camera.orientation * (world - camera.position);
    if (cam.z() <= 0.0) return std::nullopt;
    const double u =
        intr.fx() * cam.x() / cam.z() + intr.skew * cam.y() / cam.z() + intr.principal_x;
    const double v = intr.fy() * cam.y() / cam.z() + intr.principal_y;
    return Vector2d{u, v};
}

/// True iff the point is in front of the camera and the incidence angle from
/// the optical axis is within the FOV semi-angle (boundary inclusive).
inline bool in_fov(const Vector3d& world, const Pose& camera,
                   const CameraIntrinsics& intr) {
    const Vector3d cam = camera.orientation * (world - camera.position);
    const double dist = cam.norm();
    if (cam.z() <= 0.0 || dist == 0.0) return false;
    const double theta = std::acos(std::clamp(cam.z() / dist, -1.0, 1.0));
    return theta <= intr.fov_semi_angle + 1e-12;
}

namespace detail {

// Point-in-shape test in the fixture's local (x, y) plane.
inline bool inside_shape(const FixtureShape& s, double x, double y) {
    if (const auto* c = std::get_if<Circle>(&s))
        return x * x + y * y <= c->radius * c->radius;
    if (const auto* r = std::get_if<Rectangle>(&s))
        return std::abs(x) <= r->a / 2 && std::abs(y) <= r->b / 2;
    const double half = std::get<Square>(s).a / 2;
    return std::abs(x) <= half && std::abs(y) <= half;
}

// Boundary of the shape in fixture-local coordinates, sampled densely enough
// that a shoelace area over the projected polygon is accurate to ~1e-4.
inline std::vector<Vector2d> shape_outline(const FixtureShape& s, int n_circle = 256) {
    std::vector<Vector2d> pts;
    if (const auto* c = std::get_if<Circle>(&s)) {
        pts.reserve(n_circle);
        for (int i = 0; i < n_circle; ++i) {
            const double a = 2 * std::numbers::pi * i / n_circle;
            pts.emplace_back(c->radius * std::cos(a), c->radius * std::sin(a));
        }
        return pts;
    }
    double hx, hy;
    if (const auto* r = std::get_if<Rectangle>(&s)) {
        hx = r->a / 2;
        hy = r->b / 2;
    } else {
        hx = hy = std::get<Square>(s).a / 2;
    }
    // Corners suffice: straight edges stay straight under projection.
    pts = {{-hx, -hy}, {hx, -hy}, {hx, hy}, {-hx, hy}};
    return pts;
}

// Clips a polygon against a half-plane a*x + b*y <= c (Sutherland-Hodgman).
inline std::vector<Vector2d> clip_halfplane(const std::vector<Vector2d>& poly,
                                            double a, double b, double c) {
    std::vector<Vector2d> out;
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const Vector2d& p = poly[i];
        const Vector2d& q = poly[(i + 1) % n];
        const double fp = a * p.x() + b * p.y() - c;
        const double fq = a * q.x() + b * q.y() - c;
        if (fp <= 0) out.push_back(p);
        if ((fp < 0 && fq > 0) || (fp > 0 && fq < 0)) {
            const double t = fp / (fp - fq);
            out.push_back(p + t * (q - p));
        }
    }
    return out;
}

inline double polygon_area(const std::vector<Vector2d>& poly) {
    double twice = 0.0;
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const Vector2d& p = poly[i];
        const Vector2d& q = poly[(i + 1) % n];
        twice += p.x() * q.y() - q.x() * p.y();
    }
    return std::abs(twice) / 2.0;
}

}  // namespace detail

struct RasterizeOptions {
    // Below this many pixels of silhouette area the rasterizer returns the
    // exact projected area / rho^2 instead of the lattice count. Lattice
    // quantisation error is O(1/sqrt(eta)); 1024 keeps the count within ~1.5%
    // wherever integer counting is used.
    double integer_count_min_px = 1024.0;
};

/// Ground-truth pixel count eta_i of a beacon's silhouette on the sensor.
/// Counts sensor pixels whose centres see the fixture plane inside the shape;
/// small silhouettes switch to the exact projected area so eta is continuous
/// near the far-range cutoff. Returns 0 for beacons behind the camera or
/// entirely off-sensor.
inline double rasterize_fixture(const Beacon& beacon, const Pose& camera,
                                const CameraIntrinsics& intr,
                                const RasterizeOptions& opts = {}) {
    const Matrix3d& rc = camera.orientation;
    const Vector3d centre_cam = rc * (beacon.pose.position - camera.position);
    if (centre_cam.z() <= 0.0) return 0.0;

    // Fixture plane basis in world coordinates.
    const Vector3d ex = beacon.pose.orientation.row(0).transpose();
    const Vector3d ey = beacon.pose.orientation.row(1).transpose();
    const Vector3d normal = beacon.pose.orientation.row(2).transpose();

    // Project the outline; bail out if any outline point is behind the camera.
    const auto outline = detail::shape_outline(beacon.shape);
    std::vector<Vector2d> image_poly;
    image_poly.reserve(outline.size());
    for (const auto& p : outline) {
        const Vector3d world =
            beacon.pose.position + p.x() * ex + p.y() * ey;
        const auto img = project_point(world, camera, intr);
        if (!img) return 0.0;
        image_poly.push_back(*img);
    }

    // Exact projected silhouette area in pixels (clipped to the sensor).
    auto clipped = detail::clip_halfplane(image_poly, -1, 0, 0);
    clipped = detail::clip_halfplane(clipped, 1, 0, intr.width_px);
    clipped = detail::clip_halfplane(clipped, 0, -1, 0);
    clipped = detail::clip_halfplane(clipped, 0, 1, intr.height_px);
    if (clipped.empty()) return 0.0;
    const double area_px = detail::polygon_area(clipped);
    if (area_px <= 0.0) return 0.0;
    if (area_px < opts.integer_count_min_px) return area_px;

    // Integer mode: count pixel centres whose rays hit the fixture plane
    // inside the shape. Scan only the outline's bounding box.
    double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
    for (const auto& p : image_poly) {
        umin = std::min(umin, p.x());
        umax = std::max(umax, p.x());
        vmin = std::min(vmin, p.y());
        vmax = std::max(vmax, p.y());
    }
    const int u0 = std::max(0, static_cast<int>(std::floor(umin)) - 1);
    const int u1 = std::min(intr.width_px - 1, static_cast<int>(std::ceil(umax)) + 1);
    const int v0 = std::max(0, static_cast<int>(std::floor(vmin)) - 1);
    const int v1 = std::min(intr.height_px - 1, static_cast<int>(std::ceil(vmax)) + 1);
    if (u0 > u1 || v0 > v1) return 0.0;

    // Precompute the ray->plane->shape test in camera coordinates.
    const Vector3d n_cam = rc * normal;
    const Vector3d ex_cam = rc * ex;
    const Vector3d ey_cam = rc * ey;
    const double plane_d = n_cam.dot(centre_cam);
    const double fx = intr.fx();
    const double fy = intr.fy();

    long count = 0;
    for (int v = v0; v <= v1; ++v) {
        const double yc = (v + 0.5 - intr.principal_y) / fy;
        for (int u = u0; u <= u1; ++u) {
            // Invert the projection including skew: u and v are pixel centres.
            const double xc =
                (u + 0.5 - intr.principal_x) / fx - intr.skew / fx * yc;
            const Vector3d dir{xc, yc, 1.0};
            const double denom = n_cam.dot(dir);
            if (std::abs(denom) < 1e-300) continue;
            const double t = plane_d / denom;
            if (t <= 0.0) continue;
            const Vector3d hit = t * dir - centre_cam;
            if (detail::inside_shape(beacon.shape, hit.dot(ex_cam), hit.dot(ey_cam)))
                ++count;
        }
    }
    return static_cast<double>(count);
}

}  // namespace occ
