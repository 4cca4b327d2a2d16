#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Geometry>
#include <numbers>
#include <random>

#include "occ/camera.hpp"

using namespace occ;
using Catch::Approx;

namespace {

CameraIntrinsics table_camera() {
    CameraIntrinsics intr;
    intr.finalize();
    return intr;
}

Matrix3d random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vector3d axis(g(rng), g(rng), g(rng));
    axis.normalize();
    std::uniform_real_distribution<double> ang(0.0, 2 * std::numbers::pi);
    return Eigen::AngleAxisd(ang(rng), axis).toRotationMatrix();
}

// Independent oracle: explicit homogeneous 3x4 calibration-matrix product.
Vector2d project_via_matrix(const Vector3d& w, const Pose& cam,
                            const CameraIntrinsics& intr) {
    Eigen::Matrix3d k;
    k << intr.fx(), intr.skew, intr.principal_x, 0, intr.fy(), intr.principal_y,
        0, 0, 1;
    Eigen::Matrix<double, 3, 4> ext;
    ext.leftCols<3>() = cam.orientation;
    ext.col(3) = -cam.orientation * cam.position;
    const Eigen::Matrix<double, 3, 4> p = k * ext;
    Eigen::Vector4d wh;
    wh << w, 1.0;
    const Vector3d x = p * wh;
    return {x(0) / x(2), x(1) / x(2)};
}

}  // namespace

TEST_CASE("axial point maps to the principal point") {
    const auto intr = table_camera();
    Pose cam;  // identity at origin, optical axis +z
    const auto img = project_point(Vector3d(0, 0, 5), cam, intr);
    REQUIRE(img);
    CHECK(img->x() == Approx(intr.principal_x));
    CHECK(img->y() == Approx(intr.principal_y));
}

TEST_CASE("points at or behind the camera plane do not project") {
    const auto intr = table_camera();
    Pose cam;
    CHECK_FALSE(project_point(Vector3d(0.3, 0.1, -2.0), cam, intr));
    CHECK_FALSE(project_point(Vector3d(0.3, 0.1, 0.0), cam, intr));
}

TEST_CASE("projection agrees with the homogeneous matrix oracle") {
    auto intr = table_camera();
    intr.skew = 0.37;  // exercise the skew term as well
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    int in_front = 0;
    while (in_front < 200) {
        Pose cam;
        cam.position = Vector3d(u(rng), u(rng), u(rng));
        cam.orientation = random_rotation(rng);
        const Vector3d w(u(rng), u(rng), u(rng));
        const Vector3d in_cam = cam.orientation * (w - cam.position);
        const auto img = project_point(w, cam, intr);
        if (in_cam.z() <= 0) {
            CHECK_FALSE(img);
            continue;
        }
        if (in_cam.z() < 0.5) continue;  // grazing depths blow up the pixels
        REQUIRE(img);
        const Vector2d oracle = project_via_matrix(w, cam, intr);
        CHECK((*img - oracle).norm() < 1e-9);
        ++in_front;
    }
}

TEST_CASE("field-of-view test") {
    const auto intr = table_camera();
    Pose cam;
    SECTION("axial point is inside") {
        CHECK(in_fov(Vector3d(0, 0, 3), cam, intr));
    }
    SECTION("boundary angle is inclusive") {
        const double th = intr.fov_semi_angle;
        const Vector3d p(3.0 * std::sin(th), 0.0, 3.0 * std::cos(th));
        CHECK(in_fov(p, cam, intr));
    }
    SECTION("behind the camera is outside") {
        CHECK_FALSE(in_fov(Vector3d(0, 0, -3), cam, intr));
    }
    SECTION("monotone in the incidence angle") {
        bool seen_outside = false;
        for (double th = 0.0; th < std::numbers::pi / 2; th += 0.01) {
            const Vector3d p(2.0 * std::sin(th), 0.0, 2.0 * std::cos(th));
            const bool inside = in_fov(p, cam, intr);
            if (seen_outside) CHECK_FALSE(inside);
            if (!inside) seen_outside = true;
        }
        CHECK(seen_outside);
    }
}

namespace {

Matrix3d down_facing() {
    Matrix3d r = Matrix3d::Identity();
    r(1, 1) = -1.0;
    r(2, 2) = -1.0;
    return r;
}

Beacon axial_circle(double radius, double dist) {
    Pose pose;
    pose.position = Vector3d(0, 0, dist);
    pose.orientation = down_facing();
    return make_beacon(7, pose, Circle{radius});
}

}  // namespace

TEST_CASE("rasterizer matches the thin-lens silhouette area on axis") {
    const auto intr = table_camera();
    Pose cam;
    // Table-2 panel equivalent: circle of area 0.01 m^2 at 2 m, f = 16 mm,
    // rho = 3.5 um.
    const Beacon b = axial_circle(0.0564, 2.0);
    const double eta = rasterize_fixture(b, cam, intr);
    const double analytic = std::numbers::pi *
                            std::pow(0.016 * 0.0564 / (3.5e-6 * 2.0), 2);
    CHECK(analytic == Approx(52209.79235193724));
    CHECK(eta == Approx(analytic).epsilon(0.02));
}

TEST_CASE("rasterizer returns zero behind the camera and off sensor") {
    const auto intr = table_camera();
    Pose cam;
    CHECK(rasterize_fixture(axial_circle(0.05, -2.0), cam, intr) == 0.0);

    Pose beacon_pose;
    beacon_pose.position = Vector3d(100.0, 0.0, 2.0);  // far outside the FOV
    beacon_pose.orientation = down_facing();
    const Beacon off = make_beacon(8, beacon_pose, Circle{0.05});
    CHECK(rasterize_fixture(off, cam, intr) == 0.0);
}

TEST_CASE("square fixture is invariant under a quarter turn about the axis") {
    const auto intr = table_camera();
    Pose cam;
    Pose pose;
    pose.position = Vector3d(0, 0, 2.0);
    pose.orientation = down_facing();
    const Beacon straight = make_beacon(1, pose, Square{0.1});
    Pose rotated = pose;
    rotated.orientation =
        (Eigen::AngleAxisd(std::numbers::pi / 2, Vector3d::UnitZ())
             .toRotationMatrix() *
         down_facing().transpose())
            .transpose();
    const Beacon quarter = make_beacon(2, rotated, Square{0.1});
    CHECK(rasterize_fixture(straight, cam, intr) ==
          rasterize_fixture(quarter, cam, intr));
}

TEST_CASE("projection scaling: doubling distance quarters the count") {
    const auto intr = table_camera();
    Pose cam;
    for (double d : {1.0, 1.6, 2.4}) {
        const double near = rasterize_fixture(axial_circle(0.0564, d), cam, intr);
        const double far =
            rasterize_fixture(axial_circle(0.0564, 2 * d), cam, intr);
        REQUIRE(near >= 100.0);
        CHECK(far == Approx(near / 4.0).epsilon(0.02));
    }
}

TEST_CASE("rasterizer is invariant under joint rigid motions") {
    const auto intr = table_camera();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    Pose cam;
    const Beacon b = axial_circle(0.04, 2.5);
    const double reference = rasterize_fixture(b, cam, intr);
    for (int i = 0; i < 20; ++i) {
        const Matrix3d rot = random_rotation(rng);
        const Vector3d shift(u(rng), u(rng), u(rng));
        Pose cam2;
        cam2.position = rot * cam.position + shift;
        cam2.orientation = cam.orientation * rot.transpose();
        Beacon b2 = b;
        b2.pose.position = rot * b.pose.position + shift;
        b2.pose.orientation = b.pose.orientation * rot.transpose();
        CHECK(rasterize_fixture(b2, cam2, intr) == Approx(reference).epsilon(1e-9));
    }
}

TEST_CASE("fractional mode keeps eta continuous near the far cutoff") {
    const auto intr = table_camera();
    Pose cam;
    // Small fixture far away: silhouette under 4 px, exact area expected.
    const Beacon b = axial_circle(0.01, 48.0);
    const double eta = rasterize_fixture(b, cam, intr);
    const double analytic =
        std::numbers::pi * std::pow(0.016 * 0.01 / (3.5e-6 * 48.0), 2);
    REQUIRE(analytic < 4.0);
    CHECK(eta == Approx(analytic).epsilon(0.005));
}

TEST_CASE("tilted fixture silhouette shrinks by the tilt cosine") {
    const auto intr = table_camera();
    Pose cam;
    Pose pose;
    pose.position = Vector3d(0, 0, 2.0);
    pose.orientation = down_facing();
    const Beacon flat = make_beacon(1, pose, Circle{0.0564});
    const double tilt = 0.3;
    Pose tilted = pose;
    tilted.orientation =
        (Eigen::AngleAxisd(tilt, Vector3d::UnitX()).toRotationMatrix() *
         down_facing().transpose())
            .transpose();
    const Beacon leaning = make_beacon(2, tilted, Circle{0.0564});
    const double ratio = rasterize_fixture(leaning, cam, intr) /
                         rasterize_fixture(flat, cam, intr);
    CHECK(ratio == Approx(std::cos(tilt)).epsilon(0.02));
}
