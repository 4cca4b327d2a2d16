#pragma once

// Position solving from range measurements: trilateration (general and
// collinear beacon lines), least-squares multilateration, and candidate
// disambiguation.
//
// The linear system is the lifted form of the range equations: each beacon
// contributes a row [1, -2x_L, -2y_L, -2z_L] acting on the unknown vector
// [x^2+y^2+z^2, x, y, z]. Three non-collinear beacons leave a one-dimensional
// null space pinned by the quadratic consistency between the first component
// and the position; collinear beacons leave a circle of solutions around the
// beacon line that an image-plane bearing hint collapses to a mirror pair.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "occ/errors.hpp"
#include "occ/ranging.hpp"

namespace occ {

using Eigen::Matrix;
using Eigen::MatrixXd;
using Eigen::Vector4d;
using Eigen::VectorXd;

struct PositionEstimate {
    Vector3d position{0, 0, 0};          // preferred candidate
    std::vector<Vector3d> candidates;    // all real solutions, z ascending
    double residual = 0.0;               // RMS range residual of `position`
};

/// Orthonormal frame of a (nearly) collinear beacon set: the line direction
/// (sign-canonicalized), the horizontal lateral axis, and the vertical axis
/// completing the triad. Shared by the collinear solver and by callers that
/// compute the image-plane bearing hint, so signs agree.
struct LineFrame {
    Vector3d centroid;
    Vector3d direction;
    Vector3d lateral;
    Vector3d vertical;
};

inline LineFrame beacon_line_frame(std::span<const Vector3d> positions) {
    LineFrame f;
    f.centroid = Vector3d::Zero();
    for (const auto& p : positions) f.centroid += p;
    f.centroid /= static_cast<double>(positions.size());

    MatrixXd centered(positions.size(), 3);
    for (size_t j = 0; j < positions.size(); ++j)
        centered.row(j) = (positions[j] - f.centroid).transpose();
    Eigen::JacobiSVD<MatrixXd> svd(centered, Eigen::ComputeFullV);
    Vector3d u = svd.matrixV().col(0);
    // Canonical sign: first component of largest magnitude is positive.
    int imax = 0;
    u.cwiseAbs().maxCoeff(&imax);
    if (u(imax) < 0) u = -u;
    f.direction = u;

    Vector3d lat = u.cross(Vector3d::UnitZ());
    if (lat.norm() < 1e-9) lat = u.cross(Vector3d::UnitX());
    f.lateral = lat.normalized();
    f.vertical = f.lateral.cross(u).normalized();
    return f;
}

/// True when the positions lie on one line to within `tol` of their spread.
inline bool positions_collinear(std::span<const Vector3d> positions,
                                double tol = 1e-9) {
    if (positions.size() <= 2) return true;
    const LineFrame f = beacon_line_frame(positions);
    double spread = 0.0, offline = 0.0;
    for (const auto& p : positions) {
        const Vector3d d = p - f.centroid;
        spread = std::max(spread, d.norm());
        offline = std::max(offline, (d - d.dot(f.direction) * f.direction).norm());
    }
    return offline <= tol * std::max(1.0, spread);
}

namespace detail {

inline double rms_range_residual(const Vector3d& p,
                                 std::span<const RangeMeasurement> ms) {
    double acc = 0.0;
    for (const auto& m : ms) {
        const double r = (p - m.beacon_position).norm() - m.distance;
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(ms.size()));
}

inline void finalize_estimate(PositionEstimate& est,
                              std::span<const RangeMeasurement> ms) {
    std::sort(est.candidates.begin(), est.candidates.end(),
              [](const Vector3d& a, const Vector3d& b) { return a.z() < b.z(); });
    est.position = est.candidates.front();
    est.residual = rms_range_residual(est.position, ms);
}

// Solutions of the lifted system along one null direction: imposes
// x0 = |p|^2 on x = xp + eps*h. Throws when the discriminant is negative
// beyond tolerance (inconsistent distances).
inline std::vector<Vector3d> pin_null_direction(const Vector4d& xp,
                                                const Vector4d& h, bool strict) {
    const Vector3d pp = xp.tail<3>();
    const Vector3d hp = h.tail<3>();
    const double a = hp.squaredNorm();
    const double b = 2.0 * pp.dot(hp) - h(0);
    const double c = pp.squaredNorm() - xp(0);
    std::vector<Vector3d> out;
    if (a < 1e-300) {
        // Null direction carries no position component; cannot happen for
        // rows [1, -2P], but guard the division anyway.
        throw SingularNormalEquations("degenerate null direction");
    }
    double disc = b * b - 4.0 * a * c;
    // Exact-arithmetic consistency gate; the lenient path (multilateration,
    // which owns noisy inputs) clamps to the tangent point instead.
    if (strict && disc < -1e-6) throw NoRealSolution("inconsistent distances");
    disc = std::max(disc, 0.0);
    const double root = std::sqrt(disc);
    const double e1 = (-b + root) / (2.0 * a);
    const double e2 = (-b - root) / (2.0 * a);
    out.push_back(pp + e1 * hp);
    if (root > 0.0) out.push_back(pp + e2 * hp);
    return out;
}

// Collinear-beacon solve: the along-line coordinate comes from pairwise
// differences of the range equations; the perpendicular radius from the
// residual. The bearing hint selects the lateral offset on the solution
// circle (0 = directly under/over the line), leaving the mirror pair.
inline std::vector<Vector3d> solve_collinear(
    std::span<const RangeMeasurement> ms, double lateral_bearing, bool strict) {
    const size_t n = ms.size();
    std::vector<Vector3d> positions(n);
    for (size_t j = 0; j < n; ++j) positions[j] = ms[j].beacon_position;
    const LineFrame frame = beacon_line_frame(positions);
    const Vector3d& u = frame.direction;
    const Vector3d& centroid = frame.centroid;

    std::vector<double> s(n);
    for (size_t j = 0; j < n; ++j)
        s[j] = (ms[j].beacon_position - centroid).dot(u);

    // d_j^2 - d_k^2 = -2 s (s_j - s_k) + s_j^2 - s_k^2, linear in s.
    double num = 0.0, den = 0.0;
    for (size_t j = 0; j < n; ++j)
        for (size_t k = j + 1; k < n; ++k) {
            const double ds = s[j] - s[k];
            const double rhs = ms[j].distance * ms[j].distance -
                               ms[k].distance * ms[k].distance -
                               (s[j] * s[j] - s[k] * s[k]);
            num += ds * rhs;
            den += ds * ds;
        }
    if (den < 1e-18) throw DegenerateBeacons("beacon positions coincide");
    const double along = -num / (2.0 * den);

    double r2 = 0.0;
    for (size_t j = 0; j < n; ++j) {
        const double off = along - s[j];
        r2 += ms[j].distance * ms[j].distance - off * off;
    }
    r2 /= static_cast<double>(n);
    if (strict && r2 < -1e-6)
        throw NoRealSolution("inconsistent distances (collinear)");
    const double r = std::sqrt(std::max(r2, 0.0));

    const Vector3d foot = centroid + along * u;
    const double l = r * std::sin(lateral_bearing);
    const double v = r * std::cos(lateral_bearing);
    std::vector<Vector3d> out;
    out.push_back(foot + l * frame.lateral + v * frame.vertical);
    if (v > 0.0) out.push_back(foot + l * frame.lateral - v * frame.vertical);
    return out;
}

inline PositionEstimate solve_range_system(std::span<const RangeMeasurement> ms,
                                           double lateral_bearing, bool strict) {
    const size_t n = ms.size();
    for (size_t j = 0; j < n; ++j) {
        if (!(ms[j].distance > 0))
            throw ValidationError("measurement.distance", "must be > 0");
        // Exactly three anchors cannot share a position; redundant duplicates
        // are fine for the least-squares path.
        if (strict)
            for (size_t k = j + 1; k < n; ++k)
                if ((ms[j].beacon_position - ms[k].beacon_position).norm() <
                    1e-12)
                    throw DegenerateBeacons("beacon positions coincide");
    }

    MatrixXd z(n, 4);
    VectorXd q(n);
    for (size_t j = 0; j < n; ++j) {
        const Vector3d& p = ms[j].beacon_position;
        z(j, 0) = 1.0;
        z.row(j).tail<3>() = -2.0 * p.transpose();
        q(j) = ms[j].distance * ms[j].distance - p.squaredNorm();
    }

    Eigen::JacobiSVD<MatrixXd> svd(z, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const VectorXd& sv = svd.singularValues();
    // Condition cap 1e12 on Z^T Z == 1e6 on Z: smaller singular values are
    // treated as structural rank deficiency (coplanar or collinear beacons).
    const double threshold = sv(0) * 1e-6;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > threshold) ++rank;

    svd.setThreshold(1e-6);
    const Vector4d xp = svd.solve(q);

    PositionEstimate est;
    if (rank >= 4) {
        est.candidates.push_back(xp.tail<3>());
    } else if (rank == 3) {
        const Vector4d h = svd.matrixV().col(3);
        est.candidates = pin_null_direction(xp, h, strict);
    } else if (rank == 2) {
        est.candidates = solve_collinear(ms, lateral_bearing, strict);
    } else {
        throw SingularNormalEquations("beacon geometry below rank 2");
    }
    finalize_estimate(est, ms);
    return est;
}

}  // namespace detail

/// Solves the three-beacon problem. Non-collinear beacons give up to two
/// mirror candidates across the beacon plane; collinear beacons give the
/// mirror pair at the lateral offset implied by `lateral_bearing` (signed
/// image-plane bearing of the beacon line, 0 = camera under/over the line).
inline PositionEstimate trilaterate(std::span<const RangeMeasurement> measurements,
                                    double lateral_bearing = 0.0) {
    if (measurements.size() != 3)
        throw Error("trilaterate: exactly 3 measurements required");
    return detail::solve_range_system(measurements, lateral_bearing, true);
}

/// Least-squares solve for four or more beacons. Full-rank geometries return
/// the unique least-squares point; coplanar or collinear beacon sets fall
/// back to the null-space branches and may return two candidates.
inline PositionEstimate multilaterate(
    std::span<const RangeMeasurement> measurements, double lateral_bearing = 0.0) {
    if (measurements.size() < 4)
        throw Error("multilaterate: at least 4 measurements required");
    return detail::solve_range_system(measurements, lateral_bearing, false);
}

/// Picks the physical candidate: discards positions outside the slab between
/// floor_z and ceiling_z, then minimizes total distance to the beacons,
/// breaking ties toward smaller z.
inline Vector3d choose_candidate(const PositionEstimate& estimate,
                                 std::span<const RangeMeasurement> measurements,
                                 double floor_z, double ceiling_z) {
    if (estimate.candidates.empty())
        throw NoValidCandidate("estimate has no candidates");
    const double lo = std::min(floor_z, ceiling_z) - 1e-9;
    const double hi = std::max(floor_z, ceiling_z) + 1e-9;
    std::vector<Vector3d> valid;
    for (const auto& c : estimate.candidates)
        if (c.z() >= lo && c.z() <= hi) valid.push_back(c);
    if (valid.empty())
        throw NoValidCandidate("all candidates outside [floor_z, ceiling_z]");
    if (valid.size() == 1) return valid.front();

    auto total_distance = [&](const Vector3d& c) {
        double acc = 0.0;
        for (const auto& m : measurements) acc += (c - m.beacon_position).norm();
        return acc;
    };
    Vector3d best = valid.front();
    double best_total = total_distance(best);
    for (size_t i = 1; i < valid.size(); ++i) {
        const double t = total_distance(valid[i]);
        if (t < best_total - 1e-12 ||
            (std::abs(t - best_total) <= 1e-12 && valid[i].z() < best.z())) {
            best = valid[i];
            best_total = t;
        }
    }
    return best;
}

}  // namespace occ
