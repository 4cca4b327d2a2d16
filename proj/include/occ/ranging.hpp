#pragma once

// Photogrammetric range inversion: distance from the pixel area a fixture
// occupies on the sensor.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "occ/errors.hpp"

namespace occ {

/// tau = f * sqrt(A_LED) / rho; d = tau / sqrt(eta).
inline double ranging_constant(double focal_length, double pixel_pitch,
                               double fixture_area) {
    return focal_length * std::sqrt(fixture_area) / pixel_pitch;
}

/// Forward ranging law (the tau form): eta = (tau / d)^2.
inline double eta_from_distance(double tau, double distance) {
    return (tau / distance) * (tau / distance);
}

/// Inverts the pixel count into a direct distance:
/// d = (f / rho) * sqrt(A_LED / eta). Below one pixel the range is
/// unresolvable and localization possibility is zero.
inline double distance_from_pixels(double pixel_count, double focal_length,
                                   double pixel_pitch, double fixture_area) {
    if (pixel_count < 1.0)
        throw RangeUnresolvable("distance_from_pixels: pixel count below 1");
    return ranging_constant(focal_length, pixel_pitch, fixture_area) /
           std::sqrt(pixel_count);
}

/// A decoded (beacon, pixel count, derived distance) tuple: the unit of
/// upload from receiver to estimator.
struct RangeMeasurement {
    uint32_t beacon_id = 0;
    Eigen::Vector3d beacon_position{0, 0, 0};
    double distance = 0.0;     // m
    double pixel_count = 0.0;  // eta_i; 0 when not derived from pixels
    double timestamp = 0.0;    // s
};

/// Builds a measurement and, when both a pixel count and camera constants are
/// given, checks the distance is the Eq-18 inversion of that count.
inline RangeMeasurement make_range_measurement(uint32_t id,
                                               const Eigen::Vector3d& position,
                                               double distance,
                                               double pixel_count = 0.0,
                                               double timestamp = 0.0,
                                               double tau = 0.0) {
    if (!(distance > 0))
        throw ValidationError("measurement.distance", "must be > 0");
    if (pixel_count > 0.0 && tau > 0.0) {
        const double implied = tau / std::sqrt(pixel_count);
        if (std::abs(implied - distance) > 1e-9)
            throw ValidationError("measurement.distance",
                                  "inconsistent with pixel count");
    }
    return RangeMeasurement{id, position, distance, pixel_count, timestamp};
}

}  // namespace occ
