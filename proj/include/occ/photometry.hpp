#pragma once

// Optical link budget: Lambertian emission, channel DC gain, received power,
// SNIR, pixel Eb/N0, Shannon capacity, MIMO superposition, and the SNIR->BER
// mapping that drives ID-decoding errors.

#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "occ/errors.hpp"

namespace occ {

struct ChannelParams {
    double kappa = 0.54;            // optical->electric conversion, A/W
    double iota = 1.0;              // optical->electrical power factor
    double noise_density = 1e-17;   // N_0, W/Hz
    double bandwidth = 20e3;        // modulation bandwidth B, Hz
    double optical_filter_gain = 1.0;   // T_s(theta)
    double concentrator_gain = 1.0;     // g(theta)
    double responsivity = 1.0;          // camera responsivity R_cam
    double alpha = 1.0;             // pixel-noise fit parameter
    double beta = 0.1;              // pixel-noise fit parameter
    double spatial_bandwidth = 100; // W_s, parallel pixel channels

    void validate() const {
        if (!(kappa > 0)) throw ValidationError("channel.kappa", "must be > 0");
        if (!(noise_density > 0))
            throw ValidationError("channel.noise_density", "must be > 0");
        if (!(bandwidth > 0)) throw ValidationError("channel.bandwidth", "must be > 0");
        if (!(alpha >= 0)) throw ValidationError("channel.alpha", "must be >= 0");
        if (!(beta > 0)) throw ValidationError("channel.beta", "must be > 0");
    }
};

struct LinkGeometry {
    double distance;           // m
    double irradiation_angle;  // rad, at the transmitter
    double incidence_angle;    // rad, at the camera
    double lambertian_order;   // m
};

/// Lambertian order from the half-power semi-angle:
/// m = -ln 2 / ln(cos(angle)).
inline double lambertian_order(double half_power_semi_angle) {
    if (!(half_power_semi_angle > 0 &&
          half_power_semi_angle < std::numbers::pi / 2))
        throw Error("lambertian_order: angle outside (0, pi/2)");
    return -std::numbers::ln2 / std::log(std::cos(half_power_semi_angle));
}

/// I(phi) = I(0) cos^m(phi).
inline double radiant_intensity(double center_intensity, double m, double phi) {
    const double c = std::cos(phi);
    if (c <= 0.0) return 0.0;
    return center_intensity * std::pow(c, m);
}

/// Optical channel DC gain H; zero once the incidence angle leaves the FOV.
inline double channel_dc_gain(const LinkGeometry& geom, double sensor_area,
                              double fov_semi_angle, const ChannelParams& params) {
    if (geom.incidence_angle > fov_semi_angle) return 0.0;
    const double m = geom.lambertian_order;
    const double d2 = geom.distance * geom.distance;
    return (m + 1.0) * sensor_area / (2.0 * std::numbers::pi * d2) *
           params.concentrator_gain * params.optical_filter_gain *
           std::pow(std::cos(geom.irradiation_angle), m) *
           std::cos(geom.incidence_angle);
}

/// Average received optical power: P_r = I(0) cos^m(phi) cos(psi) / d^2.
inline double received_power(double center_intensity, double m, double phi,
                             double psi, double d) {
    return radiant_intensity(center_intensity, m, phi) * std::cos(psi) / (d * d);
}

/// Signal-to-noise-plus-interference ratio.
/// interferers: (optical power, channel gain) pairs for unwanted sources.
inline double snir(const ChannelParams& params, double signal_power, double gain,
                   std::span<const std::pair<double, double>> interferers = {}) {
    const double sig = params.kappa * signal_power * gain;
    double denom = params.iota * params.iota * params.noise_density * params.bandwidth;
    for (const auto& [p, h] : interferers) {
        const double term = params.kappa * p * h;
        denom += term * term;
    }
    return sig * sig / denom;
}

/// Pixel Eb/N0 of the image sensor: S^2 * delta / (alpha*S*delta + beta).
inline double pixel_ebn0(double signal_amplitude, double exposure, double alpha,
                         double beta) {
    return signal_amplitude * signal_amplitude * exposure /
           (alpha * signal_amplitude * exposure + beta);
}

/// Shannon capacity of the space-time channel: F_fps * W_s * log2(1 + SNIR).
inline double channel_capacity(double fps, double spatial_bw, double snir_value) {
    return fps * spatial_bw * std::log2(1.0 + snir_value);
}

/// Channel output for superposed transmitters: v = R_cam * sum(h_i u_i) + N.
inline double mimo_superpose(std::span<const std::pair<double, double>> transmitters,
                             double responsivity, double noise_sample) {
    double acc = 0.0;
    for (const auto& [symbol, gain] : transmitters) acc += gain * symbol;
    return responsivity * acc + noise_sample;
}

/// Gaussian tail function Q(x).
inline double q_function(double x) {
    return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

enum class ModulationScheme { OOK, S2PSK };

/// Per-state error probability from SNIR: p_e = Q(sqrt(SNIR)). For S2-PSK
/// this is the per-LED-state error that feeds the XOR-classifier BER.
inline double ber_from_snir(double snir_value,
                            ModulationScheme /*scheme*/ = ModulationScheme::OOK) {
    if (snir_value < 0) throw Error("ber_from_snir: negative SNIR");
    return q_function(std::sqrt(snir_value));
}

}  // namespace occ
