#pragma once

// Linear Kalman tracker. The estimator is dimension-agnostic; the indoor
// scheme uses the constant-velocity (x, y, vx, vy) form with position-only
// measurements.

#include <Eigen/Dense>
#include <cmath>

#include "occ/errors.hpp"

namespace occ {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct KalmanState {
    VectorXd state;                // X_k
    MatrixXd covariance;           // P_k
    MatrixXd transition;           // J, refreshed by kf_predict for dt
    MatrixXd process_noise;        // Q_k, refreshed alongside J
    MatrixXd measurement_matrix;   // the paper's T and V, one matrix
    MatrixXd measurement_noise;    // O_error
    MatrixXd last_gain;            // K_g from the latest update
    double process_intensity = 0.01;  // q for the CV process-noise model
};

/// Constant-velocity tracker over (x, y, vx, vy) with (x, y) measurements.
inline KalmanState make_cv_tracker(const Eigen::Vector2d& position,
                                   double position_sigma, double velocity_sigma,
                                   double measurement_sigma,
                                   double process_intensity = 0.01) {
    KalmanState ks;
    ks.state = VectorXd::Zero(4);
    ks.state.head<2>() = position;
    ks.covariance = MatrixXd::Zero(4, 4);
    ks.covariance(0, 0) = ks.covariance(1, 1) = position_sigma * position_sigma;
    ks.covariance(2, 2) = ks.covariance(3, 3) = velocity_sigma * velocity_sigma;
    ks.transition = MatrixXd::Identity(4, 4);
    ks.process_noise = MatrixXd::Zero(4, 4);
    ks.measurement_matrix = MatrixXd::Zero(2, 4);
    ks.measurement_matrix(0, 0) = 1.0;
    ks.measurement_matrix(1, 1) = 1.0;
    ks.measurement_noise =
        measurement_sigma * measurement_sigma * MatrixXd::Identity(2, 2);
    ks.last_gain = MatrixXd::Zero(4, 2);
    ks.process_intensity = process_intensity;
    return ks;
}

/// Prediction step: X <- J X, P <- J P J^T + Q. For the 4-state CV form the
/// transition and process noise are rebuilt from dt; other dimensions keep
/// the caller-supplied matrices.
inline KalmanState kf_predict(const KalmanState& ks, double dt) {
    if (!(dt > 0)) throw Error("kf_predict: dt must be > 0");
    KalmanState out = ks;
    if (ks.state.size() == 4 && ks.measurement_matrix.rows() == 2) {
        out.transition = MatrixXd::Identity(4, 4);
        out.transition(0, 2) = dt;
        out.transition(1, 3) = dt;
        const double dt3 = dt * dt * dt / 3.0;
        out.process_noise = MatrixXd::Zero(4, 4);
        out.process_noise(0, 0) = out.process_noise(1, 1) =
            ks.process_intensity * dt3;
        out.process_noise(2, 2) = out.process_noise(3, 3) =
            ks.process_intensity * dt;
    }
    out.state = out.transition * ks.state;
    out.covariance =
        out.transition * ks.covariance * out.transition.transpose() +
        out.process_noise;
    return out;
}

/// Kalman gain K_g = P T^T (T P T^T + O)^-1.
inline MatrixXd kf_gain(const MatrixXd& covariance_pred,
                        const MatrixXd& measurement_matrix,
                        const MatrixXd& measurement_noise) {
    const MatrixXd innovation =
        measurement_matrix * covariance_pred * measurement_matrix.transpose() +
        measurement_noise;
    Eigen::FullPivLU<MatrixXd> lu(innovation);
    if (!lu.isInvertible())
        throw SingularInnovation("kf_gain: innovation covariance is singular");
    return covariance_pred * measurement_matrix.transpose() * lu.inverse();
}

/// Update step: X <- X + K (y - V X), P <- (I - K V) P. The covariance is
/// re-symmetrized to absorb roundoff.
inline KalmanState kf_update(const KalmanState& predicted, const MatrixXd& gain,
                             const VectorXd& measurement) {
    KalmanState out = predicted;
    const VectorXd innovation =
        measurement - predicted.measurement_matrix * predicted.state;
    out.state = predicted.state + gain * innovation;
    const MatrixXd identity =
        MatrixXd::Identity(predicted.state.size(), predicted.state.size());
    out.covariance = (identity - gain * predicted.measurement_matrix) *
                     predicted.covariance;
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    out.last_gain = gain;
    return out;
}

}  // namespace occ
