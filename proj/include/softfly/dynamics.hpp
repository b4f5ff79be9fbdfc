#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace softfly {

/// Quaternion stored in (x, y, z, w) order, Hamilton convention.
struct Quat {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double w = 1.0;

    static Quat identity() { return {}; }
    double norm() const;
    Quat normalized() const;
    Quat conjugate() const { return {-x, -y, -z, w}; }
    bool operator==(const Quat&) const = default;
};

Quat quat_multiply(const Quat& a, const Quat& b);

/// World-from-body rotation matrix. Throws std::invalid_argument when
/// |q| deviates from one by more than 1e-6.
Eigen::Matrix3d quat_to_rotmatrix(const Quat& q);

struct Euler {
    double roll = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;
    /// Pitch within 1e-4 of +-pi/2; roll and yaw are unreliable there.
    bool gimbal = false;
};

/// Z-Y-X (yaw-pitch-roll) decomposition.
Euler quat_to_euler(const Quat& q);
Quat euler_to_quat(double roll, double pitch, double yaw);

inline constexpr double kGimbalMargin = 1e-4;

/// 13-component robot state. Position and velocity live in the world frame,
/// body rates (p, q, r) in the body frame.
struct State {
    Eigen::Vector3d pos = Eigen::Vector3d::Zero();
    Quat att;
    Eigen::Vector3d vel = Eigen::Vector3d::Zero();
    Eigen::Vector3d rate = Eigen::Vector3d::Zero();

    static constexpr int kDim = 13;
    using Array = std::array<double, kDim>;

    /// [x, y, z, qx, qy, qz, qw, vx, vy, vz, p, q, r]
    Array to_array() const;
    static State from_array(const Array& a);
    bool is_finite() const;
    bool operator==(const State& o) const { return to_array() == o.to_array(); }
};

struct StateDerivative {
    Eigen::Vector3d dpos = Eigen::Vector3d::Zero();
    Quat datt{0.0, 0.0, 0.0, 0.0};
    Eigen::Vector3d dvel = Eigen::Vector3d::Zero();
    Eigen::Vector3d drate = Eigen::Vector3d::Zero();
};

/// Body-z thrust plus roll and pitch torques. There is no yaw torque.
struct Action {
    double thrust = 0.0;
    double tau_x = 0.0;
    double tau_y = 0.0;

    static constexpr int kDim = 3;
    std::array<double, kDim> to_array() const { return {thrust, tau_x, tau_y}; }
    static Action from_array(const std::array<double, kDim>& a) { return {a[0], a[1], a[2]}; }
    bool is_finite() const;
    bool operator==(const Action&) const = default;
};

struct RobotParams {
    double mass = 720e-6;                                     // kg
    Eigen::Vector3d inertia{3e-8, 3e-8, 5e-8};                // Ixx, Iyy, Izz (kg m^2)
    double yaw_damping = 1e-6;                                // k_y, same units as Izz
    double gravity = 9.81;                                    // m/s^2
    double thrust_max = 2.0 * 720e-6 * 9.81;                  // N
    double torque_max = 5e-6;                                 // N m

    /// Hover thrust m * g.
    double nominal_thrust() const { return mass * gravity; }
    Action nominal_action() const { return {nominal_thrust(), 0.0, 0.0}; }
    void validate() const;
};

struct Disturbance {
    Eigen::Vector3d force = Eigen::Vector3d::Zero();  // world frame, N
    double tau_x = 0.0;
    double tau_y = 0.0;
};

class IntegrationBlowup : public std::runtime_error {
public:
    IntegrationBlowup(int component, double value);
    int component() const { return component_; }
    double value() const { return value_; }

private:
    int component_;
    double value_;
};

Action saturate(const Action& a, const RobotParams& rp);

/// Continuous-time rigid-body dynamics. The action is used as given.
///
/// The yaw channel carries a damping term proportional to the yaw
/// acceleration itself, Izz * rdot = gyro_z - k_y * rdot, which is solved in
/// closed form as rdot = gyro_z / (Izz + k_y).
StateDerivative derivative(const State& s, const Action& a, const Disturbance& dist,
                           const RobotParams& rp);

inline constexpr double kControlDt = 1e-3;

/// One forward-Euler step with action saturation and quaternion
/// renormalization. Throws IntegrationBlowup on a non-finite result.
State step_dynamics(const State& s, const Action& a, const Disturbance& dist,
                    const RobotParams& rp, double dt = kControlDt);

}  // namespace softfly
