#include "softfly/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

namespace softfly {

double Quat::norm() const { return std::sqrt(x * x + y * y + z * z + w * w); }

Quat Quat::normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n, w / n};
}

Quat quat_multiply(const Quat& a, const Quat& b) {
    return {
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
    };
}

Eigen::Matrix3d quat_to_rotmatrix(const Quat& q) {
    if (std::abs(q.norm() - 1.0) > 1e-6) {
        std::ostringstream msg;
        msg << "quat_to_rotmatrix: quaternion norm " << q.norm() << " is not unit";
        throw std::invalid_argument(msg.str());
    }
    const double xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
    const double xy = q.x * q.y, xz = q.x * q.z, yz = q.y * q.z;
    const double xw = q.x * q.w, yw = q.y * q.w, zw = q.z * q.w;
    Eigen::Matrix3d r;
    r << 1.0 - 2.0 * (yy + zz), 2.0 * (xy - zw), 2.0 * (xz + yw),
         2.0 * (xy + zw), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - xw),
         2.0 * (xz - yw), 2.0 * (yz + xw), 1.0 - 2.0 * (xx + yy);
    return r;
}

Euler quat_to_euler(const Quat& q) {
    Euler e;
    e.roll = std::atan2(2.0 * (q.w * q.x + q.y * q.z), 1.0 - 2.0 * (q.x * q.x + q.y * q.y));
    const double sp = std::clamp(2.0 * (q.w * q.y - q.z * q.x), -1.0, 1.0);
    e.pitch = std::asin(sp);
    e.yaw = std::atan2(2.0 * (q.w * q.z + q.x * q.y), 1.0 - 2.0 * (q.y * q.y + q.z * q.z));
    e.gimbal = std::abs(e.pitch) > std::numbers::pi / 2.0 - kGimbalMargin;
    return e;
}

Quat euler_to_quat(double roll, double pitch, double yaw) {
    const double cr = std::cos(roll / 2), sr = std::sin(roll / 2);
    const double cp = std::cos(pitch / 2), sp = std::sin(pitch / 2);
    const double cy = std::cos(yaw / 2), sy = std::sin(yaw / 2);
    return {
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
        cr * cp * cy + sr * sp * sy,
    };
}

State::Array State::to_array() const {
    return {pos.x(), pos.y(), pos.z(), att.x, att.y, att.z, att.w,
            vel.x(), vel.y(), vel.z(), rate.x(), rate.y(), rate.z()};
}

State State::from_array(const Array& a) {
    State s;
    s.pos = {a[0], a[1], a[2]};
    s.att = {a[3], a[4], a[5], a[6]};
    s.vel = {a[7], a[8], a[9]};
    s.rate = {a[10], a[11], a[12]};
    return s;
}

bool State::is_finite() const {
    for (double v : to_array())
        if (!std::isfinite(v)) return false;
    return true;
}

bool Action::is_finite() const {
    return std::isfinite(thrust) && std::isfinite(tau_x) && std::isfinite(tau_y);
}

void RobotParams::validate() const {
    if (!(mass > 0.0)) throw std::invalid_argument("robot: mass must be positive");
    if (!(inertia.x() > 0.0 && inertia.y() > 0.0 && inertia.z() > 0.0))
        throw std::invalid_argument("robot: inertia components must be positive");
    if (!(yaw_damping >= 0.0)) throw std::invalid_argument("robot: yaw_damping must be >= 0");
    if (!(gravity > 0.0)) throw std::invalid_argument("robot: gravity must be positive");
    if (!(thrust_max > 0.0)) throw std::invalid_argument("robot: thrust_max must be positive");
    if (!(torque_max > 0.0)) throw std::invalid_argument("robot: torque_max must be positive");
}

IntegrationBlowup::IntegrationBlowup(int component, double value)
    : std::runtime_error("integration blow-up in state component " + std::to_string(component) +
                         " (value " + std::to_string(value) + ")"),
      component_(component),
      value_(value) {}

Action saturate(const Action& a, const RobotParams& rp) {
    return {
        std::clamp(a.thrust, 0.0, rp.thrust_max),
        std::clamp(a.tau_x, -rp.torque_max, rp.torque_max),
        std::clamp(a.tau_y, -rp.torque_max, rp.torque_max),
    };
}

StateDerivative derivative(const State& s, const Action& a, const Disturbance& dist,
                           const RobotParams& rp) {
    StateDerivative d;
    d.dpos = s.vel;

    const Eigen::Vector3d thrust_world = quat_to_rotmatrix(s.att).col(2) * a.thrust;
    d.dvel = (thrust_world + Eigen::Vector3d(0.0, 0.0, -rp.mass * rp.gravity) + dist.force) / rp.mass;

    const Quat omega{s.rate.x(), s.rate.y(), s.rate.z(), 0.0};
    const Quat qdot = quat_multiply(s.att, omega);
    d.datt = {0.5 * qdot.x, 0.5 * qdot.y, 0.5 * qdot.z, 0.5 * qdot.w};

    const Eigen::Vector3d& j = rp.inertia;
    const Eigen::Vector3d gyro = -s.rate.cross(j.cwiseProduct(s.rate));
    d.drate.x() = (gyro.x() + a.tau_x + dist.tau_x) / j.x();
    d.drate.y() = (gyro.y() + a.tau_y + dist.tau_y) / j.y();
    d.drate.z() = gyro.z() / (j.z() + rp.yaw_damping);
    return d;
}

State step_dynamics(const State& s, const Action& a, const Disturbance& dist,
                    const RobotParams& rp, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("step_dynamics: dt must be positive");
    const StateDerivative d = derivative(s, saturate(a, rp), dist, rp);

    State next;
    next.pos = s.pos + dt * d.dpos;
    next.vel = s.vel + dt * d.dvel;
    next.rate = s.rate + dt * d.drate;
    next.att = Quat{s.att.x + dt * d.datt.x, s.att.y + dt * d.datt.y,
                    s.att.z + dt * d.datt.z, s.att.w + dt * d.datt.w};

    const auto raw = next.to_array();
    for (int i = 0; i < State::kDim; ++i)
        if (!std::isfinite(raw[i])) throw IntegrationBlowup(i, raw[i]);
    next.att = next.att.normalized();
    return next;
}

}  // namespace softfly
