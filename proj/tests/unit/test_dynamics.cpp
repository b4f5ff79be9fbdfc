#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "softfly/checks.hpp"
#include "softfly/dynamics.hpp"
#include "softfly/rng.hpp"

using namespace softfly;

namespace {

Eigen::Quaterniond to_eigen(const Quat& q) { return {q.w, q.x, q.y, q.z}; }
Quat from_eigen(const Eigen::Quaterniond& q) { return {q.x(), q.y(), q.z(), q.w()}; }

Quat random_unit(Rng& rng) {
    const Eigen::Vector3d axis = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
    return from_eigen(Eigen::Quaterniond(Eigen::AngleAxisd(rng.uniform(-3.0, 3.0), axis)));
}

// Independent rigid-body model written against Eigen's quaternion type.
struct OracleState {
    Eigen::Vector3d p, v, w;
    Eigen::Vector4d q;  // x y z w
};

OracleState oracle_deriv(const OracleState& s, const Action& a, const RobotParams& rp) {
    const Eigen::Quaterniond q = Eigen::Quaterniond(s.q(3), s.q(0), s.q(1), s.q(2)).normalized();
    OracleState d;
    d.p = s.v;
    d.v = (q * Eigen::Vector3d(0, 0, a.thrust)) / rp.mass - Eigen::Vector3d(0, 0, rp.gravity);
    const Eigen::Quaterniond qd = Eigen::Quaterniond(s.q(3), s.q(0), s.q(1), s.q(2)) *
                                  Eigen::Quaterniond(0.0, s.w.x(), s.w.y(), s.w.z());
    d.q = 0.5 * Eigen::Vector4d(qd.x(), qd.y(), qd.z(), qd.w());
    const Eigen::Vector3d J = rp.inertia;
    const Eigen::Vector3d h = -s.w.cross(J.cwiseProduct(s.w));
    d.w = {(h.x() + a.tau_x) / J.x(), (h.y() + a.tau_y) / J.y(), h.z() / (J.z() + rp.yaw_damping)};
    return d;
}

OracleState oracle_rk4(const OracleState& s, const Action& a, const RobotParams& rp, double h) {
    auto add = [](const OracleState& x, const OracleState& d, double k) {
        return OracleState{x.p + k * d.p, x.v + k * d.v, x.w + k * d.w, x.q + k * d.q};
    };
    const OracleState k1 = oracle_deriv(s, a, rp);
    const OracleState k2 = oracle_deriv(add(s, k1, h / 2), a, rp);
    const OracleState k3 = oracle_deriv(add(s, k2, h / 2), a, rp);
    const OracleState k4 = oracle_deriv(add(s, k3, h), a, rp);
    OracleState out{s.p + h / 6 * (k1.p + 2 * k2.p + 2 * k3.p + k4.p), s.v + h / 6 * (k1.v + 2 * k2.v + 2 * k3.v + k4.v),
                    s.w + h / 6 * (k1.w + 2 * k2.w + 2 * k3.w + k4.w), s.q + h / 6 * (k1.q + 2 * k2.q + 2 * k3.q + k4.q)};
    out.q.normalize();
    return out;
}

}  // namespace

TEST(Quaternion, MultiplyMatchesEigen) {
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const Quat a = random_unit(rng), b = random_unit(rng);
        const Quat ours = quat_multiply(a, b);
        const Eigen::Quaterniond ref = to_eigen(a) * to_eigen(b);
        EXPECT_NEAR(ours.x, ref.x(), 1e-14);
        EXPECT_NEAR(ours.y, ref.y(), 1e-14);
        EXPECT_NEAR(ours.z, ref.z(), 1e-14);
        EXPECT_NEAR(ours.w, ref.w(), 1e-14);
    }
}

TEST(Quaternion, RotationMatrixMatchesAngleAxis) {
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        const Quat q = random_unit(rng);
        const Eigen::Matrix3d ref = to_eigen(q).toRotationMatrix();
        EXPECT_LT((quat_to_rotmatrix(q) - ref).cwiseAbs().maxCoeff(), 1e-14);
    }
    const Eigen::Matrix3d rx = quat_to_rotmatrix(euler_to_quat(std::numbers::pi / 2, 0.0, 0.0));
    EXPECT_NEAR(rx(2, 1), 1.0, 1e-15);  // body y maps to world z
}

TEST(Quaternion, RotationMatrixRejectsNonUnit) {
    EXPECT_THROW(quat_to_rotmatrix(Quat{0.0, 0.0, 0.0, 1.1}), std::invalid_argument);
    EXPECT_NO_THROW(quat_to_rotmatrix(Quat{0.0, 0.0, 0.0, 1.0 + 5e-7}));
}

TEST(Quaternion, EulerMatchesZyxComposition) {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const double roll = rng.uniform(-3.0, 3.0), pitch = rng.uniform(-1.5, 1.5), yaw = rng.uniform(-3.0, 3.0);
        const Eigen::Quaterniond ref = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
                                       Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
                                       Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX());
        const Quat q = euler_to_quat(roll, pitch, yaw);
        EXPECT_LT((quat_to_rotmatrix(q) - ref.toRotationMatrix()).cwiseAbs().maxCoeff(), 1e-13);
        const Euler e = quat_to_euler(q);
        EXPECT_NEAR(e.roll, roll, 1e-9);
        EXPECT_NEAR(e.pitch, pitch, 1e-9);
        EXPECT_NEAR(e.yaw, yaw, 1e-9);
        EXPECT_FALSE(e.gimbal);
    }
}

TEST(Quaternion, GimbalFlag) {
    EXPECT_TRUE(quat_to_euler(euler_to_quat(0.2, std::numbers::pi / 2, 0.1)).gimbal);
    EXPECT_TRUE(quat_to_euler(euler_to_quat(0.0, -std::numbers::pi / 2 + 1e-6, 0.0)).gimbal);
    EXPECT_FALSE(quat_to_euler(euler_to_quat(0.0, std::numbers::pi / 2 - 1e-3, 0.0)).gimbal);
}

TEST(Quaternion, EulerOfIdentityIsZero) {
    const Euler e = quat_to_euler(Quat::identity());
    EXPECT_EQ(e.roll, 0.0);
    EXPECT_EQ(e.pitch, 0.0);
    EXPECT_EQ(e.yaw, 0.0);
}

TEST(StateLayout, ArrayRoundTrip) {
    State s;
    s.pos = {1, 2, 3};
    s.att = {0.1, 0.2, 0.3, 0.9};
    s.vel = {4, 5, 6};
    s.rate = {7, 8, 9};
    const State::Array a = s.to_array();
    EXPECT_EQ(a[3], 0.1);
    EXPECT_EQ(a[6], 0.9);
    EXPECT_EQ(a[12], 9.0);
    EXPECT_EQ(State::from_array(a), s);
}

TEST(Dynamics, HoverIsFixedPoint) {
    const RobotParams rp;
    State s;
    s.pos = {0.1, -0.2, 0.05};
    for (int t = 0; t < 1000; ++t) {
        const State next = step_dynamics(s, rp.nominal_action(), {}, rp);
        const auto a = s.to_array(), b = next.to_array();
        for (int i = 0; i < State::kDim; ++i) ASSERT_LE(std::abs(a[i] - b[i]), 1e-12);
        s = next;
    }
}

TEST(Dynamics, FreeFallOneStepUsesOldVelocity) {
    const RobotParams rp;
    State s;
    s.vel = {0.3, 0.0, -0.1};
    const State n = step_dynamics(s, Action{0.0, 0.0, 0.0}, {}, rp);
    EXPECT_DOUBLE_EQ(n.pos.x(), 0.3 * kControlDt);
    EXPECT_DOUBLE_EQ(n.pos.z(), -0.1 * kControlDt);
    EXPECT_DOUBLE_EQ(n.vel.z(), -0.1 - rp.gravity * kControlDt);
}

TEST(Dynamics, DerivativeMatchesOracle) {
    Rng rng(6);
    RobotParams rp;
    rp.inertia = {2.5e-8, 3.5e-8, 5e-8};
    for (int i = 0; i < 50; ++i) {
        State s;
        s.att = random_unit(rng);
        s.vel = {rng.normal(), rng.normal(), rng.normal()};
        s.rate = {rng.normal() * 5, rng.normal() * 5, rng.normal() * 5};
        const Action a{rng.uniform(0, rp.thrust_max), rng.uniform(-1, 1) * 1e-6, rng.uniform(-1, 1) * 1e-6};
        const StateDerivative d = derivative(s, a, {}, rp);
        const OracleState o = oracle_deriv({s.pos, s.vel, s.rate, {s.att.x, s.att.y, s.att.z, s.att.w}}, a, rp);
        EXPECT_LT((d.dvel - o.v).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((d.drate - o.w).cwiseAbs().maxCoeff(), 1e-6 * o.w.cwiseAbs().maxCoeff() + 1e-12);
        EXPECT_NEAR(d.datt.w, o.q(3), 1e-12);
        EXPECT_NEAR(d.datt.x, o.q(0), 1e-12);
    }
}

TEST(Dynamics, DisturbanceEntersLinearly) {
    const RobotParams rp;
    Disturbance dist;
    dist.force = {1e-5, -2e-5, 3e-5};
    dist.tau_x = 1e-7;
    const StateDerivative d = derivative(State{}, rp.nominal_action(), dist, rp);
    EXPECT_NEAR(d.dvel.x(), 1e-5 / rp.mass, 1e-12);
    EXPECT_NEAR(d.dvel.z(), 3e-5 / rp.mass, 1e-12);
    EXPECT_NEAR(d.drate.x(), 1e-7 / rp.inertia.x(), 1e-9);
}

TEST(Dynamics, Rk4OracleAgreementOverFiveSeconds) {
    const RobotParams rp;
    State s;
    s.att = euler_to_quat(1e-3, 0.0, 0.0);
    OracleState o{s.pos, s.vel, s.rate, {s.att.x, s.att.y, s.att.z, s.att.w}};
    for (int t = 0; t < 5000; ++t) s = step_dynamics(s, rp.nominal_action(), {}, rp);
    for (int t = 0; t < 50000; ++t) o = oracle_rk4(o, rp.nominal_action(), rp, 1e-4);
    const auto a = s.to_array();
    const std::array<double, 13> b{o.p.x(), o.p.y(), o.p.z(), o.q(0), o.q(1), o.q(2), o.q(3),
                                   o.v.x(), o.v.y(), o.v.z(), o.w.x(), o.w.y(), o.w.z()};
    for (int i = 0; i < 13; ++i) EXPECT_LE(std::abs(a[i] - b[i]), 1e-4) << "component " << i;
}

TEST(Dynamics, LibraryRk4MatchesOracle) {
    const RobotParams rp;
    State s;
    s.att = euler_to_quat(0.1, -0.05, 0.3);
    s.rate = {1.0, -2.0, 0.5};
    OracleState o{s.pos, s.vel, s.rate, {s.att.x, s.att.y, s.att.z, s.att.w}};
    const Action a{rp.nominal_thrust() * 1.1, 1e-8, -1e-8};
    for (int t = 0; t < 100; ++t) {
        s = rk4_step(s, a, {}, rp, 1e-3);
        o = oracle_rk4(o, a, rp, 1e-3);
    }
    EXPECT_LT((s.pos - o.p).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((s.rate - o.w).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Dynamics, QuaternionStaysUnit) {
    const RobotParams rp;
    Rng rng(7);
    State s;
    s.rate = {30, -20, 10};
    for (int t = 0; t < 3000; ++t) {
        s = step_dynamics(s, Action{rp.nominal_thrust(), rng.uniform(-1e-7, 1e-7), rng.uniform(-1e-7, 1e-7)}, {}, rp);
        s.pos.setZero();
        s.vel.setZero();
        ASSERT_LE(std::abs(s.att.norm() - 1.0), 1e-12);
    }
}

TEST(Dynamics, YawRateNeverGrowsUnderDamping) {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        RobotParams rp;
        rp.yaw_damping = rng.uniform(1e-8, 1e-5);
        State s;
        s.rate.z() = rng.uniform(0.1, 10.0);
        double prev = s.rate.z();
        for (int t = 0; t < 2000; ++t) {
            s = step_dynamics(s, rp.nominal_action(), {}, rp);
            ASSERT_LE(std::abs(s.rate.z()), prev);
            prev = std::abs(s.rate.z());
        }
    }
}

TEST(Dynamics, LargeYawDampingSlowsYawAcceleration) {
    RobotParams a, b;
    a.inertia = {2e-8, 4e-8, 5e-8};
    a.yaw_damping = 0.0;
    b = a;
    b.yaw_damping = 1e-4;
    State s;
    s.rate = {3.0, 2.0, 0.0};
    EXPECT_GT(std::abs(derivative(s, a.nominal_action(), {}, a).drate.z()),
              100.0 * std::abs(derivative(s, b.nominal_action(), {}, b).drate.z()));
}

TEST(Dynamics, SaturationClamps) {
    const RobotParams rp;
    const Action s = saturate(Action{-1.0, 1.0, -1.0}, rp);
    EXPECT_EQ(s.thrust, 0.0);
    EXPECT_EQ(s.tau_x, rp.torque_max);
    EXPECT_EQ(s.tau_y, -rp.torque_max);
    const State a = step_dynamics(State{}, Action{10.0, 0, 0}, {}, rp);
    const State b = step_dynamics(State{}, Action{rp.thrust_max, 0, 0}, {}, rp);
    EXPECT_EQ(a, b);
}

TEST(Dynamics, BlowupThrows) {
    const RobotParams rp;
    State s;
    s.vel.x() = std::numeric_limits<double>::infinity();
    EXPECT_THROW(step_dynamics(s, rp.nominal_action(), {}, rp), IntegrationBlowup);
    EXPECT_THROW(step_dynamics(State{}, rp.nominal_action(), {}, rp, 0.0), std::invalid_argument);
}

TEST(Dynamics, RobotParamsValidate) {
    RobotParams rp;
    EXPECT_NO_THROW(rp.validate());
    rp.mass = 0.0;
    EXPECT_THROW(rp.validate(), std::invalid_argument);
    rp = RobotParams{};
    rp.inertia.y() = -1.0;
    EXPECT_THROW(rp.validate(), std::invalid_argument);
}

TEST(PhysicsSuite, AllChecksPass) {
    for (const auto& r : physics_suite(RobotParams{})) EXPECT_TRUE(r.pass) << r.name << " " << r.value;
}
