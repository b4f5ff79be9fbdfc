#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softfly/dynamics.hpp"

namespace softfly {

struct CheckResult {
    std::string name;
    bool pass = false;
    double value = 0.0;      // measured error or count
    double tolerance = 0.0;
    std::string detail;
};

bool all_pass(const std::vector<CheckResult>& results);

/// Classical RK4 step of the continuous dynamics with the action saturated
/// once and the quaternion renormalized after the step.
State rk4_step(const State& s, const Action& a, const Disturbance& dist, const RobotParams& rp, double dt);

/// Hover fixed point, free-fall Euler semantics, quaternion norm, RK4
/// agreement over 5 s and yaw-rate decay.
std::vector<CheckResult> physics_suite(const RobotParams& rp);

/// Central finite differences against the analytic gradients of the BC NLL,
/// PPO surrogate and value losses on `configs` random networks and batches.
std::vector<CheckResult> gradient_suite(int configs = 10, std::uint64_t seed = 1);

/// Index-encoded synthetic trajectories through rematch for d in {0, 1, 2, 17}.
std::vector<CheckResult> rematch_suite();

}  // namespace softfly
