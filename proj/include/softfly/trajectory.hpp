#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "softfly/env.hpp"

namespace softfly {

/// Memoryless state-feedback controller. Must be safe to call concurrently.
using Controller = std::function<Action(const State&)>;

/// s_0, a_0, s_1, ..., s_T with the commanded actions and per-step rewards.
struct Trajectory {
    std::vector<State> states;
    std::vector<Action> actions;   // commanded
    std::vector<Action> executed;  // after the delay line
    std::vector<double> rewards;
    DomainSample domain;
    std::uint64_t seed = 0;
    bool failed = false;

    std::size_t steps() const { return actions.size(); }
    double total_reward() const;
};

/// Runs one episode of `controller` in the delayed environment. The initial
/// state is only required to lie inside the termination envelope.
Trajectory run_episode(const Controller& controller, const DomainSample& domain, const State& s0,
                       const RewardConfig& reward, const EpisodeConfig& episode, std::uint64_t seed = 0);

}  // namespace softfly
