#include "softfly/trajectory.hpp"

#include <numeric>

namespace softfly {

double Trajectory::total_reward() const { return std::accumulate(rewards.begin(), rewards.end(), 0.0); }

Trajectory run_episode(const Controller& controller, const DomainSample& domain, const State& s0,
                       const RewardConfig& reward, const EpisodeConfig& episode, std::uint64_t seed) {
    DelayedEnv env(reward, episode);
    env.set_strict_reset(false);
    Trajectory traj;
    traj.domain = domain;
    traj.seed = seed;
    const auto horizon = static_cast<std::size_t>(episode.horizon);
    traj.states.reserve(horizon + 1);
    traj.actions.reserve(horizon);
    traj.executed.reserve(horizon);
    traj.rewards.reserve(horizon);

    State s = env.reset(domain, s0);
    traj.states.push_back(s);
    while (!env.done()) {
        const Action a = controller(s);
        const StepResult r = env.step(a);
        traj.actions.push_back(a);
        traj.executed.push_back(r.executed);
        traj.rewards.push_back(r.reward);
        traj.states.push_back(r.obs);
        s = r.obs;
        traj.failed = r.failed;
    }
    return traj;
}

}  // namespace softfly
