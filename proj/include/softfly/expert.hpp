#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "softfly/trajectory.hpp"

namespace softfly {

/// Gains of the cascaded position -> attitude PD expert. Position and
/// altitude gains are in 1/s^2 and 1/s, attitude gains likewise (they are
/// multiplied by the nominal inertia to give torques).
struct ExpertGains {
    double pos_kp = 16.0;
    double pos_kd = 6.4;
    double alt_kp = 100.0;
    double alt_kd = 16.0;
    double att_kp = 1500.0;
    double att_kd = 62.0;
    double max_tilt = 0.35;  // rad

    void validate() const;
};

/// Near-hover cascaded controller designed on the nominal robot.
Action expert_policy(const State& s, const RobotParams& nominal, const ExpertGains& gains);

Controller make_expert(const RobotParams& nominal, const ExpertGains& gains);

/// Closed-loop expert rollout in the environment described by `domain`.
/// With `delayed` false the delay line is removed; disturbances stay active.
Trajectory rollout_expert(const DomainSample& domain, const State& s0, const RobotParams& nominal,
                          const ExpertGains& gains, const RewardConfig& reward, const EpisodeConfig& episode,
                          bool delayed, std::uint64_t seed = 0);

struct DemoPair {
    State::Array state{};
    Action action;
    std::uint32_t traj_id = 0;
    std::uint32_t step = 0;  // index t of the state; the action is a_{t+d}
};

class EmptyDatasetError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Pairs (s_t, a_{t+d}) for 0 <= t < T - d. Throws EmptyDatasetError when
/// the trajectory has no more than d actions.
std::vector<DemoPair> rematch(const Trajectory& traj, int delay_steps, std::uint32_t traj_id = 0);

struct DemoTrajectoryInfo {
    std::uint64_t seed = 0;
    std::int32_t delay_steps = 0;
    std::uint32_t pairs = 0;
};

struct DemoDataset {
    static constexpr std::uint32_t kVersion = 1;

    std::vector<DemoPair> pairs;
    std::vector<DemoTrajectoryInfo> trajectories;  // indexed by traj_id
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    std::int32_t fixed_delay = -1;  // -1: delay drawn per trajectory from the ranges
    std::uint32_t failed_trajectories = 0;

    std::size_t size() const { return pairs.size(); }
};

struct DemoOptions {
    std::size_t n_pairs = 20000;
    /// Re-matching offset for every trajectory; unset draws it from the
    /// delay interval of the randomization ranges.
    std::optional<int> fixed_delay;
    std::uint64_t seed = 0;
    int threads = 1;
};

/// BC ablation variants. `baseline` and `rematch` fly the nominal robot at
/// the midpoint delay (rounded down); only `rematch` and `dr` re-match.
enum class DemoVariant { baseline, rematch, dr };
DemoVariant parse_demo_variant(const std::string& name);
const char* to_string(DemoVariant v);
/// Narrows `ranges` and sets the re-matching offset for the variant.
void apply_variant(DemoVariant v, RandomizationRanges& ranges, DemoOptions& opt);

class ExpertFailureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rolls out undelayed expert trajectories on randomized domains and
/// re-matches them until `n_pairs` pairs are collected; the last trajectory
/// is truncated so the dataset holds exactly `n_pairs`.
DemoDataset build_demo_dataset(const RandomizationRanges& ranges, const RobotParams& nominal,
                               const ExpertGains& gains, const RewardConfig& reward,
                               const EpisodeConfig& episode, const DemoOptions& options);

void write_demo_dataset(const DemoDataset& ds, const std::string& path);
DemoDataset read_demo_dataset(const std::string& path);

}  // namespace softfly
