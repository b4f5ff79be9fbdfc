#pragma once

#include <cstdint>
#include <vector>

#include "softfly/dynamics.hpp"
#include "softfly/rng.hpp"

namespace softfly {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const { return lo <= v && v <= hi; }
    double width() const { return hi - lo; }
};

/// Per-episode randomization bounds. Mass and inertia intervals are
/// multiplicative factors on the nominal robot; disturbance and delay
/// intervals are absolute.
struct RandomizationRanges {
    Interval mass_factor{0.9, 1.1};
    Interval ixx_factor{0.75, 1.25};
    Interval iyy_factor{0.75, 1.25};
    Interval force_magnitude{0.0, 0.02 * 720e-6 * 9.81};  // N, direction uniform on the sphere
    Interval torque_x{-2e-7, 2e-7};                       // N m
    Interval torque_y{-2e-7, 2e-7};                       // N m
    Interval delay_ms{15.0, 20.0};                        // integer steps at 1 kHz
    double scale = 1.0;

    /// Ranges with `scale` folded in: factor intervals stretch about 1,
    /// disturbance intervals about 0 and the delay interval about its
    /// midpoint (rounded outward, clamped to [0, 50] ms). Result has scale 1.
    RandomizationRanges effective() const;

    /// Zero-width ranges at the nominal robot with no disturbance and the
    /// given delay.
    static RandomizationRanges degenerate(int delay_ms = 0);

    void validate() const;
};

struct DomainSample {
    RobotParams robot;
    Disturbance dist;
    int delay_steps = 0;
};

DomainSample sample_domain(const RandomizationRanges& ranges, const RobotParams& nominal, Rng& rng);

/// Hash of every drawn quantity, used to check that paired evaluations saw
/// identical episodes.
std::uint64_t hash_domain(const DomainSample& d);

/// Fixed-length action FIFO modelling the actuation and communication delay.
class DelayBuffer {
public:
    DelayBuffer() = default;
    DelayBuffer(int length, const Action& fill);

    /// Pushes the newly commanded action and returns the one that leaves the
    /// buffer, i.e. the command issued `length()` steps earlier.
    Action push_pop(const Action& commanded);

    int length() const { return static_cast<int>(slots_.size()); }
    /// Queued commands, next to execute first.
    std::vector<Action> pending() const;
    std::uint64_t pushes() const { return pushes_; }
    std::uint64_t pops() const { return pops_; }

private:
    std::vector<Action> slots_;
    std::size_t head_ = 0;
    std::uint64_t pushes_ = 0;
    std::uint64_t pops_ = 0;
};

struct RewardConfig {
    // state weights
    double k_p = 1000.0;
    double k_e = 20.0;
    double k_v = 25.0;
    double k_w = 0.056;
    // first-difference weights
    double k_ff = 2.5e6;
    double k_txf = 2.5e12;
    double k_tyf = 2.5e12;
    // deviation-from-nominal weights
    double k_f = 1e3;
    double k_tx = 1e9;
    double k_ty = 1e9;

    void validate() const;
};

struct RewardTerms {
    double state = 0.0;
    double fluctuation = 0.0;
    double nominal = 0.0;
    bool gimbal = false;
    double total() const { return state + fluctuation + nominal; }
};

/// Per-step reward split into its three penalty groups. Yaw and yaw rate
/// never enter. `rp` supplies the hover thrust of the simulated robot.
RewardTerms reward_terms(const State& s, const Action& a, const Action& a_prev,
                         const RewardConfig& cfg, const RobotParams& rp);

/// Total per-step reward, always <= 0. A gimbal-locked state returns
/// `failure_reward` instead.
double compute_reward(const State& s, const Action& a, const Action& a_prev,
                      const RewardConfig& cfg, const RobotParams& rp,
                      double failure_reward = 0.0);

struct EpisodeConfig {
    int horizon = 5000;
    // initial-state sampling
    Eigen::Vector3d init_pos{0.03, 0.03, 0.03};  // half-widths, m
    double init_tilt = 0.15;                     // rad, cone half-angle
    Eigen::Vector3d init_vel{0.05, 0.05, 0.05};  // m/s
    Eigen::Vector3d init_rate{0.5, 0.5, 0.0};    // rad/s
    // termination envelope
    double max_position = 0.5;  // m, norm
    double max_tilt = 1.3962634015954636;  // 80 deg, roll and pitch each

    void validate() const;
    bool in_init_ranges(const State& s, double tol = 1e-9) const;
};

State sample_initial_state(const EpisodeConfig& cfg, Rng& rng);

// Field-by-field hashing used for config and protocol hashes.
void hash_into(Fnv1a& h, const RobotParams& rp);
void hash_into(Fnv1a& h, const RandomizationRanges& r);
void hash_into(Fnv1a& h, const RewardConfig& rc);
void hash_into(Fnv1a& h, const EpisodeConfig& ec);

/// Penalty charged for every step left in the horizon when the episode
/// leaves the envelope: the state penalty at the envelope boundary.
double worst_step_penalty(const RewardConfig& rc, const EpisodeConfig& ec);

struct StepResult {
    State obs;
    double reward = 0.0;
    bool done = false;
    bool failed = false;
    Action executed;
};

/// Episodic environment around the delayed closed loop. One instance is
/// stepped by one caller at a time.
class DelayedEnv {
public:
    DelayedEnv(RewardConfig reward, EpisodeConfig episode);

    /// Throws std::invalid_argument when s0 lies outside the init ranges.
    State reset(const DomainSample& domain, const State& s0);
    StepResult step(const Action& commanded);

    const State& state() const { return state_; }
    const DomainSample& domain() const { return domain_; }
    const RewardConfig& reward_config() const { return reward_; }
    const EpisodeConfig& episode_config() const { return episode_; }
    int steps_taken() const { return t_; }
    const DelayBuffer& buffer() const { return buffer_; }
    /// State reached once every queued command has executed, with no new
    /// commands applied in between. Equals state() without delay.
    State settled_state() const;
    bool done() const { return done_; }
    const Action& previous_command() const { return prev_cmd_; }

    /// Skip the init-range check on reset (used for diagnostics and tests).
    void set_strict_reset(bool strict) { strict_reset_ = strict; }

private:
    RewardConfig reward_;
    EpisodeConfig episode_;
    DomainSample domain_;
    DelayBuffer buffer_;
    State state_;
    Action prev_cmd_;
    int t_ = 0;
    bool done_ = true;
    bool strict_reset_ = true;
    double worst_step_ = 0.0;
};

}  // namespace softfly
