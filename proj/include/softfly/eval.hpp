#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "softfly/mlp.hpp"
#include "softfly/trajectory.hpp"

namespace softfly {

/// Benchmark protocol: every controller evaluated under the same protocol
/// sees the same (domain, s0) sequence.
struct EvalProtocol {
    int episodes = 100;
    int horizon = 5000;  // control steps
    std::uint64_t base_seed = 20240;
    std::vector<std::uint64_t> seeds;  // explicit list; empty derives `episodes` seeds from base_seed
    RandomizationRanges ranges;
    bool deterministic = true;  // use the policy mean
    double settle_s = 1.0;      // RMSE is computed after this time
    int threads = 1;

    void validate() const;
    /// Explicit seeds if given, otherwise derived from base_seed.
    std::vector<std::uint64_t> episode_seeds() const;
};

std::uint64_t hash_protocol(const EvalProtocol& p, const EpisodeConfig& episode, const RewardConfig& reward);

/// Domain and initial state for episode seed `seed`.
struct EpisodeSample {
    DomainSample domain;
    State s0;
};
EpisodeSample draw_episode(const EvalProtocol& p, const RobotParams& nominal, const EpisodeConfig& episode,
                           std::uint64_t seed);
std::uint64_t hash_sample(const EpisodeSample& s);

/// RMS of thrust first differences, in newtons.
double fluctuation_metric(const Trajectory& traj);

struct RmseMetrics {
    double lateral = 0.0;
    double altitude = 0.0;
};
RmseMetrics rmse_metrics(const Trajectory& traj, double settle_s);

/// Box-plot statistics. Quartiles interpolate linearly between order
/// statistics; whiskers are the extreme values within 1.5 IQR of the box.
struct BoxStats {
    std::size_t n = 0;
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double whisker_low = 0.0;
    double whisker_high = 0.0;
    std::vector<double> outliers;  // ascending
};
double quantile(std::vector<double> values, double q);
BoxStats box_stats(const std::vector<double>& values);

struct EpisodeRecord {
    std::uint64_t seed = 0;
    std::uint64_t sample_hash = 0;
    double total_reward = 0.0;
    bool failed = false;
    int steps = 0;
    double fluctuation = 0.0;
    double lateral_rmse = 0.0;
    double altitude_rmse = 0.0;
};

struct EvalReport {
    static constexpr int kVersion = 1;

    std::string controller;  // expert | bc | ppo | free-form tag
    std::uint64_t checkpoint_hash = 0;
    std::uint64_t protocol_hash = 0;
    std::uint64_t config_hash = 0;
    std::vector<EpisodeRecord> episodes;

    std::vector<double> rewards() const;
    std::vector<double> fluctuations() const;
    BoxStats reward_stats() const;
    double mean_fluctuation() const;
    int failures() const;
};

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
void write_report(const EvalReport& r, const std::string& path);
EvalReport read_report(const std::string& path);

/// Builds the controller for one episode; `seed` feeds any action sampling.
using ControllerFactory = std::function<Controller(std::uint64_t seed)>;

ControllerFactory fixed_controller(Controller c);
/// Policy mean when `deterministic`, otherwise Gaussian samples clamped to
/// the actuator limits of `nominal`.
ControllerFactory policy_controller(const MlpParams& policy, const RobotParams& nominal, bool deterministic);

EvalReport evaluate(const ControllerFactory& factory, const EvalProtocol& protocol, const RobotParams& nominal,
                    const RewardConfig& reward, const EpisodeConfig& episode, const std::string& tag = "");

/// Single episode under the protocol, for trajectory export.
Trajectory rollout_episode(const Controller& controller, const EvalProtocol& protocol, const RobotParams& nominal,
                           const RewardConfig& reward, const EpisodeConfig& episode, std::uint64_t seed);

/// `t_ms, x, y, z, qx, qy, qz, qw, vx, vy, vz, p, q, r, F, tau_x, tau_y, reward`;
/// row t holds s_t, the action commanded at t and the reward of that step.
/// A nonzero `config_hash` is written first as a `# config_hash=` comment line.
void write_trajectory_csv(const Trajectory& traj, const std::string& path, std::uint64_t config_hash = 0);

class SeedMismatchError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Paired bootstrap of the median difference median(b) - median(a).
struct MedianDelta {
    double delta = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double ci_width() const { return ci_high - ci_low; }
    /// |delta| larger than the width of the 95% interval.
    bool significant() const;
};
MedianDelta paired_median_delta(const EvalReport& a, const EvalReport& b, int resamples = 2000,
                                std::uint64_t seed = 7);

/// Throws SeedMismatchError unless both reports were drawn from the same
/// episode samples in the same order.
void require_paired(const EvalReport& a, const EvalReport& b);

struct Comparison {
    std::vector<std::string> names;
    std::vector<BoxStats> stats;
    std::vector<double> mean_fluctuation;
    std::vector<double> axis;  // sweep axis value per report, empty if untagged
    std::string axis_name;
    /// deltas[i][j] = median(j) - median(i), with bootstrap interval.
    std::vector<std::vector<MedianDelta>> deltas;

    /// Medians strictly increasing in report order with every adjacent gap significant.
    bool ordered_increasing() const;
    /// Every mean within `fraction` of the mean of report `reference`.
    bool means_within_band(std::size_t reference, double fraction) const;
};

Comparison compare_reports(const std::vector<EvalReport>& reports, const std::vector<std::string>& names,
                           const std::vector<double>& axis = {}, const std::string& axis_name = "");
nlohmann::json to_json(const Comparison& c);
void write_comparison(const Comparison& c, const std::string& csv_path, const std::string& json_path);

}  // namespace softfly
