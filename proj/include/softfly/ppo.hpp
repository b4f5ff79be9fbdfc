#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "softfly/bc.hpp"
#include "softfly/eval.hpp"

namespace softfly {

struct PpoConfig {
    std::int64_t total_steps = 20'000'000;
    int rollout_steps = 20000;  // per update, split evenly across envs
    int minibatch = 2000;
    int epochs = 4;
    double clip_eps = 0.2;
    double gamma = 0.999;
    double lambda = 1.0;
    double value_weight = 1.0;  // multiplies the value-loss gradient
    double entropy_weight = 1e-4;
    double learning_rate = 3e-4;        // policy
    double value_learning_rate = 1e-3;  // value net
    bool anneal_lr = true;  // linear decay of both learning rates to zero over total_steps
    double max_grad_norm = 1.0;
    double target_kl = 0.03;  // epochs stop once the mean KL of an epoch exceeds this
    int envs = 40;
    std::optional<double> init_log_std = -3.0;  // replaces the BC log_std when set
    /// Value net input is the simulator state after the queued delayed
    /// commands have executed instead of the observed state.
    bool settled_critic = true;
    int value_warmup_rounds = 2;         // collect + value-only fits before the first update
    int eval_every = 50;                 // iterations between validation evaluations
    int eval_episodes = 50;
    std::uint64_t eval_base_seed = 777000;
    int collapse_patience = 4;       // consecutive validation evaluations
    double collapse_fraction = 0.5;  // below baseline by this fraction of |baseline|
    std::uint64_t seed = 1;
    int threads = 1;

    void validate() const;
    int steps_per_env() const { return rollout_steps / envs; }
};

void hash_into(Fnv1a& h, const PpoConfig& c);

/// Flat per-step storage, ordered by env index then step.
struct RolloutBatch {
    Eigen::MatrixXd states;    // 13 x N
    Eigen::MatrixXd critic_states;  // 13 x N, value net inputs
    Eigen::MatrixXd actions;   // 3 x N, scaled, before clamping
    Eigen::VectorXd log_prob;  // at collection time
    Eigen::VectorXd rewards;
    Eigen::VectorXd values;       // V(s_t)
    Eigen::VectorXd next_values;  // V(s_{t+1}); 0 after a terminal failure
    std::vector<std::uint8_t> done;      // episode or segment ends after this step
    std::vector<std::uint8_t> terminal;  // failure termination
    std::vector<std::uint32_t> episode_id;
    std::vector<std::uint32_t> env_id;
    Eigen::VectorXd advantages;
    Eigen::VectorXd returns;

    std::vector<double> episode_rewards;  // episodes completed during collection
    std::int64_t clamped_actions = 0;

    std::size_t size() const { return static_cast<std::size_t>(rewards.size()); }
    std::uint64_t hash() const;
};

class RolloutError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Persistent parallel environments. Each worker owns its env and Rng,
/// resamples (domain, s0) at every episode start and carries unfinished
/// episodes over to the next collection.
class RolloutCollector {
public:
    RolloutCollector(const RandomizationRanges& ranges, const RobotParams& nominal, const RewardConfig& reward,
                     const EpisodeConfig& episode, int envs, std::uint64_t seed, bool settled_critic = false);

    /// Runs `steps_per_env` steps in every env. Throws RolloutError when
    /// every episode started in this collection fails on its first step.
    RolloutBatch collect(const MlpParams& policy, const MlpParams& value, int steps_per_env, int threads);

    /// Advances worker w by w * horizon / envs discarded steps so episode
    /// boundaries are spread over later batches.
    void stagger(const MlpParams& policy, int threads);

private:
    struct Worker;
    RandomizationRanges ranges_;
    RobotParams nominal_;
    RewardConfig reward_;
    EpisodeConfig episode_;
    bool settled_critic_ = false;
    std::vector<std::shared_ptr<Worker>> workers_;
};

/// One-shot collection with fresh environments.
RolloutBatch collect_rollouts(const MlpParams& policy, const MlpParams& value, const RandomizationRanges& ranges,
                              const RobotParams& nominal, const RewardConfig& reward, const EpisodeConfig& episode,
                              const PpoConfig& cfg, std::uint64_t seed);

/// delta_t = r_t + gamma V(s_{t+1}) - V(s_t) with V(s_{t+1}) taken from
/// next_values; A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}.
/// Returns are A + V. Advantages are left unnormalized.
void compute_gae(RolloutBatch& batch, double gamma, double lambda);

/// Mean 0, unit standard deviation; unchanged when the std is zero.
void normalize_advantages(Eigen::VectorXd& adv);

struct PpoUpdateStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
    int epochs_run = 0;
    bool kl_early_stop = false;
};

struct PpoState {
    MlpParams policy;
    MlpParams value;
    Adam policy_opt;
    Adam value_opt;
};

/// Clipped-surrogate epochs over the batch. Normalizes a copy of the
/// advantages; the policy and value nets are updated independently.
PpoUpdateStats ppo_update(PpoState& state, const RolloutBatch& batch, const PpoConfig& cfg, Rng& rng);

/// Value-only regression on the batch returns.
double fit_value(PpoState& state, const RolloutBatch& batch, const PpoConfig& cfg, Rng& rng, int epochs);

struct PpoIteration {
    int iteration = 0;
    std::int64_t steps = 0;
    double median_reward = 0.0;  // episodes completed in this iteration; NaN if none
    double std_reward = 0.0;
    double clip_fraction = 0.0;
    double approx_kl = 0.0;
    double eval_median = 0.0;  // NaN when no evaluation ran
    double value_loss = 0.0;
    double entropy = 0.0;
    double explained_variance = 0.0;  // of the returns by the value net, before the update
    int episodes = 0;
    int failures = 0;  // failure terminations during collection
    bool kl_early_stop = false;
};

struct PpoResult {
    MlpParams policy;  // best by validation median
    MlpParams value;
    std::vector<PpoIteration> curve;
    double initial_eval_median = 0.0;
    double best_eval_median = 0.0;
    int best_iteration = 0;
    std::int64_t steps = 0;
};

class PpoCollapse : public TrainingAbort {
public:
    PpoCollapse(const std::string& what, MlpParams last_good, std::vector<PpoIteration> curve)
        : TrainingAbort(what), last_good_(std::move(last_good)), curve_(std::move(curve)) {}
    const MlpParams& last_good() const { return last_good_; }
    const std::vector<PpoIteration>& curve() const { return curve_; }

private:
    MlpParams last_good_;
    std::vector<PpoIteration> curve_;
};

/// Validation protocol used for best-by-eval selection.
EvalProtocol ppo_validation_protocol(const PpoConfig& cfg, const RandomizationRanges& ranges,
                                     const EpisodeConfig& episode);

/// Fine-tunes `init` with PPO in the delayed randomized environment. Throws
/// PpoCollapse when the validation median stays below the starting policy
/// by more than collapse_fraction for collapse_patience evaluations.
PpoResult train_ppo(const MlpParams& init, const RandomizationRanges& ranges, const RobotParams& nominal,
                    const RewardConfig& reward, const EpisodeConfig& episode, const PpoConfig& cfg);

/// One row per iteration; a nonzero `config_hash` becomes a leading comment line.
void write_curve_csv(const std::vector<PpoIteration>& curve, const std::string& path, std::uint64_t config_hash = 0);

struct SweepEntry {
    RewardConfig reward;
    std::uint64_t reward_hash = 0;
    PpoResult result;
    EvalReport report;  // scored under the base reward
    std::string error;  // set when training aborted
};

/// Trains one PPO policy per reward configuration and evaluates each under
/// `score_reward` on the same protocol.
std::vector<SweepEntry> run_reward_sweep(const MlpParams& init, const std::vector<RewardConfig>& grid,
                                         const RewardConfig& score_reward, const RandomizationRanges& ranges,
                                         const RobotParams& nominal, const EpisodeConfig& episode,
                                         const PpoConfig& cfg, const EvalProtocol& protocol);

std::uint64_t hash_reward(const RewardConfig& rc);
nlohmann::json sweep_to_json(const std::vector<SweepEntry>& entries, std::uint64_t config_hash);

}  // namespace softfly
