#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "softfly/dynamics.hpp"
#include "softfly/rng.hpp"

namespace softfly {

/// Fully connected network 13 -> 32 -> 32 -> out with arctan hidden units.
///
/// Inputs are normalized as (x - in_shift) / in_scale and the raw output y is
/// mapped to physical units as out_shift + out_scale * y. A policy network
/// (out = 3) also carries a state-independent log standard deviation, in
/// the scaled action space.
struct MlpParams {
    static constexpr int kInputs = State::kDim;
    static constexpr int kHidden = 32;

    std::vector<int> layer_sizes;  // {13, 32, 32, out}
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    Eigen::VectorXd in_shift;
    Eigen::VectorXd in_scale;
    Eigen::VectorXd out_shift;
    Eigen::VectorXd out_scale;
    Eigen::VectorXd log_std;  // empty for value networks

    // provenance
    std::string stage = "init";  // init | bc | ppo | value
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;

    int outputs() const { return layer_sizes.empty() ? 0 : layer_sizes.back(); }
    bool is_policy() const { return log_std.size() > 0; }

    /// Number of trainable scalars (weights, biases, log_std).
    Eigen::Index parameter_count() const;
    Eigen::VectorXd flatten() const;
    void unflatten(const Eigen::VectorXd& flat);

    /// Throws std::invalid_argument on shape mismatch or non-finite values.
    void validate() const;
};

/// Policy net: zero output maps to the nominal action; log_std set to
/// `init_log_std`. Output layer starts small so the fresh policy hovers.
MlpParams make_policy(const RobotParams& nominal, Rng& rng, double init_log_std = -1.0,
                      double action_scale_fraction = 0.2);
MlpParams make_value(Rng& rng, double out_shift = 0.0, double out_scale = 1.0);

/// Per-dimension minimum input scale (position, quaternion, velocity, rate).
Eigen::VectorXd input_scale_floor();

/// Sets the input normalization from the mean and standard deviation of the
/// given states, with the standard deviation floored per dimension.
void fit_input_normalization(MlpParams& params, std::span<const State::Array> states);

/// Raw network output y (scaled units).
Eigen::VectorXd forward_scaled(const MlpParams& params, const State::Array& s);
/// Batched: states are columns (13 x B), result is out x B.
Eigen::MatrixXd forward_scaled(const MlpParams& params, const Eigen::MatrixXd& states);

/// Policy mean in physical units.
Action policy_mean(const MlpParams& policy, const State& s);
double value_of(const MlpParams& value, const State& s);

/// Scaled action (a - out_shift) / out_scale.
Eigen::Vector3d scale_action(const MlpParams& policy, const Action& a);
Action unscale_action(const MlpParams& policy, const Eigen::Vector3d& y);

/// Diagonal Gaussian log density of `a`, evaluated in scaled action space.
double log_prob(const MlpParams& policy, const State& s, const Action& a);
double gaussian_log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std, const Eigen::VectorXd& y);
double gaussian_entropy(const Eigen::VectorXd& log_std);

// ---------------------------------------------------------------------------
// Losses and exact gradients. All losses are means over the batch; the
// returned gradient is a flat vector in MlpParams::flatten() order.

struct LossGrad {
    double loss = 0.0;
    Eigen::VectorXd grad;
};

class NonFiniteGradient : public std::runtime_error {
public:
    NonFiniteGradient(int layer, const std::string& what);
    int layer() const { return layer_; }

private:
    int layer_;
};

/// Behaviour-cloning negative log-likelihood. `states` is 13 x B, `actions`
/// 3 x B in physical units.
LossGrad bc_nll(const MlpParams& policy, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions);

struct PpoBatchView {
    const Eigen::MatrixXd* states = nullptr;      // 13 x B
    const Eigen::MatrixXd* actions = nullptr;     // 3 x B, scaled units (pre-clamp sample)
    const Eigen::VectorXd* old_log_prob = nullptr;
    const Eigen::VectorXd* advantages = nullptr;
};

struct PpoLossStats {
    double surrogate = 0.0;   // mean clipped objective (to maximize)
    double entropy = 0.0;
    double approx_kl = 0.0;   // mean (old - new) log prob
    double clip_fraction = 0.0;
};

/// Clipped-surrogate policy loss minus entropy bonus.
LossGrad ppo_policy_loss(const MlpParams& policy, const PpoBatchView& batch, double clip_eps,
                         double entropy_weight, PpoLossStats* stats = nullptr);

/// Clipped-surrogate contribution min(rho A, clip(rho, 1-eps, 1+eps) A).
double clipped_objective(double ratio, double advantage, double clip_eps);

/// 0.5 * mean(((v - target) / out_scale)^2); targets in physical units.
LossGrad value_loss(const MlpParams& value, const Eigen::MatrixXd& states, const Eigen::VectorXd& targets);

// ---------------------------------------------------------------------------

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long step_count = 0;

    /// In-place descent step on `params` (flat) with gradient `grad`.
    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
};

/// Scales `grad` so its 2-norm is at most `max_norm`; returns the pre-clip norm.
double clip_grad_norm(Eigen::VectorXd& grad, double max_norm);

// ---------------------------------------------------------------------------

/// Binary checkpoint, version byte first after the magic.
void save_checkpoint(const MlpParams& params, const std::string& path);
/// Throws FormatError on a bad header, version or topology; nothing is
/// returned in that case. `expected_outputs` of 0 accepts any head.
MlpParams load_checkpoint(const std::string& path, int expected_outputs = 0);

std::uint64_t hash_params(const MlpParams& params);

}  // namespace softfly
