#include "softfly/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "softfly/binary_io.hpp"

namespace softfly {

namespace {

constexpr char kCkptMagic[8] = {'S', 'F', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::uint8_t kCkptVersion = 1;
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

struct ForwardCache {
    Eigen::MatrixXd input;                  // normalized
    std::vector<Eigen::MatrixXd> pre;       // pre-activations of hidden layers
    std::vector<Eigen::MatrixXd> post;      // arctan outputs of hidden layers
    Eigen::MatrixXd output;
};

Eigen::MatrixXd normalize(const MlpParams& p, const Eigen::MatrixXd& states) {
    return ((states.colwise() - p.in_shift).array().colwise() / p.in_scale.array()).matrix();
}

ForwardCache forward_cache(const MlpParams& p, const Eigen::MatrixXd& states) {
    ForwardCache c;
    c.input = normalize(p, states);
    const std::size_t n_layers = p.weights.size();
    const Eigen::MatrixXd* h = &c.input;
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
        c.pre.push_back((p.weights[l] * *h).colwise() + p.biases[l]);
        c.post.push_back(c.pre.back().array().atan().matrix());
        h = &c.post.back();
    }
    c.output = (p.weights.back() * *h).colwise() + p.biases.back();
    return c;
}

/// Backpropagates dL/dy (already including any 1/B factor) into a flat
/// gradient; `dlog_std` fills the trailing log_std block.
Eigen::VectorXd backward(const MlpParams& p, const ForwardCache& c, const Eigen::MatrixXd& dy,
                         const Eigen::VectorXd& dlog_std) {
    const std::size_t n_layers = p.weights.size();
    std::vector<Eigen::MatrixXd> dw(n_layers);
    std::vector<Eigen::VectorXd> db(n_layers);
    Eigen::MatrixXd delta = dy;
    for (std::size_t l = n_layers; l-- > 0;) {
        const Eigen::MatrixXd& h_in = l == 0 ? c.input : c.post[l - 1];
        dw[l] = delta * h_in.transpose();
        db[l] = delta.rowwise().sum();
        if (l > 0) {
            const Eigen::ArrayXXd z = c.pre[l - 1].array();
            delta = ((p.weights[l].transpose() * delta).array() / (1.0 + z * z)).matrix();
        }
    }
    Eigen::VectorXd g(p.parameter_count());
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        if (!dw[l].allFinite() || !db[l].allFinite())
            throw NonFiniteGradient(static_cast<int>(l), "non-finite gradient in layer " + std::to_string(l));
        g.segment(off, dw[l].size()) = Eigen::Map<const Eigen::VectorXd>(dw[l].data(), dw[l].size());
        off += dw[l].size();
        g.segment(off, db[l].size()) = db[l];
        off += db[l].size();
    }
    if (p.log_std.size() > 0) {
        if (!dlog_std.allFinite())
            throw NonFiniteGradient(static_cast<int>(n_layers), "non-finite gradient in log_std");
        g.segment(off, p.log_std.size()) = dlog_std;
    }
    return g;
}

void init_layers(MlpParams& p, Rng& rng, double last_gain) {
    p.weights.clear();
    p.biases.clear();
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
        const int fan_in = p.layer_sizes[l];
        const int fan_out = p.layer_sizes[l + 1];
        const bool last = l + 2 == p.layer_sizes.size();
        const double sd = (last ? last_gain : 1.0) / std::sqrt(static_cast<double>(fan_in));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = sd * rng.normal();
        p.weights.push_back(std::move(w));
        p.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
}

}  // namespace

NonFiniteGradient::NonFiniteGradient(int layer, const std::string& what)
    : std::runtime_error(what), layer_(layer) {}

Eigen::Index MlpParams::parameter_count() const {
    Eigen::Index n = log_std.size();
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

Eigen::VectorXd MlpParams::flatten() const {
    Eigen::VectorXd flat(parameter_count());
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        flat.segment(off, weights[l].size()) = Eigen::Map<const Eigen::VectorXd>(weights[l].data(), weights[l].size());
        off += weights[l].size();
        flat.segment(off, biases[l].size()) = biases[l];
        off += biases[l].size();
    }
    flat.segment(off, log_std.size()) = log_std;
    return flat;
}

void MlpParams::unflatten(const Eigen::VectorXd& flat) {
    if (flat.size() != parameter_count()) throw std::invalid_argument("MlpParams::unflatten: size mismatch");
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Eigen::Map<Eigen::VectorXd>(weights[l].data(), weights[l].size()) = flat.segment(off, weights[l].size());
        off += weights[l].size();
        biases[l] = flat.segment(off, biases[l].size());
        off += biases[l].size();
    }
    log_std = flat.segment(off, log_std.size());
}

void MlpParams::validate() const {
    if (layer_sizes.size() != 4 || layer_sizes[0] != kInputs || layer_sizes[1] != kHidden ||
        layer_sizes[2] != kHidden || layer_sizes[3] < 1)
        throw std::invalid_argument("MlpParams: topology must be 13 -> 32 -> 32 -> out");
    if (weights.size() != 3 || biases.size() != 3) throw std::invalid_argument("MlpParams: expected three layers");
    for (std::size_t l = 0; l < 3; ++l) {
        if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l] ||
            biases[l].size() != layer_sizes[l + 1])
            throw std::invalid_argument("MlpParams: layer " + std::to_string(l) + " shape mismatch");
        if (!weights[l].allFinite() || !biases[l].allFinite())
            throw std::invalid_argument("MlpParams: non-finite parameters in layer " + std::to_string(l));
    }
    const int out = layer_sizes[3];
    if (in_shift.size() != kInputs || in_scale.size() != kInputs || out_shift.size() != out ||
        out_scale.size() != out)
        throw std::invalid_argument("MlpParams: normalization constants have wrong size");
    if ((in_scale.array() <= 0.0).any() || (out_scale.array() <= 0.0).any())
        throw std::invalid_argument("MlpParams: scales must be positive");
    if (log_std.size() != 0 && log_std.size() != out) throw std::invalid_argument("MlpParams: log_std size mismatch");
    if (!log_std.allFinite() || !in_shift.allFinite() || !out_shift.allFinite())
        throw std::invalid_argument("MlpParams: non-finite constants");
}

MlpParams make_policy(const RobotParams& nominal, Rng& rng, double init_log_std, double action_scale_fraction) {
    MlpParams p;
    p.layer_sizes = {MlpParams::kInputs, MlpParams::kHidden, MlpParams::kHidden, Action::kDim};
    init_layers(p, rng, 0.01);
    p.in_shift = Eigen::VectorXd::Zero(MlpParams::kInputs);
    p.in_shift(6) = 1.0;  // q_w at hover
    p.in_scale = input_scale_floor();
    p.out_shift = Eigen::Vector3d(nominal.nominal_thrust(), 0.0, 0.0);
    p.out_scale = Eigen::Vector3d(action_scale_fraction * nominal.nominal_thrust(),
                                  action_scale_fraction * nominal.torque_max,
                                  action_scale_fraction * nominal.torque_max);
    p.log_std = Eigen::VectorXd::Constant(Action::kDim, init_log_std);
    return p;
}

MlpParams make_value(Rng& rng, double out_shift, double out_scale) {
    MlpParams p;
    p.layer_sizes = {MlpParams::kInputs, MlpParams::kHidden, MlpParams::kHidden, 1};
    init_layers(p, rng, 1.0);
    p.in_shift = Eigen::VectorXd::Zero(MlpParams::kInputs);
    p.in_shift(6) = 1.0;
    p.in_scale = input_scale_floor();
    p.out_shift = Eigen::VectorXd::Constant(1, out_shift);
    p.out_scale = Eigen::VectorXd::Constant(1, out_scale);
    p.stage = "value";
    return p;
}

Eigen::VectorXd input_scale_floor() {
    Eigen::VectorXd f(MlpParams::kInputs);
    f << 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.1, 0.1, 0.1, 1.0, 1.0, 1.0;
    return f;
}

void fit_input_normalization(MlpParams& params, std::span<const State::Array> states) {
    if (states.empty()) throw std::invalid_argument("fit_input_normalization: no states");
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(MlpParams::kInputs);
    for (const auto& s : states) mean += Eigen::Map<const Eigen::VectorXd>(s.data(), MlpParams::kInputs);
    mean /= static_cast<double>(states.size());
    Eigen::VectorXd var = Eigen::VectorXd::Zero(MlpParams::kInputs);
    for (const auto& s : states) {
        const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(s.data(), MlpParams::kInputs) - mean;
        var += d.cwiseProduct(d);
    }
    var /= static_cast<double>(states.size());
    params.in_shift = mean;
    params.in_scale = var.cwiseSqrt().cwiseMax(input_scale_floor());
}

Eigen::VectorXd forward_scaled(const MlpParams& params, const State::Array& s) {
    const Eigen::Map<const Eigen::VectorXd> x(s.data(), MlpParams::kInputs);
    Eigen::VectorXd h = (x - params.in_shift).cwiseQuotient(params.in_scale);
    const std::size_t n_layers = params.weights.size();
    for (std::size_t l = 0; l + 1 < n_layers; ++l)
        h = (params.weights[l] * h + params.biases[l]).array().atan().matrix();
    return params.weights.back() * h + params.biases.back();
}

Eigen::MatrixXd forward_scaled(const MlpParams& params, const Eigen::MatrixXd& states) {
    return forward_cache(params, states).output;
}

Action policy_mean(const MlpParams& policy, const State& s) {
    const Eigen::VectorXd y = forward_scaled(policy, s.to_array());
    return unscale_action(policy, y.head<3>());
}

double value_of(const MlpParams& value, const State& s) {
    const Eigen::VectorXd y = forward_scaled(value, s.to_array());
    return value.out_shift(0) + value.out_scale(0) * y(0);
}

Eigen::Vector3d scale_action(const MlpParams& policy, const Action& a) {
    const Eigen::Vector3d v(a.thrust, a.tau_x, a.tau_y);
    return (v - policy.out_shift).cwiseQuotient(policy.out_scale);
}

Action unscale_action(const MlpParams& policy, const Eigen::Vector3d& y) {
    const Eigen::Vector3d v = policy.out_shift + policy.out_scale.cwiseProduct(y);
    return {v(0), v(1), v(2)};
}

double gaussian_log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std, const Eigen::VectorXd& y) {
    const Eigen::ArrayXd z = (y - mean).array() / log_std.array().exp();
    return -(0.5 * z.square() + log_std.array() + kHalfLog2Pi).sum();
}

double gaussian_entropy(const Eigen::VectorXd& log_std) {
    return (log_std.array() + 0.5 + kHalfLog2Pi).sum();
}

double log_prob(const MlpParams& policy, const State& s, const Action& a) {
    const Eigen::VectorXd mean = forward_scaled(policy, s.to_array());
    return gaussian_log_prob(mean, policy.log_std, scale_action(policy, a));
}

LossGrad bc_nll(const MlpParams& policy, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
    const auto n = static_cast<double>(states.cols());
    const ForwardCache c = forward_cache(policy, states);
    const Eigen::MatrixXd target =
        ((actions.colwise() - policy.out_shift).array().colwise() / policy.out_scale.array()).matrix();
    const Eigen::ArrayXd inv_var = (-2.0 * policy.log_std.array()).exp();
    const Eigen::ArrayXXd resid = (c.output - target).array();

    LossGrad out;
    const Eigen::ArrayXd sq_mean = resid.square().rowwise().sum() / n;  // per action dim
    out.loss = (0.5 * sq_mean * inv_var + policy.log_std.array() + kHalfLog2Pi).sum();
    const Eigen::MatrixXd dy = (resid.colwise() * inv_var / n).matrix();
    const Eigen::VectorXd dlog_std = (1.0 - sq_mean * inv_var).matrix();
    out.grad = backward(policy, c, dy, dlog_std);
    return out;
}

double clipped_objective(double ratio, double advantage, double clip_eps) {
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    return std::min(ratio * advantage, clipped * advantage);
}

LossGrad ppo_policy_loss(const MlpParams& policy, const PpoBatchView& batch, double clip_eps,
                         double entropy_weight, PpoLossStats* stats) {
    const Eigen::MatrixXd& states = *batch.states;
    const Eigen::MatrixXd& actions = *batch.actions;
    const Eigen::VectorXd& old_lp = *batch.old_log_prob;
    const Eigen::VectorXd& adv = *batch.advantages;
    const Eigen::Index b = states.cols();
    const auto n = static_cast<double>(b);

    const ForwardCache c = forward_cache(policy, states);
    const Eigen::ArrayXd inv_var = (-2.0 * policy.log_std.array()).exp();
    const Eigen::ArrayXXd resid = (actions - c.output).array();  // a - mu
    const Eigen::ArrayXXd z2 = resid.square().colwise() * inv_var;
    const double log_norm = (policy.log_std.array() + kHalfLog2Pi).sum();
    const Eigen::ArrayXd new_lp = -0.5 * z2.colwise().sum().transpose() - log_norm;

    double surrogate = 0.0, kl = 0.0;
    long clipped = 0;
    Eigen::ArrayXd dlp(b);  // dLoss / dlogp_new per sample
    for (Eigen::Index i = 0; i < b; ++i) {
        const double ratio = std::exp(new_lp(i) - old_lp(i));
        const double unclipped = ratio * adv(i);
        const double clipped_val = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv(i);
        surrogate += std::min(unclipped, clipped_val);
        kl += old_lp(i) - new_lp(i);
        if (std::abs(ratio - 1.0) > clip_eps) ++clipped;
        dlp(i) = unclipped <= clipped_val ? -unclipped / n : 0.0;
    }
    surrogate /= n;
    const double entropy = gaussian_entropy(policy.log_std);

    // dlogp/dmu = (a - mu) / var ; dlogp/dlog_std = (a - mu)^2 / var - 1
    const Eigen::ArrayXXd dy = (resid.colwise() * inv_var).rowwise() * dlp.transpose();
    const Eigen::VectorXd dlog_std =
        ((z2.rowwise() * dlp.transpose()).rowwise().sum() - dlp.sum() - entropy_weight).matrix();

    LossGrad out;
    out.loss = -surrogate - entropy_weight * entropy;
    out.grad = backward(policy, c, dy.matrix(), dlog_std);
    if (stats) {
        stats->surrogate = surrogate;
        stats->entropy = entropy;
        stats->approx_kl = kl / n;
        stats->clip_fraction = static_cast<double>(clipped) / n;
    }
    return out;
}

LossGrad value_loss(const MlpParams& value, const Eigen::MatrixXd& states, const Eigen::VectorXd& targets) {
    const auto n = static_cast<double>(states.cols());
    const ForwardCache c = forward_cache(value, states);
    const Eigen::RowVectorXd target_scaled =
        ((targets.array() - value.out_shift(0)) / value.out_scale(0)).matrix().transpose();
    const Eigen::RowVectorXd resid = c.output.row(0) - target_scaled;
    LossGrad out;
    out.loss = 0.5 * resid.squaredNorm() / n;
    out.grad = backward(value, c, resid / n, Eigen::VectorXd());
    return out;
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (m.size() != params.size()) {
        m = Eigen::VectorXd::Zero(params.size());
        v = Eigen::VectorXd::Zero(params.size());
        step_count = 0;
    }
    ++step_count;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

double clip_grad_norm(Eigen::VectorXd& grad, double max_norm) {
    const double norm = grad.norm();
    if (max_norm > 0.0 && norm > max_norm) grad *= max_norm / norm;
    return norm;
}

void save_checkpoint(const MlpParams& p, const std::string& path) {
    p.validate();
    BinaryWriter w(path);
    w.put_bytes(kCkptMagic, sizeof(kCkptMagic));
    w.put(kCkptVersion);
    w.put_string(p.stage);
    w.put(p.seed);
    w.put(p.config_hash);
    w.put(static_cast<std::uint32_t>(p.layer_sizes.size()));
    for (int s : p.layer_sizes) w.put(static_cast<std::int32_t>(s));
    w.put(static_cast<std::int32_t>(p.log_std.size()));
    auto put_vec = [&](const Eigen::VectorXd& v) { w.put_bytes(v.data(), sizeof(double) * static_cast<std::size_t>(v.size())); };
    put_vec(p.in_shift);
    put_vec(p.in_scale);
    put_vec(p.out_shift);
    put_vec(p.out_scale);
    put_vec(p.log_std);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        w.put_bytes(p.weights[l].data(), sizeof(double) * static_cast<std::size_t>(p.weights[l].size()));
        put_vec(p.biases[l]);
    }
    w.close();
}

MlpParams load_checkpoint(const std::string& path, int expected_outputs) {
    BinaryReader r(path);
    char magic[8];
    r.get_bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0) throw FormatError(path + " is not a softfly checkpoint");
    const auto version = r.get<std::uint8_t>();
    if (version != kCkptVersion)
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    MlpParams p;
    p.stage = r.get_string(64);
    p.seed = r.get<std::uint64_t>();
    p.config_hash = r.get<std::uint64_t>();
    const auto n_sizes = r.get<std::uint32_t>();
    if (n_sizes != 4) throw FormatError(path + ": topology must have 4 layer sizes, found " + std::to_string(n_sizes));
    for (std::uint32_t i = 0; i < n_sizes; ++i) p.layer_sizes.push_back(r.get<std::int32_t>());
    const int out = p.layer_sizes[3];
    if (p.layer_sizes[0] != MlpParams::kInputs || p.layer_sizes[1] != MlpParams::kHidden ||
        p.layer_sizes[2] != MlpParams::kHidden || out < 1 || out > 16)
        throw FormatError(path + ": topology is not 13 -> 32 -> 32 -> out");
    if (expected_outputs != 0 && out != expected_outputs)
        throw FormatError(path + ": checkpoint has " + std::to_string(out) + " outputs, expected " +
                          std::to_string(expected_outputs));
    const auto n_log_std = r.get<std::int32_t>();
    if (n_log_std != 0 && n_log_std != out) throw FormatError(path + ": log_std size does not match outputs");

    auto get_vec = [&](Eigen::Index n) {
        Eigen::VectorXd v(n);
        r.get_bytes(v.data(), sizeof(double) * static_cast<std::size_t>(n));
        return v;
    };
    p.in_shift = get_vec(MlpParams::kInputs);
    p.in_scale = get_vec(MlpParams::kInputs);
    p.out_shift = get_vec(out);
    p.out_scale = get_vec(out);
    p.log_std = get_vec(n_log_std);
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
        Eigen::MatrixXd w(p.layer_sizes[l + 1], p.layer_sizes[l]);
        r.get_bytes(w.data(), sizeof(double) * static_cast<std::size_t>(w.size()));
        p.weights.push_back(std::move(w));
        p.biases.push_back(get_vec(p.layer_sizes[l + 1]));
    }
    if (!r.at_end()) throw FormatError(path + ": trailing bytes after parameters");
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(path + ": " + e.what());
    }
    return p;
}

std::uint64_t hash_params(const MlpParams& p) {
    Fnv1a h;
    const Eigen::VectorXd flat = p.flatten();
    h.update_doubles({flat.data(), static_cast<std::size_t>(flat.size())});
    h.update_doubles({p.in_shift.data(), static_cast<std::size_t>(p.in_shift.size())});
    h.update_doubles({p.in_scale.data(), static_cast<std::size_t>(p.in_scale.size())});
    h.update_doubles({p.out_shift.data(), static_cast<std::size_t>(p.out_shift.size())});
    h.update_doubles({p.out_scale.data(), static_cast<std::size_t>(p.out_scale.size())});
    return h.digest();
}

}  // namespace softfly
