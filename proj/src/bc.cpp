#include "softfly/bc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace softfly {

namespace {

void gather(const DemoDataset& ds, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
            Eigen::MatrixXd& states, Eigen::MatrixXd& actions) {
    const auto n = static_cast<Eigen::Index>(end - begin);
    states.resize(State::kDim, n);
    actions.resize(Action::kDim, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const DemoPair& p = ds.pairs[idx[begin + static_cast<std::size_t>(j)]];
        states.col(j) = Eigen::Map<const Eigen::VectorXd>(p.state.data(), State::kDim);
        actions.col(j) << p.action.thrust, p.action.tau_x, p.action.tau_y;
    }
}

double mean_nll(const MlpParams& policy, const DemoDataset& ds, const std::vector<std::size_t>& idx) {
    if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
    Eigen::MatrixXd s, a;
    gather(ds, idx, 0, idx.size(), s, a);
    try {
        return bc_nll(policy, s, a).loss;
    } catch (const NonFiniteGradient&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

}  // namespace

void BcConfig::validate() const {
    if (epochs <= 0 || minibatch <= 0 || early_stop_patience <= 0)
        throw std::invalid_argument("bc: epochs, minibatch and patience must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("bc: learning_rate must be positive");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw std::invalid_argument("bc: holdout_fraction must lie in (0, 1)");
    if (!(early_stop_tol >= 0.0)) throw std::invalid_argument("bc: early_stop_tol must be >= 0");
    if (optimizer != "adam" && optimizer != "sgd") throw std::invalid_argument("bc: optimizer must be adam or sgd");
    if (!(action_scale_fraction > 0.0)) throw std::invalid_argument("bc: action_scale_fraction must be positive");
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
        std::swap(idx[i - 1], idx[j]);
    }
}

BcResult bc_train(const DemoDataset& ds, const RobotParams& nominal, const BcConfig& cfg) {
    cfg.validate();
    if (ds.pairs.empty()) throw EmptyDatasetError("bc_train: empty dataset");

    Rng rng(cfg.seed);
    BcResult res;
    MlpParams policy = make_policy(nominal, rng, cfg.init_log_std, cfg.action_scale_fraction);
    {
        std::vector<State::Array> states;
        states.reserve(ds.pairs.size());
        for (const auto& p : ds.pairs) states.push_back(p.state);
        fit_input_normalization(policy, states);
    }
    policy.seed = cfg.seed;
    policy.config_hash = ds.config_hash;
    policy.stage = "bc";

    std::vector<std::size_t> order(ds.pairs.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle_indices(order, rng);
    auto n_hold = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(order.size())));
    if (order.size() >= 2) n_hold = std::clamp<std::size_t>(n_hold, 1, order.size() - 1);
    else n_hold = 0;
    std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
    if (hold.empty()) hold = train;

    Eigen::VectorXd theta = policy.flatten();
    Adam adam;
    adam.lr = cfg.learning_rate;
    const bool use_adam = cfg.optimizer == "adam";

    MlpParams best = policy;
    double best_nll = mean_nll(policy, ds, hold);
    int since_improvement = 0;
    Eigen::MatrixXd s, a;
    const auto mb = static_cast<std::size_t>(cfg.minibatch);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_indices(train, rng);
        for (std::size_t begin = 0; begin < train.size(); begin += mb) {
            const std::size_t end = std::min(train.size(), begin + mb);
            gather(ds, train, begin, end, s, a);
            LossGrad lg;
            try {
                lg = bc_nll(policy, s, a);
            } catch (const NonFiniteGradient& e) {
                throw TrainingAbort("bc_train: epoch " + std::to_string(epoch) + ": " + e.what());
            }
            if (!std::isfinite(lg.loss))
                throw TrainingAbort("bc_train: non-finite loss at epoch " + std::to_string(epoch));
            if (use_adam) adam.step(theta, lg.grad);
            else theta -= cfg.learning_rate * lg.grad;
            policy.unflatten(theta);
        }
        const double nll = mean_nll(policy, ds, hold);
        if (!std::isfinite(nll)) throw TrainingAbort("bc_train: non-finite held-out loss at epoch " + std::to_string(epoch));
        res.epochs_run = epoch;
        if (nll < best_nll - cfg.early_stop_tol) {
            best_nll = nll;
            best = policy;
            res.best_epoch = epoch;
            since_improvement = 0;
        } else if (++since_improvement >= cfg.early_stop_patience) {
            res.heldout_history.push_back(best_nll);
            break;
        }
        res.heldout_history.push_back(best_nll);
    }
    res.policy = best;
    res.heldout_nll = best_nll;
    res.train_nll = mean_nll(best, ds, train);
    return res;
}

}  // namespace softfly
