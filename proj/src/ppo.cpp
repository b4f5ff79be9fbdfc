#include "softfly/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "softfly/binary_io.hpp"
#include "softfly/parallel.hpp"

namespace softfly {

namespace {

constexpr std::uint64_t kEnvStream = 0x50504f45;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median_or_nan(std::vector<double> v) { return v.empty() ? kNaN : quantile(std::move(v), 0.5); }

double std_or_nan(const std::vector<double>& v) {
    if (v.empty()) return kNaN;
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

struct Segment {
    std::vector<State::Array> states;
    std::vector<Eigen::Vector3d> actions;
    std::vector<double> log_prob;
    std::vector<double> rewards;
    std::vector<std::uint8_t> done;
    std::vector<std::uint8_t> terminal;
    std::vector<std::uint32_t> episode;
    std::vector<State::Array> critic;       // value input at t
    std::vector<State::Array> next_states;  // value input at t + 1
    std::vector<double> finished_rewards;
    std::int64_t clamped = 0;
    int starts = 0;
    int instant_failures = 0;
};

Eigen::MatrixXd to_matrix(const std::vector<State::Array>& v) {
    Eigen::MatrixXd m(State::kDim, static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
        m.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(v[i].data(), State::kDim);
    return m;
}

}  // namespace

void PpoConfig::validate() const {
    if (total_steps < 0) throw std::invalid_argument("ppo: total_steps must be >= 0");
    if (rollout_steps <= 0 || minibatch <= 0 || epochs <= 0 || envs <= 0)
        throw std::invalid_argument("ppo: rollout_steps, minibatch, epochs and envs must be positive");
    if (rollout_steps % envs != 0) throw std::invalid_argument("ppo: rollout_steps must be a multiple of envs");
    if (minibatch > rollout_steps) throw std::invalid_argument("ppo: minibatch larger than rollout");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw std::invalid_argument("ppo: clip_eps must lie in (0, 1)");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo: gamma must lie in (0, 1]");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("ppo: lambda must lie in (0, 1]");
    if (!(value_weight > 0.0)) throw std::invalid_argument("ppo: value_weight must be positive");
    if (!(entropy_weight >= 0.0)) throw std::invalid_argument("ppo: entropy_weight must be >= 0");
    if (!(learning_rate > 0.0) || !(value_learning_rate > 0.0))
        throw std::invalid_argument("ppo: learning rates must be positive");
    if (!(max_grad_norm > 0.0)) throw std::invalid_argument("ppo: max_grad_norm must be positive");
    if (!(target_kl > 0.0)) throw std::invalid_argument("ppo: target_kl must be positive");
    if (init_log_std && !std::isfinite(*init_log_std)) throw std::invalid_argument("ppo: init_log_std must be finite");
    if (value_warmup_rounds < 0) throw std::invalid_argument("ppo: value_warmup_rounds must be >= 0");
    if (eval_every <= 0 || eval_episodes <= 0 || collapse_patience <= 0)
        throw std::invalid_argument("ppo: eval_every, eval_episodes and collapse_patience must be positive");
    if (!(collapse_fraction > 0.0)) throw std::invalid_argument("ppo: collapse_fraction must be positive");
    if (threads <= 0) throw std::invalid_argument("ppo: threads must be positive");
}

void hash_into(Fnv1a& h, const PpoConfig& c) {
    h.update_value(c.total_steps);
    const int ints[] = {c.rollout_steps, c.minibatch, c.epochs, c.envs, c.value_warmup_rounds,
                        c.eval_every,    c.eval_episodes, c.collapse_patience};
    h.update(ints, sizeof ints);
    const double d[] = {c.clip_eps,           c.gamma,         c.lambda,    c.value_weight,
                        c.entropy_weight,     c.learning_rate, c.value_learning_rate,
                        c.max_grad_norm,      c.target_kl,     c.init_log_std.value_or(kNaN),
                        c.collapse_fraction};
    h.update_doubles(d);
    h.update_value(c.init_log_std.has_value());
    h.update_value(c.settled_critic);
    h.update_value(c.anneal_lr);
    h.update_value(c.eval_base_seed);
    h.update_value(c.seed);
}

std::uint64_t RolloutBatch::hash() const {
    Fnv1a h;
    auto put = [&](const auto& m) { h.update(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double)); };
    put(states);
    put(critic_states);
    put(actions);
    put(log_prob);
    put(rewards);
    put(values);
    put(next_values);
    put(advantages);
    put(returns);
    h.update(done.data(), done.size());
    h.update(terminal.data(), terminal.size());
    h.update(episode_id.data(), episode_id.size() * sizeof(std::uint32_t));
    h.update(env_id.data(), env_id.size() * sizeof(std::uint32_t));
    return h.digest();
}

struct RolloutCollector::Worker {
    Worker(const RewardConfig& reward, const EpisodeConfig& episode, std::uint64_t seed, std::uint32_t index)
        : env(reward, episode), rng(seed), episode(index) {}
    DelayedEnv env;
    Rng rng;
    State obs;
    bool active = false;
    std::uint32_t episode = 0;
    double episode_reward = 0.0;
};

RolloutCollector::RolloutCollector(const RandomizationRanges& ranges, const RobotParams& nominal,
                                   const RewardConfig& reward, const EpisodeConfig& episode, int envs,
                                   std::uint64_t seed, bool settled_critic)
    : ranges_(ranges), nominal_(nominal), reward_(reward), episode_(episode), settled_critic_(settled_critic) {
    ranges.validate();
    reward.validate();
    episode.validate();
    if (envs <= 0) throw std::invalid_argument("RolloutCollector: envs must be positive");
    for (int i = 0; i < envs; ++i)
        workers_.push_back(std::make_shared<Worker>(reward, episode, derive_seed(seed, kEnvStream, static_cast<std::uint64_t>(i)),
                                                    static_cast<std::uint32_t>(i)));
}

RolloutBatch RolloutCollector::collect(const MlpParams& policy, const MlpParams& value, int steps_per_env,
                                       int threads) {
    if (steps_per_env <= 0) throw std::invalid_argument("collect: steps_per_env must be positive");
    if (!policy.is_policy()) throw std::invalid_argument("collect: policy network expected");
    const std::size_t n_env = workers_.size();
    // episode ids are assigned deterministically per worker: worker w numbers
    // its episodes w, w + n_env, ...
    std::vector<Segment> segs(n_env);
    const Eigen::ArrayXd std_dev = policy.log_std.array().exp();

    parallel_for(n_env, threads, [&](std::size_t w) {
        Worker& wk = *workers_[w];
        Segment& seg = segs[w];
        const auto n = static_cast<std::size_t>(steps_per_env);
        seg.states.reserve(n);
        seg.actions.reserve(n);
        seg.next_states.reserve(n);
        seg.critic.reserve(n);
        auto critic_input = [&] { return (settled_critic_ ? wk.env.settled_state() : wk.obs).to_array(); };
        State::Array critic = critic_input();
        for (int t = 0; t < steps_per_env; ++t) {
            if (!wk.active) {
                const DomainSample dom = sample_domain(ranges_, nominal_, wk.rng);
                const State s0 = sample_initial_state(episode_, wk.rng);
                wk.obs = wk.env.reset(dom, s0);
                wk.active = true;
                wk.episode_reward = 0.0;
                ++seg.starts;
                critic = critic_input();
            }
            const State::Array s = wk.obs.to_array();
            const Eigen::VectorXd mean = forward_scaled(policy, s);
            Eigen::Vector3d y;
            for (int i = 0; i < 3; ++i) y(i) = mean(i) + std_dev(i) * wk.rng.normal();
            const Action raw = unscale_action(policy, y);
            const Action a = saturate(raw, nominal_);
            if (!(a == raw)) ++seg.clamped;
            const StepResult r = wk.env.step(a);
            seg.states.push_back(s);
            seg.actions.push_back(y);
            seg.log_prob.push_back(gaussian_log_prob(mean, policy.log_std, y));
            seg.rewards.push_back(r.reward);
            seg.terminal.push_back(r.failed ? 1 : 0);
            seg.episode.push_back(wk.episode);
            wk.episode_reward += r.reward;
            wk.obs = r.obs;
            seg.critic.push_back(critic);
            critic = critic_input();
            seg.next_states.push_back(critic);
            if (r.done) {
                if (r.failed && wk.env.steps_taken() == 1) ++seg.instant_failures;
                seg.finished_rewards.push_back(wk.episode_reward);
                wk.active = false;
            }
            const bool end = r.done || t + 1 == steps_per_env;
            seg.done.push_back(end ? 1 : 0);
            if (r.done) wk.episode += static_cast<std::uint32_t>(n_env);
        }
    });

    int starts = 0, instant = 0;
    for (const auto& s : segs) {
        starts += s.starts;
        instant += s.instant_failures;
    }
    if (starts > 0 && instant == starts)
        throw RolloutError("collect: all " + std::to_string(starts) + " episodes failed on their first step");

    RolloutBatch b;
    const auto total = static_cast<Eigen::Index>(n_env) * steps_per_env;
    b.states.resize(State::kDim, total);
    b.critic_states.resize(State::kDim, total);
    b.actions.resize(3, total);
    b.log_prob.resize(total);
    b.rewards.resize(total);
    std::vector<State::Array> next_states;
    next_states.reserve(static_cast<std::size_t>(total));
    Eigen::Index k = 0;
    for (std::size_t w = 0; w < n_env; ++w) {
        Segment& s = segs[w];
        for (std::size_t t = 0; t < s.states.size(); ++t, ++k) {
            b.states.col(k) = Eigen::Map<const Eigen::VectorXd>(s.states[t].data(), State::kDim);
            b.critic_states.col(k) = Eigen::Map<const Eigen::VectorXd>(s.critic[t].data(), State::kDim);
            b.actions.col(k) = s.actions[t];
            b.log_prob(k) = s.log_prob[t];
            b.rewards(k) = s.rewards[t];
            b.done.push_back(s.done[t]);
            b.terminal.push_back(s.terminal[t]);
            b.episode_id.push_back(s.episode[t]);
            b.env_id.push_back(static_cast<std::uint32_t>(w));
            next_states.push_back(s.next_states[t]);
        }
        b.episode_rewards.insert(b.episode_rewards.end(), s.finished_rewards.begin(), s.finished_rewards.end());
        b.clamped_actions += s.clamped;
    }
    b.values = forward_scaled(value, b.critic_states).row(0).transpose().array() * value.out_scale(0) + value.out_shift(0);
    b.next_values =
        forward_scaled(value, to_matrix(next_states)).row(0).transpose().array() * value.out_scale(0) + value.out_shift(0);
    for (Eigen::Index i = 0; i < total; ++i)
        if (b.terminal[static_cast<std::size_t>(i)]) b.next_values(i) = 0.0;
    b.advantages = Eigen::VectorXd::Zero(total);
    b.returns = b.values;
    return b;
}

void RolloutCollector::stagger(const MlpParams& policy, int threads) {
    const std::size_t n_env = workers_.size();
    parallel_for(n_env, threads, [&](std::size_t w) {
        Worker& wk = *workers_[w];
        const auto skip = static_cast<std::int64_t>(w) * episode_.horizon / static_cast<std::int64_t>(n_env);
        if (skip == 0) return;
        const DomainSample dom = sample_domain(ranges_, nominal_, wk.rng);
        wk.obs = wk.env.reset(dom, sample_initial_state(episode_, wk.rng));
        wk.active = true;
        for (std::int64_t t = 0; t < skip && wk.active; ++t) {
            const Eigen::VectorXd mean = forward_scaled(policy, wk.obs.to_array());
            Eigen::Vector3d y;
            for (int i = 0; i < 3; ++i) y(i) = mean(i) + std::exp(policy.log_std(i)) * wk.rng.normal();
            const StepResult r = wk.env.step(saturate(unscale_action(policy, y), nominal_));
            wk.obs = r.obs;
            if (r.done) wk.active = false;
        }
        wk.episode_reward = 0.0;
    });
}

RolloutBatch collect_rollouts(const MlpParams& policy, const MlpParams& value, const RandomizationRanges& ranges,
                              const RobotParams& nominal, const RewardConfig& reward, const EpisodeConfig& episode,
                              const PpoConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    RolloutCollector c(ranges, nominal, reward, episode, cfg.envs, seed, cfg.settled_critic);
    RolloutBatch b = c.collect(policy, value, cfg.steps_per_env(), cfg.threads);
    compute_gae(b, cfg.gamma, cfg.lambda);
    return b;
}

void compute_gae(RolloutBatch& b, double gamma, double lambda) {
    const auto n = static_cast<Eigen::Index>(b.size());
    if (b.values.size() != n || b.next_values.size() != n || static_cast<Eigen::Index>(b.done.size()) != n)
        throw std::invalid_argument("compute_gae: inconsistent batch sizes");
    b.advantages.resize(n);
    double next_adv = 0.0;
    for (Eigen::Index t = n - 1; t >= 0; --t) {
        const double carry = b.done[static_cast<std::size_t>(t)] ? 0.0 : 1.0;
        const double delta = b.rewards(t) + gamma * b.next_values(t) - b.values(t);
        next_adv = delta + gamma * lambda * carry * next_adv;
        b.advantages(t) = next_adv;
    }
    b.returns = b.advantages + b.values;
}

void normalize_advantages(Eigen::VectorXd& adv) {
    if (adv.size() == 0) return;
    const double mean = adv.mean();
    adv.array() -= mean;
    const double sd = std::sqrt(adv.squaredNorm() / static_cast<double>(adv.size()));
    if (sd > 0.0) adv /= sd;
}

namespace {

void gather_cols(const Eigen::MatrixXd& src, const std::vector<std::size_t>& idx, std::size_t begin,
                 std::size_t end, Eigen::MatrixXd& dst) {
    dst.resize(src.rows(), static_cast<Eigen::Index>(end - begin));
    for (std::size_t j = begin; j < end; ++j) dst.col(static_cast<Eigen::Index>(j - begin)) = src.col(static_cast<Eigen::Index>(idx[j]));
}

void gather_vec(const Eigen::VectorXd& src, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                Eigen::VectorXd& dst) {
    dst.resize(static_cast<Eigen::Index>(end - begin));
    for (std::size_t j = begin; j < end; ++j) dst(static_cast<Eigen::Index>(j - begin)) = src(static_cast<Eigen::Index>(idx[j]));
}

double value_step(PpoState& st, const Eigen::MatrixXd& s, const Eigen::VectorXd& targets, const PpoConfig& cfg,
                  Eigen::VectorXd& theta) {
    LossGrad lg = value_loss(st.value, s, targets);
    if (!std::isfinite(lg.loss)) throw TrainingAbort("ppo: non-finite value loss");
    lg.grad *= cfg.value_weight;
    clip_grad_norm(lg.grad, cfg.max_grad_norm);
    st.value_opt.step(theta, lg.grad);
    st.value.unflatten(theta);
    return lg.loss;
}

}  // namespace

double fit_value(PpoState& st, const RolloutBatch& b, const PpoConfig& cfg, Rng& rng, int epochs) {
    st.value_opt.lr = cfg.value_learning_rate;
    std::vector<std::size_t> idx(b.size());
    std::iota(idx.begin(), idx.end(), 0);
    Eigen::VectorXd theta = st.value.flatten();
    Eigen::MatrixXd s;
    Eigen::VectorXd tgt;
    double last = 0.0;
    const auto mb = static_cast<std::size_t>(cfg.minibatch);
    for (int e = 0; e < epochs; ++e) {
        shuffle_indices(idx, rng);
        double acc = 0.0;
        int count = 0;
        for (std::size_t begin = 0; begin < idx.size(); begin += mb) {
            const std::size_t end = std::min(idx.size(), begin + mb);
            gather_cols(b.critic_states, idx, begin, end, s);
            gather_vec(b.returns, idx, begin, end, tgt);
            acc += value_step(st, s, tgt, cfg, theta);
            ++count;
        }
        last = acc / std::max(count, 1);
    }
    return last;
}

PpoUpdateStats ppo_update(PpoState& st, const RolloutBatch& b, const PpoConfig& cfg, Rng& rng) {
    if (b.advantages.size() != static_cast<Eigen::Index>(b.size()))
        throw std::invalid_argument("ppo_update: batch has no advantages");
    Eigen::VectorXd adv = b.advantages;
    normalize_advantages(adv);
    st.policy_opt.lr = cfg.learning_rate;
    st.value_opt.lr = cfg.value_learning_rate;

    std::vector<std::size_t> idx(b.size());
    std::iota(idx.begin(), idx.end(), 0);
    Eigen::VectorXd theta_p = st.policy.flatten();
    Eigen::VectorXd theta_v = st.value.flatten();
    Eigen::MatrixXd s, a, cs;
    Eigen::VectorXd lp, ad, tgt;
    const auto mb = static_cast<std::size_t>(cfg.minibatch);

    PpoUpdateStats out;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_indices(idx, rng);
        double kl = 0.0, clip = 0.0, pl = 0.0, vl = 0.0, ent = 0.0;
        int count = 0;
        for (std::size_t begin = 0; begin < idx.size(); begin += mb) {
            const std::size_t end = std::min(idx.size(), begin + mb);
            gather_cols(b.states, idx, begin, end, s);
            gather_cols(b.actions, idx, begin, end, a);
            gather_vec(b.log_prob, idx, begin, end, lp);
            gather_vec(adv, idx, begin, end, ad);
            gather_vec(b.returns, idx, begin, end, tgt);
            PpoBatchView view{&s, &a, &lp, &ad};
            PpoLossStats ls;
            LossGrad lg = ppo_policy_loss(st.policy, view, cfg.clip_eps, cfg.entropy_weight, &ls);
            if (!std::isfinite(lg.loss)) throw TrainingAbort("ppo: non-finite policy loss");
            clip_grad_norm(lg.grad, cfg.max_grad_norm);
            st.policy_opt.step(theta_p, lg.grad);
            st.policy.unflatten(theta_p);
            gather_cols(b.critic_states, idx, begin, end, cs);
            vl += value_step(st, cs, tgt, cfg, theta_v);
            pl += lg.loss;
            kl += ls.approx_kl;
            clip += ls.clip_fraction;
            ent += ls.entropy;
            ++count;
        }
        out.epochs_run = epoch + 1;
        out.policy_loss = pl / count;
        out.value_loss = vl / count;
        out.approx_kl = kl / count;
        out.clip_fraction = clip / count;
        out.entropy = ent / count;
        if (out.approx_kl > cfg.target_kl) {
            out.kl_early_stop = true;
            break;
        }
    }
    return out;
}

EvalProtocol ppo_validation_protocol(const PpoConfig& cfg, const RandomizationRanges& ranges,
                                     const EpisodeConfig& episode) {
    EvalProtocol p;
    p.episodes = cfg.eval_episodes;
    p.horizon = episode.horizon;
    p.base_seed = cfg.eval_base_seed;
    p.ranges = ranges;
    p.deterministic = true;
    p.threads = cfg.threads;
    return p;
}

PpoResult train_ppo(const MlpParams& init, const RandomizationRanges& ranges, const RobotParams& nominal,
                    const RewardConfig& reward, const EpisodeConfig& episode, const PpoConfig& cfg) {
    cfg.validate();
    init.validate();
    if (!init.is_policy()) throw std::invalid_argument("train_ppo: init must be a policy network");

    PpoResult res;
    res.policy = init;
    if (cfg.total_steps == 0) {
        Rng rng(cfg.seed);
        res.value = make_value(rng);
        return res;
    }

    Rng rng(derive_seed(cfg.seed, 0x55504454, 0));
    PpoState st;
    st.policy = init;
    if (cfg.init_log_std) st.policy.log_std.setConstant(*cfg.init_log_std);
    st.policy.stage = "ppo";
    st.policy.seed = cfg.seed;
    st.value = make_value(rng);
    st.value.in_shift = init.in_shift;
    st.value.in_scale = init.in_scale;
    st.value.config_hash = init.config_hash;

    const EvalProtocol val = ppo_validation_protocol(cfg, ranges, episode);
    auto eval_median = [&](const MlpParams& p) {
        return evaluate(policy_controller(p, nominal, true), val, nominal, reward, episode).reward_stats().median;
    };
    const double baseline = eval_median(init);
    res.initial_eval_median = baseline;
    res.best_eval_median = baseline;
    MlpParams best = init;

    RolloutCollector collector(ranges, nominal, reward, episode, cfg.envs, derive_seed(cfg.seed, kEnvStream, 99),
                               cfg.settled_critic);
    const int per_env = cfg.steps_per_env();
    collector.stagger(st.policy, cfg.threads);
    const std::int64_t per_iter = static_cast<std::int64_t>(per_env) * cfg.envs;

    for (int r = 0; r < cfg.value_warmup_rounds; ++r) {
        RolloutBatch b = collector.collect(st.policy, st.value, per_env, cfg.threads);
        if (r == 0) {
            // put the value output in the units of the observed returns
            b.values.setZero();
            b.next_values.setZero();
            compute_gae(b, cfg.gamma, 1.0);
            const std::vector<double> ret(b.returns.data(), b.returns.data() + b.returns.size());
            const double med = quantile(ret, 0.5);
            st.value.out_shift(0) = med;
            st.value.out_scale(0) = std::max(quantile(ret, 0.75) - quantile(ret, 0.25), 1e-3 * std::max(std::abs(med), 1.0));
            b.values.setConstant(med);
            for (Eigen::Index i = 0; i < b.next_values.size(); ++i)
                b.next_values(i) = b.terminal[static_cast<std::size_t>(i)] ? 0.0 : med;
        }
        compute_gae(b, cfg.gamma, cfg.lambda);
        fit_value(st, b, cfg, rng, cfg.epochs);
    }

    int below = 0;
    std::int64_t steps = 0;
    int iteration = 0;
    while (steps < cfg.total_steps) {
        ++iteration;
        RolloutBatch b = collector.collect(st.policy, st.value, per_env, cfg.threads);
        compute_gae(b, cfg.gamma, cfg.lambda);
        PpoConfig step_cfg = cfg;
        if (cfg.anneal_lr) {
            const double frac = 1.0 - static_cast<double>(steps) / static_cast<double>(cfg.total_steps);
            step_cfg.learning_rate *= frac;
            step_cfg.value_learning_rate *= frac;
        }
        const PpoUpdateStats us = ppo_update(st, b, step_cfg, rng);
        steps += per_iter;

        PpoIteration it;
        it.iteration = iteration;
        it.steps = steps;
        it.median_reward = median_or_nan(b.episode_rewards);
        it.std_reward = std_or_nan(b.episode_rewards);
        it.episodes = static_cast<int>(b.episode_rewards.size());
        it.failures = static_cast<int>(std::count(b.terminal.begin(), b.terminal.end(), 1));
        it.clip_fraction = us.clip_fraction;
        it.approx_kl = us.approx_kl;
        it.kl_early_stop = us.kl_early_stop;
        it.value_loss = us.value_loss;
        it.entropy = us.entropy;
        {
            const double var = (b.returns.array() - b.returns.mean()).square().mean();
            const double res = (b.returns - b.values).array().square().mean();
            it.explained_variance = var > 0.0 ? 1.0 - res / var : 0.0;
        }
        it.eval_median = kNaN;
        const bool last = steps >= cfg.total_steps;
        if (iteration % cfg.eval_every == 0 || last) {
            const double m = eval_median(st.policy);
            it.eval_median = m;
            if (m > res.best_eval_median) {
                res.best_eval_median = m;
                res.best_iteration = iteration;
                best = st.policy;
            }
            below = m < baseline - cfg.collapse_fraction * std::abs(baseline) ? below + 1 : 0;
        }
        res.curve.push_back(it);
        if (below >= cfg.collapse_patience) {
            throw PpoCollapse("ppo: validation median stayed below " +
                                  std::to_string(baseline - cfg.collapse_fraction * std::abs(baseline)) + " for " +
                                  std::to_string(below) + " evaluations (iteration " + std::to_string(iteration) + ")",
                              best, res.curve);
        }
    }
    res.steps = steps;
    res.policy = best;
    res.policy.stage = res.best_iteration > 0 ? "ppo" : init.stage;
    res.value = st.value;
    return res;
}

void write_curve_csv(const std::vector<PpoIteration>& curve, const std::string& path, std::uint64_t config_hash) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    if (config_hash != 0) os << "# config_hash=" << hex64(config_hash) << '\n';
    os << std::setprecision(12);
    os << "iteration,steps,median_reward,std_reward,clip_fraction,approx_kl,eval_median,value_loss,entropy,"
          "explained_variance,episodes,failures,kl_early_stop\n";
    for (const auto& it : curve) {
        os << it.iteration << ',' << it.steps << ',' << it.median_reward << ',' << it.std_reward << ','
           << it.clip_fraction << ',' << it.approx_kl << ',' << it.eval_median << ',' << it.value_loss << ','
           << it.entropy << ',' << it.explained_variance << ',' << it.episodes << ',' << it.failures << ','
           << (it.kl_early_stop ? 1 : 0) << '\n';
    }
    if (!os) throw IoError("write failed: " + path);
}

std::uint64_t hash_reward(const RewardConfig& rc) {
    Fnv1a h;
    hash_into(h, rc);
    return h.digest();
}

std::vector<SweepEntry> run_reward_sweep(const MlpParams& init, const std::vector<RewardConfig>& grid,
                                         const RewardConfig& score_reward, const RandomizationRanges& ranges,
                                         const RobotParams& nominal, const EpisodeConfig& episode,
                                         const PpoConfig& cfg, const EvalProtocol& protocol) {
    if (grid.empty()) throw std::invalid_argument("run_reward_sweep: empty grid");
    std::vector<SweepEntry> out;
    for (const RewardConfig& rc : grid) {
        rc.validate();
        SweepEntry e;
        e.reward = rc;
        e.reward_hash = hash_reward(rc);
        MlpParams policy = init;
        try {
            e.result = train_ppo(init, ranges, nominal, rc, episode, cfg);
            policy = e.result.policy;
        } catch (const PpoCollapse& c) {
            e.error = c.what();
            policy = c.last_good();
        }
        e.report = evaluate(policy_controller(policy, nominal, protocol.deterministic), protocol, nominal,
                            score_reward, episode, "ppo");
        e.report.checkpoint_hash = hash_params(policy);
        out.push_back(std::move(e));
    }
    return out;
}

nlohmann::json sweep_to_json(const std::vector<SweepEntry>& entries, std::uint64_t config_hash) {
    nlohmann::json results = nlohmann::json::object();
    for (const auto& e : entries) {
        const RewardConfig& r = e.reward;
        const BoxStats b = e.report.reward_stats();
        nlohmann::json item = {
            {"reward",
             {{"k_p", r.k_p}, {"k_e", r.k_e}, {"k_v", r.k_v}, {"k_w", r.k_w}, {"k_ff", r.k_ff}, {"k_txf", r.k_txf},
              {"k_tyf", r.k_tyf}, {"k_f", r.k_f}, {"k_tx", r.k_tx}, {"k_ty", r.k_ty}}},
            {"median", b.median},
            {"mean", b.mean},
            {"q1", b.q1},
            {"q3", b.q3},
            {"failures", e.report.failures()},
            {"mean_fluctuation", e.report.mean_fluctuation()},
            {"initial_eval_median", e.result.initial_eval_median},
            {"best_eval_median", e.result.best_eval_median},
            {"best_iteration", e.result.best_iteration},
            {"checkpoint_hash", hex64(e.report.checkpoint_hash)}};
        if (!e.error.empty()) item["error"] = e.error;
        results[hex64(e.reward_hash)] = item;
    }
    return {{"version", 1}, {"config_hash", hex64(config_hash)}, {"results", results}};
}

}  // namespace softfly
