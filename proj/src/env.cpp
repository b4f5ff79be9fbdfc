#include "softfly/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace softfly {

namespace {

Interval stretch_about(const Interval& iv, double center, double scale) {
    return {center + scale * (iv.lo - center), center + scale * (iv.hi - center)};
}

void check_interval(const Interval& iv, const char* name) {
    if (!(std::isfinite(iv.lo) && std::isfinite(iv.hi)) || iv.lo > iv.hi)
        throw std::invalid_argument(std::string("randomization: invalid interval for ") + name);
}

double tilt_angle(const Quat& q) {
    const double c = std::clamp(1.0 - 2.0 * (q.x * q.x + q.y * q.y), -1.0, 1.0);
    return std::acos(c);
}

}  // namespace

RandomizationRanges RandomizationRanges::effective() const {
    RandomizationRanges r = *this;
    r.scale = 1.0;
    if (scale == 1.0) return r;
    r.mass_factor = stretch_about(mass_factor, 1.0, scale);
    r.ixx_factor = stretch_about(ixx_factor, 1.0, scale);
    r.iyy_factor = stretch_about(iyy_factor, 1.0, scale);
    r.force_magnitude = stretch_about(force_magnitude, 0.0, scale);
    r.torque_x = stretch_about(torque_x, 0.0, scale);
    r.torque_y = stretch_about(torque_y, 0.0, scale);
    const double mid = 0.5 * (delay_ms.lo + delay_ms.hi);
    const Interval d = stretch_about(delay_ms, mid, scale);
    r.delay_ms = {std::clamp(std::floor(d.lo), 0.0, 50.0), std::clamp(std::ceil(d.hi), 0.0, 50.0)};
    return r;
}

RandomizationRanges RandomizationRanges::degenerate(int delay_ms) {
    RandomizationRanges r;
    r.mass_factor = {1.0, 1.0};
    r.ixx_factor = {1.0, 1.0};
    r.iyy_factor = {1.0, 1.0};
    r.force_magnitude = {0.0, 0.0};
    r.torque_x = {0.0, 0.0};
    r.torque_y = {0.0, 0.0};
    r.delay_ms = {static_cast<double>(delay_ms), static_cast<double>(delay_ms)};
    return r;
}

void RandomizationRanges::validate() const {
    check_interval(mass_factor, "mass_factor");
    check_interval(ixx_factor, "ixx_factor");
    check_interval(iyy_factor, "iyy_factor");
    check_interval(force_magnitude, "force_magnitude");
    check_interval(torque_x, "torque_x");
    check_interval(torque_y, "torque_y");
    check_interval(delay_ms, "delay_ms");
    if (!(scale > 0.0)) throw std::invalid_argument("randomization: scale must be positive");
    const RandomizationRanges e = effective();
    if (!(e.mass_factor.lo > 0.0 && e.ixx_factor.lo > 0.0 && e.iyy_factor.lo > 0.0))
        throw std::invalid_argument("randomization: scaled mass/inertia factors must stay positive");
    if (e.force_magnitude.lo < 0.0)
        throw std::invalid_argument("randomization: force magnitude must be non-negative");
    if (delay_ms.lo < 0.0 || delay_ms.hi > 50.0)
        throw std::invalid_argument("randomization: delay interval must lie within [0, 50] ms");
    if (delay_ms.lo != std::floor(delay_ms.lo) || delay_ms.hi != std::floor(delay_ms.hi))
        throw std::invalid_argument("randomization: delay bounds must be whole milliseconds");
}

DomainSample sample_domain(const RandomizationRanges& ranges, const RobotParams& nominal, Rng& rng) {
    const RandomizationRanges r = ranges.effective();
    DomainSample d;
    d.robot = nominal;
    d.robot.mass = nominal.mass * rng.uniform(r.mass_factor.lo, r.mass_factor.hi);
    d.robot.inertia.x() = nominal.inertia.x() * rng.uniform(r.ixx_factor.lo, r.ixx_factor.hi);
    d.robot.inertia.y() = nominal.inertia.y() * rng.uniform(r.iyy_factor.lo, r.iyy_factor.hi);

    Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
    while (dir.norm() < 1e-12) dir = {rng.normal(), rng.normal(), rng.normal()};
    const double magnitude = rng.uniform(r.force_magnitude.lo, r.force_magnitude.hi);
    d.dist.force = magnitude == 0.0 ? Eigen::Vector3d::Zero() : Eigen::Vector3d(dir.normalized() * magnitude);
    d.dist.tau_x = rng.uniform(r.torque_x.lo, r.torque_x.hi);
    d.dist.tau_y = rng.uniform(r.torque_y.lo, r.torque_y.hi);
    d.delay_steps = static_cast<int>(rng.uniform_int(static_cast<std::int64_t>(r.delay_ms.lo),
                                                     static_cast<std::int64_t>(r.delay_ms.hi)));
    return d;
}

std::uint64_t hash_domain(const DomainSample& d) {
    Fnv1a h;
    const double vals[] = {d.robot.mass, d.robot.inertia.x(), d.robot.inertia.y(), d.robot.inertia.z(),
                           d.robot.yaw_damping, d.robot.gravity, d.robot.thrust_max, d.robot.torque_max,
                           d.dist.force.x(), d.dist.force.y(), d.dist.force.z(), d.dist.tau_x, d.dist.tau_y};
    h.update_doubles(vals);
    h.update_value(d.delay_steps);
    return h.digest();
}

void hash_into(Fnv1a& h, const RobotParams& rp) {
    const double v[] = {rp.mass, rp.inertia.x(), rp.inertia.y(), rp.inertia.z(), rp.yaw_damping,
                        rp.gravity, rp.thrust_max, rp.torque_max};
    h.update_doubles(v);
}

void hash_into(Fnv1a& h, const RandomizationRanges& r) {
    const double v[] = {r.mass_factor.lo, r.mass_factor.hi, r.ixx_factor.lo, r.ixx_factor.hi,
                        r.iyy_factor.lo, r.iyy_factor.hi, r.force_magnitude.lo, r.force_magnitude.hi,
                        r.torque_x.lo, r.torque_x.hi, r.torque_y.lo, r.torque_y.hi,
                        r.delay_ms.lo, r.delay_ms.hi, r.scale};
    h.update_doubles(v);
}

void hash_into(Fnv1a& h, const RewardConfig& rc) {
    const double v[] = {rc.k_p, rc.k_e, rc.k_v, rc.k_w, rc.k_ff, rc.k_txf, rc.k_tyf, rc.k_f, rc.k_tx, rc.k_ty};
    h.update_doubles(v);
}

void hash_into(Fnv1a& h, const EpisodeConfig& ec) {
    h.update_value(ec.horizon);
    const double v[] = {ec.init_pos.x(), ec.init_pos.y(), ec.init_pos.z(), ec.init_tilt,
                        ec.init_vel.x(), ec.init_vel.y(), ec.init_vel.z(),
                        ec.init_rate.x(), ec.init_rate.y(), ec.init_rate.z(),
                        ec.max_position, ec.max_tilt};
    h.update_doubles(v);
}

DelayBuffer::DelayBuffer(int length, const Action& fill) {
    if (length < 0) throw std::invalid_argument("DelayBuffer: negative length");
    slots_.assign(static_cast<std::size_t>(length), fill);
}

Action DelayBuffer::push_pop(const Action& commanded) {
    ++pushes_;
    ++pops_;
    if (slots_.empty()) return commanded;
    Action out = slots_[head_];
    slots_[head_] = commanded;
    head_ = (head_ + 1) % slots_.size();
    return out;
}

std::vector<Action> DelayBuffer::pending() const {
    std::vector<Action> out;
    out.reserve(slots_.size());
    for (std::size_t i = 0; i < slots_.size(); ++i) out.push_back(slots_[(head_ + i) % slots_.size()]);
    return out;
}

void RewardConfig::validate() const {
    const double all[] = {k_p, k_e, k_v, k_w, k_ff, k_txf, k_tyf, k_f, k_tx, k_ty};
    for (double k : all)
        if (!(k >= 0.0) || !std::isfinite(k)) throw std::invalid_argument("reward: weights must be finite and >= 0");
    if (!(k_p > 0.0 || k_e > 0.0 || k_v > 0.0 || k_w > 0.0))
        throw std::invalid_argument("reward: at least one state weight must be positive");
}

RewardTerms reward_terms(const State& s, const Action& a, const Action& a_prev,
                         const RewardConfig& cfg, const RobotParams& rp) {
    RewardTerms r;
    const Euler e = quat_to_euler(s.att);
    r.gimbal = e.gimbal;
    r.state = -(cfg.k_p * s.pos.squaredNorm() +
                cfg.k_e * (e.roll * e.roll + e.pitch * e.pitch) +
                cfg.k_v * s.vel.squaredNorm() +
                cfg.k_w * (s.rate.x() * s.rate.x() + s.rate.y() * s.rate.y()));
    const double df = a.thrust - a_prev.thrust;
    const double dtx = a.tau_x - a_prev.tau_x;
    const double dty = a.tau_y - a_prev.tau_y;
    r.fluctuation = -(cfg.k_ff * df * df + cfg.k_txf * dtx * dtx + cfg.k_tyf * dty * dty);
    const double fn = a.thrust - rp.nominal_thrust();
    r.nominal = -(cfg.k_f * fn * fn + cfg.k_tx * a.tau_x * a.tau_x + cfg.k_ty * a.tau_y * a.tau_y);
    return r;
}

double compute_reward(const State& s, const Action& a, const Action& a_prev,
                      const RewardConfig& cfg, const RobotParams& rp, double failure_reward) {
    const RewardTerms r = reward_terms(s, a, a_prev, cfg, rp);
    return r.gimbal ? failure_reward : r.total();
}

void EpisodeConfig::validate() const {
    if (horizon <= 0) throw std::invalid_argument("episode: horizon must be positive");
    if ((init_pos.array() < 0.0).any() || (init_vel.array() < 0.0).any() || (init_rate.array() < 0.0).any() ||
        init_tilt < 0.0)
        throw std::invalid_argument("episode: init ranges must be non-negative");
    if (!(max_position > init_pos.norm()))
        throw std::invalid_argument("episode: position envelope must strictly contain the init box");
    if (!(max_tilt > init_tilt) || !(max_tilt < std::numbers::pi / 2.0))
        throw std::invalid_argument("episode: tilt envelope must contain init cone and stay below 90 deg");
}

bool EpisodeConfig::in_init_ranges(const State& s, double tol) const {
    for (int i = 0; i < 3; ++i) {
        if (std::abs(s.pos[i]) > init_pos[i] + tol) return false;
        if (std::abs(s.vel[i]) > init_vel[i] + tol) return false;
        if (std::abs(s.rate[i]) > init_rate[i] + tol) return false;
    }
    return tilt_angle(s.att) <= init_tilt + 1e-6 && std::abs(s.att.norm() - 1.0) < 1e-6;
}

State sample_initial_state(const EpisodeConfig& cfg, Rng& rng) {
    State s;
    for (int i = 0; i < 3; ++i) s.pos[i] = rng.uniform(-cfg.init_pos[i], cfg.init_pos[i]);
    const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double tilt = rng.uniform(0.0, cfg.init_tilt);
    const double sh = std::sin(0.5 * tilt);
    s.att = Quat{sh * std::cos(heading), sh * std::sin(heading), 0.0, std::cos(0.5 * tilt)};
    for (int i = 0; i < 3; ++i) s.vel[i] = rng.uniform(-cfg.init_vel[i], cfg.init_vel[i]);
    for (int i = 0; i < 3; ++i) s.rate[i] = rng.uniform(-cfg.init_rate[i], cfg.init_rate[i]);
    return s;
}

double worst_step_penalty(const RewardConfig& rc, const EpisodeConfig& ec) {
    return rc.k_p * ec.max_position * ec.max_position + 2.0 * rc.k_e * ec.max_tilt * ec.max_tilt;
}

DelayedEnv::DelayedEnv(RewardConfig reward, EpisodeConfig episode)
    : reward_(reward), episode_(episode), worst_step_(worst_step_penalty(reward, episode)) {
    reward_.validate();
    episode_.validate();
}

State DelayedEnv::reset(const DomainSample& domain, const State& s0) {
    if (strict_reset_ && !episode_.in_init_ranges(s0))
        throw std::invalid_argument("DelayedEnv::reset: initial state outside the init ranges");
    if (domain.delay_steps < 0) throw std::invalid_argument("DelayedEnv::reset: negative delay");
    domain_ = domain;
    const Action fill = domain.robot.nominal_action();
    buffer_ = DelayBuffer(domain.delay_steps, fill);
    prev_cmd_ = fill;
    state_ = s0;
    t_ = 0;
    done_ = false;
    return state_;
}

State DelayedEnv::settled_state() const {
    State s = state_;
    try {
        for (const Action& a : buffer_.pending()) s = step_dynamics(s, a, domain_.dist, domain_.robot);
    } catch (const IntegrationBlowup&) {
    }
    return s;
}

StepResult DelayedEnv::step(const Action& commanded) {
    if (done_) throw std::logic_error("DelayedEnv::step called on a finished episode");
    if (!commanded.is_finite()) throw std::invalid_argument("DelayedEnv::step: non-finite action");
    StepResult out;
    out.executed = buffer_.push_pop(commanded);
    ++t_;
    bool failed = false;
    try {
        state_ = step_dynamics(state_, out.executed, domain_.dist, domain_.robot);
    } catch (const IntegrationBlowup&) {
        failed = true;
    }

    if (!failed) {
        const RewardTerms terms = reward_terms(state_, commanded, prev_cmd_, reward_, domain_.robot);
        const Euler e = quat_to_euler(state_.att);
        failed = terms.gimbal || state_.pos.norm() > episode_.max_position ||
                 std::abs(e.roll) > episode_.max_tilt || std::abs(e.pitch) > episode_.max_tilt;
        out.reward = terms.total();
    }
    if (failed) out.reward = -static_cast<double>(episode_.horizon - t_ + 1) * worst_step_;

    prev_cmd_ = commanded;
    out.failed = failed;
    out.done = failed || t_ >= episode_.horizon;
    done_ = out.done;
    out.obs = state_;
    return out;
}

}  // namespace softfly
