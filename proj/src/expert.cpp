#include "softfly/expert.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "softfly/binary_io.hpp"
#include "softfly/parallel.hpp"

namespace softfly {

namespace {

constexpr char kDemoMagic[8] = {'S', 'F', 'D', 'E', 'M', 'O', '\0', '\0'};
constexpr std::uint64_t kDemoStream = 0x44454d4fULL;

double sign_or_zero(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

void ExpertGains::validate() const {
    const double all[] = {pos_kp, pos_kd, alt_kp, alt_kd, att_kp, att_kd, max_tilt};
    for (double g : all)
        if (!(g >= 0.0) || !std::isfinite(g)) throw std::invalid_argument("expert: gains must be finite and >= 0");
    if (!(max_tilt < std::numbers::pi / 2.0)) throw std::invalid_argument("expert: max_tilt must be below pi/2");
}

Action expert_policy(const State& s, const RobotParams& nominal, const ExpertGains& k) {
    const Euler e = quat_to_euler(s.att);
    const double fn = nominal.nominal_thrust();
    if (e.gimbal) {
        // Recovery: full corrective torque toward upright.
        return saturate({fn, -sign_or_zero(e.roll) * nominal.torque_max, -sign_or_zero(e.pitch) * nominal.torque_max},
                        nominal);
    }
    const double g = nominal.gravity;

    // Outer loop: desired world acceleration.
    const double ax = -k.pos_kp * s.pos.x() - k.pos_kd * s.vel.x();
    const double ay = -k.pos_kp * s.pos.y() - k.pos_kd * s.vel.y();
    const double az = -k.alt_kp * s.pos.z() - k.alt_kd * s.vel.z();

    // Lateral demand in the heading frame, mapped to roll/pitch set points.
    const double cy = std::cos(e.yaw), sy = std::sin(e.yaw);
    const double fx = cy * ax + sy * ay;
    const double fy = -sy * ax + cy * ay;
    const double pitch_des = std::clamp(fx / g, -k.max_tilt, k.max_tilt);
    const double roll_des = std::clamp(-fy / g, -k.max_tilt, k.max_tilt);

    const double tilt_cos = std::max(std::cos(e.roll) * std::cos(e.pitch), 0.5);
    const double thrust = nominal.mass * (g + az) / tilt_cos;

    // Inner loop: attitude PD on body rates.
    const double tau_x = nominal.inertia.x() * (k.att_kp * (roll_des - e.roll) - k.att_kd * s.rate.x());
    const double tau_y = nominal.inertia.y() * (k.att_kp * (pitch_des - e.pitch) - k.att_kd * s.rate.y());
    return saturate({thrust, tau_x, tau_y}, nominal);
}

Controller make_expert(const RobotParams& nominal, const ExpertGains& gains) {
    return [nominal, gains](const State& s) { return expert_policy(s, nominal, gains); };
}

Trajectory rollout_expert(const DomainSample& domain, const State& s0, const RobotParams& nominal,
                          const ExpertGains& gains, const RewardConfig& reward, const EpisodeConfig& episode,
                          bool delayed, std::uint64_t seed) {
    DomainSample d = domain;
    if (!delayed) d.delay_steps = 0;
    return run_episode(make_expert(nominal, gains), d, s0, reward, episode, seed);
}

std::vector<DemoPair> rematch(const Trajectory& traj, int delay_steps, std::uint32_t traj_id) {
    if (delay_steps < 0) throw std::invalid_argument("rematch: negative delay");
    const std::size_t T = traj.actions.size();
    const auto d = static_cast<std::size_t>(delay_steps);
    if (T <= d) throw EmptyDatasetError("rematch: trajectory of " + std::to_string(T) +
                                        " actions is too short for delay " + std::to_string(delay_steps));
    std::vector<DemoPair> out(T - d);
    for (std::size_t t = 0; t + d < T; ++t) {
        out[t].state = traj.states[t].to_array();
        out[t].action = traj.actions[t + d];
        out[t].traj_id = traj_id;
        out[t].step = static_cast<std::uint32_t>(t);
    }
    return out;
}

DemoDataset build_demo_dataset(const RandomizationRanges& ranges, const RobotParams& nominal,
                               const ExpertGains& gains, const RewardConfig& reward,
                               const EpisodeConfig& episode, const DemoOptions& opt) {
    if (opt.n_pairs == 0) throw std::invalid_argument("build_demo_dataset: n_pairs must be positive");
    ranges.validate();
    gains.validate();
    if (opt.fixed_delay && *opt.fixed_delay < 0) throw std::invalid_argument("build_demo_dataset: negative delay");

    struct Job {
        Trajectory traj;
        int delay = 0;
        std::uint64_t seed = 0;
    };

    DemoDataset ds;
    ds.seed = opt.seed;
    ds.fixed_delay = opt.fixed_delay ? *opt.fixed_delay : -1;

    const int threads = std::max(1, opt.threads);
    std::size_t next_index = 0;
    std::size_t attempts = 0;
    while (ds.pairs.size() < opt.n_pairs) {
        // Roll out a wave of trajectories in parallel, then merge in index order.
        const std::size_t remaining = opt.n_pairs - ds.pairs.size();
        const std::size_t per_traj = static_cast<std::size_t>(episode.horizon);
        const std::size_t wave = std::max<std::size_t>(
            1, std::min<std::size_t>((remaining + per_traj - 1) / per_traj, static_cast<std::size_t>(threads) * 4));
        std::vector<Job> jobs(wave);
        parallel_for(wave, threads, [&](std::size_t j) {
            Job& job = jobs[j];
            job.seed = derive_seed(opt.seed, kDemoStream, next_index + j);
            Rng rng(job.seed);
            const DomainSample domain = sample_domain(ranges, nominal, rng);
            const State s0 = sample_initial_state(episode, rng);
            job.delay = opt.fixed_delay ? *opt.fixed_delay : domain.delay_steps;
            job.traj = rollout_expert(domain, s0, nominal, gains, reward, episode, /*delayed=*/false, job.seed);
        });
        next_index += wave;

        for (Job& job : jobs) {
            if (ds.pairs.size() >= opt.n_pairs) break;
            ++attempts;
            if (job.traj.failed) {
                ++ds.failed_trajectories;
                if (attempts >= 4 && 2 * ds.failed_trajectories > attempts)
                    throw ExpertFailureError("expert failed on " + std::to_string(ds.failed_trajectories) + " of " +
                                             std::to_string(attempts) +
                                             " demonstration rollouts; gains do not fit the randomization ranges");
                continue;
            }
            const auto id = static_cast<std::uint32_t>(ds.trajectories.size());
            std::vector<DemoPair> pairs = rematch(job.traj, job.delay, id);
            const std::size_t take = std::min(pairs.size(), opt.n_pairs - ds.pairs.size());
            ds.pairs.insert(ds.pairs.end(), pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(take));
            ds.trajectories.push_back({job.seed, job.delay, static_cast<std::uint32_t>(take)});
        }
        if (attempts >= 4 && 2 * ds.failed_trajectories > attempts)
            throw ExpertFailureError("expert failure rate above 50% during demonstration rollouts");
    }
    return ds;
}

void write_demo_dataset(const DemoDataset& ds, const std::string& path) {
    BinaryWriter w(path);
    w.put_bytes(kDemoMagic, sizeof(kDemoMagic));
    w.put(DemoDataset::kVersion);
    w.put(static_cast<std::uint32_t>(State::kDim + Action::kDim));
    w.put(static_cast<std::uint64_t>(ds.pairs.size()));
    w.put(ds.seed);
    w.put(ds.config_hash);
    w.put(ds.fixed_delay);
    w.put(ds.failed_trajectories);
    w.put(static_cast<std::uint32_t>(ds.trajectories.size()));
    for (const auto& t : ds.trajectories) {
        w.put(t.seed);
        w.put(t.delay_steps);
        w.put(t.pairs);
    }
    for (const auto& p : ds.pairs) {
        w.put(p.traj_id);
        w.put(p.step);
        w.put_bytes(p.state.data(), sizeof(double) * State::kDim);
        const auto a = p.action.to_array();
        w.put_bytes(a.data(), sizeof(double) * Action::kDim);
    }
    w.close();
}

DemoDataset read_demo_dataset(const std::string& path) {
    BinaryReader r(path);
    char magic[8];
    r.get_bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kDemoMagic, sizeof(magic)) != 0) throw FormatError(path + " is not a demo dataset");
    const auto version = r.get<std::uint32_t>();
    if (version != DemoDataset::kVersion)
        throw FormatError(path + ": unsupported demo dataset version " + std::to_string(version));
    const auto width = r.get<std::uint32_t>();
    if (width != State::kDim + Action::kDim) throw FormatError(path + ": unexpected record width");
    const auto count = r.get<std::uint64_t>();
    DemoDataset ds;
    ds.seed = r.get<std::uint64_t>();
    ds.config_hash = r.get<std::uint64_t>();
    ds.fixed_delay = r.get<std::int32_t>();
    ds.failed_trajectories = r.get<std::uint32_t>();
    const auto n_traj = r.get<std::uint32_t>();
    ds.trajectories.resize(n_traj);
    for (auto& t : ds.trajectories) {
        t.seed = r.get<std::uint64_t>();
        t.delay_steps = r.get<std::int32_t>();
        t.pairs = r.get<std::uint32_t>();
    }
    ds.pairs.resize(count);
    for (auto& p : ds.pairs) {
        p.traj_id = r.get<std::uint32_t>();
        p.step = r.get<std::uint32_t>();
        r.get_bytes(p.state.data(), sizeof(double) * State::kDim);
        std::array<double, Action::kDim> a{};
        r.get_bytes(a.data(), sizeof(double) * Action::kDim);
        p.action = Action::from_array(a);
        if (p.traj_id >= n_traj) throw FormatError(path + ": record references unknown trajectory");
    }
    if (!r.at_end()) throw FormatError(path + ": trailing bytes after last record");
    return ds;
}

DemoVariant parse_demo_variant(const std::string& name) {
    if (name == "baseline") return DemoVariant::baseline;
    if (name == "rematch") return DemoVariant::rematch;
    if (name == "dr") return DemoVariant::dr;
    throw std::invalid_argument("unknown demo variant '" + name + "' (expected baseline, rematch or dr)");
}

const char* to_string(DemoVariant v) {
    switch (v) {
        case DemoVariant::baseline: return "baseline";
        case DemoVariant::rematch: return "rematch";
        case DemoVariant::dr: return "dr";
    }
    return "?";
}

void apply_variant(DemoVariant v, RandomizationRanges& ranges, DemoOptions& opt) {
    if (v == DemoVariant::dr) return;
    const int mid_delay = static_cast<int>(std::floor(0.5 * (ranges.delay_ms.lo + ranges.delay_ms.hi)));
    ranges = RandomizationRanges::degenerate(mid_delay);
    if (v == DemoVariant::baseline) opt.fixed_delay = 0;
}

}  // namespace softfly
