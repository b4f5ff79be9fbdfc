#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "softfly/binary_io.hpp"
#include "softfly/checks.hpp"
#include "softfly/expert.hpp"

using namespace softfly;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("softfly_test_" + name)).string();
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

// States carry the index t in x, actions carry 1000 + t in thrust.
Trajectory index_trajectory(int T) {
    Trajectory tr;
    for (int t = 0; t <= T; ++t) {
        State s;
        s.pos.x() = t;
        tr.states.push_back(s);
        if (t < T) {
            tr.actions.push_back({1000.0 + t, 0.0, 0.0});
            tr.executed.push_back(tr.actions.back());
            tr.rewards.push_back(0.0);
        }
    }
    return tr;
}

EpisodeConfig short_episode() {
    EpisodeConfig ec;
    ec.horizon = 500;
    return ec;
}

}  // namespace

class RematchOracle : public ::testing::TestWithParam<int> {};

TEST_P(RematchOracle, PairsStateWithActionDStepsLater) {
    const int d = GetParam();
    const int T = 60;
    const auto pairs = rematch(index_trajectory(T), d, 5);
    ASSERT_EQ(pairs.size(), static_cast<std::size_t>(T - d));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        EXPECT_EQ(pairs[i].state[0], static_cast<double>(i));
        EXPECT_EQ(pairs[i].action.thrust, 1000.0 + static_cast<double>(i) + d);
        EXPECT_EQ(pairs[i].step, i);
        EXPECT_EQ(pairs[i].traj_id, 5u);
    }
}

INSTANTIATE_TEST_SUITE_P(Delays, RematchOracle, ::testing::Values(0, 1, 2, 17));

TEST(Rematch, TooShortThrows) {
    EXPECT_THROW(rematch(index_trajectory(17), 17), EmptyDatasetError);
    EXPECT_EQ(rematch(index_trajectory(18), 17).size(), 1u);
    EXPECT_THROW(rematch(index_trajectory(5), -1), std::invalid_argument);
}

TEST(Rematch, LibrarySuitePasses) {
    for (const auto& r : rematch_suite()) EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Expert, HoverIsEquilibrium) {
    const RobotParams rp;
    const Action a = expert_policy(State{}, rp, ExpertGains{});
    EXPECT_DOUBLE_EQ(a.thrust, rp.nominal_thrust());
    EXPECT_EQ(a.tau_x, 0.0);
    EXPECT_EQ(a.tau_y, 0.0);
}

TEST(Expert, CorrectsDisplacementDirection) {
    const RobotParams rp;
    State s;
    s.pos = {0.05, 0.0, -0.02};
    const Action a = expert_policy(s, rp, ExpertGains{});
    EXPECT_GT(a.thrust, rp.nominal_thrust());  // climb back up
    EXPECT_LT(a.tau_y, 0.0);                   // pitch to accelerate toward -x
    s.pos = {0.0, 0.05, 0.0};
    EXPECT_GT(expert_policy(s, rp, ExpertGains{}).tau_x, 0.0);  // roll to accelerate toward -y
}

TEST(Expert, StabilizesUndelayedNominalRobot) {
    const RobotParams rp;
    const EpisodeConfig ec;
    Rng rng(1);
    for (int i = 0; i < 5; ++i) {
        DomainSample d;
        const State s0 = sample_initial_state(ec, rng);
        const Trajectory tr = rollout_expert(d, s0, rp, ExpertGains{}, RewardConfig{}, ec, false);
        ASSERT_FALSE(tr.failed);
        EXPECT_LT(tr.states.back().pos.norm(), 1e-3);
        EXPECT_LT(tr.states.back().vel.norm(), 1e-3);
    }
}

TEST(Expert, DelayDegradesReward) {
    const RobotParams rp;
    const EpisodeConfig ec;
    Rng rng(2);
    const DomainSample d = sample_domain(RandomizationRanges{}, rp, rng);
    const State s0 = sample_initial_state(ec, rng);
    const double fast = rollout_expert(d, s0, rp, ExpertGains{}, RewardConfig{}, ec, false).total_reward();
    const double slow = rollout_expert(d, s0, rp, ExpertGains{}, RewardConfig{}, ec, true).total_reward();
    EXPECT_GT(fast, slow);
}

TEST(Expert, GainsValidate) {
    ExpertGains g;
    EXPECT_NO_THROW(g.validate());
    g.att_kd = -1.0;
    EXPECT_THROW(g.validate(), std::invalid_argument);
    g = {};
    g.max_tilt = 2.0;
    EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(DemoDataset, ExactPairCountAndTruncation) {
    DemoOptions opt;
    opt.n_pairs = 1234;
    opt.seed = 3;
    const DemoDataset ds = build_demo_dataset(RandomizationRanges{}, RobotParams{}, ExpertGains{}, RewardConfig{},
                                              short_episode(), opt);
    EXPECT_EQ(ds.size(), 1234u);
    std::uint32_t total = 0;
    for (const auto& t : ds.trajectories) {
        EXPECT_GE(t.delay_steps, 15);
        EXPECT_LE(t.delay_steps, 20);
        EXPECT_LE(t.pairs, 500u - static_cast<std::uint32_t>(t.delay_steps));
        total += t.pairs;
    }
    EXPECT_EQ(total, 1234u);
    EXPECT_EQ(ds.fixed_delay, -1);
}

TEST(DemoDataset, PairsFollowTheUndelayedExpert) {
    DemoOptions opt;
    opt.n_pairs = 300;
    opt.seed = 4;
    opt.fixed_delay = 7;
    const EpisodeConfig ec = short_episode();
    const DemoDataset ds =
        build_demo_dataset(RandomizationRanges{}, RobotParams{}, ExpertGains{}, RewardConfig{}, ec, opt);
    // pair t holds the expert command issued at t + 7 on the recorded trajectory
    Rng rng(ds.trajectories[0].seed);
    const DomainSample d = sample_domain(RandomizationRanges{}, RobotParams{}, rng);
    const State s0 = sample_initial_state(ec, rng);
    const Trajectory tr = rollout_expert(d, s0, RobotParams{}, ExpertGains{}, RewardConfig{}, ec, false);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        ASSERT_EQ(ds.pairs[i].state, tr.states[i].to_array());
        ASSERT_EQ(ds.pairs[i].action, tr.actions[i + 7]);
    }
}

TEST(DemoDataset, ZeroPairsRejected) {
    DemoOptions opt;
    opt.n_pairs = 0;
    EXPECT_THROW(build_demo_dataset(RandomizationRanges{}, RobotParams{}, ExpertGains{}, RewardConfig{},
                                    short_episode(), opt),
                 std::invalid_argument);
}

TEST(DemoDataset, ExpertFailureAborts) {
    ExpertGains broken;
    broken.att_kp = 0.0;
    broken.att_kd = 0.0;
    broken.alt_kp = 0.0;
    DemoOptions opt;
    opt.n_pairs = 5000;
    EXPECT_THROW(build_demo_dataset(RandomizationRanges{}, RobotParams{}, broken, RewardConfig{}, EpisodeConfig{}, opt),
                 ExpertFailureError);
}

TEST(DemoDataset, BitIdenticalAcrossRunsAndThreads) {
    DemoOptions opt;
    opt.n_pairs = 2000;
    opt.seed = 5;
    const std::string a = temp_path("demo_a.bin"), b = temp_path("demo_b.bin");
    DemoDataset x = build_demo_dataset(RandomizationRanges{}, RobotParams{}, ExpertGains{}, RewardConfig{},
                                       short_episode(), opt);
    opt.threads = 3;
    DemoDataset y = build_demo_dataset(RandomizationRanges{}, RobotParams{}, ExpertGains{}, RewardConfig{},
                                       short_episode(), opt);
    write_demo_dataset(x, a);
    write_demo_dataset(y, b);
    EXPECT_EQ(slurp(a), slurp(b));
    std::remove(a.c_str());
    std::remove(b.c_str());
}

TEST(DemoDataset, FileRoundTripAndCorruption) {
    DemoOptions opt;
    opt.n_pairs = 700;
    opt.seed = 6;
    DemoDataset ds = build_demo_dataset(RandomizationRanges{}, RobotParams{}, ExpertGains{}, RewardConfig{},
                                        short_episode(), opt);
    ds.config_hash = 0xabcdef;
    const std::string path = temp_path("demo_rt.bin");
    write_demo_dataset(ds, path);
    const DemoDataset back = read_demo_dataset(path);
    EXPECT_EQ(back.size(), ds.size());
    EXPECT_EQ(back.config_hash, 0xabcdefu);
    EXPECT_EQ(back.pairs.back().action, ds.pairs.back().action);
    EXPECT_EQ(back.pairs[17].state, ds.pairs[17].state);

    std::string bytes = slurp(path);
    {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    EXPECT_THROW(read_demo_dataset(path), FormatError);
    bytes[0] ^= 0x5a;
    {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    EXPECT_THROW(read_demo_dataset(path), FormatError);
    std::remove(path.c_str());
    EXPECT_THROW(read_demo_dataset(path), IoError);
}
