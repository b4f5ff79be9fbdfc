#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "softfly/expert.hpp"
#include "softfly/eval.hpp"

using namespace softfly;

namespace {

// Element whose strict-less count equals k, found without sorting (distinct values).
double rank_select(const std::vector<double>& v, std::size_t k) {
    for (double x : v) {
        std::size_t less = 0;
        for (double y : v) less += y < x;
        if (less == k) return x;
    }
    throw std::logic_error("rank_select: no element of that rank");
}

std::vector<double> distinct_values(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal() * 100.0;
    return v;
}

EvalReport synthetic_report(const std::vector<double>& rewards, std::uint64_t seed0 = 100) {
    EvalReport r;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        EpisodeRecord e;
        e.seed = seed0 + i;
        e.sample_hash = 31 * (seed0 + i);
        e.total_reward = rewards[i];
        r.episodes.push_back(e);
    }
    return r;
}

EvalProtocol small_protocol(int episodes = 6) {
    EvalProtocol p;
    p.episodes = episodes;
    p.horizon = 400;
    p.settle_s = 0.1;
    return p;
}

Controller expert_controller() {
    return [](const State& s) { return expert_policy(s, RobotParams{}, ExpertGains{}); };
}

}  // namespace

TEST(Quantile, MatchesRankSelectionAtExactRanks) {
    Rng rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t k = 1 + static_cast<std::size_t>(trial % 7);
        const auto v = distinct_values(rng, 4 * k + 1);
        EXPECT_EQ(quantile(v, 0.0), rank_select(v, 0));
        EXPECT_EQ(quantile(v, 0.25), rank_select(v, k));
        EXPECT_EQ(quantile(v, 0.5), rank_select(v, 2 * k));
        EXPECT_EQ(quantile(v, 0.75), rank_select(v, 3 * k));
        EXPECT_EQ(quantile(v, 1.0), rank_select(v, 4 * k));
    }
}

TEST(Quantile, InterpolatesBetweenRanks) {
    EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(quantile({0.0, 10.0}, 0.3), 3.0);
    EXPECT_THROW(quantile({}, 0.5), std::invalid_argument);
    EXPECT_THROW(quantile({1.0}, 1.5), std::invalid_argument);
}

TEST(Quantile, MonotoneInQ) {
    Rng rng(2);
    const auto v = distinct_values(rng, 37);
    double prev = -INFINITY;
    for (int i = 0; i <= 100; ++i) {
        const double q = quantile(v, i / 100.0);
        EXPECT_GE(q, prev);
        prev = q;
    }
}

TEST(BoxStats, WhiskersAndOutliersByBruteForce) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto v = distinct_values(rng, 41);
        v.push_back(5000.0 + trial);
        v.push_back(-7000.0 - trial);
        const BoxStats b = box_stats(v);
        double sum = 0.0;
        for (double x : v) sum += x;
        EXPECT_NEAR(b.mean, sum / static_cast<double>(v.size()), 1e-9);
        EXPECT_EQ(b.n, v.size());
        const double lo = b.q1 - 1.5 * (b.q3 - b.q1), hi = b.q3 + 1.5 * (b.q3 - b.q1);
        std::vector<double> out;
        double wl = INFINITY, wh = -INFINITY;
        for (double x : v) {
            if (x < lo || x > hi) out.push_back(x);
            else wl = std::min(wl, x), wh = std::max(wh, x);
        }
        std::sort(out.begin(), out.end());
        EXPECT_EQ(b.outliers, out);
        EXPECT_EQ(b.whisker_low, wl);
        EXPECT_EQ(b.whisker_high, wh);
        EXPECT_GE(b.outliers.size(), 2u);
    }
}

TEST(Metrics, FluctuationByHand) {
    Trajectory tr;
    tr.actions = {{1.0, 0, 0}, {3.0, 0, 0}, {2.0, 0, 0}};
    EXPECT_DOUBLE_EQ(fluctuation_metric(tr), std::sqrt((4.0 + 1.0) / 2.0));
    tr.actions.resize(1);
    EXPECT_THROW(fluctuation_metric(tr), std::invalid_argument);
}

TEST(Metrics, RmseSkipsSettleWindow) {
    Trajectory tr;
    for (int t = 0; t < 10; ++t) {
        State s;
        s.pos = t < 4 ? Eigen::Vector3d(9, 9, 9) : Eigen::Vector3d(3, 4, 2);
        tr.states.push_back(s);
    }
    const RmseMetrics m = rmse_metrics(tr, 4 * kControlDt);
    EXPECT_DOUBLE_EQ(m.lateral, 5.0);
    EXPECT_DOUBLE_EQ(m.altitude, 2.0);
    EXPECT_THROW(rmse_metrics(tr, 1.0), std::invalid_argument);
}

TEST(PairedDelta, ShiftedRewardsGiveExactDelta) {
    Rng rng(4);
    const auto base = distinct_values(rng, 60);
    std::vector<double> shifted = base;
    for (auto& x : shifted) x += 25.0;
    const MedianDelta d = paired_median_delta(synthetic_report(base), synthetic_report(shifted));
    EXPECT_NEAR(d.delta, 25.0, 1e-9);
    // a constant shift survives every paired resample
    EXPECT_NEAR(d.ci_low, 25.0, 1e-9);
    EXPECT_NEAR(d.ci_high, 25.0, 1e-9);
    EXPECT_TRUE(d.significant());
}

TEST(PairedDelta, IdenticalReportsAreNotSignificant) {
    Rng rng(5);
    const auto r = synthetic_report(distinct_values(rng, 30));
    const MedianDelta d = paired_median_delta(r, r);
    EXPECT_EQ(d.delta, 0.0);
    EXPECT_FALSE(d.significant());
}

TEST(PairedDelta, RejectsUnpairedReports) {
    const auto a = synthetic_report({1, 2, 3});
    EXPECT_THROW(paired_median_delta(a, synthetic_report({1, 2, 3}, 500)), SeedMismatchError);
    EXPECT_THROW(paired_median_delta(a, synthetic_report({1, 2})), SeedMismatchError);
    EXPECT_THROW(paired_median_delta(a, a, 0), std::invalid_argument);
}

TEST(Comparison, OrderingAndBand) {
    Rng rng(6);
    const auto base = distinct_values(rng, 40);
    std::vector<EvalReport> reps;
    for (double shift : {0.0, 50.0, 100.0}) {
        auto v = base;
        for (auto& x : v) x += shift - 1000.0;
        reps.push_back(synthetic_report(v));
    }
    Comparison c = compare_reports(reps, {"a", "b", "c"});
    EXPECT_TRUE(c.ordered_increasing());
    EXPECT_NEAR(c.deltas[0][2].delta, 100.0, 1e-9);
    EXPECT_NEAR(c.deltas[2][0].delta, -100.0, 1e-9);
    EXPECT_TRUE(c.means_within_band(1, 0.1));
    EXPECT_FALSE(c.means_within_band(1, 0.01));
    std::swap(reps[0], reps[2]);
    EXPECT_FALSE(compare_reports(reps, {"c", "b", "a"}).ordered_increasing());
    EXPECT_THROW(compare_reports(reps, {"x"}), std::invalid_argument);
    EXPECT_THROW(c.means_within_band(5, 0.1), std::out_of_range);
}

TEST(Protocol, Validation) {
    EvalProtocol p = small_protocol();
    EXPECT_NO_THROW(p.validate());
    p.seeds = {1, 2, 3};
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p.seeds = {1, 2, 3, 4, 5, 5};
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p.seeds = {1, 2, 3, 4, 5, 6};
    EXPECT_NO_THROW(p.validate());
    EXPECT_EQ(p.episode_seeds(), p.seeds);
    p = small_protocol();
    p.threads = 0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Evaluate, DeterministicAcrossThreadsAndPaired) {
    EvalProtocol p = small_protocol();
    const EvalReport a =
        evaluate(fixed_controller(expert_controller()), p, RobotParams{}, RewardConfig{}, EpisodeConfig{}, "expert");
    p.threads = 3;
    const EvalReport b =
        evaluate(fixed_controller(expert_controller()), p, RobotParams{}, RewardConfig{}, EpisodeConfig{}, "expert");
    ASSERT_EQ(a.episodes.size(), 6u);
    EXPECT_NO_THROW(require_paired(a, b));
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(a.episodes[i].total_reward, b.episodes[i].total_reward);
    EXPECT_EQ(a.protocol_hash, b.protocol_hash);  // thread count is not part of the protocol

    // the rollout export replays the same episode
    const Trajectory tr =
        rollout_episode(expert_controller(), p, RobotParams{}, RewardConfig{}, EpisodeConfig{}, a.episodes[2].seed);
    EXPECT_DOUBLE_EQ(tr.total_reward(), a.episodes[2].total_reward);
    EXPECT_EQ(tr.steps(), 400u);
}

TEST(Evaluate, ZeroRandomizationExpertScoresZero) {
    EvalProtocol p = small_protocol(4);
    p.ranges = RandomizationRanges::degenerate(0);
    EpisodeConfig ec;
    ec.init_pos.setZero();
    ec.init_vel.setZero();
    ec.init_rate.setZero();
    ec.init_tilt = 0.0;
    const EvalReport r = evaluate(fixed_controller(expert_controller()), p, RobotParams{}, RewardConfig{}, ec);
    EXPECT_EQ(r.reward_stats().median, 0.0);
    EXPECT_EQ(r.failures(), 0);
}

TEST(Report, JsonAndFileRoundTrip) {
    EvalReport r = synthetic_report({-5.0, -3.0, -9.5});
    r.controller = "bc";
    r.config_hash = 0x1234;
    r.protocol_hash = 0x5678;
    r.episodes[1].failed = true;
    r.episodes[2].fluctuation = 0.25;
    const EvalReport back = report_from_json(to_json(r));
    EXPECT_EQ(back.controller, "bc");
    EXPECT_EQ(back.config_hash, 0x1234u);
    EXPECT_EQ(back.rewards(), r.rewards());
    EXPECT_EQ(back.failures(), 1);
    EXPECT_DOUBLE_EQ(back.episodes[2].fluctuation, 0.25);

    const std::string path = (std::filesystem::temp_directory_path() / "softfly_test_report.json").string();
    write_report(r, path);
    EXPECT_EQ(read_report(path).episodes.size(), 3u);
    std::ofstream(path) << "{not json";
    EXPECT_ANY_THROW(read_report(path));
    std::remove(path.c_str());
}

TEST(TrajectoryCsv, HeaderAndRowCount) {
    EvalProtocol p = small_protocol(1);
    const Trajectory tr = rollout_episode(expert_controller(), p, RobotParams{}, RewardConfig{}, EpisodeConfig{}, 3);
    const std::string path = (std::filesystem::temp_directory_path() / "softfly_test_traj.csv").string();
    write_trajectory_csv(tr, path, 0xabc);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "# config_hash=0000000000000abc");
    std::getline(is, line);
    EXPECT_EQ(line, "t_ms,x,y,z,qx,qy,qz,qw,vx,vy,vz,p,q,r,F,tau_x,tau_y,reward");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, static_cast<int>(tr.steps()));
    std::remove(path.c_str());
}
