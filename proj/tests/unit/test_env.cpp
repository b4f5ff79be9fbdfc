#include <cmath>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "softfly/env.hpp"

using namespace softfly;

namespace {

DomainSample nominal_domain(int delay) {
    DomainSample d;
    d.delay_steps = delay;
    return d;
}

}  // namespace

TEST(DelayBuffer, ReturnsCommandFromLengthStepsEarlier) {
    const Action fill{7.0, 0.0, 0.0};
    DelayBuffer b(3, fill);
    EXPECT_EQ(b.push_pop(Action{1, 0, 0}), fill);
    EXPECT_EQ(b.push_pop(Action{2, 0, 0}), fill);
    EXPECT_EQ(b.push_pop(Action{3, 0, 0}), fill);
    EXPECT_EQ(b.push_pop(Action{4, 0, 0}).thrust, 1.0);
    EXPECT_EQ(b.push_pop(Action{5, 0, 0}).thrust, 2.0);
    const auto q = b.pending();
    ASSERT_EQ(q.size(), 3u);
    EXPECT_EQ(q[0].thrust, 3.0);
    EXPECT_EQ(q[2].thrust, 5.0);
    EXPECT_EQ(b.pushes(), 5u);
    EXPECT_EQ(b.pops(), 5u);
}

TEST(DelayBuffer, ZeroLengthPassesThrough) {
    DelayBuffer b(0, Action{});
    EXPECT_EQ(b.push_pop(Action{3, 1, 2}), (Action{3, 1, 2}));
    EXPECT_TRUE(b.pending().empty());
}

TEST(DelayBuffer, PropertyFifoOrder) {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = static_cast<int>(rng.uniform_int(0, 25));
        DelayBuffer b(d, Action{-1, 0, 0});
        for (int t = 0; t < 100; ++t) {
            const Action out = b.push_pop(Action{static_cast<double>(t), 0, 0});
            ASSERT_EQ(out.thrust, t < d ? -1.0 : static_cast<double>(t - d));
        }
    }
}

TEST(Randomization, DefaultsValidate) { EXPECT_NO_THROW(RandomizationRanges{}.validate()); }

TEST(Randomization, RejectsBadRanges) {
    RandomizationRanges r;
    r.mass_factor = {1.2, 1.1};
    EXPECT_THROW(r.validate(), std::invalid_argument);
    r = {};
    r.delay_ms = {15.5, 20};
    EXPECT_THROW(r.validate(), std::invalid_argument);
    r = {};
    r.scale = 0.0;
    EXPECT_THROW(r.validate(), std::invalid_argument);
    r = {};
    r.scale = 10.0;  // mass factor interval would cross zero
    EXPECT_THROW(r.validate(), std::invalid_argument);
}

TEST(Randomization, SamplesStayInRanges) {
    const RandomizationRanges r;
    const RobotParams nominal;
    Rng rng(2);
    std::set<int> delays;
    for (int i = 0; i < 2000; ++i) {
        const DomainSample d = sample_domain(r, nominal, rng);
        EXPECT_TRUE(r.mass_factor.contains(d.robot.mass / nominal.mass));
        EXPECT_TRUE(r.ixx_factor.contains(d.robot.inertia.x() / nominal.inertia.x()));
        EXPECT_TRUE(r.iyy_factor.contains(d.robot.inertia.y() / nominal.inertia.y()));
        EXPECT_EQ(d.robot.inertia.z(), nominal.inertia.z());
        EXPECT_LE(d.dist.force.norm(), r.force_magnitude.hi * (1 + 1e-12));
        EXPECT_TRUE(r.torque_x.contains(d.dist.tau_x));
        delays.insert(d.delay_steps);
    }
    EXPECT_EQ(delays, (std::set<int>{15, 16, 17, 18, 19, 20}));
}

TEST(Randomization, ScaleStretchesIntervals) {
    RandomizationRanges r;
    r.scale = 2.0;
    const RandomizationRanges e = r.effective();
    EXPECT_NEAR(e.mass_factor.lo, 0.8, 1e-12);
    EXPECT_NEAR(e.mass_factor.hi, 1.2, 1e-12);
    EXPECT_NEAR(e.torque_x.hi, 4e-7, 1e-18);
    EXPECT_EQ(e.delay_ms.lo, 12.0);  // 17.5 -/+ 5, rounded outward
    EXPECT_EQ(e.delay_ms.hi, 23.0);
    EXPECT_EQ(e.scale, 1.0);
    r.scale = 0.5;
    EXPECT_NEAR(r.effective().ixx_factor.hi, 1.125, 1e-12);
}

TEST(Randomization, DegenerateGivesNominal) {
    const RobotParams nominal;
    Rng rng(3);
    const DomainSample d = sample_domain(RandomizationRanges::degenerate(17), nominal, rng);
    EXPECT_EQ(d.robot.mass, nominal.mass);
    EXPECT_EQ(d.dist.force.norm(), 0.0);
    EXPECT_EQ(d.delay_steps, 17);
}

TEST(Randomization, SeededDeterminism) {
    Rng a(99), b(99);
    const DomainSample x = sample_domain(RandomizationRanges{}, RobotParams{}, a);
    const DomainSample y = sample_domain(RandomizationRanges{}, RobotParams{}, b);
    EXPECT_EQ(hash_domain(x), hash_domain(y));
    Rng c(100);
    EXPECT_NE(hash_domain(x), hash_domain(sample_domain(RandomizationRanges{}, RobotParams{}, c)));
}

TEST(Reward, ZeroAtHoverWithNominalAction) {
    const RobotParams rp;
    EXPECT_EQ(compute_reward(State{}, rp.nominal_action(), rp.nominal_action(), RewardConfig{}, rp), 0.0);
}

TEST(Reward, TermsMatchHandComputation) {
    const RobotParams rp;
    RewardConfig rc;
    State s;
    s.pos = {0.01, -0.02, 0.005};
    s.att = euler_to_quat(0.1, -0.05, 1.0);
    s.vel = {0.1, 0, 0};
    s.rate = {0.5, -0.2, 3.0};
    const Action prev{rp.nominal_thrust(), 0.0, 0.0};
    const Action a{rp.nominal_thrust() + 1e-4, 2e-7, -1e-7};
    const RewardTerms t = reward_terms(s, a, prev, rc, rp);
    const double state = rc.k_p * (1e-4 + 4e-4 + 2.5e-5) + rc.k_e * (0.01 + 0.0025) + rc.k_v * 0.01 +
                         rc.k_w * (0.25 + 0.04);
    EXPECT_NEAR(t.state, -state, 1e-9);
    EXPECT_NEAR(t.fluctuation, -(rc.k_ff * 1e-8 + rc.k_txf * 4e-14 + rc.k_tyf * 1e-14), 1e-12);
    EXPECT_NEAR(t.nominal, -(rc.k_f * 1e-8 + rc.k_tx * 4e-14 + rc.k_ty * 1e-14), 1e-12);
    EXPECT_NEAR(compute_reward(s, a, prev, rc, rp), t.total(), 1e-15);
}

TEST(Reward, PropertyNonPositiveAndYawInvariant) {
    const RobotParams rp;
    const RewardConfig rc;
    Rng rng(4);
    for (int i = 0; i < 500; ++i) {
        const double roll = rng.uniform(-1, 1), pitch = rng.uniform(-1, 1);
        State s;
        s.pos = {rng.normal() * 0.1, rng.normal() * 0.1, rng.normal() * 0.1};
        s.vel = {rng.normal(), rng.normal(), rng.normal()};
        s.rate = {rng.normal(), rng.normal(), rng.normal()};
        s.att = euler_to_quat(roll, pitch, rng.uniform(-3, 3));
        const Action a{rng.uniform(0, rp.thrust_max), rng.uniform(-5e-6, 5e-6), rng.uniform(-5e-6, 5e-6)};
        const Action p{rng.uniform(0, rp.thrust_max), rng.uniform(-5e-6, 5e-6), rng.uniform(-5e-6, 5e-6)};
        const double r = compute_reward(s, a, p, rc, rp);
        EXPECT_LE(r, 0.0);
        State rotated = s;
        rotated.att = euler_to_quat(roll, pitch, rng.uniform(-3, 3));
        rotated.rate.z() = rng.normal() * 10;
        EXPECT_NEAR(compute_reward(rotated, a, p, rc, rp), r, 1e-9 * std::abs(r) + 1e-12);
    }
}

TEST(Reward, GimbalReturnsFailureReward) {
    const RobotParams rp;
    State s;
    s.att = euler_to_quat(0.0, std::numbers::pi / 2, 0.0);
    EXPECT_EQ(compute_reward(s, rp.nominal_action(), rp.nominal_action(), RewardConfig{}, rp, -123.0), -123.0);
}

TEST(Reward, RejectsNegativeWeights) {
    RewardConfig rc;
    rc.k_v = -1.0;
    EXPECT_THROW(rc.validate(), std::invalid_argument);
}

TEST(InitialState, WithinRangesAndDeterministic) {
    const EpisodeConfig ec;
    Rng a(5), b(5);
    for (int i = 0; i < 1000; ++i) {
        const State s = sample_initial_state(ec, a);
        EXPECT_TRUE(ec.in_init_ranges(s));
        EXPECT_EQ(s.att.z, 0.0);  // tilt about a horizontal axis
        EXPECT_EQ(s, sample_initial_state(ec, b));
    }
}

TEST(DelayedEnv, CommandExecutesAfterDelay) {
    DelayedEnv env(RewardConfig{}, EpisodeConfig{});
    const DomainSample d = nominal_domain(4);
    env.reset(d, State{});
    const Action big{d.robot.nominal_thrust() * 1.5, 0, 0};
    for (int t = 0; t < 4; ++t) EXPECT_EQ(env.step(big).executed, d.robot.nominal_action());
    EXPECT_EQ(env.step(big).executed, big);
}

TEST(DelayedEnv, SettledStateMatchesReplay) {
    DelayedEnv env(RewardConfig{}, EpisodeConfig{});
    const DomainSample d = nominal_domain(3);
    env.reset(d, State{});
    const Action a1{d.robot.nominal_thrust() * 1.2, 1e-7, 0}, a2{d.robot.nominal_thrust() * 0.9, 0, -1e-7};
    env.step(a1);
    env.step(a2);
    State s = env.state();
    s = step_dynamics(s, d.robot.nominal_action(), d.dist, d.robot);
    s = step_dynamics(s, a1, d.dist, d.robot);
    s = step_dynamics(s, a2, d.dist, d.robot);
    EXPECT_EQ(env.settled_state(), s);

    DelayedEnv undelayed(RewardConfig{}, EpisodeConfig{});
    undelayed.reset(nominal_domain(0), State{});
    undelayed.step(a1);
    EXPECT_EQ(undelayed.settled_state(), undelayed.state());
}

TEST(DelayedEnv, RewardUsesCommandedAction) {
    const RewardConfig rc;
    DelayedEnv env(rc, EpisodeConfig{});
    const DomainSample d = nominal_domain(5);
    env.reset(d, State{});
    const Action a{d.robot.nominal_thrust() + 1e-4, 0, 0};
    const StepResult r = env.step(a);
    EXPECT_EQ(r.obs, State{});  // fill action keeps the hover
    EXPECT_NEAR(r.reward, -(rc.k_ff * 1e-8 + rc.k_f * 1e-8), 1e-15);
}

TEST(DelayedEnv, HorizonAndFailurePenalty) {
    RewardConfig rc;
    EpisodeConfig ec;
    ec.horizon = 50;
    DelayedEnv env(rc, ec);
    DomainSample d = nominal_domain(0);
    env.reset(d, State{});
    for (int t = 0; t < 49; ++t) ASSERT_FALSE(env.step(d.robot.nominal_action()).done);
    EXPECT_TRUE(env.step(d.robot.nominal_action()).done);
    EXPECT_THROW(env.step(d.robot.nominal_action()), std::logic_error);

    // free fall leaves the 0.5 m envelope after about 0.32 s
    ec.horizon = 1000;
    DelayedEnv fall(rc, ec);
    fall.reset(d, State{});
    StepResult r;
    int t = 0;
    do {
        r = fall.step(Action{0, 0, 0});
        ++t;
    } while (!r.done);
    EXPECT_TRUE(r.failed);
    EXPECT_LT(t, 1000);
    EXPECT_DOUBLE_EQ(r.reward, -(ec.horizon - t + 1) * worst_step_penalty(rc, ec));
}

TEST(DelayedEnv, StrictResetRejectsOutOfRangeState) {
    DelayedEnv env(RewardConfig{}, EpisodeConfig{});
    State s;
    s.pos.x() = 0.2;
    EXPECT_THROW(env.reset(nominal_domain(0), s), std::invalid_argument);
    env.set_strict_reset(false);
    EXPECT_NO_THROW(env.reset(nominal_domain(0), s));
    EXPECT_THROW(env.step(Action{NAN, 0, 0}), std::invalid_argument);
}

TEST(Hashing, SectionsAreSensitive) {
    auto h = [](auto&& v) {
        Fnv1a f;
        hash_into(f, v);
        return f.digest();
    };
    RewardConfig a, b;
    b.k_ff *= 2;
    EXPECT_NE(h(a), h(b));
    EpisodeConfig e1, e2;
    e2.horizon = 4000;
    EXPECT_NE(h(e1), h(e2));
    EXPECT_EQ(h(RobotParams{}), h(RobotParams{}));
}
