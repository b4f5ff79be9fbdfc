#include "softfly/checks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "softfly/expert.hpp"
#include "softfly/mlp.hpp"
#include "softfly/rng.hpp"

namespace softfly {

namespace {

CheckResult make_result(std::string name, double value, double tol, std::string detail = "") {
    return {std::move(name), value <= tol, value, tol, std::move(detail)};
}

State axpy(const State& s, const StateDerivative& d, double h) {
    State out;
    out.pos = s.pos + h * d.dpos;
    out.vel = s.vel + h * d.dvel;
    out.rate = s.rate + h * d.drate;
    out.att = {s.att.x + h * d.datt.x, s.att.y + h * d.datt.y, s.att.z + h * d.datt.z, s.att.w + h * d.datt.w};
    return out;
}

// The intermediate stages are not unit quaternions; rotate with the
// normalized attitude so quat_to_rotmatrix accepts them.
StateDerivative stage(const State& s, const Action& a, const Disturbance& dist, const RobotParams& rp) {
    State unit = s;
    unit.att = s.att.normalized();
    StateDerivative d = derivative(unit, a, dist, rp);
    const Quat omega{s.rate.x(), s.rate.y(), s.rate.z(), 0.0};
    const Quat qdot = quat_multiply(s.att, omega);
    d.datt = {0.5 * qdot.x, 0.5 * qdot.y, 0.5 * qdot.z, 0.5 * qdot.w};
    return d;
}

double max_abs_diff(const State& a, const State& b) {
    const auto x = a.to_array();
    const auto y = b.to_array();
    double m = 0.0;
    for (int i = 0; i < State::kDim; ++i) m = std::max(m, std::abs(x[i] - y[i]));
    return m;
}

State random_state(Rng& rng) {
    State s;
    s.pos = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
    s.att = euler_to_quat(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-1.0, 1.0));
    s.vel = {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)};
    s.rate = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(-1.0, 1.0)};
    return s;
}

void perturb(MlpParams& p, Rng& rng, double sigma) {
    Eigen::VectorXd flat = p.flatten();
    for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) += sigma * rng.normal();
    p.unflatten(flat);
}

/// Largest componentwise relative error. Components whose magnitude is
/// below 1e-7 of the gradient's largest entry are compared absolutely
/// against that floor, where central differences lose their digits.
template <typename Loss>
double gradient_error(const MlpParams& params, Loss&& loss) {
    const Eigen::VectorXd analytic = loss(params).grad;
    const double floor = 1e-7 * std::max(analytic.cwiseAbs().maxCoeff(), 1e-12);
    Eigen::VectorXd flat = params.flatten();
    MlpParams probe = params;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
        const double x = flat(i);
        const double h = 1e-5 * std::max(1.0, std::abs(x));
        auto at = [&](double v) {
            flat(i) = v;
            probe.unflatten(flat);
            return loss(probe).loss;
        };
        // fourth-order central stencil
        const double numeric = (8.0 * (at(x + h) - at(x - h)) - (at(x + 2.0 * h) - at(x - 2.0 * h))) / (12.0 * h);
        flat(i) = x;
        const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
    }
    return worst;
}

}  // namespace

bool all_pass(const std::vector<CheckResult>& results) {
    return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
}

State rk4_step(const State& s, const Action& action, const Disturbance& dist, const RobotParams& rp, double dt) {
    const Action a = saturate(action, rp);
    const StateDerivative k1 = stage(s, a, dist, rp);
    const StateDerivative k2 = stage(axpy(s, k1, 0.5 * dt), a, dist, rp);
    const StateDerivative k3 = stage(axpy(s, k2, 0.5 * dt), a, dist, rp);
    const StateDerivative k4 = stage(axpy(s, k3, dt), a, dist, rp);
    StateDerivative sum;
    sum.dpos = k1.dpos + 2.0 * k2.dpos + 2.0 * k3.dpos + k4.dpos;
    sum.dvel = k1.dvel + 2.0 * k2.dvel + 2.0 * k3.dvel + k4.dvel;
    sum.drate = k1.drate + 2.0 * k2.drate + 2.0 * k3.drate + k4.drate;
    sum.datt = {k1.datt.x + 2.0 * k2.datt.x + 2.0 * k3.datt.x + k4.datt.x,
                k1.datt.y + 2.0 * k2.datt.y + 2.0 * k3.datt.y + k4.datt.y,
                k1.datt.z + 2.0 * k2.datt.z + 2.0 * k3.datt.z + k4.datt.z,
                k1.datt.w + 2.0 * k2.datt.w + 2.0 * k3.datt.w + k4.datt.w};
    State out = axpy(s, sum, dt / 6.0);
    out.att = out.att.normalized();
    return out;
}

std::vector<CheckResult> physics_suite(const RobotParams& rp) {
    rp.validate();
    std::vector<CheckResult> out;
    const Disturbance none;
    const double dt = kControlDt;

    {
        State s;
        s.pos = {0.01, -0.02, 0.03};
        double drift = 0.0;
        for (int t = 0; t < 5000; ++t) {
            const State next = step_dynamics(s, rp.nominal_action(), none, rp);
            drift = std::max(drift, max_abs_diff(next, s));
            s = next;
        }
        out.push_back(make_result("hover_fixed_point", drift, 1e-12, "max per-step state change over 5000 steps"));
    }

    {
        State s;
        s.pos = {0.1, 0.2, 0.3};
        s.vel = {0.5, -0.25, 1.0};
        const State s0 = s;
        double err = 0.0;
        for (int n = 1; n <= 1000; ++n) {
            s = step_dynamics(s, Action{0.0, 0.0, 0.0}, none, rp);
            const double nn = n;
            const Eigen::Vector3d g(0.0, 0.0, rp.gravity);
            const Eigen::Vector3d v = s0.vel - nn * dt * g;
            const Eigen::Vector3d p = s0.pos + nn * dt * s0.vel - 0.5 * nn * (nn - 1.0) * dt * dt * g;
            err = std::max({err, (s.vel - v).cwiseAbs().maxCoeff(), (s.pos - p).cwiseAbs().maxCoeff()});
        }
        out.push_back(make_result("free_fall_euler", err, 1e-12,
                                  "p_{t+1} = p_t + dt v_t, v_{t+1} = v_t - g dt over 1000 steps"));
    }

    {
        Rng rng(42);
        State s;
        s.rate = {20.0, -15.0, 5.0};
        double worst = 0.0;
        for (int t = 0; t < 5000; ++t) {
            const Action a{rp.nominal_thrust(), rng.uniform(-1.0, 1.0) * rp.torque_max * 0.01,
                           rng.uniform(-1.0, 1.0) * rp.torque_max * 0.01};
            s = step_dynamics(s, a, none, rp);
            s.pos.setZero();
            s.vel.setZero();
            worst = std::max(worst, std::abs(s.att.norm() - 1.0));
        }
        out.push_back(make_result("quaternion_norm", worst, 1e-12, "max | |q| - 1 | over 5000 tumbling steps"));
    }

    {
        State euler;
        euler.att = euler_to_quat(1e-3, 0.0, 0.0);
        State rk = euler;
        const Action a = rp.nominal_action();
        for (int t = 0; t < 5000; ++t) euler = step_dynamics(euler, a, none, rp);
        for (int t = 0; t < 50000; ++t) rk = rk4_step(rk, a, none, rp, 1e-4);
        const double err = max_abs_diff(euler, rk);
        out.push_back(make_result("rk4_agreement", err, 1e-4, "final state, 1e-3 rad roll hover, Euler at 1 ms vs RK4 at 0.1 ms over 5 s"));
    }

    {
        State s;
        s.rate = {0.0, 0.0, 5.0};
        int violations = 0;
        double prev = std::abs(s.rate.z());
        for (int t = 0; t < 5000; ++t) {
            s = step_dynamics(s, rp.nominal_action(), none, rp);
            const double r = std::abs(s.rate.z());
            if (r > prev) ++violations;
            prev = r;
        }
        out.push_back(make_result("yaw_rate_non_increasing", violations, 0.0, "steps where |r| grew"));
    }
    return out;
}

std::vector<CheckResult> gradient_suite(int configs, std::uint64_t seed) {
    if (configs <= 0) throw std::invalid_argument("gradient_suite: configs must be positive");
    const RobotParams nominal;
    double bc_err = 0.0, ppo_err = 0.0, value_err = 0.0;
    for (int c = 0; c < configs; ++c) {
        Rng rng(derive_seed(seed, 0x47524144, static_cast<std::uint64_t>(c)));
        const int batch = 8 + static_cast<int>(rng.uniform_int(0, 8));

        std::vector<State::Array> rows;
        Eigen::MatrixXd states(State::kDim, batch);
        for (int i = 0; i < batch; ++i) {
            rows.push_back(random_state(rng).to_array());
            for (int k = 0; k < State::kDim; ++k) states(k, i) = rows.back()[static_cast<std::size_t>(k)];
        }

        MlpParams policy = make_policy(nominal, rng, rng.uniform(-1.5, 0.0));
        fit_input_normalization(policy, rows);
        perturb(policy, rng, 0.3);

        Eigen::MatrixXd actions(3, batch);
        Eigen::MatrixXd scaled(3, batch);
        Eigen::VectorXd old_lp(batch), adv(batch);
        for (int i = 0; i < batch; ++i) {
            const Eigen::Vector3d y = forward_scaled(policy, rows[static_cast<std::size_t>(i)]) +
                                      Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()) * 0.5;
            scaled.col(i) = y;
            const Action a = unscale_action(policy, y);
            actions.col(i) << a.thrust, a.tau_x, a.tau_y;
            const Eigen::VectorXd mean = forward_scaled(policy, rows[static_cast<std::size_t>(i)]);
            old_lp(i) = gaussian_log_prob(mean, policy.log_std, y) + rng.uniform(-0.4, 0.4);
            adv(i) = rng.normal();
        }

        bc_err = std::max(bc_err, gradient_error(policy, [&](const MlpParams& p) { return bc_nll(p, states, actions); }));

        const PpoBatchView view{&states, &scaled, &old_lp, &adv};
        ppo_err = std::max(ppo_err, gradient_error(policy, [&](const MlpParams& p) {
                               return ppo_policy_loss(p, view, 0.2, 1e-3);
                           }));

        MlpParams value = make_value(rng, rng.uniform(-100.0, 0.0), rng.uniform(1.0, 50.0));
        fit_input_normalization(value, rows);
        perturb(value, rng, 0.3);
        Eigen::VectorXd targets(batch);
        for (int i = 0; i < batch; ++i) targets(i) = value.out_shift(0) + value.out_scale(0) * rng.normal();
        value_err = std::max(value_err, gradient_error(value, [&](const MlpParams& p) {
                                 return value_loss(p, states, targets);
                             }));
    }
    const std::string detail = "max componentwise relative error over " + std::to_string(configs) + " configurations";
    return {make_result("bc_nll_gradient", bc_err, 1e-4, detail),
            make_result("ppo_surrogate_gradient", ppo_err, 1e-4, detail),
            make_result("value_loss_gradient", value_err, 1e-4, detail)};
}

std::vector<CheckResult> rematch_suite() {
    constexpr int T = 40;
    Trajectory traj;
    for (int t = 0; t <= T; ++t) {
        State s;
        s.pos.x() = t;
        traj.states.push_back(s);
        if (t < T) {
            traj.actions.push_back(Action{1000.0 + t, 0.0, 0.0});
            traj.executed.push_back(traj.actions.back());
            traj.rewards.push_back(0.0);
        }
    }
    std::vector<CheckResult> out;
    for (int d : {0, 1, 2, 17}) {
        const std::vector<DemoPair> pairs = rematch(traj, d);
        int bad = pairs.size() == static_cast<std::size_t>(T - d) ? 0 : 1;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto t = static_cast<double>(i);
            if (pairs[i].state[0] != t || pairs[i].action.thrust != 1000.0 + t + d || pairs[i].step != i) ++bad;
        }
        std::ostringstream os;
        os << "d=" << d << ": " << pairs.size() << " pairs, expected " << T - d;
        out.push_back(make_result("rematch_d" + std::to_string(d), bad, 0.0, os.str()));
    }
    return out;
}

}  // namespace softfly
