#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "softfly/binary_io.hpp"
#include "softfly/checks.hpp"
#include "softfly/config.hpp"

namespace py = pybind11;
using namespace softfly;

namespace {

PipelineConfig parse_config(const std::string& text) {
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: invalid JSON");
    return config_from_json(j);
}

py::dict report_dict(const EvalReport& r) {
    const BoxStats b = r.reward_stats();
    py::dict d;
    d["controller"] = r.controller;
    d["rewards"] = r.rewards();
    d["fluctuations"] = r.fluctuations();
    d["median"] = b.median;
    d["mean"] = b.mean;
    d["q1"] = b.q1;
    d["q3"] = b.q3;
    d["failures"] = r.failures();
    d["mean_fluctuation"] = r.mean_fluctuation();
    d["protocol_hash"] = hex64(r.protocol_hash);
    return d;
}

std::vector<py::dict> check_dicts(const std::vector<CheckResult>& checks) {
    std::vector<py::dict> out;
    for (const auto& c : checks) {
        py::dict d;
        d["name"] = c.name;
        d["pass"] = c.pass;
        d["value"] = c.value;
        d["tolerance"] = c.tolerance;
        d["detail"] = c.detail;
        out.push_back(d);
    }
    return out;
}

Controller controller_for(const py::object& policy, const PipelineConfig& cfg, bool deterministic,
                          std::uint64_t seed) {
    if (py::isinstance<py::str>(policy)) {
        if (policy.cast<std::string>() != "expert") throw std::invalid_argument("controller must be 'expert' or a Policy");
        return make_expert(cfg.robot, cfg.expert);
    }
    return policy_controller(policy.cast<const MlpParams&>(), cfg.robot, deterministic)(seed);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Delayed flapping-wing hover simulator, expert demonstrations, BC and PPO";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<TrainingAbort>(m, "TrainingAbort", PyExc_RuntimeError);
    py::register_exception<IntegrationBlowup>(m, "IntegrationBlowup", PyExc_ArithmeticError);

    m.attr("CONTROL_DT") = kControlDt;

    py::class_<Quat>(m, "Quat")
        .def(py::init<>())
        .def(py::init([](double x, double y, double z, double w) { return Quat{x, y, z, w}; }), py::arg("x"),
             py::arg("y"), py::arg("z"), py::arg("w"))
        .def_readwrite("x", &Quat::x)
        .def_readwrite("y", &Quat::y)
        .def_readwrite("z", &Quat::z)
        .def_readwrite("w", &Quat::w)
        .def("__repr__", [](const Quat& q) {
            return "Quat(" + std::to_string(q.x) + ", " + std::to_string(q.y) + ", " + std::to_string(q.z) + ", " +
                   std::to_string(q.w) + ")";
        });

    m.def("euler_to_quat", &euler_to_quat, py::arg("roll"), py::arg("pitch"), py::arg("yaw"));
    m.def("quat_to_euler", [](const Quat& q) {
        const Euler e = quat_to_euler(q);
        return py::make_tuple(e.roll, e.pitch, e.yaw);
    });

    py::class_<State>(m, "State")
        .def(py::init<>())
        .def_readwrite("pos", &State::pos)
        .def_readwrite("att", &State::att)
        .def_readwrite("vel", &State::vel)
        .def_readwrite("rate", &State::rate)
        .def("to_array", [](const State& s) {
            const auto a = s.to_array();
            return Eigen::Matrix<double, 13, 1>(a.data());
        })
        .def_static("from_array", [](const Eigen::Matrix<double, 13, 1>& v) {
            State::Array a;
            for (int i = 0; i < 13; ++i) a[static_cast<std::size_t>(i)] = v(i);
            return State::from_array(a);
        });

    py::class_<Action>(m, "Action")
        .def(py::init<>())
        .def(py::init([](double f, double tx, double ty) { return Action{f, tx, ty}; }), py::arg("thrust"),
             py::arg("tau_x") = 0.0, py::arg("tau_y") = 0.0)
        .def_readwrite("thrust", &Action::thrust)
        .def_readwrite("tau_x", &Action::tau_x)
        .def_readwrite("tau_y", &Action::tau_y)
        .def("__repr__", [](const Action& a) {
            return "Action(" + std::to_string(a.thrust) + ", " + std::to_string(a.tau_x) + ", " +
                   std::to_string(a.tau_y) + ")";
        });

    py::class_<RobotParams>(m, "RobotParams")
        .def(py::init<>())
        .def_readwrite("mass", &RobotParams::mass)
        .def_readwrite("inertia", &RobotParams::inertia)
        .def_readwrite("yaw_damping", &RobotParams::yaw_damping)
        .def_readwrite("gravity", &RobotParams::gravity)
        .def_readwrite("thrust_max", &RobotParams::thrust_max)
        .def_readwrite("torque_max", &RobotParams::torque_max)
        .def("nominal_action", &RobotParams::nominal_action);

    py::class_<Disturbance>(m, "Disturbance")
        .def(py::init<>())
        .def_readwrite("force", &Disturbance::force)
        .def_readwrite("tau_x", &Disturbance::tau_x)
        .def_readwrite("tau_y", &Disturbance::tau_y);

    py::class_<DomainSample>(m, "DomainSample")
        .def(py::init<>())
        .def_readwrite("robot", &DomainSample::robot)
        .def_readwrite("dist", &DomainSample::dist)
        .def_readwrite("delay_steps", &DomainSample::delay_steps);

    m.def("step_dynamics", &step_dynamics, py::arg("state"), py::arg("action"), py::arg("dist"), py::arg("robot"),
          py::arg("dt") = kControlDt);

    py::class_<PipelineConfig>(m, "Config")
        .def(py::init<>())
        .def_static("from_json", &parse_config, py::arg("text"))
        .def_static("load", &load_config, py::arg("path"))
        .def("to_json", [](const PipelineConfig& c) { return config_to_json(c).dump(); })
        .def("save", [](const PipelineConfig& c, const std::string& path) { save_config(c, path); })
        .def("hash", [](const PipelineConfig& c) { return hex64(c.hash()); })
        .def_readwrite("robot", &PipelineConfig::robot)
        .def_readwrite("seed", &PipelineConfig::seed);

    py::class_<StepResult>(m, "StepResult")
        .def_readonly("obs", &StepResult::obs)
        .def_readonly("reward", &StepResult::reward)
        .def_readonly("done", &StepResult::done)
        .def_readonly("failed", &StepResult::failed)
        .def_readonly("executed", &StepResult::executed);

    py::class_<DelayedEnv>(m, "DelayedEnv")
        .def(py::init([](const PipelineConfig& c) { return DelayedEnv(c.reward, c.episode); }), py::arg("config"))
        .def("reset", &DelayedEnv::reset, py::arg("domain"), py::arg("s0"))
        .def("reset_seeded",
             [](DelayedEnv& env, const PipelineConfig& c, std::uint64_t seed) {
                 const EpisodeSample s = draw_episode(c.protocol(), c.robot, c.episode, seed);
                 return env.reset(s.domain, s.s0);
             },
             py::arg("config"), py::arg("seed"), "Draws (domain, s0) as the evaluation protocol does for `seed`.")
        .def("step", &DelayedEnv::step, py::arg("action"))
        .def_property_readonly("state", &DelayedEnv::state)
        .def_property_readonly("domain", &DelayedEnv::domain)
        .def_property_readonly("steps_taken", &DelayedEnv::steps_taken)
        .def_property_readonly("done", &DelayedEnv::done);

    m.def(
        "expert_action", [](const PipelineConfig& c, const State& s) { return expert_policy(s, c.robot, c.expert); },
        py::arg("config"), py::arg("state"));

    py::class_<DemoDataset>(m, "DemoDataset")
        .def("__len__", &DemoDataset::size)
        .def_readonly("failed_trajectories", &DemoDataset::failed_trajectories)
        .def_property_readonly("num_trajectories", [](const DemoDataset& d) { return d.trajectories.size(); })
        .def_property_readonly("config_hash", [](const DemoDataset& d) { return hex64(d.config_hash); })
        .def("states",
             [](const DemoDataset& d) {
                 Eigen::MatrixXd out(static_cast<Eigen::Index>(d.size()), 13);
                 for (std::size_t i = 0; i < d.size(); ++i)
                     for (int j = 0; j < 13; ++j) out(static_cast<Eigen::Index>(i), j) = d.pairs[i].state[j];
                 return out;
             })
        .def("actions",
             [](const DemoDataset& d) {
                 Eigen::MatrixXd out(static_cast<Eigen::Index>(d.size()), 3);
                 for (std::size_t i = 0; i < d.size(); ++i) {
                     const auto a = d.pairs[i].action.to_array();
                     for (int j = 0; j < 3; ++j) out(static_cast<Eigen::Index>(i), j) = a[static_cast<std::size_t>(j)];
                 }
                 return out;
             })
        .def("save", [](const DemoDataset& d, const std::string& path) { write_demo_dataset(d, path); })
        .def_static("load", &read_demo_dataset, py::arg("path"));

    m.def(
        "generate_demos",
        [](const PipelineConfig& c, std::size_t pairs, const std::string& variant, std::optional<std::uint64_t> seed,
           int threads) {
            RandomizationRanges ranges = c.randomization;
            DemoOptions opt;
            opt.n_pairs = pairs;
            opt.seed = seed.value_or(c.seed);
            opt.threads = threads;
            apply_variant(parse_demo_variant(variant), ranges, opt);
            py::gil_scoped_release release;
            DemoDataset ds = build_demo_dataset(ranges, c.robot, c.expert, c.reward, c.episode, opt);
            ds.config_hash = c.hash();
            return ds;
        },
        py::arg("config"), py::arg("pairs") = 20000, py::arg("variant") = "dr", py::arg("seed") = py::none(),
        py::arg("threads") = 1);

    py::class_<MlpParams>(m, "Policy")
        .def("act", &policy_mean, py::arg("state"))
        .def("hash", [](const MlpParams& p) { return hex64(hash_params(p)); })
        .def_readonly("stage", &MlpParams::stage)
        .def_readonly("log_std", &MlpParams::log_std)
        .def("save", [](const MlpParams& p, const std::string& path) { save_checkpoint(p, path); })
        .def_static("load", [](const std::string& path) { return load_checkpoint(path); }, py::arg("path"));

    m.def(
        "bc_train",
        [](const PipelineConfig& c, const DemoDataset& ds) {
            py::gil_scoped_release release;
            return bc_train(ds, c.robot, c.bc).policy;
        },
        py::arg("config"), py::arg("dataset"));

    m.def(
        "ppo_train",
        [](const PipelineConfig& c, const MlpParams& init, std::optional<std::int64_t> total_steps, int threads) {
            PpoConfig p = c.ppo;
            if (total_steps) p.total_steps = *total_steps;
            p.threads = threads;
            py::gil_scoped_release release;
            const PpoResult r = train_ppo(init, c.randomization, c.robot, c.reward, c.episode, p);
            return py::make_tuple(r.policy, r.initial_eval_median, r.best_eval_median);
        },
        py::arg("config"), py::arg("init"), py::arg("total_steps") = py::none(), py::arg("threads") = 1,
        "Returns (policy, initial validation median, best validation median).");

    m.def(
        "evaluate",
        [](const PipelineConfig& c, const py::object& controller, std::optional<int> episodes, bool deterministic,
           int threads) {
            EvalProtocol p = c.protocol();
            if (episodes) p.episodes = *episodes;
            p.deterministic = deterministic;
            p.threads = threads;
            ControllerFactory factory;
            if (py::isinstance<py::str>(controller)) {
                factory = fixed_controller(controller_for(controller, c, deterministic, 0));
            } else {
                factory = policy_controller(controller.cast<const MlpParams&>(), c.robot, deterministic);
            }
            EvalReport r;
            {
                py::gil_scoped_release release;
                r = evaluate(factory, p, c.robot, c.reward, c.episode);
            }
            return report_dict(r);
        },
        py::arg("config"), py::arg("controller"), py::arg("episodes") = py::none(), py::arg("deterministic") = true,
        py::arg("threads") = 1, "`controller` is 'expert' or a Policy.");

    m.def(
        "rollout",
        [](const PipelineConfig& c, const py::object& controller, std::uint64_t seed) {
            const Controller ctl = controller_for(controller, c, true, seed);
            const Trajectory tr = rollout_episode(ctl, c.protocol(), c.robot, c.reward, c.episode, seed);
            Eigen::MatrixXd states(static_cast<Eigen::Index>(tr.states.size()), 13);
            Eigen::MatrixXd actions(static_cast<Eigen::Index>(tr.actions.size()), 3);
            for (std::size_t t = 0; t < tr.states.size(); ++t) {
                const auto a = tr.states[t].to_array();
                for (int j = 0; j < 13; ++j) states(static_cast<Eigen::Index>(t), j) = a[static_cast<std::size_t>(j)];
            }
            for (std::size_t t = 0; t < tr.actions.size(); ++t) {
                const auto a = tr.actions[t].to_array();
                for (int j = 0; j < 3; ++j) actions(static_cast<Eigen::Index>(t), j) = a[static_cast<std::size_t>(j)];
            }
            py::dict d;
            d["states"] = states;
            d["actions"] = actions;
            d["rewards"] = tr.rewards;
            d["failed"] = tr.failed;
            d["delay_steps"] = tr.domain.delay_steps;
            return d;
        },
        py::arg("config"), py::arg("controller"), py::arg("seed"));

    m.def("physics_check", [](const PipelineConfig& c) { return check_dicts(physics_suite(c.robot)); },
          py::arg("config"));
    m.def("gradient_check", [](int configs) { return check_dicts(gradient_suite(configs)); },
          py::arg("configs") = 10);
    m.def("rematch_check", [] { return check_dicts(rematch_suite()); });
}
