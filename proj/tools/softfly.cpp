#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "softfly/binary_io.hpp"
#include "softfly/checks.hpp"
#include "softfly/config.hpp"
#include "softfly/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace softfly;

namespace {

enum Exit : int { kOk = 0, kValidation = 2, kTrainingAbort = 3, kIo = 4 };

/// Config hash of an upstream artifact does not match the loaded config.
class HashMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    bool force = false;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("-c,--config", c.config_path, "JSON pipeline config (defaults when omitted)");
    app->add_option("--set", c.overrides, "Override a config field, e.g. --set ppo.total_steps=0");
    app->add_flag("--force", c.force, "Accept upstream artifacts produced under a different config");
}

PipelineConfig load(const Common& c) {
    json doc = json::object();
    if (!c.config_path.empty()) {
        std::ifstream is(c.config_path);
        if (!is) throw IoError("cannot open config " + c.config_path);
        try {
            is >> doc;
        } catch (const json::exception& e) {
            throw ConfigError(c.config_path + ": " + e.what());
        }
    }
    for (const auto& o : c.overrides) apply_override(doc, o);
    PipelineConfig cfg = config_from_json(doc);
    const int threads = default_thread_count();
    cfg.ppo.threads = threads;
    cfg.eval.threads = threads;
    return cfg;
}

void check_hash(std::uint64_t artifact, std::uint64_t expected, const std::string& what, bool force) {
    if (artifact == expected) return;
    const std::string msg = what + " was produced under config " + hex64(artifact) + ", current config is " +
                            hex64(expected);
    if (!force) throw HashMismatch(msg + " (use --force to accept)");
    std::cerr << "warning: " << msg << '\n';
}

MlpParams load_policy(const std::string& path, const PipelineConfig& cfg, bool force) {
    MlpParams p = load_checkpoint(path, Action::kDim);
    check_hash(p.config_hash, cfg.hash(), path, force);
    return p;
}

void print_stats(const std::string& name, const EvalReport& r) {
    const BoxStats b = r.reward_stats();
    std::printf("%-16s median %10.3f  mean %10.3f  q1 %10.3f  q3 %10.3f  failures %d  rms_dF %.4g\n", name.c_str(),
                b.median, b.mean, b.q1, b.q3, r.failures(), r.mean_fluctuation());
}

// ---------------------------------------------------------------------------

struct GenDemos {
    Common common;
    std::string out;
    std::size_t pairs = 20000;
    std::optional<std::uint64_t> seed;
    std::string variant = "dr";
};

int run_gen_demos(const GenDemos& o) {
    const PipelineConfig cfg = load(o.common);
    if (o.pairs == 0) throw CLI::ValidationError("--pairs", "must be positive");
    DemoOptions opt;
    opt.n_pairs = o.pairs;
    opt.seed = o.seed.value_or(cfg.seed);
    opt.threads = default_thread_count();
    RandomizationRanges ranges = cfg.randomization;
    try {
        apply_variant(parse_demo_variant(o.variant), ranges, opt);
    } catch (const std::invalid_argument& e) {
        throw CLI::ValidationError("--variant", e.what());
    }
    DemoDataset ds = build_demo_dataset(ranges, cfg.robot, cfg.expert, cfg.reward, cfg.episode, opt);
    ds.config_hash = cfg.hash();
    write_demo_dataset(ds, o.out);
    const double rate = static_cast<double>(ds.failed_trajectories) /
                        static_cast<double>(ds.trajectories.size() + ds.failed_trajectories);
    std::printf("pairs %zu  trajectories %zu  failed %u  failure_rate %.4f  config %s\n", ds.size(),
                ds.trajectories.size(), ds.failed_trajectories, rate, hex64(ds.config_hash).c_str());
    return kOk;
}

struct BcTrain {
    Common common;
    std::string demos;
    std::string out;
};

int run_bc_train(const BcTrain& o) {
    const PipelineConfig cfg = load(o.common);
    const DemoDataset ds = read_demo_dataset(o.demos);
    check_hash(ds.config_hash, cfg.hash(), o.demos, o.common.force);
    BcResult res = bc_train(ds, cfg.robot, cfg.bc);
    res.policy.config_hash = cfg.hash();
    save_checkpoint(res.policy, o.out);
    std::printf("train_nll %.6f  heldout_nll %.6f  best_epoch %d  epochs %d\n", res.train_nll, res.heldout_nll,
                res.best_epoch, res.epochs_run);
    return kOk;
}

struct PpoTrain {
    Common common;
    std::string init;
    std::string out;
    std::string curve;
};

int run_ppo_train(const PpoTrain& o) {
    const PipelineConfig cfg = load(o.common);
    const MlpParams init = load_policy(o.init, cfg, o.common.force);
    const std::string curve_path = o.curve.empty() ? o.out + ".curve.csv" : o.curve;
    try {
        PpoResult res = train_ppo(init, cfg.randomization, cfg.robot, cfg.reward, cfg.episode, cfg.ppo);
        res.policy.config_hash = cfg.hash();
        save_checkpoint(res.policy, o.out);
        write_curve_csv(res.curve, curve_path, cfg.hash());
        std::printf("iterations %zu  steps %lld  initial_eval %.3f  best_eval %.3f  best_iteration %d\n",
                    res.curve.size(), static_cast<long long>(res.steps), res.initial_eval_median,
                    res.best_eval_median, res.best_iteration);
    } catch (const PpoCollapse& e) {
        const std::string last_good = o.out + ".last_good";
        MlpParams p = e.last_good();
        p.config_hash = cfg.hash();
        save_checkpoint(p, last_good);
        write_curve_csv(e.curve(), curve_path, cfg.hash());
        std::cerr << "error: " << e.what() << "\nlast good checkpoint: " << last_good << '\n';
        return kTrainingAbort;
    }
    return kOk;
}

struct Evaluate {
    Common common;
    std::vector<std::string> controllers;
    std::vector<std::string> names;
    std::string out;
    std::optional<int> episodes;
    std::optional<std::uint64_t> seed;
    std::optional<double> scale;
    std::vector<double> delay_ms;
    bool stochastic = false;
};

EvalProtocol eval_protocol(const PipelineConfig& cfg, std::optional<int> episodes, std::optional<std::uint64_t> seed,
                           std::optional<double> scale, const std::vector<double>& delay_ms) {
    EvalProtocol p = cfg.protocol();
    if (episodes) {
        p.episodes = *episodes;
        p.seeds.clear();
    }
    if (seed) {
        p.base_seed = *seed;
        p.seeds.clear();
    }
    if (scale) p.ranges.scale = *scale;
    if (!delay_ms.empty()) {
        if (delay_ms.size() > 2) throw CLI::ValidationError("--delay-ms", "expected lo or lo,hi");
        p.ranges.delay_ms = {delay_ms.front(), delay_ms.back()};
    }
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("eval protocol: ") + e.what());
    }
    return p;
}

EvalReport evaluate_one(const std::string& controller, const std::string& name, const PipelineConfig& cfg,
                        const EvalProtocol& p, bool force) {
    if (controller == "expert") {
        EvalReport r = evaluate(fixed_controller(make_expert(cfg.robot, cfg.expert)), p, cfg.robot, cfg.reward,
                                cfg.episode, name);
        r.config_hash = cfg.hash();
        return r;
    }
    const MlpParams policy = load_policy(controller, cfg, force);
    EvalReport r = evaluate(policy_controller(policy, cfg.robot, p.deterministic), p, cfg.robot, cfg.reward,
                            cfg.episode, name);
    r.checkpoint_hash = hash_params(policy);
    r.config_hash = cfg.hash();
    return r;
}

int run_evaluate(const Evaluate& o) {
    const PipelineConfig cfg = load(o.common);
    EvalProtocol p = eval_protocol(cfg, o.episodes, o.seed, o.scale, o.delay_ms);
    if (o.stochastic) p.deterministic = false;
    if (!o.names.empty() && o.names.size() != o.controllers.size())
        throw CLI::ValidationError("--name", "give one name per controller");

    std::vector<EvalReport> reports;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < o.controllers.size(); ++i) {
        const std::string& c = o.controllers[i];
        names.push_back(o.names.empty() ? (c == "expert" ? c : fs::path(c).stem().string()) : o.names[i]);
        reports.push_back(evaluate_one(c, names.back(), cfg, p, o.common.force));
        print_stats(names.back(), reports.back());
    }

    if (reports.size() == 1) {
        write_report(reports.front(), o.out);
        return kOk;
    }
    fs::create_directories(o.out);
    for (std::size_t i = 0; i < reports.size(); ++i) write_report(reports[i], (fs::path(o.out) / (names[i] + ".json")).string());
    const Comparison cmp = compare_reports(reports, names);
    write_comparison(cmp, (fs::path(o.out) / "comparison.csv").string(), (fs::path(o.out) / "comparison.json").string());
    for (std::size_t i = 0; i + 1 < reports.size(); ++i) {
        const MedianDelta& d = cmp.deltas[i][i + 1];
        std::printf("%s -> %s  delta %.3f  ci [%.3f, %.3f]  %s\n", names[i].c_str(), names[i + 1].c_str(), d.delta,
                    d.ci_low, d.ci_high, d.significant() ? "significant" : "not significant");
    }
    std::printf("ordered_increasing %s\n", cmp.ordered_increasing() ? "yes" : "no");
    return kOk;
}

struct Rollout {
    Common common;
    std::string controller;
    std::string out;
    std::uint64_t seed = 0;
    std::optional<double> scale;
    std::vector<double> delay_ms;
    bool stochastic = false;
};

int run_rollout(const Rollout& o) {
    const PipelineConfig cfg = load(o.common);
    EvalProtocol p = eval_protocol(cfg, std::nullopt, std::nullopt, o.scale, o.delay_ms);
    Controller c;
    if (o.controller == "expert") {
        c = make_expert(cfg.robot, cfg.expert);
    } else {
        const MlpParams policy = load_policy(o.controller, cfg, o.common.force);
        c = policy_controller(policy, cfg.robot, !o.stochastic)(o.seed);
    }
    const Trajectory traj = rollout_episode(c, p, cfg.robot, cfg.reward, cfg.episode, o.seed);
    write_trajectory_csv(traj, o.out, cfg.hash());
    std::printf("steps %zu  reward %.3f  failed %s  delay_steps %d\n", traj.steps(), traj.total_reward(),
                traj.failed ? "yes" : "no", traj.domain.delay_steps);
    return kOk;
}

struct Sweep {
    Common common;
    std::string init;
    std::string grid;
    std::string out;
};

int run_sweep(const Sweep& o) {
    const PipelineConfig cfg = load(o.common);
    const MlpParams init = load_policy(o.init, cfg, o.common.force);
    json grid;
    {
        std::ifstream is(o.grid);
        if (is) {
            try {
                is >> grid;
            } catch (const json::exception& e) {
                throw ConfigError(o.grid + ": " + e.what());
            }
        } else {
            grid = json::parse(o.grid, nullptr, false);
            if (grid.is_discarded()) throw IoError("cannot open grid " + o.grid);
        }
    }
    const std::vector<RewardConfig> configs = expand_reward_grid(cfg.reward, grid);
    std::printf("sweep over %zu reward configurations\n", configs.size());
    const std::vector<SweepEntry> entries =
        run_reward_sweep(init, configs, cfg.reward, cfg.randomization, cfg.robot, cfg.episode, cfg.ppo, cfg.protocol());
    for (const auto& e : entries) {
        if (!e.error.empty()) {
            std::printf("%s  aborted: %s\n", hex64(e.reward_hash).c_str(), e.error.c_str());
            continue;
        }
        print_stats(hex64(e.reward_hash), e.report);
    }
    std::ofstream os(o.out);
    if (!os) throw IoError("cannot open " + o.out + " for writing");
    os << sweep_to_json(entries, cfg.hash()).dump(2) << '\n';
    if (!os) throw IoError("write failed: " + o.out);
    return kOk;
}

struct PhysicsCheck {
    Common common;
    int configs = 10;
};

int run_physics_check(const PhysicsCheck& o) {
    const PipelineConfig cfg = load(o.common);
    std::vector<CheckResult> all = physics_suite(cfg.robot);
    for (auto& r : gradient_suite(o.configs)) all.push_back(r);
    for (auto& r : rematch_suite()) all.push_back(r);
    for (const auto& r : all)
        std::printf("%-4s %-26s %.3e (tol %.1e)  %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.value,
                    r.tolerance, r.detail.c_str());
    return all_pass(all) ? kOk : kValidation;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const TrainingAbort& e) {
        std::cerr << "training aborted: " << e.what() << '\n';
        return kTrainingAbort;
    } catch (const ExpertFailureError& e) {
        std::cerr << "expert failure: " << e.what() << '\n';
        return kTrainingAbort;
    } catch (const RolloutError& e) {
        std::cerr << "training aborted: " << e.what() << '\n';
        return kTrainingAbort;
    } catch (const NonFiniteGradient& e) {
        std::cerr << "training aborted: " << e.what() << '\n';
        return kTrainingAbort;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const FormatError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"softfly: delayed, domain-randomized flight control pipeline"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    GenDemos gen;
    auto* gen_cmd = app.add_subcommand("gen-demos", "Roll out the expert and write re-matched demonstrations");
    add_common(gen_cmd, gen.common);
    gen_cmd->add_option("-o,--out", gen.out, "Output dataset")->required();
    gen_cmd->add_option("--pairs", gen.pairs, "Number of (state, action) pairs");
    gen_cmd->add_option("--seed", gen.seed, "Dataset seed (default: config seed)");
    gen_cmd->add_option("--variant", gen.variant, "baseline (no re-matching, no DR), rematch (no DR) or dr")
        ->check(CLI::IsMember({"baseline", "rematch", "dr"}));

    BcTrain bc;
    auto* bc_cmd = app.add_subcommand("bc-train", "Behaviour cloning on a demonstration file");
    add_common(bc_cmd, bc.common);
    bc_cmd->add_option("--demos", bc.demos, "Dataset from gen-demos")->required();
    bc_cmd->add_option("-o,--out", bc.out, "Output checkpoint")->required();

    PpoTrain ppo;
    auto* ppo_cmd = app.add_subcommand("ppo-train", "PPO fine-tuning from a checkpoint");
    add_common(ppo_cmd, ppo.common);
    ppo_cmd->add_option("--init", ppo.init, "Starting checkpoint")->required();
    ppo_cmd->add_option("-o,--out", ppo.out, "Output checkpoint")->required();
    ppo_cmd->add_option("--curve", ppo.curve, "Training curve CSV (default: <out>.curve.csv)");

    Evaluate ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "Evaluate checkpoints or `expert` on the benchmark protocol");
    add_common(ev_cmd, ev.common);
    ev_cmd->add_option("controllers", ev.controllers, "Checkpoint paths or `expert`")->required();
    ev_cmd->add_option("--name", ev.names, "Display name per controller");
    ev_cmd->add_option("-o,--out", ev.out, "Report path, or output directory for several controllers")->required();
    ev_cmd->add_option("--episodes", ev.episodes, "Episode count")->check(CLI::PositiveNumber);
    ev_cmd->add_option("--seed", ev.seed, "Base seed of the episode samples");
    ev_cmd->add_option("--scale", ev.scale, "Randomization scale")->check(CLI::NonNegativeNumber);
    ev_cmd->add_option("--delay-ms", ev.delay_ms, "Delay interval lo[,hi] in ms")->delimiter(',');
    ev_cmd->add_flag("--stochastic", ev.stochastic, "Sample actions instead of using the policy mean");

    Rollout ro;
    auto* ro_cmd = app.add_subcommand("rollout", "Export one episode as a trajectory CSV");
    add_common(ro_cmd, ro.common);
    ro_cmd->add_option("controller", ro.controller, "Checkpoint path or `expert`")->required();
    ro_cmd->add_option("-o,--out", ro.out, "Trajectory CSV")->required();
    ro_cmd->add_option("--seed", ro.seed, "Episode seed");
    ro_cmd->add_option("--scale", ro.scale, "Randomization scale")->check(CLI::NonNegativeNumber);
    ro_cmd->add_option("--delay-ms", ro.delay_ms, "Delay interval lo[,hi] in ms")->delimiter(',');
    ro_cmd->add_flag("--stochastic", ro.stochastic, "Sample actions instead of using the policy mean");

    Sweep sw;
    auto* sw_cmd = app.add_subcommand("sweep", "PPO over a grid of reward weights");
    add_common(sw_cmd, sw.common);
    sw_cmd->add_option("--init", sw.init, "Starting checkpoint")->required();
    sw_cmd->add_option("--grid", sw.grid, "JSON file or inline JSON, e.g. {\"k_ff\": [1e6, 1e7]}")->required();
    sw_cmd->add_option("-o,--out", sw.out, "Sweep report JSON")->required();

    PhysicsCheck pc;
    auto* pc_cmd = app.add_subcommand("physics-check", "Dynamics, gradient and re-matching check suites");
    add_common(pc_cmd, pc.common);
    pc_cmd->add_option("--gradient-configs", pc.configs, "Random configurations per gradient check")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    if (*gen_cmd) return guarded([&] { return run_gen_demos(gen); });
    if (*bc_cmd) return guarded([&] { return run_bc_train(bc); });
    if (*ppo_cmd) return guarded([&] { return run_ppo_train(ppo); });
    if (*ev_cmd) return guarded([&] { return run_evaluate(ev); });
    if (*ro_cmd) return guarded([&] { return run_rollout(ro); });
    if (*sw_cmd) return guarded([&] { return run_sweep(sw); });
    if (*pc_cmd) return guarded([&] { return run_physics_check(pc); });
    return kValidation;
}
