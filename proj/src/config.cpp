#include "softfly/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "softfly/binary_io.hpp"

namespace softfly {

using nlohmann::json;

namespace {

/// Strict reader over one JSON object: every key must be consumed.
class Section {
public:
    Section(const json& obj, std::string name) : obj_(obj), name_(std::move(name)) {
        if (!obj_.is_object()) throw ConfigError(name_ + ": expected an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        const json* v = find(key);
        if (!v) return;
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v->is_number()) throw ConfigError(path(key) + ": expected a number");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v->is_boolean()) throw ConfigError(path(key) + ": expected true or false");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v->is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v->is_string()) throw ConfigError(path(key) + ": expected a string");
            }
            out = v->get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path(key) + ": " + e.what());
        }
    }

    void vec3(const char* key, Eigen::Vector3d& out) {
        const json* v = find(key);
        if (!v) return;
        if (!v->is_array() || v->size() != 3) throw ConfigError(path(key) + ": expected an array of 3 numbers");
        for (int i = 0; i < 3; ++i) {
            if (!(*v)[static_cast<std::size_t>(i)].is_number()) throw ConfigError(path(key) + ": expected numbers");
            out(i) = (*v)[static_cast<std::size_t>(i)].get<double>();
        }
    }

    void interval(const char* key, Interval& out) {
        const json* v = find(key);
        if (!v) return;
        if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number())
            throw ConfigError(path(key) + ": expected [lo, hi]");
        out.lo = (*v)[0].get<double>();
        out.hi = (*v)[1].get<double>();
    }

    const json* find(const char* key) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [k, v] : obj_.items())
            if (!seen_.count(k)) throw ConfigError("unknown config key '" + path(k.c_str()) + "'");
    }

private:
    std::string path(const char* key) const { return name_.empty() ? key : name_ + "." + key; }

    const json& obj_;
    std::string name_;
    std::set<std::string> seen_;
};

template <typename T>
void validated(const T& v, const char* section) {
    try {
        v.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string(section) + ": " + e.what());
    }
}

json vec(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }
json iv(const Interval& i) { return json::array({i.lo, i.hi}); }

void read_robot(Section s, RobotParams& r) {
    s.get("mass", r.mass);
    s.vec3("inertia", r.inertia);
    s.get("yaw_damping", r.yaw_damping);
    s.get("gravity", r.gravity);
    s.get("thrust_max", r.thrust_max);
    s.get("torque_max", r.torque_max);
    s.finish();
}

void read_ranges(Section s, RandomizationRanges& r) {
    s.interval("mass_factor", r.mass_factor);
    s.interval("ixx_factor", r.ixx_factor);
    s.interval("iyy_factor", r.iyy_factor);
    s.interval("force_magnitude", r.force_magnitude);
    s.interval("torque_x", r.torque_x);
    s.interval("torque_y", r.torque_y);
    s.interval("delay_ms", r.delay_ms);
    s.get("scale", r.scale);
    s.finish();
}

using RewardField = std::pair<const char*, double RewardConfig::*>;
const RewardField kRewardFields[] = {
    {"k_p", &RewardConfig::k_p},     {"k_e", &RewardConfig::k_e},     {"k_v", &RewardConfig::k_v},
    {"k_w", &RewardConfig::k_w},     {"k_ff", &RewardConfig::k_ff},   {"k_txf", &RewardConfig::k_txf},
    {"k_tyf", &RewardConfig::k_tyf}, {"k_f", &RewardConfig::k_f},     {"k_tx", &RewardConfig::k_tx},
    {"k_ty", &RewardConfig::k_ty},
};

void read_reward(Section s, RewardConfig& r) {
    for (const auto& [name, field] : kRewardFields) s.get(name, r.*field);
    s.finish();
}

void read_episode(Section s, EpisodeConfig& e) {
    s.get("horizon", e.horizon);
    s.vec3("init_pos", e.init_pos);
    s.get("init_tilt", e.init_tilt);
    s.vec3("init_vel", e.init_vel);
    s.vec3("init_rate", e.init_rate);
    s.get("max_position", e.max_position);
    s.get("max_tilt", e.max_tilt);
    s.finish();
}

void read_expert(Section s, ExpertGains& g) {
    s.get("pos_kp", g.pos_kp);
    s.get("pos_kd", g.pos_kd);
    s.get("alt_kp", g.alt_kp);
    s.get("alt_kd", g.alt_kd);
    s.get("att_kp", g.att_kp);
    s.get("att_kd", g.att_kd);
    s.get("max_tilt", g.max_tilt);
    s.finish();
}

void read_bc(Section s, BcConfig& b) {
    s.get("epochs", b.epochs);
    s.get("minibatch", b.minibatch);
    s.get("learning_rate", b.learning_rate);
    s.get("holdout_fraction", b.holdout_fraction);
    s.get("early_stop_tol", b.early_stop_tol);
    s.get("early_stop_patience", b.early_stop_patience);
    s.get("optimizer", b.optimizer);
    s.get("init_log_std", b.init_log_std);
    s.get("action_scale_fraction", b.action_scale_fraction);
    s.get("seed", b.seed);
    s.finish();
}

void read_ppo(Section s, PpoConfig& p) {
    s.get("total_steps", p.total_steps);
    s.get("rollout_steps", p.rollout_steps);
    s.get("minibatch", p.minibatch);
    s.get("epochs", p.epochs);
    s.get("clip_eps", p.clip_eps);
    s.get("gamma", p.gamma);
    s.get("lambda", p.lambda);
    s.get("value_weight", p.value_weight);
    s.get("entropy_weight", p.entropy_weight);
    s.get("learning_rate", p.learning_rate);
    s.get("value_learning_rate", p.value_learning_rate);
    s.get("anneal_lr", p.anneal_lr);
    s.get("max_grad_norm", p.max_grad_norm);
    s.get("target_kl", p.target_kl);
    s.get("envs", p.envs);
    if (const json* v = s.find("init_log_std")) {
        if (v->is_null()) p.init_log_std.reset();
        else if (v->is_number()) p.init_log_std = v->get<double>();
        else throw ConfigError("ppo.init_log_std: expected a number or null");
    }
    s.get("settled_critic", p.settled_critic);
    s.get("value_warmup_rounds", p.value_warmup_rounds);
    s.get("eval_every", p.eval_every);
    s.get("eval_episodes", p.eval_episodes);
    s.get("eval_base_seed", p.eval_base_seed);
    s.get("collapse_patience", p.collapse_patience);
    s.get("collapse_fraction", p.collapse_fraction);
    s.get("seed", p.seed);
    s.finish();
}

void read_eval(Section s, EvalProtocol& e) {
    s.get("episodes", e.episodes);
    s.get("horizon", e.horizon);
    s.get("base_seed", e.base_seed);
    if (const json* v = s.find("seeds")) {
        if (!v->is_array()) throw ConfigError("eval.seeds: expected an array of integers");
        e.seeds.clear();
        for (const auto& x : *v) {
            if (!x.is_number_unsigned()) throw ConfigError("eval.seeds: expected non-negative integers");
            e.seeds.push_back(x.get<std::uint64_t>());
        }
    }
    s.get("deterministic", e.deterministic);
    s.get("settle_s", e.settle_s);
    s.finish();
}

void hash_expert(Fnv1a& h, const ExpertGains& g) {
    const double d[] = {g.pos_kp, g.pos_kd, g.alt_kp, g.alt_kd, g.att_kp, g.att_kd, g.max_tilt};
    h.update_doubles(d);
}

}  // namespace

void PipelineConfig::validate() const {
    validated(robot, "robot");
    validated(randomization, "randomization");
    validated(reward, "reward");
    validated(episode, "episode");
    validated(expert, "expert");
    validated(bc, "bc");
    validated(ppo, "ppo");
    validated(protocol(), "eval");
}

std::uint64_t PipelineConfig::hash() const {
    Fnv1a h;
    h.update("softfly-config-v1");
    hash_into(h, robot);
    hash_into(h, randomization);
    hash_into(h, reward);
    hash_into(h, episode);
    hash_expert(h, expert);
    return h.digest();
}

EvalProtocol PipelineConfig::protocol() const {
    EvalProtocol p = eval;
    p.ranges = randomization;
    return p;
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    Section top(j, "");
    if (const json* v = top.find("robot")) read_robot(Section(*v, "robot"), c.robot);
    if (const json* v = top.find("randomization")) read_ranges(Section(*v, "randomization"), c.randomization);
    if (const json* v = top.find("reward")) read_reward(Section(*v, "reward"), c.reward);
    if (const json* v = top.find("episode")) read_episode(Section(*v, "episode"), c.episode);
    if (const json* v = top.find("expert")) read_expert(Section(*v, "expert"), c.expert);
    if (const json* v = top.find("bc")) read_bc(Section(*v, "bc"), c.bc);
    if (const json* v = top.find("ppo")) read_ppo(Section(*v, "ppo"), c.ppo);
    if (const json* v = top.find("eval")) read_eval(Section(*v, "eval"), c.eval);
    top.get("seed", c.seed);
    top.finish();
    c.validate();
    return c;
}

json config_to_json(const PipelineConfig& c) {
    json reward = json::object();
    for (const auto& [name, field] : kRewardFields) reward[name] = c.reward.*field;
    const auto& r = c.robot;
    const auto& rr = c.randomization;
    const auto& e = c.episode;
    const auto& g = c.expert;
    const auto& b = c.bc;
    const auto& p = c.ppo;
    return {
        {"seed", c.seed},
        {"robot",
         {{"mass", r.mass},
          {"inertia", vec(r.inertia)},
          {"yaw_damping", r.yaw_damping},
          {"gravity", r.gravity},
          {"thrust_max", r.thrust_max},
          {"torque_max", r.torque_max}}},
        {"randomization",
         {{"mass_factor", iv(rr.mass_factor)},
          {"ixx_factor", iv(rr.ixx_factor)},
          {"iyy_factor", iv(rr.iyy_factor)},
          {"force_magnitude", iv(rr.force_magnitude)},
          {"torque_x", iv(rr.torque_x)},
          {"torque_y", iv(rr.torque_y)},
          {"delay_ms", iv(rr.delay_ms)},
          {"scale", rr.scale}}},
        {"reward", reward},
        {"episode",
         {{"horizon", e.horizon},
          {"init_pos", vec(e.init_pos)},
          {"init_tilt", e.init_tilt},
          {"init_vel", vec(e.init_vel)},
          {"init_rate", vec(e.init_rate)},
          {"max_position", e.max_position},
          {"max_tilt", e.max_tilt}}},
        {"expert",
         {{"pos_kp", g.pos_kp},
          {"pos_kd", g.pos_kd},
          {"alt_kp", g.alt_kp},
          {"alt_kd", g.alt_kd},
          {"att_kp", g.att_kp},
          {"att_kd", g.att_kd},
          {"max_tilt", g.max_tilt}}},
        {"bc",
         {{"epochs", b.epochs},
          {"minibatch", b.minibatch},
          {"learning_rate", b.learning_rate},
          {"holdout_fraction", b.holdout_fraction},
          {"early_stop_tol", b.early_stop_tol},
          {"early_stop_patience", b.early_stop_patience},
          {"optimizer", b.optimizer},
          {"init_log_std", b.init_log_std},
          {"action_scale_fraction", b.action_scale_fraction},
          {"seed", b.seed}}},
        {"ppo",
         {{"total_steps", p.total_steps},
          {"rollout_steps", p.rollout_steps},
          {"minibatch", p.minibatch},
          {"epochs", p.epochs},
          {"clip_eps", p.clip_eps},
          {"gamma", p.gamma},
          {"lambda", p.lambda},
          {"value_weight", p.value_weight},
          {"entropy_weight", p.entropy_weight},
          {"learning_rate", p.learning_rate},
          {"value_learning_rate", p.value_learning_rate},
          {"anneal_lr", p.anneal_lr},
          {"max_grad_norm", p.max_grad_norm},
          {"target_kl", p.target_kl},
          {"envs", p.envs},
          {"init_log_std", p.init_log_std ? json(*p.init_log_std) : json(nullptr)},
          {"settled_critic", p.settled_critic},
          {"value_warmup_rounds", p.value_warmup_rounds},
          {"eval_every", p.eval_every},
          {"eval_episodes", p.eval_episodes},
          {"eval_base_seed", p.eval_base_seed},
          {"collapse_patience", p.collapse_patience},
          {"collapse_fraction", p.collapse_fraction},
          {"seed", p.seed}}},
        {"eval",
         {{"episodes", c.eval.episodes},
          {"horizon", c.eval.horizon},
          {"base_seed", c.eval.base_seed},
          {"seeds", c.eval.seeds},
          {"deterministic", c.eval.deterministic},
          {"settle_s", c.eval.settle_s}}},
    };
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config(const PipelineConfig& c, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << config_to_json(c).dump(2) << '\n';
    if (!os) throw IoError("write failed: " + path);
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override '" + assignment + "': empty key segment");
        if (!node->is_object()) throw ConfigError("override '" + assignment + "': '" + part + "' is not in a section");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

std::vector<RewardConfig> expand_reward_grid(const RewardConfig& base, const json& grid) {
    if (!grid.is_object() || grid.empty()) throw ConfigError("reward grid: expected a non-empty object");
    std::map<std::string, double RewardConfig::*> fields;
    for (const auto& [name, field] : kRewardFields) fields[name] = field;
    std::vector<std::pair<double RewardConfig::*, std::vector<double>>> axes;
    for (const auto& [k, v] : grid.items()) {
        const auto it = fields.find(k);
        if (it == fields.end()) throw ConfigError("reward grid: unknown weight '" + k + "'");
        if (!v.is_array() || v.empty()) throw ConfigError("reward grid: '" + k + "' needs a non-empty array");
        std::vector<double> values;
        for (const auto& x : v) {
            if (!x.is_number()) throw ConfigError("reward grid: '" + k + "' values must be numbers");
            values.push_back(x.get<double>());
        }
        axes.emplace_back(it->second, std::move(values));
    }
    std::vector<RewardConfig> out{base};
    for (const auto& [field, values] : axes) {
        std::vector<RewardConfig> next;
        for (const RewardConfig& r : out)
            for (double v : values) {
                RewardConfig c = r;
                c.*field = v;
                validated(c, "reward grid");
                next.push_back(c);
            }
        out = std::move(next);
    }
    return out;
}

}  // namespace softfly
