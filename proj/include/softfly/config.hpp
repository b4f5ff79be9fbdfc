#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "softfly/ppo.hpp"

namespace softfly {

/// Invalid configuration: unknown key, wrong type or failed validation.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct PipelineConfig {
    RobotParams robot;
    RandomizationRanges randomization;
    RewardConfig reward;
    EpisodeConfig episode;
    ExpertGains expert;
    BcConfig bc;
    PpoConfig ppo;
    EvalProtocol eval;  // ranges come from `randomization`
    std::uint64_t seed = 1;

    /// Validates every section; throws ConfigError naming the section.
    void validate() const;

    /// Hash of the sections that define the simulated task (robot,
    /// randomization, reward, episode, expert). Stored in every artifact.
    std::uint64_t hash() const;

    /// Eval protocol with the randomization ranges filled in.
    EvalProtocol protocol() const;
};

/// Missing keys keep their defaults; unknown keys throw ConfigError.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& c);

PipelineConfig load_config(const std::string& path);
void save_config(const PipelineConfig& c, const std::string& path);

/// Applies `section.key=value` (value parsed as JSON, bare strings allowed)
/// to a config document before it is decoded.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Cartesian product of `{"k_p": [..], "k_ff": [..]}` over `base`. Keys are
/// taken in sorted order, the last varying fastest.
std::vector<RewardConfig> expand_reward_grid(const RewardConfig& base, const nlohmann::json& grid);

}  // namespace softfly
