#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "gorila/envs.hpp"
#include "gorila/nn.hpp"
#include "gorila/param_server.hpp"
#include "gorila/replay.hpp"
#include "gorila/rl.hpp"

namespace gorila {

struct ActorConfig {
    std::uint32_t actor_id = 0;
    std::uint64_t sync_period_steps = 1;
    EpsilonSchedule epsilon;
    std::size_t episode_cap = 1000;  // T
    std::uint64_t env_seed = 0;      // episode k resets with env_seed + k
    std::uint64_t policy_seed = 0;
    double reward_clip = 0.0;        // <= 0 keeps raw rewards

    void validate() const;
};

struct ActorStats {
    std::uint64_t episodes = 0;
    std::uint64_t steps = 0;
    double total_reward = 0.0;
    std::uint64_t fetches = 0;
    std::uint64_t aborted_episodes = 0;

    bool operator==(const ActorStats&) const = default;
};

/// One acting process. An episode starts with reset and a parameter sync;
/// each step selects an ε-greedy action with ε taken at the last synced
/// global version, stores the transition, and then syncs again whenever
/// sync_period_steps steps have passed since the previous sync.
class Actor {
public:
    Actor(ActorConfig cfg, Environment& env, ExperienceSink& sink, ParameterClient& client, QNetwork net);

    /// Performs one environment step, starting a new episode first when
    /// needed. Returns the stored transition, or nothing if the environment
    /// faulted and the episode was aborted.
    std::optional<Transition> step();

    const ActorStats& stats() const noexcept { return stats_; }
    const QNetwork& network() const noexcept { return net_; }
    std::uint64_t synced_version() const noexcept { return version_; }
    double current_epsilon() const { return epsilon_at(cfg_.epsilon, version_); }
    const ActorConfig& config() const noexcept { return cfg_; }

private:
    void begin_episode();
    void sync();

    ActorConfig cfg_;
    Environment& env_;
    ExperienceSink& sink_;
    ParameterClient& client_;
    QNetwork net_;
    ParamVector scratch_;
    Rng rng_;

    bool in_episode_ = false;
    std::vector<double> observation_;
    std::size_t episode_steps_ = 0;
    std::uint64_t steps_since_sync_ = 0;
    std::uint64_t version_ = 0;
    std::uint64_t global_step_ = 0;
    ActorStats stats_;
};

inline constexpr std::uint64_t kUnboundedSteps = std::numeric_limits<std::uint64_t>::max();

/// Steps an actor until `stop` is set or max_steps steps were taken.
/// Transport failures propagate after the client's own retry budget.
ActorStats run_actor(const ActorConfig& cfg, Environment& env, ExperienceSink& sink, ParameterClient& client,
                     QNetwork net, const std::atomic<bool>& stop, std::uint64_t max_steps = kUnboundedSteps);

}  // namespace gorila
