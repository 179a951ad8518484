#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gorila/envs.hpp"
#include "gorila/eval.hpp"
#include "gorila/rl.hpp"

namespace gorila {

enum class TransportKind {
    in_process,         // direct calls on the server object
    in_process_frames,  // encoded frames over in-memory queues
    socket,             // TCP on 127.0.0.1
};

const char* to_string(TransportKind kind);
TransportKind transport_from_string(const std::string& s);

enum class MetricsClock { wall, logical };

/// Everything one training run needs. Parsed from and written back to the
/// versioned key-value text format described in docs/config.md.
struct RunConfig {
    EnvSpec env;
    std::vector<std::size_t> hidden{64, 64};

    bool bundled = true;
    std::size_t n_actors = 1;
    std::size_t n_learners = 1;
    std::size_t n_param_shards = 31;
    std::size_t global_replay_shards = 4;

    std::size_t replay_capacity = 100'000;
    std::size_t replay_warmup = 1000;
    std::size_t batch = 32;
    double gamma = 0.99;
    EpsilonSchedule epsilon;
    std::uint64_t target_period = 10'000;
    std::uint64_t max_delay = 50;
    bool outlier_filter = true;
    double k_sigma = 3.0;
    std::uint64_t loss_warmup = 100;
    double loss_decay = 0.999;
    double learning_rate = 0.05;
    double adagrad_epsilon = 1e-8;
    std::uint64_t sync_period = 1;
    std::size_t episode_cap = 1000;
    double reward_clip = 0.0;
    std::string precision = "double";

    std::uint64_t seed = 1;
    std::size_t repetitions = 5;
    TransportKind transport = TransportKind::in_process;
    bool deterministic = false;

    std::uint64_t max_global_versions = 100'000;
    std::uint64_t max_actor_steps = 0;  // 0 = no limit
    double max_wall_seconds = 0.0;      // 0 = no limit
    std::optional<double> stop_at_score;

    EvalProtocol eval;
    std::uint64_t eval_every = 10'000;
    std::uint64_t eval_seed = 12345;
    std::string trajectory_path;
    MetricsClock metrics_clock = MetricsClock::wall;

    /// Throws ConfigError on inconsistent values, Unsupported on
    /// recognised but unimplemented options.
    void validate() const;
};

inline constexpr const char* kConfigMagic = "gorila-config";
inline constexpr int kConfigVersion = 1;

/// First non-comment line must be `gorila-config 1`. Then `key = value`
/// lines; `#` starts a comment. Unknown keys are errors.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);

/// Round-trips through parse_run_config.
std::string format_run_config(const RunConfig& cfg);

/// Applies one `key=value` override on top of a parsed config.
void apply_config_override(RunConfig& cfg, const std::string& assignment);

}  // namespace gorila
