#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gorila/rl.hpp"

namespace gorila {

struct StepResult {
    std::vector<double> observation;
    double reward = 0.0;
    bool terminal = false;
};

/// Opaque saved environment state. `format_version` is bumped whenever an
/// environment changes what it stores.
struct EnvSnapshot {
    std::string env_name;
    std::uint32_t format_version = 0;
    std::vector<std::uint8_t> data;
};

/// Sequential environment. Stepping after a terminal step throws EnvFault
/// until reset(). Given the reset seed and the action sequence, the
/// observation/reward/terminal stream is reproducible.
class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string name() const = 0;
    virtual std::size_t action_count() const = 0;
    virtual std::size_t observation_dim() const = 0;
    virtual std::size_t null_action() const = 0;

    virtual std::vector<double> reset(std::uint64_t seed) = 0;
    virtual StepResult step(std::size_t action) = 0;

    virtual EnvSnapshot snapshot() const = 0;
    virtual void restore(const EnvSnapshot& snap) = 0;

    /// Independent copy including the current episode state.
    virtual std::unique_ptr<Environment> clone() const = 0;
};

/// Explicit finite MDP. Entering a terminal state ends the episode.
struct Outcome {
    double prob = 0.0;
    std::size_t next = 0;
    double reward = 0.0;
};

struct TabularMdp {
    std::string name = "tabular";
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::size_t start_state = 0;
    std::size_t null_action = 0;
    std::vector<bool> terminal;
    // outcomes[s][a] lists the stochastic results of taking a in s.
    std::vector<std::vector<std::vector<Outcome>>> outcomes;

    void validate() const;
};

struct QTable {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> values;

    double at(std::size_t s, std::size_t a) const { return values[s * n_actions + a]; }
    double& at(std::size_t s, std::size_t a) { return values[s * n_actions + a]; }
    std::size_t greedy(std::size_t s) const;
};

/// Iterates Q ← T Q until the sup-norm Bellman residual drops below tol.
/// Terminal states keep Q = 0.
QTable value_iteration_oracle(const TabularMdp& mdp, double gamma, double tol = 1e-10,
                              std::size_t max_iterations = 1'000'000);

/// Sup-norm of T Q − Q over non-terminal states.
double bellman_residual(const TabularMdp& mdp, const QTable& q, double gamma);

/// Tabular MDP as an Environment with one-hot observations.
class TabularEnv final : public Environment {
public:
    static constexpr std::uint32_t kSnapshotVersion = 1;

    explicit TabularEnv(TabularMdp mdp);

    std::string name() const override { return mdp_.name; }
    std::size_t action_count() const override { return mdp_.n_actions; }
    std::size_t observation_dim() const override { return mdp_.n_states; }
    std::size_t null_action() const override { return mdp_.null_action; }

    std::vector<double> reset(std::uint64_t seed) override;
    StepResult step(std::size_t action) override;

    EnvSnapshot snapshot() const override;
    void restore(const EnvSnapshot& snap) override;

    std::unique_ptr<Environment> clone() const override;

    const TabularMdp& mdp() const noexcept { return mdp_; }
    std::size_t state() const noexcept { return state_; }
    std::vector<double> observe(std::size_t state) const;

    /// Inverse of the one-hot encoding.
    static std::size_t decode_state(std::span<const double> observation);

private:
    TabularMdp mdp_;
    std::size_t state_ = 0;
    bool done_ = true;
    Rng rng_;
};

/// Corridor 0..n-1 with left/right moves. A move goes the other way with
/// probability `slip`; left at state 0 stays put. Entering n-1 pays
/// goal_reward and ends the episode; every other step costs step_cost.
/// The null action is "left".
struct ChainMdp {
    std::size_t n_states = 5;
    double slip = 0.1;
    double step_cost = 0.01;
    double goal_reward = 1.0;

    TabularMdp to_tabular() const;
};

/// width × height grid starting at (0,0) with the goal in the far corner.
/// Actions: stay (null), up, down, left, right. With probability `slip` the
/// chosen action is replaced by a uniformly random one.
struct GridWorld {
    std::size_t width = 4;
    std::size_t height = 4;
    double slip = 0.2;
    double step_cost = 0.01;
    double goal_reward = 1.0;

    TabularMdp to_tabular() const;
};

struct EnvSpec {
    std::string kind = "chain";  // chain | gridworld
    ChainMdp chain;
    GridWorld grid;
};

std::unique_ptr<Environment> make_environment(const EnvSpec& spec);
TabularMdp tabular_model(const EnvSpec& spec);

/// Sliding window of the last k observations, oldest first, zero-padded
/// until k observations have been pushed.
class ObservationStacker {
public:
    ObservationStacker(std::size_t k, std::size_t observation_dim);

    void reset();
    std::vector<double> push(std::span<const double> observation);
    std::vector<double> current() const;

    std::size_t output_dim() const noexcept { return k_ * dim_; }

private:
    std::size_t k_;
    std::size_t dim_;
    std::vector<double> window_;
};

/// Recorded expert play used for human-start evaluation.
struct TrajectoryStep {
    std::uint32_t action = 0;
    double reward = 0.0;
    bool terminal = false;

    bool operator==(const TrajectoryStep&) const = default;
};

struct Trajectory {
    std::string env_name;
    std::uint64_t seed = 0;
    std::uint32_t stack_k = 1;
    std::vector<TrajectoryStep> steps;

    bool operator==(const Trajectory&) const = default;
};

inline constexpr std::uint32_t kTrajectoryVersion = 1;

void save_trajectory(const std::string& path, const Trajectory& traj);
Trajectory load_trajectory(const std::string& path);
std::vector<std::uint8_t> serialize_trajectory(const Trajectory& traj);
Trajectory deserialize_trajectory(std::span<const std::uint8_t> bytes);

using ObservationPolicy = std::function<std::size_t(std::span<const double>)>;

/// Plays `policy` from reset(seed) for at most max_steps, stopping at terminal.
Trajectory record_trajectory(Environment& env, const ObservationPolicy& policy, std::uint64_t seed,
                             std::size_t max_steps);

/// Greedy policy on a Q table for a TabularEnv-style one-hot observation.
ObservationPolicy greedy_table_policy(const QTable& q);

/// How an episode begins before the evaluated policy takes over: a number
/// of null actions, or a prefix of a recorded trajectory. Injected steps
/// count toward the episode cap but their rewards are not scored.
struct StartPoint {
    std::size_t null_ops = 0;
    const Trajectory* trajectory = nullptr;
    std::size_t prefix_len = 0;
};

struct InjectedStart {
    std::vector<double> observation;
    std::size_t steps = 0;
    bool terminal = false;
    double excluded_reward = 0.0;
};

/// reset(seed), then apply the start injection. A recorded prefix must
/// reproduce its recorded rewards and terminal flags, otherwise FixtureError.
InjectedStart inject_start(Environment& env, std::uint64_t seed, const StartPoint& start);

struct EpisodeScore {
    double score = 0.0;
    std::size_t agent_steps = 0;
    std::size_t injected_steps = 0;
};

/// Continues from the current environment state with `policy` until
/// terminal or until `steps_used + agent steps` reaches total_cap.
EpisodeScore play_from(Environment& env, const ObservationPolicy& policy, std::vector<double> observation,
                       std::size_t steps_used, std::size_t total_cap);

EpisodeScore play_episode(Environment& env, const ObservationPolicy& policy, std::uint64_t seed,
                          const StartPoint& start, std::size_t total_cap);

/// Uniform random actions, one per decision step, from the same start
/// injection and under the same cap as a trained agent.
double random_agent_rollout(Environment& env, const StartPoint& start, std::size_t total_cap, std::uint64_t seed,
                            Rng& rng);

}  // namespace gorila
