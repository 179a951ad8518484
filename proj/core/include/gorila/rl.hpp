#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gorila/nn.hpp"

namespace gorila {

/// Seeded random stream. Single owner; never shared across threads.
using Rng = std::mt19937_64;

/// One experience tuple (s, a, r, s', terminal) tagged with its origin.
struct Transition {
    std::vector<double> state;
    std::uint32_t action = 0;
    double reward = 0.0;
    std::vector<double> next_state;
    bool terminal = false;
    std::uint32_t actor_id = 0;
    std::uint64_t step = 0;

    bool operator==(const Transition&) const = default;
};

/// Linear ε annealing from `start` to `end` over `horizon` global updates.
struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.1;
    std::uint64_t horizon = 1'000'000;

    void validate() const;
};

struct Discount {
    double gamma = 0.99;

    void validate() const;
};

double epsilon_at(const EpsilonSchedule& sched, std::uint64_t global_updates);

/// y = r for terminal transitions, r + γ max_a' Q(s', a'; θ⁻) otherwise.
double bellman_target(const Transition& t, const QNetwork& target_net, Discount gamma);

struct TdError {
    double loss = 0.0;      // δ²
    double upstream = 0.0;  // δ = y − Q(s, a; θ)
    double target = 0.0;    // y
};

/// Residual of one transition. The loss-reducing update is +η·δ·∇θ Q(s,a;θ),
/// i.e. the gradient of ½δ² with respect to θ is −δ·∇θ Q.
TdError dqn_loss_and_upstream(const Transition& t, const QNetwork& current, const QNetwork& target,
                              Discount gamma);

/// First index of the maximum; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

/// ε-greedy. Always consumes one uniform draw for the ε test and, when
/// exploring, one more for the action.
std::size_t select_action(const QNetwork& net, std::span<const double> state, double epsilon, Rng& rng);

/// Same policy applied to precomputed Q-values.
std::size_t select_action_from_q(std::span<const double> q, double epsilon, Rng& rng);

/// Optional reward transform; bound <= 0 disables clipping.
double clip_reward(double reward, double bound);

}  // namespace gorila
