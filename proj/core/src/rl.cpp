#include "gorila/rl.hpp"

#include <algorithm>
#include <string>

#include "gorila/errors.hpp"

namespace gorila {

void EpsilonSchedule::validate() const {
    if (!(0.0 <= end && end <= start && start <= 1.0)) {
        throw ConfigError("epsilon schedule requires 0 <= end <= start <= 1");
    }
    if (horizon == 0) throw ConfigError("epsilon horizon must be positive");
}

void Discount::validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
}

double epsilon_at(const EpsilonSchedule& sched, std::uint64_t global_updates) {
    if (global_updates >= sched.horizon) return sched.end;
    const double frac = static_cast<double>(global_updates) / static_cast<double>(sched.horizon);
    return sched.start + (sched.end - sched.start) * frac;
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw ShapeError("argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

double bellman_target(const Transition& t, const QNetwork& target_net, Discount gamma) {
    if (t.next_state.size() != target_net.input_dim()) {
        throw ShapeError("next_state dimension does not match target network");
    }
    if (t.terminal) return t.reward;
    const auto q_next = target_net.forward(t.next_state);
    return t.reward + gamma.gamma * *std::max_element(q_next.begin(), q_next.end());
}

TdError dqn_loss_and_upstream(const Transition& t, const QNetwork& current, const QNetwork& target,
                              Discount gamma) {
    if (t.action >= current.action_count()) {
        throw RangeError("transition action out of range");
    }
    const double y = bellman_target(t, target, gamma);
    const auto q = current.forward(t.state);
    const double delta = y - q[t.action];
    return TdError{delta * delta, delta, y};
}

std::size_t select_action_from_q(std::span<const double> q, double epsilon, Rng& rng) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw RangeError("epsilon outside [0, 1]");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
        std::uniform_int_distribution<std::size_t> pick(0, q.size() - 1);
        return pick(rng);
    }
    return argmax(q);
}

std::size_t select_action(const QNetwork& net, std::span<const double> state, double epsilon, Rng& rng) {
    const auto q = net.forward(state);
    return select_action_from_q(q, epsilon, rng);
}

double clip_reward(double reward, double bound) {
    if (bound <= 0.0) return reward;
    return std::clamp(reward, -bound, bound);
}

}  // namespace gorila
