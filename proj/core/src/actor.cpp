#include "gorila/actor.hpp"

#include "gorila/errors.hpp"

namespace gorila {

void ActorConfig::validate() const {
    if (sync_period_steps < 1) throw ConfigError("sync_period_steps must be at least 1");
    if (episode_cap < 1) throw ConfigError("episode cap must be at least 1");
    epsilon.validate();
}

Actor::Actor(ActorConfig cfg, Environment& env, ExperienceSink& sink, ParameterClient& client, QNetwork net)
    : cfg_(cfg), env_(env), sink_(sink), client_(client), net_(std::move(net)), rng_(cfg.policy_seed) {
    cfg_.validate();
    if (net_.input_dim() != env_.observation_dim() || net_.action_count() != env_.action_count()) {
        throw ShapeError("actor network does not fit the environment");
    }
    scratch_ = net_.flatten();
}

void Actor::sync() {
    version_ = client_.fetch_into(scratch_);
    net_.sync_from(scratch_);
    steps_since_sync_ = 0;
    ++stats_.fetches;
}

void Actor::begin_episode() {
    observation_ = env_.reset(cfg_.env_seed + stats_.episodes + stats_.aborted_episodes);
    episode_steps_ = 0;
    in_episode_ = true;
    sync();
}

std::optional<Transition> Actor::step() {
    if (!in_episode_) begin_episode();

    const double eps = epsilon_at(cfg_.epsilon, version_);
    const std::size_t action = select_action(net_, observation_, eps, rng_);

    StepResult res;
    try {
        res = env_.step(action);
    } catch (const EnvFault&) {
        ++stats_.aborted_episodes;
        in_episode_ = false;
        return std::nullopt;
    }

    Transition t;
    t.state = std::move(observation_);
    t.action = static_cast<std::uint32_t>(action);
    t.reward = clip_reward(res.reward, cfg_.reward_clip);
    t.next_state = res.observation;
    t.terminal = res.terminal;
    t.actor_id = cfg_.actor_id;
    t.step = global_step_++;
    sink_.insert(t);

    ++stats_.steps;
    ++episode_steps_;
    stats_.total_reward += res.reward;
    observation_ = std::move(res.observation);

    if (res.terminal || episode_steps_ >= cfg_.episode_cap) {
        ++stats_.episodes;
        in_episode_ = false;
    }
    if (++steps_since_sync_ >= cfg_.sync_period_steps) sync();
    return t;
}

ActorStats run_actor(const ActorConfig& cfg, Environment& env, ExperienceSink& sink, ParameterClient& client,
                     QNetwork net, const std::atomic<bool>& stop, std::uint64_t max_steps) {
    Actor actor(cfg, env, sink, client, std::move(net));
    while (!stop.load(std::memory_order_relaxed) && actor.stats().steps < max_steps) {
        actor.step();
    }
    return actor.stats();
}

}  // namespace gorila
