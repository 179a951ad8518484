#include "gorila/envs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "gorila/bytes.hpp"
#include "gorila/errors.hpp"

namespace gorila {

void TabularMdp::validate() const {
    if (n_states == 0 || n_actions == 0) throw ConfigError("tabular MDP needs states and actions");
    if (start_state >= n_states) throw ConfigError("start state out of range");
    if (null_action >= n_actions) throw ConfigError("null action out of range");
    if (terminal.size() != n_states || outcomes.size() != n_states) {
        throw ConfigError("tabular MDP tables do not match n_states");
    }
    for (std::size_t s = 0; s < n_states; ++s) {
        if (outcomes[s].size() != n_actions) throw ConfigError("outcome table does not match n_actions");
        if (terminal[s]) continue;
        for (const auto& outs : outcomes[s]) {
            double total = 0.0;
            for (const auto& o : outs) {
                if (o.next >= n_states || o.prob < 0.0) throw ConfigError("invalid outcome");
                total += o.prob;
            }
            if (std::abs(total - 1.0) > 1e-9) throw ConfigError("outcome probabilities must sum to 1");
        }
    }
}

std::size_t QTable::greedy(std::size_t s) const {
    return argmax(std::span<const double>(values).subspan(s * n_actions, n_actions));
}

namespace {

double backup(const TabularMdp& mdp, const QTable& q, double gamma, std::size_t s, std::size_t a) {
    double v = 0.0;
    for (const auto& o : mdp.outcomes[s][a]) {
        double cont = 0.0;
        if (!mdp.terminal[o.next]) {
            cont = q.at(o.next, 0);
            for (std::size_t b = 1; b < mdp.n_actions; ++b) cont = std::max(cont, q.at(o.next, b));
        }
        v += o.prob * (o.reward + gamma * cont);
    }
    return v;
}

}  // namespace

QTable value_iteration_oracle(const TabularMdp& mdp, double gamma, double tol, std::size_t max_iterations) {
    mdp.validate();
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    QTable q{mdp.n_states, mdp.n_actions, std::vector<double>(mdp.n_states * mdp.n_actions, 0.0)};
    for (std::size_t it = 0; it < max_iterations; ++it) {
        QTable next = q;
        for (std::size_t s = 0; s < mdp.n_states; ++s) {
            if (mdp.terminal[s]) continue;
            for (std::size_t a = 0; a < mdp.n_actions; ++a) next.at(s, a) = backup(mdp, q, gamma, s, a);
        }
        q = std::move(next);
        if (bellman_residual(mdp, q, gamma) < tol) return q;
    }
    throw Error("value iteration did not converge");
}

double bellman_residual(const TabularMdp& mdp, const QTable& q, double gamma) {
    double worst = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        if (mdp.terminal[s]) continue;
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            worst = std::max(worst, std::abs(backup(mdp, q, gamma, s, a) - q.at(s, a)));
        }
    }
    return worst;
}

TabularEnv::TabularEnv(TabularMdp mdp) : mdp_(std::move(mdp)) { mdp_.validate(); }

std::vector<double> TabularEnv::observe(std::size_t state) const {
    std::vector<double> obs(mdp_.n_states, 0.0);
    obs[state] = 1.0;
    return obs;
}

std::size_t TabularEnv::decode_state(std::span<const double> observation) {
    std::size_t hot = observation.size();
    for (std::size_t i = 0; i < observation.size(); ++i) {
        if (observation[i] == 1.0 && hot == observation.size()) {
            hot = i;
        } else if (observation[i] != 0.0) {
            hot = observation.size();
            break;
        }
    }
    if (hot == observation.size()) throw ShapeError("observation is not one-hot");
    return hot;
}

std::vector<double> TabularEnv::reset(std::uint64_t seed) {
    rng_.seed(seed);
    state_ = mdp_.start_state;
    done_ = false;
    return observe(state_);
}

StepResult TabularEnv::step(std::size_t action) {
    if (done_) throw EnvFault("step called on a finished episode; reset first");
    if (action >= mdp_.n_actions) throw RangeError("action out of range");
    const auto& outs = mdp_.outcomes[state_][action];
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const double u = coin(rng_);
    double acc = 0.0;
    const Outcome* chosen = &outs.back();
    for (const auto& o : outs) {
        acc += o.prob;
        if (u < acc) {
            chosen = &o;
            break;
        }
    }
    state_ = chosen->next;
    done_ = mdp_.terminal[state_];
    return StepResult{observe(state_), chosen->reward, done_};
}

EnvSnapshot TabularEnv::snapshot() const {
    ByteWriter w;
    w.u64(state_);
    w.u8(done_ ? 1 : 0);
    std::ostringstream rng_state;
    rng_state << rng_;
    w.str(rng_state.str());
    return EnvSnapshot{mdp_.name, kSnapshotVersion, w.take()};
}

void TabularEnv::restore(const EnvSnapshot& snap) {
    if (snap.env_name != mdp_.name) throw FixtureError("snapshot belongs to environment '" + snap.env_name + "'");
    if (snap.format_version != kSnapshotVersion) throw FixtureError("unsupported snapshot version");
    ByteReader r(snap.data);
    const auto state = r.u64();
    if (state >= mdp_.n_states) throw FixtureError("snapshot state out of range");
    const bool done = r.u8() != 0;
    std::istringstream rng_state(r.str());
    Rng rng;
    rng_state >> rng;
    if (!rng_state) throw FixtureError("corrupt snapshot rng state");
    state_ = static_cast<std::size_t>(state);
    done_ = done;
    rng_ = rng;
}

std::unique_ptr<Environment> TabularEnv::clone() const { return std::make_unique<TabularEnv>(*this); }

TabularMdp ChainMdp::to_tabular() const {
    if (n_states < 2) throw ConfigError("chain needs at least two states");
    if (!(slip >= 0.0 && slip <= 1.0)) throw ConfigError("slip must lie in [0, 1]");
    TabularMdp mdp;
    mdp.name = "chain";
    mdp.n_states = n_states;
    mdp.n_actions = 2;
    mdp.start_state = 0;
    mdp.null_action = 0;
    mdp.terminal.assign(n_states, false);
    mdp.terminal[n_states - 1] = true;
    mdp.outcomes.assign(n_states, std::vector<std::vector<Outcome>>(2));
    const std::size_t goal = n_states - 1;
    auto reward_for = [&](std::size_t next) { return next == goal ? goal_reward : -step_cost; };
    for (std::size_t s = 0; s + 1 < n_states; ++s) {
        const std::size_t left = s == 0 ? 0 : s - 1;
        const std::size_t right = s + 1;
        for (std::size_t a = 0; a < 2; ++a) {
            const std::size_t intended = a == 0 ? left : right;
            const std::size_t slipped = a == 0 ? right : left;
            auto& outs = mdp.outcomes[s][a];
            if (slip < 1.0) outs.push_back({1.0 - slip, intended, reward_for(intended)});
            if (slip > 0.0) outs.push_back({slip, slipped, reward_for(slipped)});
        }
    }
    return mdp;
}

TabularMdp GridWorld::to_tabular() const {
    if (width * height < 2) throw ConfigError("grid needs at least two cells");
    if (!(slip >= 0.0 && slip <= 1.0)) throw ConfigError("slip must lie in [0, 1]");
    constexpr std::size_t kActions = 5;
    TabularMdp mdp;
    mdp.name = "gridworld";
    mdp.n_states = width * height;
    mdp.n_actions = kActions;
    mdp.start_state = 0;
    mdp.null_action = 0;
    mdp.terminal.assign(mdp.n_states, false);
    const std::size_t goal = mdp.n_states - 1;
    mdp.terminal[goal] = true;
    mdp.outcomes.assign(mdp.n_states, std::vector<std::vector<Outcome>>(kActions));

    auto move = [&](std::size_t s, std::size_t a) {
        std::size_t x = s % width;
        std::size_t y = s / width;
        switch (a) {
            case 1: y = y == 0 ? 0 : y - 1; break;
            case 2: y = std::min(y + 1, height - 1); break;
            case 3: x = x == 0 ? 0 : x - 1; break;
            case 4: x = std::min(x + 1, width - 1); break;
            default: break;
        }
        return y * width + x;
    };
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        if (mdp.terminal[s]) continue;
        for (std::size_t a = 0; a < kActions; ++a) {
            std::vector<double> prob(mdp.n_states, 0.0);
            for (std::size_t b = 0; b < kActions; ++b) {
                prob[move(s, b)] += slip / static_cast<double>(kActions);
            }
            prob[move(s, a)] += 1.0 - slip;
            auto& outs = mdp.outcomes[s][a];
            for (std::size_t n = 0; n < mdp.n_states; ++n) {
                if (prob[n] > 0.0) outs.push_back({prob[n], n, n == goal ? goal_reward : -step_cost});
            }
        }
    }
    return mdp;
}

TabularMdp tabular_model(const EnvSpec& spec) {
    if (spec.kind == "chain") return spec.chain.to_tabular();
    if (spec.kind == "gridworld") return spec.grid.to_tabular();
    throw ConfigError("unknown environment kind '" + spec.kind + "'");
}

std::unique_ptr<Environment> make_environment(const EnvSpec& spec) {
    return std::make_unique<TabularEnv>(tabular_model(spec));
}

ObservationStacker::ObservationStacker(std::size_t k, std::size_t observation_dim)
    : k_(k), dim_(observation_dim), window_(k * observation_dim, 0.0) {
    if (k == 0 || observation_dim == 0) throw ConfigError("stacker window and dimension must be positive");
}

void ObservationStacker::reset() { std::fill(window_.begin(), window_.end(), 0.0); }

std::vector<double> ObservationStacker::push(std::span<const double> observation) {
    if (observation.size() != dim_) throw ShapeError("observation dimension mismatch");
    std::copy(window_.begin() + static_cast<std::ptrdiff_t>(dim_), window_.end(), window_.begin());
    std::copy(observation.begin(), observation.end(), window_.end() - static_cast<std::ptrdiff_t>(dim_));
    return window_;
}

std::vector<double> ObservationStacker::current() const { return window_; }

namespace {

constexpr char kTrajectoryMagic[4] = {'G', 'R', 'L', 'T'};

}  // namespace

std::vector<std::uint8_t> serialize_trajectory(const Trajectory& traj) {
    ByteWriter w;
    for (char c : kTrajectoryMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(kTrajectoryVersion);
    w.str(traj.env_name);
    w.u64(traj.seed);
    w.u32(traj.stack_k);
    w.u64(traj.steps.size());
    for (const auto& s : traj.steps) {
        w.u32(s.action);
        w.f64(s.reward);
        w.u8(s.terminal ? 1 : 0);
    }
    return w.take();
}

Trajectory deserialize_trajectory(std::span<const std::uint8_t> bytes) {
    try {
        ByteReader r(bytes);
        for (char c : kTrajectoryMagic) {
            if (r.u8() != static_cast<std::uint8_t>(c)) throw FixtureError("not a trajectory file");
        }
        if (r.u32() != kTrajectoryVersion) throw FixtureError("unsupported trajectory version");
        Trajectory t;
        t.env_name = r.str();
        t.seed = r.u64();
        t.stack_k = r.u32();
        const std::uint64_t n = r.u64();
        if (n > r.remaining() / 13) throw FixtureError("trajectory record count exceeds file size");
        t.steps.resize(static_cast<std::size_t>(n));
        for (auto& s : t.steps) {
            s.action = r.u32();
            s.reward = r.f64();
            s.terminal = r.u8() != 0;
        }
        if (!r.done()) throw FixtureError("trailing bytes after trajectory records");
        return t;
    } catch (const ProtocolError& e) {
        throw FixtureError(std::string("corrupt trajectory: ") + e.what());
    }
}

void save_trajectory(const std::string& path, const Trajectory& traj) {
    const auto bytes = serialize_trajectory(traj);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open trajectory for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Trajectory load_trajectory(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FixtureError("cannot open trajectory: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_trajectory(bytes);
}

Trajectory record_trajectory(Environment& env, const ObservationPolicy& policy, std::uint64_t seed,
                             std::size_t max_steps) {
    Trajectory t;
    t.env_name = env.name();
    t.seed = seed;
    auto obs = env.reset(seed);
    for (std::size_t i = 0; i < max_steps; ++i) {
        const auto a = policy(obs);
        auto res = env.step(a);
        t.steps.push_back({static_cast<std::uint32_t>(a), res.reward, res.terminal});
        if (res.terminal) break;
        obs = std::move(res.observation);
    }
    return t;
}

ObservationPolicy greedy_table_policy(const QTable& q) {
    return [q](std::span<const double> obs) { return q.greedy(TabularEnv::decode_state(obs)); };
}

InjectedStart inject_start(Environment& env, std::uint64_t seed, const StartPoint& start) {
    InjectedStart out;
    out.observation = env.reset(seed);
    if (start.trajectory) {
        const auto& traj = *start.trajectory;
        if (traj.env_name != env.name()) {
            throw FixtureError("trajectory recorded on '" + traj.env_name + "', not '" + env.name() + "'");
        }
        if (start.prefix_len > traj.steps.size()) throw FixtureError("start point beyond recorded trajectory");
        out.observation = env.reset(traj.seed);
        for (std::size_t i = 0; i < start.prefix_len; ++i) {
            const auto& rec = traj.steps[i];
            auto res = env.step(rec.action);
            if (res.reward != rec.reward || res.terminal != rec.terminal) {
                throw FixtureError("trajectory diverges from environment at step " + std::to_string(i));
            }
            out.excluded_reward += res.reward;
            out.observation = std::move(res.observation);
            ++out.steps;
            if (res.terminal) {
                out.terminal = true;
                break;
            }
        }
        return out;
    }
    for (std::size_t i = 0; i < start.null_ops; ++i) {
        auto res = env.step(env.null_action());
        out.excluded_reward += res.reward;
        out.observation = std::move(res.observation);
        ++out.steps;
        if (res.terminal) {
            out.terminal = true;
            break;
        }
    }
    return out;
}

EpisodeScore play_from(Environment& env, const ObservationPolicy& policy, std::vector<double> observation,
                       std::size_t steps_used, std::size_t total_cap) {
    EpisodeScore score;
    score.injected_steps = steps_used;
    while (steps_used + score.agent_steps < total_cap) {
        auto res = env.step(policy(observation));
        ++score.agent_steps;
        score.score += res.reward;
        if (res.terminal) break;
        observation = std::move(res.observation);
    }
    return score;
}

EpisodeScore play_episode(Environment& env, const ObservationPolicy& policy, std::uint64_t seed,
                          const StartPoint& start, std::size_t total_cap) {
    auto injected = inject_start(env, seed, start);
    if (injected.terminal) return EpisodeScore{0.0, 0, injected.steps};
    return play_from(env, policy, std::move(injected.observation), injected.steps, total_cap);
}

double random_agent_rollout(Environment& env, const StartPoint& start, std::size_t total_cap, std::uint64_t seed,
                            Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, env.action_count() - 1);
    ObservationPolicy uniform = [&](std::span<const double>) { return pick(rng); };
    return play_episode(env, uniform, seed, start, total_cap).score;
}

}  // namespace gorila
