#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include "gorila/actor.hpp"
#include "gorila/envs.hpp"
#include "gorila/learner.hpp"
#include "gorila/param_server.hpp"
#include "gorila/replay.hpp"

namespace gorila {

/// Independent stream seed for (run seed, purpose tag, component index).
std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t tag, std::uint64_t index);

struct BundleSetup {
    ActorConfig actor;
    LearnerConfig learner;
    std::size_t replay_capacity = 100'000;
};

/// Actor, local replay and learner of one bundle. The learner is built
/// first, so its initial θ/θ⁻ fetch precedes the actor's first sync.
class Bundle {
public:
    Bundle(const BundleSetup& setup, std::unique_ptr<Environment> env, std::unique_ptr<ParameterClient> actor_client,
           std::unique_ptr<ParameterClient> learner_client, const QNetwork& prototype);

    struct Tick {
        std::optional<Transition> stored;
        LearnerStepReport learn;
    };

    /// One iteration of the bundled loop: act and store, then one learner step.
    Tick tick();

    Actor& actor() noexcept { return *actor_; }
    Learner& learner() noexcept { return *learner_; }
    LocalReplay& replay() noexcept { return replay_; }
    Environment& environment() noexcept { return *env_; }
    ParameterClient& actor_client() noexcept { return *actor_client_; }
    ParameterClient& learner_client() noexcept { return *learner_client_; }

private:
    std::unique_ptr<Environment> env_;
    std::unique_ptr<ParameterClient> actor_client_;
    std::unique_ptr<ParameterClient> learner_client_;
    LocalReplay replay_;
    std::unique_ptr<Learner> learner_;
    std::unique_ptr<Actor> actor_;
};

}  // namespace gorila
