#include "gorila/bundle.hpp"

namespace gorila {

std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t tag, std::uint64_t index) {
    std::uint64_t z = run_seed * 0x9e3779b97f4a7c15ULL + tag * 0xd1b54a32d192ed03ULL + index;
    for (int round = 0; round < 2; ++round) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z ^= z >> 31;
    }
    return z;
}

Bundle::Bundle(const BundleSetup& setup, std::unique_ptr<Environment> env,
               std::unique_ptr<ParameterClient> actor_client, std::unique_ptr<ParameterClient> learner_client,
               const QNetwork& prototype)
    : env_(std::move(env)),
      actor_client_(std::move(actor_client)),
      learner_client_(std::move(learner_client)),
      replay_(setup.replay_capacity) {
    learner_ = std::make_unique<Learner>(setup.learner, replay_, *learner_client_, prototype);
    actor_ = std::make_unique<Actor>(setup.actor, *env_, replay_, *actor_client_, prototype);
}

Bundle::Tick Bundle::tick() {
    Tick t;
    t.stored = actor_->step();
    t.learn = learner_->step();
    return t;
}

}  // namespace gorila
