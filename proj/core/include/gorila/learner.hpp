#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "gorila/nn.hpp"
#include "gorila/param_server.hpp"
#include "gorila/replay.hpp"
#include "gorila/rl.hpp"

namespace gorila {

/// θ⁻ is refreshed once the global version has advanced by `period` since
/// the last refresh.
struct TargetSyncPolicy {
    std::uint64_t period = 10'000;

    void validate() const;
};

/// Returns the fetched version when θ⁻ was refreshed. A catch-up over
/// several periods is a single refresh.
std::optional<std::uint64_t> maybe_sync_target(const TargetSyncPolicy& policy, std::uint64_t last_sync_version,
                                               std::uint64_t current_version, ParameterClient& client,
                                               QNetwork& target_net);

/// Exponentially weighted mean and variance of the absolute batch loss.
struct LossStats {
    double mean = 0.0;
    double variance = 0.0;
    std::uint64_t count = 0;
    double k_sigma = 3.0;
    std::uint64_t warmup_count = 100;
    double decay = 0.999;
    bool enabled = true;

    double sigma() const;
    bool active() const noexcept { return enabled && count >= warmup_count; }
    /// Compares against the current (pre-update) mean and deviation.
    bool is_outlier(double abs_loss) const;

    void validate() const;
};

/// First observation sets μ = x, σ = 0. Afterwards, with d = decay:
///   μ' = μ + (1 − d)(x − μ),  var' = d (var + (1 − d)(x − μ)²).
LossStats update_loss_stats(LossStats stats, double abs_loss);

struct LearnerConfig {
    std::uint32_t learner_id = 0;
    std::size_t batch = 32;
    Discount gamma;
    TargetSyncPolicy target;
    LossStats loss_filter;
    std::size_t replay_warmup = 1000;
    std::uint64_t sample_seed = 0;

    void validate() const;
};

enum class StepOutcome { pushed, rejected_outlier, replay_not_ready };

const char* to_string(StepOutcome outcome);

struct LearnerStepReport {
    StepOutcome outcome = StepOutcome::replay_not_ready;
    double loss = 0.0;  // minibatch mean of δ²
    std::uint64_t base_version = 0;
    bool accepted = false;  // server verdict for a pushed gradient
    std::uint64_t server_version = 0;
    std::optional<std::uint64_t> target_synced_at;
};

struct LearnerStats {
    std::uint64_t pushed = 0;
    std::uint64_t rejected = 0;
    std::uint64_t not_ready = 0;
    std::uint64_t stale = 0;
    double last_loss = 0.0;
    std::uint64_t target_syncs = 0;
};

/// Mean over the batch of the gradient of ½δ², i.e. −(1/B) Σ δ_i ∇θ Q(s_i, a_i; θ).
/// Sums in batch order and divides once at the end.
std::vector<double> minibatch_gradient(const QNetwork& current, const QNetwork& target,
                                       std::span<const Transition> batch, Discount gamma, double* mean_loss);

/// One DQN learner. At construction θ and θ⁻ are both set from θ⁺.
/// Each step: sync θ, sample, compute targets and the mean loss, reject
/// outliers or push the mean gradient tagged with the synced version, then
/// apply the target-sync rule against the version the server reported.
class Learner {
public:
    Learner(LearnerConfig cfg, ExperienceSource& replay, ParameterClient& client, QNetwork prototype);

    LearnerStepReport step();

    const LearnerStats& stats() const noexcept { return stats_; }
    const LossStats& loss_stats() const noexcept { return loss_stats_; }
    const QNetwork& current() const noexcept { return current_; }
    const QNetwork& target() const noexcept { return target_; }
    std::uint64_t last_target_sync() const noexcept { return last_target_sync_; }
    const std::vector<Transition>& last_batch() const noexcept { return batch_; }
    const LearnerConfig& config() const noexcept { return cfg_; }

private:
    LearnerConfig cfg_;
    ExperienceSource& replay_;
    ParameterClient& client_;
    QNetwork current_;
    QNetwork target_;
    ParamVector scratch_;
    Rng rng_;
    LossStats loss_stats_;
    std::uint64_t last_target_sync_ = 0;
    std::vector<Transition> batch_;
    LearnerStats stats_;
};

}  // namespace gorila
