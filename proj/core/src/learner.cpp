#include "gorila/learner.hpp"

#include <cmath>

#include "gorila/errors.hpp"

namespace gorila {

void TargetSyncPolicy::validate() const {
    if (period < 1) throw ConfigError("target sync period must be at least 1");
}

std::optional<std::uint64_t> maybe_sync_target(const TargetSyncPolicy& policy, std::uint64_t last_sync_version,
                                               std::uint64_t current_version, ParameterClient& client,
                                               QNetwork& target_net) {
    if (current_version < last_sync_version || current_version - last_sync_version < policy.period) {
        return std::nullopt;
    }
    ParamVector fresh = target_net.flatten();
    const std::uint64_t version = client.fetch_into(fresh);
    target_net.sync_from(fresh);
    return version;
}

double LossStats::sigma() const { return std::sqrt(std::max(variance, 0.0)); }

bool LossStats::is_outlier(double abs_loss) const {
    return active() && abs_loss > mean + k_sigma * sigma();
}

void LossStats::validate() const {
    if (!(k_sigma > 0.0)) throw ConfigError("k_sigma must be positive");
    if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("loss decay must lie in (0, 1)");
}

LossStats update_loss_stats(LossStats stats, double abs_loss) {
    if (stats.count == 0) {
        stats.mean = abs_loss;
        stats.variance = 0.0;
    } else {
        const double diff = abs_loss - stats.mean;
        const double w = 1.0 - stats.decay;
        stats.mean += w * diff;
        stats.variance = stats.decay * (stats.variance + w * diff * diff);
    }
    ++stats.count;
    return stats;
}

void LearnerConfig::validate() const {
    if (batch < 1) throw ConfigError("batch must be at least 1");
    gamma.validate();
    target.validate();
    loss_filter.validate();
}

const char* to_string(StepOutcome outcome) {
    switch (outcome) {
        case StepOutcome::pushed: return "pushed";
        case StepOutcome::rejected_outlier: return "rejected_outlier";
        case StepOutcome::replay_not_ready: return "replay_not_ready";
    }
    return "unknown";
}

std::vector<double> minibatch_gradient(const QNetwork& current, const QNetwork& target,
                                       std::span<const Transition> batch, Discount gamma, double* mean_loss) {
    std::vector<double> grad(current.params().size(), 0.0);
    double loss = 0.0;
    for (const auto& t : batch) {
        const TdError td = dqn_loss_and_upstream(t, current, target, gamma);
        loss += td.loss;
        current.backward_into(t.state, t.action, -td.upstream, grad);
    }
    const double n = static_cast<double>(batch.size());
    for (auto& g : grad) g /= n;
    if (mean_loss) *mean_loss = loss / n;
    return grad;
}

Learner::Learner(LearnerConfig cfg, ExperienceSource& replay, ParameterClient& client, QNetwork prototype)
    : cfg_(cfg),
      replay_(replay),
      client_(client),
      current_(prototype),
      target_(std::move(prototype)),
      rng_(cfg.sample_seed),
      loss_stats_(cfg.loss_filter) {
    cfg_.validate();
    loss_stats_.mean = 0.0;
    loss_stats_.variance = 0.0;
    loss_stats_.count = 0;
    scratch_ = current_.flatten();
    last_target_sync_ = client_.fetch_into(scratch_);
    current_.sync_from(scratch_);
    target_.sync_from(scratch_);
}

LearnerStepReport Learner::step() {
    LearnerStepReport report;
    const std::size_t available = replay_.size();
    if (available == 0 || available < cfg_.replay_warmup) {
        ++stats_.not_ready;
        return report;
    }

    report.base_version = client_.fetch_into(scratch_);
    current_.sync_from(scratch_);

    batch_ = replay_.sample(cfg_.batch, rng_);
    double loss = 0.0;
    auto grad = minibatch_gradient(current_, target_, batch_, cfg_.gamma, &loss);
    report.loss = loss;
    stats_.last_loss = loss;

    if (loss_stats_.is_outlier(std::abs(loss))) {
        report.outcome = StepOutcome::rejected_outlier;
        report.server_version = report.base_version;
        ++stats_.rejected;
        return report;
    }
    loss_stats_ = update_loss_stats(loss_stats_, std::abs(loss));

    const PushResult pushed = client_.push(report.base_version, grad);
    report.outcome = StepOutcome::pushed;
    report.accepted = pushed.accepted;
    report.server_version = pushed.version;
    ++stats_.pushed;
    if (!pushed.accepted) ++stats_.stale;

    report.target_synced_at = maybe_sync_target(cfg_.target, last_target_sync_, pushed.version, client_, target_);
    if (report.target_synced_at) {
        last_target_sync_ = *report.target_synced_at;
        ++stats_.target_syncs;
    }
    return report;
}

}  // namespace gorila
