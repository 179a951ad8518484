#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gorila/bundle.hpp"
#include "gorila/config.hpp"
#include "gorila/eval.hpp"
#include "gorila/nn.hpp"

namespace gorila {

/// One row of metrics.csv.
struct MetricsRow {
    double clock = 0.0;  // seconds, or total actor steps under the logical clock
    std::uint64_t global_version = 0;
    double mean_eval_score = 0.0;
    double loss = 0.0;
    std::uint64_t rejected_batches = 0;
    std::uint64_t stale_discards = 0;
};

inline constexpr const char* kMetricsHeader =
    "wall_clock_s,global_version,mean_eval_score,loss,rejected_batches,stale_discards";

std::string format_metrics_row(const MetricsRow& row);

struct RunSummary {
    std::string run_dir;
    std::uint64_t final_version = 0;
    std::uint64_t actor_steps = 0;
    std::vector<MetricsRow> evaluations;
    double best_score = 0.0;
    std::uint64_t best_version = 0;
    std::optional<double> time_to_threshold;  // same unit as MetricsRow::clock
    double wall_seconds = 0.0;
    std::optional<std::string> failure;
};

/// Builds the network, server and components described by cfg, trains until
/// a stop condition, and writes into out_dir:
///   config.txt, metrics.csv, checkpoints/{best,final}.grla,
///   eval/{initial,final}.txt, summary.txt and, on failure, failure.txt.
/// A component failure stops the run; everything written so far is kept
/// and the summary carries the labeled failure.
RunSummary run_experiment(const RunConfig& cfg, const std::string& out_dir);

/// The Q-network shape used for an environment under cfg.
QNetwork make_network(const RunConfig& cfg, std::size_t observation_dim, std::size_t action_count);

/// Initial θ⁺ of a run: the configured network shape, seeded from cfg.seed.
QNetwork initial_network(const RunConfig& cfg);

/// Component settings for index i, with seeds derived from cfg.seed.
ActorConfig actor_config_for(const RunConfig& cfg, std::uint32_t index);
LearnerConfig learner_config_for(const RunConfig& cfg, std::uint32_t index);
BundleSetup bundle_setup_for(const RunConfig& cfg, std::uint32_t index);

/// Mean agent score of a frozen parameter snapshot under cfg.eval.
double evaluate_snapshot(const RunConfig& cfg, const ParamVector& params, const Trajectory* trajectory);

}  // namespace gorila
