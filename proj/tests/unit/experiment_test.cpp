#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gorila/bundle.hpp"
#include "gorila/experiment.hpp"
#include "gorila/param_server.hpp"

namespace fs = std::filesystem;

namespace gorila {
namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig small_chain() {
    RunConfig cfg = load_run_config(std::string(GORILA_CONFIG_DIR) + "/chain.cfg");
    cfg.max_global_versions = 600;
    cfg.eval_every = 200;
    cfg.eval.episodes = 5;
    cfg.replay_warmup = 50;
    cfg.repetitions = 1;
    return cfg;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::path(::testing::TempDir()) / ("gorila-" + name);
    fs::remove_all(dir);
    return dir;
}

TEST(Metrics, RowFormat) {
    MetricsRow row{12.5, 300, 0.25, 1e-3, 2, 0};
    EXPECT_EQ(format_metrics_row(row), "12.5,300,0.25,0.001,2,0");
    EXPECT_EQ(std::string(kMetricsHeader),
              "wall_clock_s,global_version,mean_eval_score,loss,rejected_batches,stale_discards");
}

TEST(RunExperiment, WritesTheRunDirectory) {
    const auto dir = scratch("layout");
    const auto s = run_experiment(small_chain(), dir.string());
    EXPECT_FALSE(s.failure);
    EXPECT_EQ(s.final_version, 600u);
    for (const char* f : {"config.txt", "metrics.csv", "checkpoints/best.grla", "checkpoints/final.grla",
                          "eval/initial.txt", "eval/final.txt", "summary.txt"}) {
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    }
    EXPECT_FALSE(fs::exists(dir / "failure.txt"));
    const auto metrics = slurp(dir / "metrics.csv");
    EXPECT_EQ(metrics.substr(0, metrics.find('\n')), kMetricsHeader);
    // Initial evaluation plus one every 200 versions.
    EXPECT_EQ(s.evaluations.size(), 4u);
    EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 5);
    // The written config parses back to the same run.
    EXPECT_EQ(format_run_config(load_run_config((dir / "config.txt").string())), format_run_config(small_chain()));
    EXPECT_EQ(load_checkpoint((dir / "checkpoints/final.grla").string()).values.size(),
              initial_network(small_chain()).params().size());
}

TEST(RunExperiment, ZeroBudgetRunStillWritesEverything) {
    auto cfg = small_chain();
    cfg.max_global_versions = 0;
    const auto dir = scratch("empty");
    const auto s = run_experiment(cfg, dir.string());
    EXPECT_FALSE(s.failure);
    EXPECT_EQ(s.final_version, 0u);
    EXPECT_EQ(s.actor_steps, 0u);
    EXPECT_EQ(s.evaluations.size(), 1u);
    EXPECT_EQ(load_checkpoint((dir / "checkpoints/final.grla").string()), initial_network(cfg).params());
}

TEST(RunExperiment, DeterministicModeIsReproducible) {
    auto cfg = small_chain();
    cfg.metrics_clock = MetricsClock::logical;
    const auto a = scratch("det-a");
    const auto b = scratch("det-b");
    run_experiment(cfg, a.string());
    run_experiment(cfg, b.string());
    EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
    EXPECT_EQ(slurp(a / "checkpoints/final.grla"), slurp(b / "checkpoints/final.grla"));
    EXPECT_EQ(slurp(a / "summary.txt"), slurp(b / "summary.txt"));
}

TEST(RunExperiment, TransportsGiveIdenticalDeterministicRuns) {
    auto cfg = small_chain();
    cfg.metrics_clock = MetricsClock::logical;
    std::string reference;
    for (auto kind : {TransportKind::in_process, TransportKind::in_process_frames, TransportKind::socket}) {
        cfg.transport = kind;
        const auto dir = scratch(std::string("transport-") + to_string(kind));
        const auto s = run_experiment(cfg, dir.string());
        ASSERT_FALSE(s.failure) << *s.failure;
        const auto bytes = slurp(dir / "checkpoints/final.grla");
        if (reference.empty()) reference = bytes;
        EXPECT_EQ(bytes, reference) << to_string(kind);
    }
}

TEST(RunExperiment, UnbundledWithGlobalReplay) {
    auto cfg = small_chain();
    cfg.bundled = false;
    cfg.n_actors = 2;
    cfg.n_learners = 1;
    cfg.transport = TransportKind::in_process_frames;
    const auto s = run_experiment(cfg, scratch("global").string());
    ASSERT_FALSE(s.failure) << *s.failure;
    EXPECT_EQ(s.final_version, 600u);
}

TEST(RunExperiment, ConcurrentModeStopsOnBudget) {
    auto cfg = small_chain();
    cfg.deterministic = false;
    cfg.n_actors = cfg.n_learners = 2;
    cfg.transport = TransportKind::socket;
    cfg.max_delay = 50;
    const auto s = run_experiment(cfg, scratch("concurrent").string());
    ASSERT_FALSE(s.failure) << *s.failure;
    EXPECT_GE(s.final_version, 600u);
    EXPECT_GT(s.actor_steps, 0u);
}

TEST(RunExperiment, ThresholdStopsEarly) {
    auto cfg = small_chain();
    cfg.stop_at_score = -1e9;
    cfg.metrics_clock = MetricsClock::logical;
    const auto s = run_experiment(cfg, scratch("threshold").string());
    ASSERT_TRUE(s.time_to_threshold);
    EXPECT_EQ(*s.time_to_threshold, 0.0);
    EXPECT_EQ(s.final_version, 0u);
}

TEST(RunExperiment, MissingTrajectoryIsAnError) {
    auto cfg = small_chain();
    cfg.trajectory_path = "/nonexistent/expert.grlt";
    EXPECT_THROW(run_experiment(cfg, scratch("missing").string()), Error);
}

TEST(Bundle, LearnerFetchesBeforeTheActor) {
    const auto cfg = small_chain();
    const QNetwork init = initial_network(cfg);
    ParamServer server(init.flatten(), 4, cfg.learning_rate, cfg.adagrad_epsilon, StalenessPolicy{});
    auto actor_client = std::make_unique<LocalParameterClient>(server);
    auto learner_client = std::make_unique<LocalParameterClient>(server);
    auto* a = actor_client.get();
    auto* l = learner_client.get();
    Bundle bundle(bundle_setup_for(cfg, 0), make_environment(cfg.env), std::move(actor_client),
                  std::move(learner_client), init);
    EXPECT_EQ(l->fetch_count(), 1u);
    EXPECT_EQ(a->fetch_count(), 0u);
    const auto tick = bundle.tick();
    EXPECT_TRUE(tick.stored);
    EXPECT_EQ(tick.learn.outcome, StepOutcome::replay_not_ready);
    EXPECT_EQ(bundle.replay().size(), 1u);
}

TEST(Bundle, ComponentSeedsDifferAcrossBundles) {
    const auto cfg = small_chain();
    const auto a = bundle_setup_for(cfg, 0);
    const auto b = bundle_setup_for(cfg, 1);
    EXPECT_NE(a.actor.policy_seed, b.actor.policy_seed);
    EXPECT_NE(a.actor.env_seed, b.actor.env_seed);
    EXPECT_NE(a.learner.sample_seed, b.learner.sample_seed);
    EXPECT_NE(a.actor.policy_seed, a.learner.sample_seed);
}

}  // namespace
}  // namespace gorila
