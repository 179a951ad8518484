#include "gorila/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "gorila/bundle.hpp"
#include "gorila/errors.hpp"
#include "gorila/param_server.hpp"
#include "gorila/replay.hpp"
#include "gorila/transport.hpp"

namespace gorila {

namespace fs = std::filesystem;

namespace {

enum SeedTag : std::uint64_t {
    kInitTag = 1,
    kEnvTag = 2,
    kPolicyTag = 3,
    kSampleTag = 4,
    kReplayServiceTag = 5,
};

std::string number_text(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

/// Hands out ParameterClients (and global replay handles) over the
/// configured transport and owns the serving side.
class Plumbing {
public:
    Plumbing(ParamServer& server, TransportKind kind) : server_(server), kind_(kind), param_host_(param_server_handler(server)) {
        if (kind_ == TransportKind::socket) {
            param_listener_ = std::make_unique<SocketListener>();
            param_host_.serve_listener(*param_listener_);
        }
    }

    ~Plumbing() { shutdown(); }

    void attach_replay(GlobalReplay& store, std::uint64_t seed) {
        store_ = &store;
        replay_host_ = std::make_unique<ServiceHost>(global_replay_handler(store, seed));
        if (kind_ == TransportKind::socket) {
            replay_listener_ = std::make_unique<SocketListener>();
            replay_host_->serve_listener(*replay_listener_);
        }
    }

    std::unique_ptr<ParameterClient> parameter_client() {
        switch (kind_) {
            case TransportKind::in_process: return std::make_unique<LocalParameterClient>(server_);
            case TransportKind::in_process_frames: {
                auto [client, service] = in_process_pair();
                param_host_.serve(std::move(service));
                return std::make_unique<RemoteParameterClient>(std::move(client));
            }
            case TransportKind::socket:
                return std::make_unique<RemoteParameterClient>(socket_connect("127.0.0.1", param_listener_->port()));
        }
        throw ConfigError("unknown transport");
    }

    struct ReplayHandle {
        ExperienceSink* sink = nullptr;
        ExperienceSource* source = nullptr;
    };

    ReplayHandle replay_handle() {
        if (kind_ == TransportKind::in_process) return {store_, store_};
        std::unique_ptr<Connection> conn;
        if (kind_ == TransportKind::in_process_frames) {
            auto [client, service] = in_process_pair();
            replay_host_->serve(std::move(service));
            conn = std::move(client);
        } else {
            conn = socket_connect("127.0.0.1", replay_listener_->port());
        }
        auto& remote = remote_replays_.emplace_back(std::make_unique<RemoteReplayClient>(std::move(conn)));
        return {remote.get(), remote.get()};
    }

    void shutdown() {
        remote_replays_.clear();
        if (replay_host_) replay_host_->stop();
        param_host_.stop();
    }

private:
    ParamServer& server_;
    TransportKind kind_;
    ServiceHost param_host_;
    std::unique_ptr<SocketListener> param_listener_;
    GlobalReplay* store_ = nullptr;
    std::unique_ptr<ServiceHost> replay_host_;
    std::unique_ptr<SocketListener> replay_listener_;
    std::vector<std::unique_ptr<RemoteReplayClient>> remote_replays_;
};

struct Components {
    std::vector<std::unique_ptr<Environment>> envs;
    std::vector<std::unique_ptr<ParameterClient>> clients;
    std::vector<std::unique_ptr<LocalReplay>> local_replays;
    std::vector<std::unique_ptr<Learner>> learners;
    std::vector<std::unique_ptr<Actor>> actors;
};

}  // namespace

ActorConfig actor_config_for(const RunConfig& cfg, std::uint32_t i) {
    ActorConfig a;
    a.actor_id = i;
    a.sync_period_steps = cfg.sync_period;
    a.epsilon = cfg.epsilon;
    a.episode_cap = cfg.episode_cap;
    a.env_seed = derive_seed(cfg.seed, kEnvTag, i);
    a.policy_seed = derive_seed(cfg.seed, kPolicyTag, i);
    a.reward_clip = cfg.reward_clip;
    return a;
}

LearnerConfig learner_config_for(const RunConfig& cfg, std::uint32_t i) {
    LearnerConfig l;
    l.learner_id = i;
    l.batch = cfg.batch;
    l.gamma = Discount{cfg.gamma};
    l.target = TargetSyncPolicy{cfg.target_period};
    l.loss_filter.enabled = cfg.outlier_filter;
    l.loss_filter.k_sigma = cfg.k_sigma;
    l.loss_filter.warmup_count = cfg.loss_warmup;
    l.loss_filter.decay = cfg.loss_decay;
    l.replay_warmup = cfg.replay_warmup;
    l.sample_seed = derive_seed(cfg.seed, kSampleTag, i);
    return l;
}

BundleSetup bundle_setup_for(const RunConfig& cfg, std::uint32_t index) {
    return BundleSetup{actor_config_for(cfg, index), learner_config_for(cfg, index), cfg.replay_capacity};
}

QNetwork initial_network(const RunConfig& cfg) {
    auto probe = make_environment(cfg.env);
    QNetwork net = make_network(cfg, probe->observation_dim(), probe->action_count());
    net.init_uniform(derive_seed(cfg.seed, kInitTag, 0));
    return net;
}

namespace {

/// Learner i uses local replay i in bundled mode, the global store otherwise.
/// Learners are constructed before actors so that the initial θ/θ⁻ fetch
/// of each learner precedes any acting.
void build(const RunConfig& cfg, const QNetwork& prototype, Plumbing& plumbing, Components& c) {
    std::vector<Plumbing::ReplayHandle> handles;
    if (cfg.bundled) {
        for (std::size_t i = 0; i < cfg.n_actors; ++i) {
            auto& r = c.local_replays.emplace_back(std::make_unique<LocalReplay>(cfg.replay_capacity));
            handles.push_back({r.get(), r.get()});
        }
    }
    auto handle_for = [&](std::size_t i) {
        if (cfg.bundled) return handles[i];
        return plumbing.replay_handle();
    };
    for (std::size_t i = 0; i < cfg.n_learners; ++i) {
        auto& client = c.clients.emplace_back(plumbing.parameter_client());
        auto h = handle_for(i);
        c.learners.push_back(std::make_unique<Learner>(learner_config_for(cfg, static_cast<std::uint32_t>(i)), *h.source,
                                                       *client, prototype));
    }
    for (std::size_t i = 0; i < cfg.n_actors; ++i) {
        auto& env = c.envs.emplace_back(make_environment(cfg.env));
        auto& client = c.clients.emplace_back(plumbing.parameter_client());
        auto h = handle_for(i);
        c.actors.push_back(std::make_unique<Actor>(actor_config_for(cfg, static_cast<std::uint32_t>(i)), *env, *h.sink,
                                                   *client, prototype));
    }
}

class MetricsWriter {
public:
    explicit MetricsWriter(const fs::path& path) : out_(path) {
        if (!out_) throw Error("cannot write " + path.string());
        out_ << kMetricsHeader << '\n';
        out_.flush();
    }

    void write(const MetricsRow& row) {
        out_ << format_metrics_row(row) << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

}  // namespace

std::string format_metrics_row(const MetricsRow& row) {
    std::ostringstream out;
    out << number_text(row.clock) << ',' << row.global_version << ',' << number_text(row.mean_eval_score) << ','
        << number_text(row.loss) << ',' << row.rejected_batches << ',' << row.stale_discards;
    return out.str();
}

QNetwork make_network(const RunConfig& cfg, std::size_t observation_dim, std::size_t action_count) {
    return QNetwork::mlp(observation_dim, cfg.hidden, action_count);
}

double evaluate_snapshot(const RunConfig& cfg, const ParamVector& params, const Trajectory* trajectory) {
    auto env = make_environment(cfg.env);
    QNetwork net = make_network(cfg, env->observation_dim(), env->action_count());
    net.sync_from(params);
    const auto policy = greedy_network_policy(net);
    Rng rng(cfg.eval_seed);
    if (cfg.eval.kind == ProtocolKind::human_starts) {
        if (!trajectory) throw ConfigError("human_starts evaluation requires a trajectory");
        return eval_human_starts(policy, *env, *trajectory, cfg.eval, rng);
    }
    return eval_null_op(policy, *env, cfg.eval, cfg.eval_seed, rng);
}

RunSummary run_experiment(const RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    const fs::path root(out_dir);
    fs::create_directories(root / "checkpoints");
    fs::create_directories(root / "eval");
    {
        std::ofstream snap(root / "config.txt");
        snap << format_run_config(cfg);
    }

    RunSummary summary;
    summary.run_dir = root.string();

    std::optional<Trajectory> trajectory;
    if (!cfg.trajectory_path.empty()) trajectory = load_trajectory(cfg.trajectory_path);
    const Trajectory* traj = trajectory ? &*trajectory : nullptr;

    auto probe = make_environment(cfg.env);
    QNetwork prototype = initial_network(cfg);

    StalenessPolicy staleness{cfg.max_delay};
    ParamServer server(prototype.flatten(), cfg.n_param_shards, cfg.learning_rate, cfg.adagrad_epsilon, staleness);

    std::unique_ptr<GlobalReplay> global;
    if (!cfg.bundled) {
        const std::size_t per_shard = (cfg.replay_capacity + cfg.global_replay_shards - 1) / cfg.global_replay_shards;
        global = std::make_unique<GlobalReplay>(static_cast<std::uint32_t>(cfg.global_replay_shards), per_shard);
    }

    MetricsWriter metrics(root / "metrics.csv");
    const auto started = std::chrono::steady_clock::now();
    auto seconds = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count(); };

    std::atomic<std::uint64_t> actor_steps{0};
    std::atomic<std::uint64_t> rejected{0};
    std::mutex loss_mu;
    std::vector<double> last_loss(cfg.n_learners, 0.0);

    auto clock_value = [&] {
        return cfg.metrics_clock == MetricsClock::logical ? static_cast<double>(actor_steps.load()) : seconds();
    };

    bool have_best = false;
    bool threshold_hit = false;
    auto record_eval = [&] {
        auto [params, version] = server.fetch_all();
        const double score = evaluate_snapshot(cfg, params, traj);
        MetricsRow row;
        row.clock = clock_value();
        row.global_version = version;
        row.mean_eval_score = score;
        {
            std::lock_guard lock(loss_mu);
            double sum = 0.0;
            for (double l : last_loss) sum += l;
            row.loss = sum / static_cast<double>(last_loss.size());
        }
        row.rejected_batches = rejected.load();
        row.stale_discards = server.stats().discarded_stale;
        metrics.write(row);
        summary.evaluations.push_back(row);
        if (!have_best || score > summary.best_score) {
            have_best = true;
            summary.best_score = score;
            summary.best_version = version;
            save_checkpoint((root / "checkpoints" / "best.grla").string(), params);
        }
        if (cfg.stop_at_score && score >= *cfg.stop_at_score && !threshold_hit) {
            threshold_hit = true;
            summary.time_to_threshold = row.clock;
        }
    };

    auto expert_policy = [&] {
        const auto mdp = tabular_model(cfg.env);
        return greedy_table_policy(value_iteration_oracle(mdp, cfg.gamma));
    };
    auto write_report = [&](const std::string& name, const ParamVector& params) {
        QNetwork net = prototype;
        net.sync_from(params);
        const auto report = evaluate(greedy_network_policy(net), expert_policy(), *probe, cfg.eval, traj, cfg.eval_seed);
        std::ofstream out(root / "eval" / name);
        out << report.to_text();
    };

    write_report("initial.txt", server.fetch_all().first);
    record_eval();
    std::uint64_t next_eval = cfg.eval_every;

    auto done = [&] {
        if (threshold_hit) return true;
        if (server.version() >= cfg.max_global_versions) return true;
        if (cfg.max_actor_steps && actor_steps.load() >= cfg.max_actor_steps) return true;
        if (cfg.max_wall_seconds > 0.0 && seconds() >= cfg.max_wall_seconds) return true;
        return false;
    };
    auto maybe_eval = [&] {
        const auto v = server.version();
        if (v >= next_eval) {
            record_eval();
            while (next_eval <= v) next_eval += cfg.eval_every;
        }
    };

    std::mutex failure_mu;
    auto fail = [&](const std::string& label, const std::string& what) {
        std::lock_guard lock(failure_mu);
        if (!summary.failure) summary.failure = label + ": " + what;
    };

    {
        Plumbing plumbing(server, cfg.transport);
        if (global) plumbing.attach_replay(*global, derive_seed(cfg.seed, kReplayServiceTag, 0));
        Components c;
        try {
            build(cfg, prototype, plumbing, c);
        } catch (const std::exception& e) {
            fail("setup", e.what());
        }

        auto note_learner = [&](std::size_t i, const LearnerStepReport& r) {
            if (r.outcome == StepOutcome::rejected_outlier) rejected.fetch_add(1);
            if (r.outcome != StepOutcome::replay_not_ready) {
                std::lock_guard lock(loss_mu);
                last_loss[i] = r.loss;
            }
        };

        if (!summary.failure && cfg.deterministic) {
            // Lockstep: actor i then learner i, round-robin over components.
            const std::size_t rounds_width = std::max(cfg.n_actors, cfg.n_learners);
            try {
                while (!done()) {
                    for (std::size_t i = 0; i < rounds_width; ++i) {
                        if (i < c.actors.size()) {
                            c.actors[i]->step();
                            actor_steps.fetch_add(1);
                        }
                        if (i < c.learners.size()) note_learner(i, c.learners[i]->step());
                    }
                    maybe_eval();
                }
            } catch (const std::exception& e) {
                fail("lockstep", e.what());
            }
        } else if (!summary.failure) {
            std::atomic<bool> stop{false};
            std::vector<std::thread> threads;
            for (std::size_t i = 0; i < c.actors.size(); ++i) {
                threads.emplace_back([&, i] {
                    try {
                        while (!stop.load(std::memory_order_relaxed)) {
                            c.actors[i]->step();
                            actor_steps.fetch_add(1, std::memory_order_relaxed);
                        }
                    } catch (const std::exception& e) {
                        fail("actor " + std::to_string(i), e.what());
                        stop = true;
                    }
                });
            }
            for (std::size_t i = 0; i < c.learners.size(); ++i) {
                threads.emplace_back([&, i] {
                    try {
                        while (!stop.load(std::memory_order_relaxed)) {
                            const auto r = c.learners[i]->step();
                            note_learner(i, r);
                            if (r.outcome == StepOutcome::replay_not_ready) {
                                std::this_thread::sleep_for(std::chrono::microseconds(200));
                            }
                        }
                    } catch (const std::exception& e) {
                        fail("learner " + std::to_string(i), e.what());
                        stop = true;
                    }
                });
            }
            try {
                while (!stop.load() && !done()) {
                    maybe_eval();
                    std::this_thread::sleep_for(std::chrono::milliseconds(1));
                }
            } catch (const std::exception& e) {
                fail("evaluator", e.what());
            }
            stop = true;
            for (auto& t : threads) t.join();
        }
        c = Components{};
        plumbing.shutdown();
    }

    summary.wall_seconds = seconds();
    summary.actor_steps = actor_steps.load();
    auto [final_params, final_version] = server.fetch_all();
    summary.final_version = final_version;
    if (!summary.failure && (summary.evaluations.empty() || summary.evaluations.back().global_version != final_version)) {
        record_eval();
    }
    save_checkpoint((root / "checkpoints" / "final.grla").string(), final_params);
    write_report("final.txt", final_params);

    {
        std::ofstream out(root / "summary.txt");
        out.precision(17);
        out << "final_version=" << summary.final_version << '\n';
        out << "actor_steps=" << summary.actor_steps << '\n';
        out << "best_score=" << summary.best_score << '\n';
        out << "best_version=" << summary.best_version << '\n';
        out << "time_to_threshold=";
        if (summary.time_to_threshold) {
            out << *summary.time_to_threshold;
        } else {
            out << "none";
        }
        out << '\n';
        if (cfg.metrics_clock == MetricsClock::wall) out << "wall_seconds=" << summary.wall_seconds << '\n';
        out << "status=" << (summary.failure ? "failed" : "ok") << '\n';
    }
    if (summary.failure) {
        std::ofstream out(root / "failure.txt");
        out << *summary.failure << '\n';
    }
    return summary;
}

}  // namespace gorila
