#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "gorila/bundle.hpp"
#include "gorila/config.hpp"
#include "gorila/errors.hpp"
#include "gorila/eval.hpp"
#include "gorila/experiment.hpp"
#include "gorila/param_server.hpp"
#include "gorila/transport.hpp"

namespace fs = std::filesystem;
using namespace gorila;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

RunConfig load_with_overrides(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
    for (const auto& o : overrides) apply_config_override(cfg, o);
    return cfg;
}

int cmd_train(const std::string& config_path, const std::string& out, const std::vector<std::string>& overrides) {
    RunConfig cfg = load_with_overrides(config_path, overrides);
    cfg.validate();
    if (cfg.repetitions == 1) {
        const auto s = run_experiment(cfg, out);
        std::cout << "run " << s.run_dir << ": version " << s.final_version << ", best score " << s.best_score
                  << (s.failure ? ", FAILED: " + *s.failure : "") << '\n';
        return s.failure ? 2 : 0;
    }
    fs::create_directories(out);
    std::ofstream table(fs::path(out) / "repetitions.csv");
    table << "repetition,seed,final_version,final_score,best_score,status\n";
    double final_sum = 0.0;
    int status = 0;
    for (std::size_t r = 0; r < cfg.repetitions; ++r) {
        RunConfig rep = cfg;
        rep.seed = cfg.seed + r;
        rep.repetitions = 1;
        const auto dir = fs::path(out) / ("rep-" + std::to_string(r));
        const auto s = run_experiment(rep, dir.string());
        const double final_score = s.evaluations.empty() ? 0.0 : s.evaluations.back().mean_eval_score;
        final_sum += final_score;
        table << r << ',' << rep.seed << ',' << s.final_version << ',' << final_score << ',' << s.best_score << ','
              << (s.failure ? "failed" : "ok") << '\n';
        std::cout << "repetition " << r << ": final score " << final_score << (s.failure ? " (failed)" : "") << '\n';
        if (s.failure) status = 2;
    }
    std::cout << "mean final score over " << cfg.repetitions
              << " repetitions: " << final_sum / static_cast<double>(cfg.repetitions) << '\n';
    return status;
}

int cmd_eval(const std::string& checkpoint, const std::string& protocol, const std::string& config_path,
             const std::string& trajectory_path, const std::vector<std::string>& overrides) {
    RunConfig cfg = load_with_overrides(config_path, overrides);
    cfg.eval.kind = protocol_from_string(protocol);
    if (!trajectory_path.empty()) cfg.trajectory_path = trajectory_path;
    cfg.validate();
    const ParamVector params = load_checkpoint(checkpoint);
    auto env = make_environment(cfg.env);
    QNetwork net = make_network(cfg, env->observation_dim(), env->action_count());
    net.sync_from(params);
    std::optional<Trajectory> traj;
    if (!cfg.trajectory_path.empty()) traj = load_trajectory(cfg.trajectory_path);
    const auto expert = greedy_table_policy(value_iteration_oracle(tabular_model(cfg.env), cfg.gamma));
    const auto report =
        evaluate(greedy_network_policy(net), expert, *env, cfg.eval, traj ? &*traj : nullptr, cfg.eval_seed);
    std::cout << report.to_text();
    return 0;
}

int cmd_report(const std::string& raw, const std::string& out) {
    const auto rows = report_tables(read_raw_scores_file(raw));
    if (out.empty()) {
        write_normalized_csv(std::cout, rows);
    } else {
        std::ofstream f(out);
        if (!f) throw Error("cannot write " + out);
        write_normalized_csv(f, rows);
    }
    return 0;
}

int cmd_oracle(const std::string& config_path, const std::vector<std::string>& overrides, double gamma,
               const std::string& record_path, std::uint64_t record_seed, std::size_t record_steps) {
    RunConfig cfg = load_with_overrides(config_path, overrides);
    const auto mdp = tabular_model(cfg.env);
    const auto q = value_iteration_oracle(mdp, gamma);
    std::cout.precision(12);
    std::cout << "state";
    for (std::size_t a = 0; a < q.n_actions; ++a) std::cout << ",q" << a;
    std::cout << ",greedy,terminal\n";
    for (std::size_t s = 0; s < q.n_states; ++s) {
        std::cout << s;
        for (std::size_t a = 0; a < q.n_actions; ++a) std::cout << ',' << q.at(s, a);
        std::cout << ',' << q.greedy(s) << ',' << (mdp.terminal[s] ? 1 : 0) << '\n';
    }
    if (!record_path.empty()) {
        TabularEnv env(mdp);
        const auto traj = record_trajectory(env, greedy_table_policy(q), record_seed, record_steps);
        save_trajectory(record_path, traj);
        std::cerr << "recorded " << traj.steps.size() << " expert steps to " << record_path << '\n';
    }
    return 0;
}

int cmd_serve(const std::string& config_path, const std::vector<std::string>& overrides, std::uint16_t port,
              const std::string& checkpoint_out) {
    RunConfig cfg = load_with_overrides(config_path, overrides);
    cfg.validate();
    QNetwork net = initial_network(cfg);
    ParamServer server(net.flatten(), cfg.n_param_shards, cfg.learning_rate, cfg.adagrad_epsilon,
                       StalenessPolicy{cfg.max_delay});
    SocketListener listener("127.0.0.1", port);
    ServiceHost host(param_server_handler(server));
    host.serve_listener(listener);
    std::cout << "serving parameters on 127.0.0.1:" << listener.port() << std::endl;
    while (!g_interrupted && server.version() < cfg.max_global_versions) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    host.stop();
    const auto stats = server.stats();
    std::cout << "version " << stats.version << ", applied " << stats.applied << ", stale " << stats.discarded_stale
              << '\n';
    if (!checkpoint_out.empty()) save_checkpoint(checkpoint_out, server.fetch_all().first);
    return 0;
}

int cmd_worker(const std::string& config_path, const std::vector<std::string>& overrides, std::uint16_t port,
               std::uint32_t index, std::uint64_t steps) {
    RunConfig cfg = load_with_overrides(config_path, overrides);
    cfg.validate();
    auto env = make_environment(cfg.env);
    QNetwork prototype = make_network(cfg, env->observation_dim(), env->action_count());
    const BundleSetup setup = bundle_setup_for(cfg, index);
    Bundle bundle(setup, std::move(env),
                  std::make_unique<RemoteParameterClient>(socket_connect("127.0.0.1", port)),
                  std::make_unique<RemoteParameterClient>(socket_connect("127.0.0.1", port)), prototype);
    std::uint64_t done = 0;
    try {
        for (; done < steps && !g_interrupted; ++done) bundle.tick();
    } catch (const TransportError& e) {
        std::cerr << "worker " << index << " lost the server after " << done << " steps: " << e.what() << '\n';
    }
    const auto& a = bundle.actor().stats();
    const auto& l = bundle.learner().stats();
    std::cout << "worker " << index << ": steps " << a.steps << ", episodes " << a.episodes << ", pushed " << l.pushed
              << ", rejected " << l.rejected << ", stale " << l.stale << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    CLI::App app{"gorila: distributed DQN with a sharded parameter server"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::vector<std::string> overrides;

    auto* train = app.add_subcommand("train", "Run one training experiment");
    train->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    train->add_option("--out", out_dir, "Run directory")->required();
    train->add_option("--set", overrides, "Override a config key (key=value)");

    std::string checkpoint;
    std::string protocol = "null_op";
    std::string trajectory;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_option("--protocol", protocol, "null_op or human_starts")
        ->check(CLI::IsMember({"null_op", "human_starts"}));
    eval->add_option("--config", config_path, "Config file the checkpoint was trained with");
    eval->add_option("--trajectory", trajectory, "Recorded expert trajectory for human starts");
    eval->add_option("--set", overrides, "Override a config key (key=value)");

    std::string raw;
    std::string report_out;
    auto* report = app.add_subcommand("report", "Normalize a raw score table");
    report->add_option("--raw", raw, "CSV with game,random,human,dqn,gorila")->required();
    report->add_option("--out", report_out, "Output CSV (default stdout)");

    std::string env_kind = "chain";
    double gamma = 0.9;
    std::string record;
    std::uint64_t record_seed = 0;
    std::size_t record_steps = 1000;
    auto* oracle = app.add_subcommand("oracle", "Print Q* from value iteration");
    oracle->add_option("--env", env_kind, "chain or gridworld")->check(CLI::IsMember({"chain", "gridworld"}));
    oracle->add_option("--gamma", gamma, "Discount");
    oracle->add_option("--config", config_path, "Config file for environment parameters");
    oracle->add_option("--set", overrides, "Override a config key (key=value)");
    oracle->add_option("--record-trajectory", record, "Also record an expert trajectory to this file");
    oracle->add_option("--record-seed", record_seed, "Environment seed for the recording");
    oracle->add_option("--record-steps", record_steps, "Maximum recorded steps");

    std::uint16_t port = 0;
    auto* serve = app.add_subcommand("serve", "Host a parameter server on a TCP port");
    serve->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    serve->add_option("--port", port, "Port (0 picks a free one)");
    serve->add_option("--set", overrides, "Override a config key (key=value)");
    std::string final_checkpoint;
    serve->add_option("--checkpoint-out", final_checkpoint, "Write θ⁺ here on exit");

    std::uint32_t index = 0;
    std::uint64_t steps = 10'000;
    auto* worker = app.add_subcommand("worker", "Run one bundle against a remote parameter server");
    worker->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    worker->add_option("--port", port, "Server port")->required();
    worker->add_option("--index", index, "Bundle index");
    worker->add_option("--steps", steps, "Bundle iterations");
    worker->add_option("--set", overrides, "Override a config key (key=value)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(config_path, out_dir, overrides);
        if (*eval) return cmd_eval(checkpoint, protocol, config_path, trajectory, overrides);
        if (*report) return cmd_report(raw, report_out);
        if (*oracle) {
            if (config_path.empty()) overrides.insert(overrides.begin(), "env=" + env_kind);
            return cmd_oracle(config_path, overrides, gamma, record, record_seed, record_steps);
        }
        if (*serve) return cmd_serve(config_path, overrides, port, final_checkpoint);
        if (*worker) return cmd_worker(config_path, overrides, port, index, steps);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
