#include "gorila/config.hpp"

#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "gorila/errors.hpp"

namespace gorila {

const char* to_string(TransportKind kind) {
    switch (kind) {
        case TransportKind::in_process: return "in_process";
        case TransportKind::in_process_frames: return "in_process_frames";
        case TransportKind::socket: return "socket";
    }
    return "unknown";
}

TransportKind transport_from_string(const std::string& s) {
    if (s == "in_process") return TransportKind::in_process;
    if (s == "in_process_frames") return TransportKind::in_process_frames;
    if (s == "socket") return TransportKind::socket;
    throw ConfigError("unknown transport '" + s + "'");
}

void RunConfig::validate() const {
    if (precision == "single") throw Unsupported("single precision is not implemented; use precision = double");
    if (precision != "double") throw ConfigError("precision must be double or single");
    if (env.kind != "chain" && env.kind != "gridworld") throw ConfigError("unknown env '" + env.kind + "'");
    (void)tabular_model(env);
    if (n_actors == 0 || n_learners == 0) throw ConfigError("need at least one actor and one learner");
    if (bundled && n_actors != n_learners) throw ConfigError("bundled mode requires n_actors == n_learners");
    if (n_param_shards == 0) throw ConfigError("n_param_shards must be positive");
    if (!bundled && global_replay_shards == 0) throw ConfigError("global_replay_shards must be positive");
    if (replay_capacity == 0) throw ConfigError("replay_capacity must be positive");
    if (batch == 0) throw ConfigError("batch must be positive");
    Discount{gamma}.validate();
    epsilon.validate();
    if (target_period == 0) throw ConfigError("target_period must be positive");
    if (!(k_sigma > 0.0)) throw ConfigError("k_sigma must be positive");
    if (!(loss_decay > 0.0 && loss_decay < 1.0)) throw ConfigError("loss_decay must lie in (0, 1)");
    if (!(learning_rate > 0.0) || !(adagrad_epsilon > 0.0)) throw ConfigError("AdaGrad rate and epsilon must be positive");
    if (sync_period == 0) throw ConfigError("sync_period must be at least 1");
    if (episode_cap == 0) throw ConfigError("episode_cap must be positive");
    if (repetitions == 0) throw ConfigError("repetitions must be positive");
    if (eval_every == 0) throw ConfigError("eval_every must be positive");
    eval.validate();
    if (eval.kind == ProtocolKind::human_starts && trajectory_path.empty()) {
        throw ConfigError("human_starts evaluation requires trajectory_path");
    }
    for (auto h : hidden) {
        if (h == 0) throw ConfigError("hidden layer sizes must be positive");
    }
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    if (v == "inf") return std::numeric_limits<std::uint64_t>::max();
    std::size_t pos = 0;
    unsigned long long x = 0;
    try {
        if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
        x = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + v + "'");
    return x;
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double x = 0;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
    return x;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    if (v.empty() || v == "none") return out;
    std::istringstream in(v);
    std::string part;
    while (std::getline(in, part, 'x')) out.push_back(static_cast<std::size_t>(to_u64(key, trim(part))));
    return out;
}

std::string u64_text(std::uint64_t v) {
    return v == std::numeric_limits<std::uint64_t>::max() ? "inf" : std::to_string(v);
}

std::string double_text(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"env", [](RunConfig& c, auto&, auto& v) { c.env.kind = v; }},
        {"chain.states", [](RunConfig& c, auto& k, auto& v) { c.env.chain.n_states = to_u64(k, v); }},
        {"chain.slip", [](RunConfig& c, auto& k, auto& v) { c.env.chain.slip = to_double(k, v); }},
        {"chain.step_cost", [](RunConfig& c, auto& k, auto& v) { c.env.chain.step_cost = to_double(k, v); }},
        {"chain.goal_reward", [](RunConfig& c, auto& k, auto& v) { c.env.chain.goal_reward = to_double(k, v); }},
        {"grid.width", [](RunConfig& c, auto& k, auto& v) { c.env.grid.width = to_u64(k, v); }},
        {"grid.height", [](RunConfig& c, auto& k, auto& v) { c.env.grid.height = to_u64(k, v); }},
        {"grid.slip", [](RunConfig& c, auto& k, auto& v) { c.env.grid.slip = to_double(k, v); }},
        {"grid.step_cost", [](RunConfig& c, auto& k, auto& v) { c.env.grid.step_cost = to_double(k, v); }},
        {"grid.goal_reward", [](RunConfig& c, auto& k, auto& v) { c.env.grid.goal_reward = to_double(k, v); }},
        {"hidden", [](RunConfig& c, auto& k, auto& v) { c.hidden = to_sizes(k, v); }},
        {"bundled", [](RunConfig& c, auto& k, auto& v) { c.bundled = to_bool(k, v); }},
        {"n_actors", [](RunConfig& c, auto& k, auto& v) { c.n_actors = to_u64(k, v); }},
        {"n_learners", [](RunConfig& c, auto& k, auto& v) { c.n_learners = to_u64(k, v); }},
        {"n_bundles",
         [](RunConfig& c, auto& k, auto& v) {
             c.n_actors = c.n_learners = to_u64(k, v);
             c.bundled = true;
         }},
        {"n_param_shards", [](RunConfig& c, auto& k, auto& v) { c.n_param_shards = to_u64(k, v); }},
        {"global_replay_shards", [](RunConfig& c, auto& k, auto& v) { c.global_replay_shards = to_u64(k, v); }},
        {"replay_capacity", [](RunConfig& c, auto& k, auto& v) { c.replay_capacity = to_u64(k, v); }},
        {"replay_warmup", [](RunConfig& c, auto& k, auto& v) { c.replay_warmup = to_u64(k, v); }},
        {"batch", [](RunConfig& c, auto& k, auto& v) { c.batch = to_u64(k, v); }},
        {"gamma", [](RunConfig& c, auto& k, auto& v) { c.gamma = to_double(k, v); }},
        {"epsilon.start", [](RunConfig& c, auto& k, auto& v) { c.epsilon.start = to_double(k, v); }},
        {"epsilon.end", [](RunConfig& c, auto& k, auto& v) { c.epsilon.end = to_double(k, v); }},
        {"epsilon.horizon", [](RunConfig& c, auto& k, auto& v) { c.epsilon.horizon = to_u64(k, v); }},
        {"target_period", [](RunConfig& c, auto& k, auto& v) { c.target_period = to_u64(k, v); }},
        {"max_delay", [](RunConfig& c, auto& k, auto& v) { c.max_delay = to_u64(k, v); }},
        {"outlier_filter", [](RunConfig& c, auto& k, auto& v) { c.outlier_filter = to_bool(k, v); }},
        {"k_sigma", [](RunConfig& c, auto& k, auto& v) { c.k_sigma = to_double(k, v); }},
        {"loss_warmup", [](RunConfig& c, auto& k, auto& v) { c.loss_warmup = to_u64(k, v); }},
        {"loss_decay", [](RunConfig& c, auto& k, auto& v) { c.loss_decay = to_double(k, v); }},
        {"learning_rate", [](RunConfig& c, auto& k, auto& v) { c.learning_rate = to_double(k, v); }},
        {"adagrad_epsilon", [](RunConfig& c, auto& k, auto& v) { c.adagrad_epsilon = to_double(k, v); }},
        {"sync_period", [](RunConfig& c, auto& k, auto& v) { c.sync_period = to_u64(k, v); }},
        {"episode_cap", [](RunConfig& c, auto& k, auto& v) { c.episode_cap = to_u64(k, v); }},
        {"reward_clip", [](RunConfig& c, auto& k, auto& v) { c.reward_clip = to_double(k, v); }},
        {"precision", [](RunConfig& c, auto&, auto& v) { c.precision = v; }},
        {"seed", [](RunConfig& c, auto& k, auto& v) { c.seed = to_u64(k, v); }},
        {"repetitions", [](RunConfig& c, auto& k, auto& v) { c.repetitions = to_u64(k, v); }},
        {"transport", [](RunConfig& c, auto&, auto& v) { c.transport = transport_from_string(v); }},
        {"deterministic", [](RunConfig& c, auto& k, auto& v) { c.deterministic = to_bool(k, v); }},
        {"max_global_versions", [](RunConfig& c, auto& k, auto& v) { c.max_global_versions = to_u64(k, v); }},
        {"max_actor_steps", [](RunConfig& c, auto& k, auto& v) { c.max_actor_steps = to_u64(k, v); }},
        {"max_wall_seconds", [](RunConfig& c, auto& k, auto& v) { c.max_wall_seconds = to_double(k, v); }},
        {"stop_at_score",
         [](RunConfig& c, auto& k, auto& v) {
             if (v == "none") {
                 c.stop_at_score.reset();
             } else {
                 c.stop_at_score = to_double(k, v);
             }
         }},
        {"eval.protocol", [](RunConfig& c, auto&, auto& v) { c.eval.kind = protocol_from_string(v); }},
        {"eval.episodes", [](RunConfig& c, auto& k, auto& v) { c.eval.episodes = to_u64(k, v); }},
        {"eval.start_points", [](RunConfig& c, auto& k, auto& v) { c.eval.start_points = to_u64(k, v); }},
        {"eval.null_op_cap", [](RunConfig& c, auto& k, auto& v) { c.eval.null_op_cap = to_u64(k, v); }},
        {"eval.human_starts_cap", [](RunConfig& c, auto& k, auto& v) { c.eval.human_starts_cap = to_u64(k, v); }},
        {"eval.max_initial_null_ops",
         [](RunConfig& c, auto& k, auto& v) { c.eval.max_initial_null_ops = to_u64(k, v); }},
        {"eval_every", [](RunConfig& c, auto& k, auto& v) { c.eval_every = to_u64(k, v); }},
        {"eval_seed", [](RunConfig& c, auto& k, auto& v) { c.eval_seed = to_u64(k, v); }},
        {"trajectory_path", [](RunConfig& c, auto&, auto& v) { c.trajectory_path = v; }},
        {"metrics_clock",
         [](RunConfig& c, auto& k, auto& v) {
             if (v == "wall") {
                 c.metrics_clock = MetricsClock::wall;
             } else if (v == "logical") {
                 c.metrics_clock = MetricsClock::logical;
             } else {
                 throw ConfigError("key '" + k + "' expects wall or logical");
             }
         }},
    };
    return table;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto& table = setters();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(cfg, key, value);
}

}  // namespace

RunConfig parse_run_config(std::istream& in) {
    RunConfig cfg;
    std::string line;
    bool saw_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (!saw_header) {
            std::istringstream hdr(line);
            std::string magic;
            int version = 0;
            hdr >> magic >> version;
            if (magic != kConfigMagic) throw ConfigError("config must start with 'gorila-config 1'");
            if (version != kConfigVersion) {
                throw ConfigError("unsupported config version " + std::to_string(version));
            }
            saw_header = true;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        }
        set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    if (!saw_header) throw ConfigError("config must start with 'gorila-config 1'");
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    return parse_run_config(in);
}

void apply_config_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override must look like key=value: '" + assignment + "'");
    set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string format_run_config(const RunConfig& c) {
    std::ostringstream out;
    auto kv = [&](const char* k, const std::string& v) { out << k << " = " << v << '\n'; };
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    out << kConfigMagic << ' ' << kConfigVersion << '\n';
    kv("env", c.env.kind);
    kv("chain.states", std::to_string(c.env.chain.n_states));
    kv("chain.slip", double_text(c.env.chain.slip));
    kv("chain.step_cost", double_text(c.env.chain.step_cost));
    kv("chain.goal_reward", double_text(c.env.chain.goal_reward));
    kv("grid.width", std::to_string(c.env.grid.width));
    kv("grid.height", std::to_string(c.env.grid.height));
    kv("grid.slip", double_text(c.env.grid.slip));
    kv("grid.step_cost", double_text(c.env.grid.step_cost));
    kv("grid.goal_reward", double_text(c.env.grid.goal_reward));
    std::string hidden;
    for (std::size_t i = 0; i < c.hidden.size(); ++i) hidden += (i ? "x" : "") + std::to_string(c.hidden[i]);
    kv("hidden", hidden.empty() ? "none" : hidden);
    kv("bundled", b(c.bundled));
    kv("n_actors", std::to_string(c.n_actors));
    kv("n_learners", std::to_string(c.n_learners));
    kv("n_param_shards", std::to_string(c.n_param_shards));
    kv("global_replay_shards", std::to_string(c.global_replay_shards));
    kv("replay_capacity", std::to_string(c.replay_capacity));
    kv("replay_warmup", std::to_string(c.replay_warmup));
    kv("batch", std::to_string(c.batch));
    kv("gamma", double_text(c.gamma));
    kv("epsilon.start", double_text(c.epsilon.start));
    kv("epsilon.end", double_text(c.epsilon.end));
    kv("epsilon.horizon", u64_text(c.epsilon.horizon));
    kv("target_period", u64_text(c.target_period));
    kv("max_delay", u64_text(c.max_delay));
    kv("outlier_filter", b(c.outlier_filter));
    kv("k_sigma", double_text(c.k_sigma));
    kv("loss_warmup", u64_text(c.loss_warmup));
    kv("loss_decay", double_text(c.loss_decay));
    kv("learning_rate", double_text(c.learning_rate));
    kv("adagrad_epsilon", double_text(c.adagrad_epsilon));
    kv("sync_period", u64_text(c.sync_period));
    kv("episode_cap", std::to_string(c.episode_cap));
    kv("reward_clip", double_text(c.reward_clip));
    kv("precision", c.precision);
    kv("seed", u64_text(c.seed));
    kv("repetitions", std::to_string(c.repetitions));
    kv("transport", to_string(c.transport));
    kv("deterministic", b(c.deterministic));
    kv("max_global_versions", u64_text(c.max_global_versions));
    kv("max_actor_steps", u64_text(c.max_actor_steps));
    kv("max_wall_seconds", double_text(c.max_wall_seconds));
    kv("stop_at_score", c.stop_at_score ? double_text(*c.stop_at_score) : "none");
    kv("eval.protocol", to_string(c.eval.kind));
    kv("eval.episodes", std::to_string(c.eval.episodes));
    kv("eval.start_points", std::to_string(c.eval.start_points));
    kv("eval.null_op_cap", std::to_string(c.eval.null_op_cap));
    kv("eval.human_starts_cap", std::to_string(c.eval.human_starts_cap));
    kv("eval.max_initial_null_ops", std::to_string(c.eval.max_initial_null_ops));
    kv("eval_every", u64_text(c.eval_every));
    kv("eval_seed", u64_text(c.eval_seed));
    if (!c.trajectory_path.empty()) kv("trajectory_path", c.trajectory_path);
    kv("metrics_clock", c.metrics_clock == MetricsClock::wall ? "wall" : "logical");
    return out.str();
}

}  // namespace gorila
