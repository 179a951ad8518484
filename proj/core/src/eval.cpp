#include "gorila/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "gorila/errors.hpp"

namespace gorila {

double normalize(double agent, double random, double human) {
    if (human == random) throw UndefinedBaseline("human and random scores coincide");
    return 100.0 * (agent - random) / (human - random);
}

double normalize_abs(double agent, double random, double human) {
    if (human == random) throw UndefinedBaseline("human and random scores coincide");
    return 100.0 * (agent - random) / std::abs(human - random);
}

DqnNormalized dqn_normalize(double gorila, double random, double dqn, DqnFallback fallback) {
    DqnNormalized out;
    if (dqn > random) {
        out.value = 100.0 * (gorila - random) / (dqn - random);
        return out;
    }
    if (fallback == DqnFallback::none) throw UndefinedBaseline("reference agent does not beat the random agent");
    out.random_zeroed = true;
    if (dqn <= 0.0) {
        out.undefined = true;
        return out;
    }
    out.value = 100.0 * gorila / dqn;
    return out;
}

std::string NormalizedRow::flags() const {
    std::string out;
    auto add = [&](const char* f) {
        if (!out.empty()) out += ';';
        out += f;
    };
    if (human_below_random) add("human_below_random");
    if (random_zeroed) add("random_zeroed");
    if (undefined) add("undefined");
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_number(const std::string& cell, const std::string& column, std::size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
        throw SchemaError("line " + std::to_string(line_no) + ": column '" + column + "' is not a number: '" + cell +
                          "'");
    }
    return v;
}

std::string two_decimals(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s(buf);
    if (s == "-0.00") s = "0.00";
    return s;
}

}  // namespace

std::vector<RawScoreRow> read_raw_scores(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty score file");
    const auto header = split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* need : {"game", "random", "human", "dqn", "gorila"}) {
        if (!col.count(need)) throw SchemaError(std::string("missing column '") + need + "'");
    }
    std::vector<RawScoreRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw SchemaError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                              " cells");
        }
        RawScoreRow r;
        r.game = cells[col["game"]];
        r.random = parse_number(cells[col["random"]], "random", line_no);
        r.human = parse_number(cells[col["human"]], "human", line_no);
        r.dqn = parse_number(cells[col["dqn"]], "dqn", line_no);
        r.gorila = parse_number(cells[col["gorila"]], "gorila", line_no);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<RawScoreRow> read_raw_scores_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FixtureError("cannot open score file: " + path);
    return read_raw_scores(in);
}

std::vector<NormalizedRow> report_tables(const std::vector<RawScoreRow>& rows) {
    std::vector<NormalizedRow> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        NormalizedRow n;
        n.game = r.game;
        n.human_below_random = r.human < r.random;
        if (r.human == r.random) {
            n.undefined = true;
        } else {
            n.dqn_human_normalized = normalize_abs(r.dqn, r.random, r.human);
            n.gorila_human_normalized = normalize_abs(r.gorila, r.random, r.human);
        }
        const auto d = dqn_normalize(r.gorila, r.random, r.dqn, DqnFallback::zero_random);
        n.gorila_dqn_normalized = d.value;
        n.random_zeroed = d.random_zeroed;
        n.undefined = n.undefined || d.undefined;
        out.push_back(std::move(n));
    }
    return out;
}

void write_normalized_csv(std::ostream& out, const std::vector<NormalizedRow>& rows) {
    out << "game,dqn_human_normalized,gorila_human_normalized,gorila_dqn_normalized,flags\n";
    for (const auto& r : rows) {
        out << r.game << ',' << two_decimals(r.dqn_human_normalized) << ','
            << two_decimals(r.gorila_human_normalized) << ',' << two_decimals(r.gorila_dqn_normalized) << ','
            << r.flags() << '\n';
    }
}

const char* to_string(ProtocolKind kind) {
    return kind == ProtocolKind::null_op ? "null_op" : "human_starts";
}

ProtocolKind protocol_from_string(const std::string& s) {
    if (s == "null_op") return ProtocolKind::null_op;
    if (s == "human_starts") return ProtocolKind::human_starts;
    throw ConfigError("unknown evaluation protocol '" + s + "'");
}

void EvalProtocol::validate() const {
    if (null_op_cap == 0 || human_starts_cap == 0) throw ConfigError("evaluation caps must be positive");
    if (kind == ProtocolKind::null_op && episodes == 0) throw ConfigError("null-op evaluation needs episodes");
    if (kind == ProtocolKind::human_starts && start_points == 0) {
        throw ConfigError("human-starts evaluation needs start points");
    }
}

double eval_null_op(const ObservationPolicy& agent, const Environment& env, const EvalProtocol& protocol,
                    std::uint64_t env_seed, Rng& rng) {
    protocol.validate();
    auto local = env.clone();
    std::uniform_int_distribution<std::size_t> null_ops(0, protocol.max_initial_null_ops);
    double total = 0.0;
    for (std::size_t i = 0; i < protocol.episodes; ++i) {
        StartPoint start;
        start.null_ops = std::min(null_ops(rng), protocol.null_op_cap);
        total += play_episode(*local, agent, env_seed + i, start, protocol.null_op_cap).score;
    }
    return total / static_cast<double>(protocol.episodes);
}

double eval_human_starts(const ObservationPolicy& agent, const Environment& env, const Trajectory& trajectory,
                         const EvalProtocol& protocol, Rng& rng) {
    protocol.validate();
    if (trajectory.env_name != env.name()) {
        throw FixtureError("trajectory recorded on '" + trajectory.env_name + "', not '" + env.name() + "'");
    }
    std::uniform_int_distribution<std::size_t> pick(0, trajectory.steps.size());
    std::vector<std::size_t> points(protocol.start_points);
    for (auto& p : points) p = pick(rng);

    // Replay the recording once, snapshotting at every requested prefix length.
    std::vector<std::size_t> wanted = points;
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
    struct Saved {
        EnvSnapshot snap;
        std::vector<double> observation;
        bool terminal = false;
    };
    std::map<std::size_t, Saved> saved;
    auto recorder = env.clone();
    StartPoint full;
    full.trajectory = &trajectory;
    full.prefix_len = 0;
    auto obs = inject_start(*recorder, trajectory.seed, full).observation;
    bool ended = false;
    std::size_t pos = 0;
    for (std::size_t target : wanted) {
        while (pos < target && !ended) {
            const auto& rec = trajectory.steps[pos];
            auto res = recorder->step(rec.action);
            if (res.reward != rec.reward || res.terminal != rec.terminal) {
                throw FixtureError("trajectory diverges from environment at step " + std::to_string(pos));
            }
            obs = std::move(res.observation);
            ended = res.terminal;
            ++pos;
        }
        if (pos < target) throw FixtureError("trajectory ends before requested start point");
        saved[target] = Saved{recorder->snapshot(), obs, ended};
    }

    auto player = env.clone();
    double total = 0.0;
    for (std::size_t p : points) {
        const auto& s = saved.at(p);
        if (s.terminal || p >= protocol.human_starts_cap) continue;
        player->restore(s.snap);
        total += play_from(*player, agent, s.observation, p, protocol.human_starts_cap).score;
    }
    return total / static_cast<double>(points.size());
}

ObservationPolicy greedy_network_policy(const QNetwork& net) {
    return [net](std::span<const double> obs) { return argmax(net.forward(obs)); };
}

ObservationPolicy uniform_random_policy(std::size_t action_count, Rng& rng) {
    return [&rng, action_count](std::span<const double>) {
        std::uniform_int_distribution<std::size_t> pick(0, action_count - 1);
        return pick(rng);
    };
}

std::string EvalReport::to_text() const {
    std::ostringstream out;
    out.precision(17);
    out << "protocol=" << to_string(protocol) << '\n';
    out << "agent_score=" << scores.agent_score << '\n';
    out << "random_score=" << scores.random_score << '\n';
    out << "human_score=" << scores.human_score << '\n';
    if (scores.dqn_score) out << "dqn_score=" << *scores.dqn_score << '\n';
    if (human_normalized) {
        out << "human_normalized=" << *human_normalized << '\n';
    } else {
        out << "human_normalized=undefined\n";
    }
    return out.str();
}

EvalReport evaluate(const ObservationPolicy& agent, const ObservationPolicy& expert, const Environment& env,
                    const EvalProtocol& protocol, const Trajectory* trajectory, std::uint64_t seed) {
    EvalReport report;
    report.protocol = protocol.kind;
    Rng random_actions(seed ^ 0x5bd1e995ULL);
    auto random_policy = uniform_random_policy(env.action_count(), random_actions);
    auto score = [&](const ObservationPolicy& policy) {
        Rng rng(seed);
        if (protocol.kind == ProtocolKind::human_starts) {
            if (!trajectory) throw ConfigError("human-starts evaluation needs a recorded trajectory");
            return eval_human_starts(policy, env, *trajectory, protocol, rng);
        }
        return eval_null_op(policy, env, protocol, seed, rng);
    };
    report.scores.agent_score = score(agent);
    report.scores.random_score = score(random_policy);
    report.scores.human_score = score(expert);
    if (report.scores.human_score != report.scores.random_score) {
        report.human_normalized =
            normalize_abs(report.scores.agent_score, report.scores.random_score, report.scores.human_score);
    }
    return report;
}

}  // namespace gorila
