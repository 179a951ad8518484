#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gorila/envs.hpp"
#include "gorila/nn.hpp"
#include "gorila/rl.hpp"

namespace gorila {

/// 100·(agent − random)/(human − random). Throws UndefinedBaseline when
/// human == random.
double normalize(double agent, double random, double human);

/// Same, dividing by |human − random| so that beating the random agent is
/// always positive even where the expert scored below it.
double normalize_abs(double agent, double random, double human);

enum class DqnFallback {
    none,         // dqn ≤ random throws UndefinedBaseline
    zero_random,  // dqn ≤ random: substitute random := 0; if then dqn ≤ 0, undefined
};

struct DqnNormalized {
    double value = 0.0;
    bool random_zeroed = false;
    bool undefined = false;
};

/// 100·(gorila − random)/(dqn − random) with the configured fallback.
DqnNormalized dqn_normalize(double gorila, double random, double dqn, DqnFallback fallback = DqnFallback::zero_random);

struct RawScoreRow {
    std::string game;
    double random = 0.0;
    double human = 0.0;
    double dqn = 0.0;
    double gorila = 0.0;
};

struct NormalizedRow {
    std::string game;
    double dqn_human_normalized = 0.0;
    double gorila_human_normalized = 0.0;
    double gorila_dqn_normalized = 0.0;
    bool human_below_random = false;  // denominator taken as |human − random|
    bool random_zeroed = false;       // DQN column uses random := 0
    bool undefined = false;           // DQN column not defined, value emitted as 0

    std::string flags() const;
};

/// Parses `game,random,human,dqn,gorila` CSV. Throws SchemaError on missing
/// columns or non-numeric cells.
std::vector<RawScoreRow> read_raw_scores(std::istream& in);
std::vector<RawScoreRow> read_raw_scores_file(const std::string& path);

std::vector<NormalizedRow> report_tables(const std::vector<RawScoreRow>& rows);

/// CSV with columns game, the three normalized values (two decimals) and
/// a `flags` column.
void write_normalized_csv(std::ostream& out, const std::vector<NormalizedRow>& rows);

enum class ProtocolKind { null_op, human_starts };

const char* to_string(ProtocolKind kind);
ProtocolKind protocol_from_string(const std::string& s);

struct EvalProtocol {
    ProtocolKind kind = ProtocolKind::null_op;
    std::size_t episodes = 30;          // null_op
    std::size_t start_points = 100;     // human_starts
    std::size_t null_op_cap = 1000;     // total steps including the null-op prefix
    std::size_t human_starts_cap = 3000;  // total steps including the recorded prefix
    std::size_t max_initial_null_ops = 30;

    void validate() const;
};

struct ScoreRecord {
    double agent_score = 0.0;
    double random_score = 0.0;
    double human_score = 0.0;
    std::optional<double> dqn_score;
};

/// Seeds episode i with env_seed + i. The number of initial null actions is
/// drawn uniformly from [0, max_initial_null_ops] using `rng`.
double eval_null_op(const ObservationPolicy& agent, const Environment& env, const EvalProtocol& protocol,
                    std::uint64_t env_seed, Rng& rng);

/// Start points are prefix lengths drawn uniformly from [0, len] of the
/// recorded trajectory. Each recorded prefix is replayed once and the
/// environment snapshotted there; only reward after hand-off is scored.
double eval_human_starts(const ObservationPolicy& agent, const Environment& env, const Trajectory& trajectory,
                         const EvalProtocol& protocol, Rng& rng);

/// Greedy policy of a Q-network on raw observations.
ObservationPolicy greedy_network_policy(const QNetwork& net);

/// Uniform random policy drawing from `rng`; the caller keeps rng alive.
ObservationPolicy uniform_random_policy(std::size_t action_count, Rng& rng);

struct EvalReport {
    ProtocolKind protocol = ProtocolKind::null_op;
    ScoreRecord scores;
    std::optional<double> human_normalized;

    std::string to_text() const;
};

/// Scores the agent, a uniform random agent and an expert policy under the
/// same protocol and seeds, and normalizes the agent against them.
EvalReport evaluate(const ObservationPolicy& agent, const ObservationPolicy& expert, const Environment& env,
                    const EvalProtocol& protocol, const Trajectory* trajectory, std::uint64_t seed);

}  // namespace gorila
