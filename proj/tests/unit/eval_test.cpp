#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "gorila/errors.hpp"
#include "gorila/eval.hpp"

namespace gorila {
namespace {

TEST(Normalize, PublishedExamples) {
    // Breakout, null-op starts.
    EXPECT_NEAR(normalize(401.2, 1.7, 31.8), 1327.2425, 1e-4);
    EXPECT_NEAR(dqn_normalize(402.2, 1.7, 401.2).value, 100.2503, 1e-4);
    // Alien, human starts: 10.976 and 155.067, published truncated as 10.97 and 155.06.
    EXPECT_NEAR(normalize(813.54, 128.3, 6371.3), 10.9761, 1e-4);
    EXPECT_NEAR(dqn_normalize(813.54, 128.3, 570.2).value, 155.0668, 1e-4);
}

TEST(Normalize, AnchorsAndUndefinedBaseline) {
    EXPECT_DOUBLE_EQ(normalize(7.0, 7.0, 19.0), 0.0);
    EXPECT_DOUBLE_EQ(normalize(19.0, 7.0, 19.0), 100.0);
    EXPECT_THROW(normalize(1.0, 3.0, 3.0), UndefinedBaseline);
    EXPECT_THROW(normalize_abs(1.0, 3.0, 3.0), UndefinedBaseline);
}

TEST(Normalize, AffineInvariance) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1000.0, 1000.0);
    for (int i = 0; i < 1000; ++i) {
        const double agent = u(rng), random = u(rng), human = u(rng);
        if (std::abs(human - random) < 1e-3) continue;
        const double a = std::abs(u(rng)) / 100.0 + 0.01, b = u(rng);
        EXPECT_NEAR(normalize(a * agent + b, a * random + b, a * human + b), normalize(agent, random, human),
                    1e-6 * std::max(1.0, std::abs(normalize(agent, random, human))));
    }
}

TEST(Normalize, AbsDenominatorKeepsSignOfImprovement) {
    EXPECT_LT(normalize(12.0, 10.0, 5.0), 0.0);
    EXPECT_GT(normalize_abs(12.0, 10.0, 5.0), 0.0);
    EXPECT_DOUBLE_EQ(normalize_abs(12.0, 10.0, 15.0), normalize(12.0, 10.0, 15.0));
}

TEST(DqnNormalize, Fallbacks) {
    EXPECT_THROW(dqn_normalize(5.0, 10.0, 8.0, DqnFallback::none), UndefinedBaseline);
    const auto zeroed = dqn_normalize(5.0, 10.0, 8.0);
    EXPECT_TRUE(zeroed.random_zeroed);
    EXPECT_FALSE(zeroed.undefined);
    EXPECT_DOUBLE_EQ(zeroed.value, 62.5);
    const auto undefined = dqn_normalize(5.0, 0.0, 0.0);
    EXPECT_TRUE(undefined.undefined);
    EXPECT_EQ(undefined.value, 0.0);
    const auto negative = dqn_normalize(-5.0, 2.0, -1.0);
    EXPECT_TRUE(negative.undefined);
}

std::map<std::string, std::vector<double>> read_published(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    std::map<std::string, std::vector<double>> out;
    while (std::getline(in, line)) {
        std::stringstream row(line);
        std::string game, cell;
        std::getline(row, game, ',');
        while (std::getline(row, cell, ',')) out[game].push_back(std::stod(cell));
    }
    return out;
}

// Raw inputs are printed to two decimals, so each is only known to ±0.005.
// Every published normalized value must lie inside the range the formula
// takes over that box (monotone in each argument, so corners suffice),
// widened by 0.01 because the published values are cut to two decimals,
// sometimes truncated rather than rounded.
TEST(ReportTables, PublishedValuesAreConsistentWithTwoDecimalInputs) {
    for (const std::string protocol : {"null_op", "human_starts"}) {
        const auto raw = read_raw_scores_file(std::string(GORILA_DATA_DIR) + "/atari_" + protocol + "_raw.csv");
        const auto published = read_published(std::string(GORILA_DATA_DIR) + "/atari_" + protocol + "_normalized.csv");
        const auto rows = report_tables(raw);
        for (std::size_t i = 0; i < raw.size(); ++i) {
            const auto& r = raw[i];
            const auto& want = published.at(r.game);
            auto range = [&](auto f) {
                double lo = INFINITY, hi = -INFINITY;
                for (int m = 0; m < 16; ++m) {
                    const double e[4] = {m & 1 ? 0.005 : -0.005, m & 2 ? 0.005 : -0.005, m & 4 ? 0.005 : -0.005,
                                         m & 8 ? 0.005 : -0.005};
                    const double v = f(r.random + e[0], r.human + e[1], r.dqn + e[2], r.gorila + e[3]);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                return std::pair{lo - 0.01, hi + 0.01};
            };
            const auto dh = range([](double ra, double hu, double dq, double) { return normalize_abs(dq, ra, hu); });
            const auto gh = range([](double ra, double hu, double, double go) { return normalize_abs(go, ra, hu); });
            EXPECT_GE(want[0], dh.first) << protocol << "/" << r.game;
            EXPECT_LE(want[0], dh.second) << protocol << "/" << r.game;
            EXPECT_GE(want[1], gh.first) << protocol << "/" << r.game;
            EXPECT_LE(want[1], gh.second) << protocol << "/" << r.game;
            if (rows[i].undefined) continue;
            const bool zeroed = rows[i].random_zeroed;
            const auto gd = range([zeroed](double ra, double, double dq, double go) {
                if (zeroed) ra = 0.0;
                return 100.0 * (go - ra) / (dq - ra);
            });
            EXPECT_GE(want[2], gd.first) << protocol << "/" << r.game;
            EXPECT_LE(want[2], gd.second) << protocol << "/" << r.game;
        }
    }
}

TEST(ReportTables, FlagsAndCsvOutput) {
    const std::vector<RawScoreRow> raw = {
        {"Normal", 10, 110, 60, 85},
        {"Inverted", 20, 10, 30, 40},
        {"Zeroed", 50, 150, 40, 20},
        {"Undefined", 0, 100, 0, 4},
    };
    const auto rows = report_tables(raw);
    EXPECT_EQ(rows[0].flags(), "");
    EXPECT_DOUBLE_EQ(rows[0].gorila_dqn_normalized, 150.0);
    EXPECT_EQ(rows[1].flags(), "human_below_random");
    EXPECT_DOUBLE_EQ(rows[1].gorila_human_normalized, 200.0);
    EXPECT_EQ(rows[2].flags(), "random_zeroed");
    EXPECT_DOUBLE_EQ(rows[2].gorila_dqn_normalized, 50.0);
    EXPECT_EQ(rows[3].flags(), "random_zeroed;undefined");

    std::ostringstream out;
    write_normalized_csv(out, {NormalizedRow{"Tiny", -0.001, 1.005, 2.0, false, false, false}});
    EXPECT_EQ(out.str(),
              "game,dqn_human_normalized,gorila_human_normalized,gorila_dqn_normalized,flags\n"
              "Tiny,0.00,1.00,2.00,\n");
}

TEST(ReadRawScores, ColumnsByNameAndErrors) {
    std::istringstream permuted("gorila,game,dqn,human,random\n4,Pong,3,2,1\n");
    const auto rows = read_raw_scores(permuted);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].game, "Pong");
    EXPECT_EQ(rows[0].random, 1.0);
    EXPECT_EQ(rows[0].gorila, 4.0);

    std::istringstream missing("game,random,human,dqn\nPong,1,2,3\n");
    EXPECT_THROW(read_raw_scores(missing), SchemaError);
    std::istringstream bad_cell("game,random,human,dqn,gorila\nPong,1,two,3,4\n");
    EXPECT_THROW(read_raw_scores(bad_cell), SchemaError);
    EXPECT_THROW(read_raw_scores_file("/nonexistent.csv"), Error);
}

// Deterministic chain: from state 0 the goal takes n−1 right moves. A null
// action at state 0 stays at 0, so after u null-ops the agent still needs
// n−1 steps and only the cap can cut the episode short.
double chain_score_after_null_ops(std::size_t u, std::size_t n, double cost, double goal, std::size_t cap) {
    const std::size_t agent_budget = u >= cap ? 0 : cap - u;
    const std::size_t moves = n - 1;
    if (agent_budget >= moves) return goal - cost * static_cast<double>(moves - 1);
    return -cost * static_cast<double>(agent_budget);
}

TEST(NullOpProtocol, EnumeratedScoresMatch) {
    const ChainMdp chain{5, 0.0, 0.1, 1.0};
    TabularEnv env(chain.to_tabular());
    const auto q = value_iteration_oracle(chain.to_tabular(), 0.9);
    EvalProtocol p;
    p.episodes = 200;
    p.null_op_cap = 20;
    p.max_initial_null_ops = 30;
    Rng rng(17);
    const double got = eval_null_op(greedy_table_policy(q), env, p, 1000, rng);

    Rng replay(17);
    std::uniform_int_distribution<std::size_t> draw(0, p.max_initial_null_ops);
    double expected = 0.0;
    for (std::size_t i = 0; i < p.episodes; ++i) expected += chain_score_after_null_ops(draw(replay), 5, 0.1, 1.0, 20);
    EXPECT_NEAR(got, expected / static_cast<double>(p.episodes), 1e-12);
}

TEST(NullOpProtocol, ReproducibleAndSeedSensitive) {
    const ChainMdp chain{5, 0.3};
    TabularEnv env(chain.to_tabular());
    Rng policy_rng(1);
    EvalProtocol p;
    p.episodes = 20;
    Rng a(3), b(3);
    const auto q = value_iteration_oracle(chain.to_tabular(), 0.9);
    EXPECT_EQ(eval_null_op(greedy_table_policy(q), env, p, 5, a), eval_null_op(greedy_table_policy(q), env, p, 5, b));
}

TEST(HumanStartsProtocol, OnlyRewardAfterHandOffCounts) {
    const ChainMdp chain{8, 0.0, 0.1, 1.0};
    const auto mdp = chain.to_tabular();
    TabularEnv env(mdp);
    const auto q = value_iteration_oracle(mdp, 0.9);
    const auto expert = greedy_table_policy(q);
    const auto traj = record_trajectory(env, expert, 4, 100);
    ASSERT_EQ(traj.steps.size(), 7u);

    EvalProtocol p;
    p.kind = ProtocolKind::human_starts;
    p.start_points = 300;
    p.human_starts_cap = 5;
    Rng rng(8);
    const double got = eval_human_starts(expert, env, traj, p, rng);

    // From prefix k the expert earns the recorded rewards k..6, truncated by
    // the cap on total steps; k = 7 is the terminal state and scores 0.
    Rng replay(8);
    std::uniform_int_distribution<std::size_t> pick(0, traj.steps.size());
    double expected = 0.0;
    for (std::size_t i = 0; i < p.start_points; ++i) {
        const std::size_t k = pick(replay);
        for (std::size_t t = k; t < traj.steps.size() && t < p.human_starts_cap; ++t) expected += traj.steps[t].reward;
    }
    EXPECT_NEAR(got, expected / static_cast<double>(p.start_points), 1e-12);
}

TEST(HumanStartsProtocol, WrongEnvironmentIsRejected) {
    TabularEnv chain(ChainMdp{}.to_tabular());
    TabularEnv grid(GridWorld{}.to_tabular());
    const auto traj = record_trajectory(chain, [](std::span<const double>) { return std::size_t{1}; }, 0, 10);
    EvalProtocol p;
    p.kind = ProtocolKind::human_starts;
    Rng rng(1);
    EXPECT_THROW(eval_human_starts([](std::span<const double>) { return std::size_t{0}; }, grid, traj, p, rng),
                 FixtureError);
}

TEST(Evaluate, ScoresAgentRandomAndExpertUnderOneProtocol) {
    const ChainMdp chain{5, 0.1};
    TabularEnv env(chain.to_tabular());
    const auto q = value_iteration_oracle(chain.to_tabular(), 0.9);
    EvalProtocol p;
    p.episodes = 50;
    const auto expert = greedy_table_policy(q);
    const auto report = evaluate(expert, expert, env, p, nullptr, 99);
    EXPECT_EQ(report.scores.agent_score, report.scores.human_score);
    ASSERT_TRUE(report.human_normalized);
    EXPECT_NEAR(*report.human_normalized, 100.0, 1e-9);
    EXPECT_LT(report.scores.random_score, report.scores.agent_score);
    EXPECT_NE(report.to_text().find("null_op"), std::string::npos);
}

TEST(Protocol, NamesAndValidation) {
    EXPECT_EQ(protocol_from_string("human_starts"), ProtocolKind::human_starts);
    EXPECT_STREQ(to_string(ProtocolKind::null_op), "null_op");
    EXPECT_THROW(protocol_from_string("noop"), ConfigError);
    EvalProtocol p;
    p.episodes = 0;
    EXPECT_THROW(p.validate(), ConfigError);
}

}  // namespace
}  // namespace gorila
