#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "gorila/bundle.hpp"
#include "gorila/errors.hpp"
#include "gorila/learner.hpp"
#include "gorila/param_server.hpp"
#include "gorila/replay.hpp"
#include "support/oracles.hpp"

namespace gorila {
namespace {

// Weighted mean and variance with explicit weights w_1 = d^(n−1),
// w_k = (1 − d) d^(n−k): the closed form the running recurrence tracks.
std::pair<double, double> weighted_moments(const std::vector<double>& xs, double d) {
    const std::size_t n = xs.size();
    std::vector<double> w(n);
    for (std::size_t k = 0; k < n; ++k) {
        w[k] = (k == 0 ? 1.0 : 1.0 - d) * std::pow(d, static_cast<double>(n - 1 - k));
    }
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) mean += w[k] * xs[k];
    double var = 0.0;
    for (std::size_t k = 0; k < n; ++k) var += w[k] * (xs[k] - mean) * (xs[k] - mean);
    return {mean, var};
}

TEST(LossStats, RecurrenceMatchesExplicitWeights) {
    std::mt19937_64 rng(1);
    std::lognormal_distribution<double> dist(0.0, 1.0);
    for (double d : {0.5, 0.9, 0.999}) {
        LossStats st;
        st.decay = d;
        std::vector<double> xs;
        for (int i = 0; i < 300; ++i) {
            xs.push_back(dist(rng));
            st = update_loss_stats(st, xs.back());
            const auto [m, v] = weighted_moments(xs, d);
            ASSERT_NEAR(st.mean, m, 1e-12 * std::max(1.0, std::abs(m)));
            ASSERT_NEAR(st.variance, v, 1e-12 * std::max(1.0, v));
        }
        EXPECT_EQ(st.count, 300u);
    }
}

TEST(LossStats, FirstObservationSetsMeanWithZeroSpread) {
    const auto st = update_loss_stats(LossStats{}, 2.5);
    EXPECT_EQ(st.mean, 2.5);
    EXPECT_EQ(st.variance, 0.0);
    EXPECT_EQ(st.sigma(), 0.0);
}

TEST(LossStats, OutlierThresholdAndWarmup) {
    LossStats st;
    st.mean = 2.0;
    st.variance = 0.25;
    st.k_sigma = 3.0;
    st.warmup_count = 10;
    st.count = 9;
    EXPECT_FALSE(st.is_outlier(100.0));  // still warming up
    st.count = 10;
    EXPECT_TRUE(st.is_outlier(4.0));  // 4.0 > 2 + 3·0.5
    EXPECT_FALSE(st.is_outlier(3.5));
    EXPECT_FALSE(st.is_outlier(3.4));
    st.enabled = false;
    EXPECT_FALSE(st.is_outlier(1e9));
}

TEST(LossStats, Validation) {
    LossStats st;
    st.decay = 1.0;
    EXPECT_THROW(st.validate(), ConfigError);
    st.decay = 0.9;
    st.k_sigma = 0.0;
    EXPECT_THROW(st.validate(), ConfigError);
}

ParamVector flat(std::size_t n, double v = 0.0) {
    return ParamVector{std::vector<double>(n, v), {{"b0", static_cast<std::uint32_t>(n), 1, 0, n}}};
}

TEST(TargetSync, PeriodExamples) {
    QNetwork target({{1, 1, Activation::identity}});
    ParamServer server(target.flatten(), 1, 0.1, 1e-8, StalenessPolicy{});
    LocalParameterClient client(server);
    const TargetSyncPolicy p{5};
    EXPECT_FALSE(maybe_sync_target(p, 0, 4, client, target));
    EXPECT_EQ(client.fetch_count(), 0u);
    EXPECT_EQ(maybe_sync_target(p, 0, 5, client, target), std::optional<std::uint64_t>(0));
    EXPECT_EQ(client.fetch_count(), 1u);
    // A jump of several periods is one refresh.
    for (int i = 0; i < 12; ++i) server.apply_gradient(GradPush{server.version(), {ShardSlice{0, {1.0, 1.0}}}});
    EXPECT_EQ(maybe_sync_target(p, 0, 12, client, target), std::optional<std::uint64_t>(12));
    EXPECT_EQ(client.fetch_count(), 2u);
    EXPECT_EQ(target.params(), server.fetch_all().first);
}

// Fixed batch source so a test controls exactly what the learner sees.
class FixedSource final : public ExperienceSource {
public:
    std::vector<Transition> sample(std::size_t batch, Rng&) override {
        std::vector<Transition> out;
        for (std::size_t i = 0; i < batch; ++i) out.push_back(items[i % items.size()]);
        return out;
    }
    std::size_t size() override { return items.size(); }
    std::vector<Transition> items;
};

std::vector<Transition> chain_transitions(const TabularMdp& mdp, std::size_t n, std::uint64_t seed) {
    TabularEnv env(mdp);
    Rng rng(seed);
    std::vector<Transition> out;
    auto obs = env.reset(seed);
    while (out.size() < n) {
        const std::size_t a = rng() % mdp.n_actions;
        auto r = env.step(a);
        out.push_back(Transition{obs, static_cast<std::uint32_t>(a), r.reward, r.observation, r.terminal});
        obs = r.terminal ? env.reset(rng()) : r.observation;
    }
    return out;
}

TEST(MinibatchGradient, MatchesFiniteDifferencesOfTheMeanHalfSquaredError) {
    std::mt19937_64 rng(21);
    const auto mdp = ChainMdp{5, 0.3}.to_tabular();
    const auto layers = mlp_layers(5, std::vector<std::size_t>{6}, 2);
    for (int trial = 0; trial < 10; ++trial) {
        QNetwork current(layers), target(layers);
        current.init_uniform(rng());
        target.init_uniform(rng());
        const auto batch = chain_transitions(mdp, 16, rng());
        const Discount gamma{0.9};
        double mean_loss = 0.0;
        const auto grad = minibatch_gradient(current, target, batch, gamma, &mean_loss);

        std::vector<double> y;
        double loss_oracle = 0.0;
        for (const auto& t : batch) {
            const auto qn = oracle::forward(layers, target.params().values, t.next_state);
            y.push_back(t.terminal ? t.reward : t.reward + gamma.gamma * *std::max_element(qn.begin(), qn.end()));
            const double d = y.back() - oracle::forward(layers, current.params().values, t.state)[t.action];
            loss_oracle += d * d / static_cast<double>(batch.size());
        }
        EXPECT_NEAR(mean_loss, loss_oracle, 1e-12);
        const auto numeric = oracle::central_difference(
            [&](const std::vector<double>& th) {
                double l = 0.0;
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    const double d = y[i] - oracle::forward(layers, th, batch[i].state)[batch[i].action];
                    l += 0.5 * d * d;
                }
                return l / static_cast<double>(batch.size());
            },
            current.params().values, 1e-6);
        EXPECT_LT(oracle::max_relative_error(grad, numeric, 1e-3), 1e-5);
    }
}

TEST(MinibatchGradient, VanishesAtTheFixedPoint) {
    // Deterministic chain, linear tabular network holding Q* exactly.
    const auto mdp = ChainMdp{5, 0.0, 0.01, 1.0}.to_tabular();
    const auto q = value_iteration_oracle(mdp, 0.9, 1e-14);
    QNetwork net({{5, 2, Activation::identity}});
    std::vector<double> theta(5 * 2 + 2, 0.0);
    for (std::size_t s = 0; s < 5; ++s) {
        for (std::size_t a = 0; a < 2; ++a) theta[a * 5 + s] = q.at(s, a);
    }
    net.sync_from(theta);
    double loss = 1.0;
    const auto grad = minibatch_gradient(net, net, chain_transitions(mdp, 64, 3), Discount{0.9}, &loss);
    EXPECT_LT(loss, 1e-20);
    for (double g : grad) EXPECT_NEAR(g, 0.0, 1e-10);
}

TEST(MinibatchGradient, SmallStepAgainstItReducesTheLoss) {
    const auto mdp = ChainMdp{5, 0.2}.to_tabular();
    auto current = QNetwork::mlp(5, std::vector<std::size_t>{8}, 2);
    current.init_uniform(5);
    const auto target = current;
    const auto batch = chain_transitions(mdp, 32, 9);
    double before = 0.0, after = 0.0;
    const auto grad = minibatch_gradient(current, target, batch, Discount{0.9}, &before);
    auto theta = current.params().values;
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= 1e-3 * grad[i];
    current.sync_from(theta);
    minibatch_gradient(current, target, batch, Discount{0.9}, &after);
    EXPECT_LT(after, before);
}

struct LearnerRig {
    LearnerRig()
        : net((QNetwork::mlp(5, std::vector<std::size_t>{4}, 2))),
          server((net.init_uniform(2), net.flatten()), 2, 0.05, 1e-8, StalenessPolicy{}),
          client(server) {
        source.items = chain_transitions(ChainMdp{5, 0.2}.to_tabular(), 40, 1);
    }

    LearnerConfig config() const {
        LearnerConfig c;
        c.batch = 8;
        c.gamma = Discount{0.9};
        c.replay_warmup = 10;
        c.target = TargetSyncPolicy{3};
        c.loss_filter.warmup_count = 5;
        return c;
    }

    QNetwork net;
    ParamServer server;
    LocalParameterClient client;
    FixedSource source;
};

TEST(Learner, ConstructionSetsThetaAndTargetFromServer) {
    LearnerRig rig;
    Learner learner(rig.config(), rig.source, rig.client, QNetwork::mlp(5, std::vector<std::size_t>{4}, 2));
    EXPECT_EQ(learner.current().params(), rig.server.fetch_all().first);
    EXPECT_EQ(learner.target().params(), rig.server.fetch_all().first);
    EXPECT_EQ(learner.last_target_sync(), 0u);
}

TEST(Learner, NotReadyBelowWarmupWithoutTraffic) {
    LearnerRig rig;
    rig.source.items.resize(9);
    Learner learner(rig.config(), rig.source, rig.client, rig.net);
    const auto fetches = rig.client.fetch_count();
    EXPECT_EQ(learner.step().outcome, StepOutcome::replay_not_ready);
    EXPECT_EQ(rig.client.fetch_count(), fetches);
    EXPECT_EQ(rig.client.push_count(), 0u);
    EXPECT_EQ(learner.stats().not_ready, 1u);
}

TEST(Learner, PushesAndSyncsTargetEveryPeriod) {
    LearnerRig rig;
    Learner learner(rig.config(), rig.source, rig.client, rig.net);
    std::vector<std::uint64_t> synced;
    for (int i = 0; i < 10; ++i) {
        const auto r = learner.step();
        ASSERT_EQ(r.outcome, StepOutcome::pushed);
        EXPECT_TRUE(r.accepted);
        EXPECT_EQ(r.server_version, static_cast<std::uint64_t>(i + 1));
        if (r.target_synced_at) synced.push_back(*r.target_synced_at);
    }
    EXPECT_EQ(synced, (std::vector<std::uint64_t>{3, 6, 9}));
    EXPECT_EQ(learner.stats().target_syncs, 3u);
    EXPECT_EQ(rig.server.version(), 10u);
}

TEST(Learner, RejectedBatchCausesNoPushAndNoStatsUpdate) {
    LearnerRig rig;
    auto cfg = rig.config();
    cfg.target = TargetSyncPolicy{1'000'000};
    Learner learner(cfg, rig.source, rig.client, rig.net);
    for (int i = 0; i < 20; ++i) learner.step();
    const auto stats_before = learner.loss_stats();
    const auto pushes = rig.client.push_count();
    const auto version = rig.server.version();

    for (auto& t : rig.source.items) t.reward = 1e6;
    const auto r = learner.step();
    EXPECT_EQ(r.outcome, StepOutcome::rejected_outlier);
    EXPECT_EQ(rig.client.push_count(), pushes);
    EXPECT_EQ(rig.server.version(), version);
    EXPECT_EQ(learner.loss_stats().mean, stats_before.mean);
    EXPECT_EQ(learner.loss_stats().count, stats_before.count);
    EXPECT_EQ(learner.stats().rejected, 1u);
}

TEST(Learner, StalePushIsCounted) {
    LearnerRig rig;
    ParamServer strict(rig.net.flatten(), 2, 0.05, 1e-8, StalenessPolicy{0});
    LocalParameterClient client(strict);
    auto cfg = rig.config();
    cfg.loss_filter.enabled = false;

    // A client that lets another writer slip in between fetch and push.
    class Interleaving final : public ParameterClient {
    public:
        Interleaving(ParamServer& s, LocalParameterClient& inner) : server_(s), inner_(inner) {}
        std::uint64_t fetch_into(ParamVector& dst) override { return inner_.fetch_into(dst); }
        PushResult push(std::uint64_t base, std::span<const double> g) override {
            server_.apply_gradient(GradPush{server_.version(), server_.shard_map().split(g)});
            return inner_.push(base, g);
        }
        ServerStats stats() override { return inner_.stats(); }

    private:
        ParamServer& server_;
        LocalParameterClient& inner_;
    } interleaving(strict, client);

    Learner learner(cfg, rig.source, interleaving, rig.net);
    const auto r = learner.step();
    EXPECT_EQ(r.outcome, StepOutcome::pushed);
    EXPECT_FALSE(r.accepted);
    EXPECT_EQ(learner.stats().stale, 1u);
    EXPECT_EQ(strict.stats().discarded_stale, 1u);
}

TEST(Learner, ConfigValidation) {
    LearnerRig rig;
    auto cfg = rig.config();
    cfg.batch = 0;
    EXPECT_THROW(Learner(cfg, rig.source, rig.client, rig.net), ConfigError);
    cfg = rig.config();
    cfg.target.period = 0;
    EXPECT_THROW(Learner(cfg, rig.source, rig.client, rig.net), ConfigError);
}

TEST(Seeds, DerivedStreamsAreDistinct) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        for (std::uint64_t tag = 1; tag <= 5; ++tag) {
            for (std::uint64_t idx = 0; idx < 10; ++idx) seen.insert(derive_seed(seed, tag, idx));
        }
    }
    EXPECT_EQ(seen.size(), 500u);
    EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
}

}  // namespace
}  // namespace gorila
