#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <vector>

#include "gorila/rl.hpp"
#include "gorila/transport.hpp"

namespace gorila {

/// Where actors store experience.
class ExperienceSink {
public:
    virtual ~ExperienceSink() = default;
    virtual void insert(const Transition& t) = 0;
};

/// Where learners draw minibatches from.
class ExperienceSource {
public:
    virtual ~ExperienceSource() = default;

    /// `batch` independent uniform draws with replacement. Throws NotReady
    /// when empty.
    virtual std::vector<Transition> sample(std::size_t batch, Rng& rng) = 0;
    virtual std::size_t size() = 0;
};

/// Fixed-capacity FIFO ring owned by one bundle. Every operation takes the
/// internal lock, so one actor thread and one learner thread may share it.
class LocalReplay final : public ExperienceSink, public ExperienceSource {
public:
    explicit LocalReplay(std::size_t capacity);

    void insert(const Transition& t) override;
    std::vector<Transition> sample(std::size_t batch, Rng& rng) override;
    std::size_t size() override;

    std::size_t capacity() const noexcept { return capacity_; }
    std::uint64_t total_inserted() const;
    std::uint64_t evictions() const;

    /// Contents from oldest to newest.
    std::vector<Transition> snapshot() const;

private:
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::vector<Transition> ring_;
    std::size_t write_cursor_ = 0;
    std::size_t size_ = 0;
    std::uint64_t inserted_ = 0;
};

/// Uniform shard assignment by hash of (actor_id, step).
std::uint32_t replay_shard_for(std::uint32_t actor_id, std::uint64_t step, std::uint32_t n_shards);

/// Aggregated store: equal-capacity FIFO rings, one lock per shard.
/// Sampling picks a shard with probability proportional to its size and
/// then an entry uniformly inside it, which is uniform over all entries.
class GlobalReplay final : public ExperienceSink, public ExperienceSource {
public:
    GlobalReplay(std::uint32_t n_shards, std::size_t capacity_per_shard);

    /// Returns the shard the transition was routed to. A shard marked offline
    /// is retried with backoff and then reported as TransportError.
    std::uint32_t put(const Transition& t);

    void insert(const Transition& t) override { put(t); }
    std::vector<Transition> sample(std::size_t batch, Rng& rng) override;
    std::size_t size() override;

    std::vector<std::size_t> shard_sizes() const;
    std::uint64_t total_puts() const;
    std::uint64_t total_evictions() const;
    std::uint32_t shard_count() const noexcept { return static_cast<std::uint32_t>(shards_.size()); }

    void set_shard_online(std::uint32_t shard, bool online);
    void set_put_retry(RetryPolicy policy, std::function<void(std::chrono::milliseconds)> sleep = {});

private:
    struct Shard {
        explicit Shard(std::size_t capacity) : ring(capacity) {}
        LocalReplay ring;
        bool online = true;
        mutable std::mutex mu;
    };

    std::vector<std::unique_ptr<Shard>> shards_;
    RetryPolicy put_retry_{std::chrono::milliseconds(1), std::chrono::milliseconds(10), 3};
    std::function<void(std::chrono::milliseconds)> sleep_;
};

/// Wire front end for a GlobalReplay: PUT_EXP, SAMPLE_REQ, STATS_REQ.
/// Sampling uses the service's own seeded stream.
FrameHandler global_replay_handler(GlobalReplay& store, std::uint64_t seed);

/// Client view of a remote global store.
class RemoteReplayClient final : public ExperienceSink, public ExperienceSource {
public:
    explicit RemoteReplayClient(std::unique_ptr<Connection> conn) : conn_(std::move(conn)) {}

    void insert(const Transition& t) override;
    /// The rng argument is unused: draws come from the service's stream.
    std::vector<Transition> sample(std::size_t batch, Rng& rng) override;
    std::size_t size() override;

private:
    std::unique_ptr<Connection> conn_;
};

}  // namespace gorila
