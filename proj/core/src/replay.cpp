#include "gorila/replay.hpp"

#include <numeric>
#include <random>
#include <thread>

#include "gorila/errors.hpp"

namespace gorila {

LocalReplay::LocalReplay(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be positive");
    ring_.reserve(std::min<std::size_t>(capacity, 1u << 16));
}

void LocalReplay::insert(const Transition& t) {
    std::lock_guard lock(mu_);
    if (ring_.size() < capacity_) {
        ring_.push_back(t);
    } else {
        ring_[write_cursor_] = t;
    }
    write_cursor_ = (write_cursor_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
    ++inserted_;
}

std::vector<Transition> LocalReplay::sample(std::size_t batch, Rng& rng) {
    std::lock_guard lock(mu_);
    if (size_ == 0) throw NotReady("replay memory is empty");
    std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
    std::vector<Transition> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) out.push_back(ring_[pick(rng)]);
    return out;
}

std::size_t LocalReplay::size() {
    std::lock_guard lock(mu_);
    return size_;
}

std::uint64_t LocalReplay::total_inserted() const {
    std::lock_guard lock(mu_);
    return inserted_;
}

std::uint64_t LocalReplay::evictions() const {
    std::lock_guard lock(mu_);
    return inserted_ - size_;
}

std::vector<Transition> LocalReplay::snapshot() const {
    std::lock_guard lock(mu_);
    std::vector<Transition> out;
    out.reserve(size_);
    const std::size_t oldest = size_ < capacity_ ? 0 : write_cursor_;
    for (std::size_t i = 0; i < size_; ++i) out.push_back(ring_[(oldest + i) % capacity_]);
    return out;
}

std::uint32_t replay_shard_for(std::uint32_t actor_id, std::uint64_t step, std::uint32_t n_shards) {
    // splitmix64 finalizer over the packed key.
    std::uint64_t z = (static_cast<std::uint64_t>(actor_id) << 40) ^ step;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return static_cast<std::uint32_t>(z % n_shards);
}

GlobalReplay::GlobalReplay(std::uint32_t n_shards, std::size_t capacity_per_shard) {
    if (n_shards == 0) throw ConfigError("global replay needs at least one shard");
    for (std::uint32_t i = 0; i < n_shards; ++i) shards_.push_back(std::make_unique<Shard>(capacity_per_shard));
}

std::uint32_t GlobalReplay::put(const Transition& t) {
    const std::uint32_t id = replay_shard_for(t.actor_id, t.step, shard_count());
    auto& shard = *shards_[id];
    for (int attempt = 0;; ++attempt) {
        {
            std::lock_guard lock(shard.mu);
            if (shard.online) {
                shard.ring.insert(t);
                return id;
            }
        }
        if (attempt >= put_retry_.max_retries) {
            throw TransportError("replay shard " + std::to_string(id) + " unreachable");
        }
        const auto d = put_retry_.delay(attempt);
        if (sleep_) {
            sleep_(d);
        } else {
            std::this_thread::sleep_for(d);
        }
    }
}

std::vector<Transition> GlobalReplay::sample(std::size_t batch, Rng& rng) {
    const auto sizes = shard_sizes();
    const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    if (total == 0) throw NotReady("global replay is empty");
    std::discrete_distribution<std::size_t> pick_shard(sizes.begin(), sizes.end());
    std::vector<Transition> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        auto& shard = *shards_[pick_shard(rng)];
        std::lock_guard lock(shard.mu);
        auto one = shard.ring.sample(1, rng);
        out.push_back(std::move(one.front()));
    }
    return out;
}

std::size_t GlobalReplay::size() {
    const auto sizes = shard_sizes();
    return std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
}

std::vector<std::size_t> GlobalReplay::shard_sizes() const {
    std::vector<std::size_t> sizes;
    for (const auto& s : shards_) {
        std::lock_guard lock(s->mu);
        sizes.push_back(s->ring.size());
    }
    return sizes;
}

std::uint64_t GlobalReplay::total_puts() const {
    std::uint64_t n = 0;
    for (const auto& s : shards_) {
        std::lock_guard lock(s->mu);
        n += s->ring.total_inserted();
    }
    return n;
}

std::uint64_t GlobalReplay::total_evictions() const {
    std::uint64_t n = 0;
    for (const auto& s : shards_) {
        std::lock_guard lock(s->mu);
        n += s->ring.evictions();
    }
    return n;
}

void GlobalReplay::set_shard_online(std::uint32_t shard, bool online) {
    auto& s = *shards_.at(shard);
    std::lock_guard lock(s.mu);
    s.online = online;
}

void GlobalReplay::set_put_retry(RetryPolicy policy, std::function<void(std::chrono::milliseconds)> sleep) {
    put_retry_ = policy;
    sleep_ = std::move(sleep);
}

FrameHandler global_replay_handler(GlobalReplay& store, std::uint64_t seed) {
    auto rng = std::make_shared<Rng>(seed);
    auto rng_mu = std::make_shared<std::mutex>();
    return [&store, rng, rng_mu](const Frame& frame) -> std::optional<Frame> {
        auto msg = decode_message(frame);
        if (auto* put = std::get_if<PutExp>(&msg)) {
            const auto shard = store.put(put->transition);
            return encode_message(Ack{AckStatus::ok, shard});
        }
        if (auto* req = std::get_if<SampleReq>(&msg)) {
            std::lock_guard lock(*rng_mu);
            return encode_message(SampleResp{store.sample(req->batch, *rng)});
        }
        if (std::holds_alternative<StatsReq>(msg)) {
            StatsResp resp;
            resp.replay_size = store.size();
            return encode_message(resp);
        }
        return encode_message(ErrorMsg{ErrCode::unsupported,
                                       std::string("replay store does not handle ") + to_string(frame.kind)});
    };
}

void RemoteReplayClient::insert(const Transition& t) {
    expect_reply(conn_->call(encode_message(PutExp{t})), MessageKind::ack);
}

std::vector<Transition> RemoteReplayClient::sample(std::size_t batch, Rng&) {
    auto reply = expect_reply(conn_->call(encode_message(SampleReq{static_cast<std::uint32_t>(batch)})),
                              MessageKind::sample_resp);
    return std::move(std::get<SampleResp>(reply).transitions);
}

std::size_t RemoteReplayClient::size() {
    auto reply = expect_reply(conn_->call(encode_message(StatsReq{})), MessageKind::stats_resp);
    return static_cast<std::size_t>(std::get<StatsResp>(reply).replay_size);
}

}  // namespace gorila
