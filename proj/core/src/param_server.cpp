#include "gorila/param_server.hpp"

#include <algorithm>
#include <string>

#include "gorila/errors.hpp"

namespace gorila {

ShardMap ShardMap::contiguous(std::size_t total, std::size_t n_shards) {
    if (total == 0) throw LayoutError("cannot shard an empty parameter vector");
    n_shards = std::clamp<std::size_t>(n_shards, 1, total);
    ShardMap map;
    map.total_ = total;
    const std::size_t base = total / n_shards;
    for (std::size_t i = 0; i < n_shards; ++i) {
        const std::size_t len = i + 1 == n_shards ? total - base * i : base;
        map.ranges_.push_back({base * i, len});
    }
    return map;
}

std::vector<ShardSlice> ShardMap::split(std::span<const double> full) const {
    if (full.size() != total_) throw ShapeError("vector length does not match shard map");
    std::vector<ShardSlice> slices;
    slices.reserve(ranges_.size());
    for (std::size_t i = 0; i < ranges_.size(); ++i) {
        auto part = full.subspan(ranges_[i].offset, ranges_[i].length);
        slices.push_back({static_cast<std::uint32_t>(i), {part.begin(), part.end()}});
    }
    return slices;
}

ParamServer::ParamServer(ParamVector initial, std::size_t n_shards, double rate, double epsilon,
                         StalenessPolicy staleness)
    : map_(ShardMap::contiguous(initial.values.size(), n_shards)),
      layout_(initial.layout),
      staleness_(staleness) {
    initial.validate();
    if (!(rate > 0.0) || !(epsilon > 0.0)) throw ConfigError("adagrad rate and epsilon must be positive");
    for (const auto& r : map_.ranges()) {
        auto shard = std::make_unique<Shard>();
        shard->range = r;
        shard->values.assign(initial.values.begin() + static_cast<std::ptrdiff_t>(r.offset),
                             initial.values.begin() + static_cast<std::ptrdiff_t>(r.offset + r.length));
        shard->adagrad = AdaGradState::fresh(r.length, rate, epsilon);
        shards_.push_back(std::move(shard));
    }
}

void ParamServer::validate(const GradPush& msg) const {
    std::vector<bool> seen(shards_.size(), false);
    for (const auto& s : msg.slices) {
        if (s.shard_id >= shards_.size()) {
            throw ProtocolError(ProtocolErrc::malformed, "unknown shard " + std::to_string(s.shard_id));
        }
        if (seen[s.shard_id]) {
            throw ProtocolError(ProtocolErrc::malformed, "duplicate shard " + std::to_string(s.shard_id));
        }
        seen[s.shard_id] = true;
        if (s.data.size() != shards_[s.shard_id]->range.length) {
            throw ProtocolError(ProtocolErrc::malformed,
                                "slice for shard " + std::to_string(s.shard_id) + " has " +
                                    std::to_string(s.data.size()) + " values, expected " +
                                    std::to_string(shards_[s.shard_id]->range.length));
        }
    }
}

ApplyOutcome ParamServer::apply_gradient(const GradPush& msg) {
    validate(msg);
    std::vector<const ShardSlice*> by_shard(shards_.size(), nullptr);
    for (const auto& s : msg.slices) by_shard[s.shard_id] = &s;

    std::unique_lock accept(accept_mu_);
    const std::uint64_t current = version_.load();
    // A base version from the future counts as zero delay.
    const std::uint64_t delay = current > msg.base_version ? current - msg.base_version : 0;
    if (delay > staleness_.max_delay) {
        discarded_.fetch_add(1);
        return {false, current};
    }
    // Shard locks are taken before the accept lock is released so every
    // shard sees messages in acceptance order; each is released as soon as
    // its slice has landed.
    std::vector<std::unique_lock<std::mutex>> held(shards_.size());
    for (std::size_t i = 0; i < shards_.size(); ++i) {
        if (by_shard[i]) held[i] = std::unique_lock(shards_[i]->mu);
    }
    const std::uint64_t new_version = version_.fetch_add(1) + 1;
    applied_.fetch_add(1);
    accept.unlock();

    for (std::size_t i = 0; i < shards_.size(); ++i) {
        if (!by_shard[i]) continue;
        auto& shard = *shards_[i];
        adagrad_apply(shard.values, by_shard[i]->data, shard.adagrad);
        ++shard.apply_count;
        held[i].unlock();
    }
    return {true, new_version};
}

FetchResult ParamServer::fetch_params(const std::vector<bool>& shards) const {
    if (!shards.empty() && shards.size() > shards_.size()) {
        throw ProtocolError(ProtocolErrc::malformed, "fetch bitmap names more shards than exist");
    }
    FetchResult out;
    std::vector<std::uint32_t> missing;
    for (std::size_t i = 0; i < shards_.size(); ++i) {
        if (!shards.empty() && (i >= shards.size() || !shards[i])) continue;
        const auto& shard = *shards_[i];
        std::lock_guard lock(shard.mu);
        if (!shard.online) {
            missing.push_back(static_cast<std::uint32_t>(i));
            continue;
        }
        out.slices.push_back({static_cast<std::uint32_t>(i), shard.values});
    }
    if (!missing.empty()) {
        std::string ids;
        for (auto m : missing) ids += (ids.empty() ? "" : ",") + std::to_string(m);
        throw PartialFetchError(std::move(missing), "partial fetch, missing shards: " + ids);
    }
    out.version = version_.load();
    return out;
}

std::pair<ParamVector, std::uint64_t> ParamServer::fetch_all() const {
    auto res = fetch_params();
    ParamVector pv;
    pv.layout = layout_;
    pv.values.reserve(map_.total());
    for (const auto& s : res.slices) pv.values.insert(pv.values.end(), s.data.begin(), s.data.end());
    return {std::move(pv), res.version};
}

ServerStats ParamServer::stats() const {
    ServerStats s;
    // Take the accept lock so the counters form one consistent snapshot.
    std::lock_guard lock(accept_mu_);
    s.applied = applied_.load();
    s.discarded_stale = discarded_.load();
    s.version = version_.load();
    for (const auto& shard : shards_) {
        std::lock_guard slock(shard->mu);
        s.per_shard_apply_counts.push_back(shard->apply_count);
    }
    return s;
}

std::vector<double> ParamServer::accumulators() const {
    std::vector<double> out;
    out.reserve(map_.total());
    for (const auto& shard : shards_) {
        std::lock_guard lock(shard->mu);
        out.insert(out.end(), shard->adagrad.accumulators.begin(), shard->adagrad.accumulators.end());
    }
    return out;
}

void ParamServer::set_shard_online(std::size_t shard, bool online) {
    auto& s = *shards_.at(shard);
    std::lock_guard lock(s.mu);
    s.online = online;
}

FrameHandler param_server_handler(ParamServer& server) {
    return [&server](const Frame& frame) -> std::optional<Frame> {
        auto msg = decode_message(frame);
        if (auto* push = std::get_if<GradPush>(&msg)) {
            const auto outcome = server.apply_gradient(*push);
            return encode_message(Ack{outcome.accepted ? AckStatus::accepted : AckStatus::discarded_stale,
                                      outcome.version});
        }
        if (auto* req = std::get_if<ParamFetchReq>(&msg)) {
            auto res = server.fetch_params(req->shards);
            return encode_message(ParamFetchResp{res.version, std::move(res.slices)});
        }
        if (std::holds_alternative<StatsReq>(msg)) {
            const auto s = server.stats();
            return encode_message(StatsResp{s.version, s.applied, s.discarded_stale, s.per_shard_apply_counts, 0});
        }
        return encode_message(ErrorMsg{ErrCode::unsupported,
                                       std::string("parameter server does not handle ") + to_string(frame.kind)});
    };
}

std::uint64_t LocalParameterClient::fetch_into(ParamVector& dst) {
    const auto res = server_.fetch_params();
    if (dst.layout != server_.layout()) throw LayoutError("destination layout differs from server layout");
    dst.values.resize(server_.shard_map().total());
    for (const auto& s : res.slices) {
        std::copy(s.data.begin(), s.data.end(),
                  dst.values.begin() + static_cast<std::ptrdiff_t>(server_.shard_map()[s.shard_id].offset));
    }
    ++fetches_;
    return res.version;
}

PushResult LocalParameterClient::push(std::uint64_t base_version, std::span<const double> gradient) {
    GradPush msg{base_version, server_.shard_map().split(gradient)};
    const auto outcome = server_.apply_gradient(msg);
    ++pushes_;
    return {outcome.accepted, outcome.version};
}

RemoteParameterClient::RemoteParameterClient(std::unique_ptr<Connection> conn) : conn_(std::move(conn)) {}

FetchResult RemoteParameterClient::fetch_shards(const std::vector<bool>& shards) {
    auto reply = expect_reply(conn_->call(encode_message(ParamFetchReq{shards})), MessageKind::param_fetch_resp);
    auto& resp = std::get<ParamFetchResp>(reply);
    ++fetches_;
    return FetchResult{resp.version, std::move(resp.slices)};
}

std::uint64_t RemoteParameterClient::fetch_into(ParamVector& dst) {
    auto res = fetch_shards({});
    std::size_t total = 0;
    for (const auto& s : res.slices) total += s.data.size();
    if (total != dst.values.size()) throw LayoutError("server parameter count differs from destination");
    if (!map_) map_ = ShardMap::contiguous(total, res.slices.size());
    if (res.slices.size() != map_->shard_count()) throw ProtocolError(ProtocolErrc::malformed, "shard count changed");
    for (const auto& s : res.slices) {
        const auto& range = (*map_)[s.shard_id];
        if (s.data.size() != range.length) throw ProtocolError(ProtocolErrc::malformed, "slice length mismatch");
        std::copy(s.data.begin(), s.data.end(), dst.values.begin() + static_cast<std::ptrdiff_t>(range.offset));
    }
    return res.version;
}

PushResult RemoteParameterClient::push(std::uint64_t base_version, std::span<const double> gradient) {
    if (!map_) {
        // Learn the shard map before the first push.
        ParamVector scratch;
        scratch.values.resize(gradient.size());
        fetch_into(scratch);
    }
    GradPush msg{base_version, map_->split(gradient)};
    auto reply = expect_reply(conn_->call(encode_message(msg)), MessageKind::ack);
    const auto& ack = std::get<Ack>(reply);
    ++pushes_;
    return {ack.status == AckStatus::accepted, ack.version};
}

ServerStats RemoteParameterClient::stats() {
    auto reply = expect_reply(conn_->call(encode_message(StatsReq{})), MessageKind::stats_resp);
    const auto& s = std::get<StatsResp>(reply);
    return ServerStats{s.applied, s.discarded_stale, s.per_shard_apply_counts, s.version};
}

}  // namespace gorila
