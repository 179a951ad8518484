#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "gorila/nn.hpp"
#include "gorila/transport.hpp"
#include "gorila/wire.hpp"

namespace gorila {

/// Contiguous disjoint partition of [0, total) into shards of equal length,
/// remainder folded into the last shard.
struct ShardRange {
    std::size_t offset = 0;
    std::size_t length = 0;

    bool operator==(const ShardRange&) const = default;
};

class ShardMap {
public:
    /// n_shards is clamped to [1, total].
    static ShardMap contiguous(std::size_t total, std::size_t n_shards);

    std::size_t shard_count() const noexcept { return ranges_.size(); }
    std::size_t total() const noexcept { return total_; }
    const ShardRange& operator[](std::size_t i) const { return ranges_.at(i); }
    const std::vector<ShardRange>& ranges() const noexcept { return ranges_; }

    /// Splits a full-length vector into one slice per shard.
    std::vector<ShardSlice> split(std::span<const double> full) const;

private:
    std::vector<ShardRange> ranges_;
    std::size_t total_ = 0;
};

inline constexpr std::uint64_t kUnboundedDelay = std::numeric_limits<std::uint64_t>::max();

struct StalenessPolicy {
    std::uint64_t max_delay = 50;
};

struct ApplyOutcome {
    bool accepted = false;
    std::uint64_t version = 0;  // new version when accepted, current otherwise
};

struct ServerStats {
    std::uint64_t applied = 0;
    std::uint64_t discarded_stale = 0;
    std::vector<std::uint64_t> per_shard_apply_counts;
    std::uint64_t version = 0;

    bool operator==(const ServerStats&) const = default;
};

struct FetchResult {
    std::uint64_t version = 0;
    std::vector<ShardSlice> slices;
};

/// Central parameter store θ⁺, split over shards that each carry their own
/// AdaGrad state and lock.
///
/// A gradient message is validated once. The staleness check and the version
/// increment happen together under the accept lock, which is the only global
/// serialization point; shard slices are then applied under per-shard locks,
/// so slices of different messages may interleave across shards but a
/// single shard never exposes a partially applied slice.
class ParamServer {
public:
    ParamServer(ParamVector initial, std::size_t n_shards, double rate, double epsilon,
                StalenessPolicy staleness);

    ApplyOutcome apply_gradient(const GradPush& msg);

    /// Empty selection fetches every shard. Throws PartialFetchError when a
    /// requested shard is offline.
    FetchResult fetch_params(const std::vector<bool>& shards = {}) const;

    /// Full θ⁺ assembled from all shards plus the version read afterwards.
    std::pair<ParamVector, std::uint64_t> fetch_all() const;

    ServerStats stats() const;

    std::uint64_t version() const noexcept { return version_.load(); }
    const ShardMap& shard_map() const noexcept { return map_; }
    const ParamLayout& layout() const noexcept { return layout_; }
    StalenessPolicy staleness() const noexcept { return staleness_; }

    /// AdaGrad accumulators concatenated in layout order.
    std::vector<double> accumulators() const;

    /// Fault injection: an offline shard fails fetches.
    void set_shard_online(std::size_t shard, bool online);

private:
    struct Shard {
        ShardRange range;
        std::vector<double> values;
        AdaGradState adagrad;
        std::uint64_t apply_count = 0;
        bool online = true;
        mutable std::mutex mu;
    };

    void validate(const GradPush& msg) const;

    ShardMap map_;
    ParamLayout layout_;
    StalenessPolicy staleness_;
    std::vector<std::unique_ptr<Shard>> shards_;
    mutable std::mutex accept_mu_;
    std::atomic<std::uint64_t> version_{0};
    std::atomic<std::uint64_t> applied_{0};
    std::atomic<std::uint64_t> discarded_{0};
};

/// Wire front end: GRAD_PUSH, PARAM_FETCH_REQ and STATS_REQ.
FrameHandler param_server_handler(ParamServer& server);

struct PushResult {
    bool accepted = false;
    std::uint64_t version = 0;
};

/// What actors and learners see of the parameter server.
class ParameterClient {
public:
    virtual ~ParameterClient() = default;

    /// Copies θ⁺ into dst (layout must match) and returns the version.
    virtual std::uint64_t fetch_into(ParamVector& dst) = 0;
    virtual PushResult push(std::uint64_t base_version, std::span<const double> gradient) = 0;
    virtual ServerStats stats() = 0;

    std::uint64_t fetch_count() const noexcept { return fetches_; }
    std::uint64_t push_count() const noexcept { return pushes_; }

protected:
    std::uint64_t fetches_ = 0;
    std::uint64_t pushes_ = 0;
};

/// Direct calls on a ParamServer in the same process.
class LocalParameterClient final : public ParameterClient {
public:
    explicit LocalParameterClient(ParamServer& server) : server_(server) {}

    std::uint64_t fetch_into(ParamVector& dst) override;
    PushResult push(std::uint64_t base_version, std::span<const double> gradient) override;
    ServerStats stats() override { return server_.stats(); }

private:
    ParamServer& server_;
};

/// Talks to a parameter server over a Connection. The shard map is learned
/// from the first full fetch.
class RemoteParameterClient final : public ParameterClient {
public:
    explicit RemoteParameterClient(std::unique_ptr<Connection> conn);

    std::uint64_t fetch_into(ParamVector& dst) override;
    PushResult push(std::uint64_t base_version, std::span<const double> gradient) override;
    ServerStats stats() override;

    FetchResult fetch_shards(const std::vector<bool>& shards);

    Connection& connection() noexcept { return *conn_; }

private:
    std::unique_ptr<Connection> conn_;
    std::optional<ShardMap> map_;
};

}  // namespace gorila
