#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gorila/bytes.hpp"
#include "gorila/rl.hpp"

namespace gorila {

// Frame layout (all integers little-endian):
//   magic "GRL1" | kind u8 | length u32 | payload[length] | crc32(payload) u32
enum class MessageKind : std::uint8_t {
    grad_push = 1,
    param_fetch_req = 2,
    param_fetch_resp = 3,
    put_exp = 4,
    sample_req = 5,
    sample_resp = 6,
    stats_req = 7,
    stats_resp = 8,
    ack = 9,
    err = 10,
};

const char* to_string(MessageKind kind);
bool is_known_kind(std::uint8_t raw) noexcept;

inline constexpr std::size_t kFrameHeaderSize = 9;
inline constexpr std::size_t kFrameTrailerSize = 4;
inline constexpr std::size_t kDefaultMaxPayload = 64u << 20;

struct Frame {
    MessageKind kind = MessageKind::ack;
    std::vector<std::uint8_t> payload;

    bool operator==(const Frame&) const = default;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept;

std::vector<std::uint8_t> encode_frame(const Frame& frame, std::size_t max_payload = kDefaultMaxPayload);

struct DecodedFrame {
    Frame frame;
    std::size_t consumed = 0;
};

/// Decodes the first frame in `bytes`. Throws ProtocolError with code
/// bad_magic, unknown_kind, oversize, truncated or bad_crc.
DecodedFrame decode_frame(std::span<const std::uint8_t> bytes, std::size_t max_payload = kDefaultMaxPayload);

/// Total frame size announced by a complete header; validates magic, kind
/// and length bound on the way.
std::size_t frame_size_from_header(std::span<const std::uint8_t> header,
                                   std::size_t max_payload = kDefaultMaxPayload);

// Application messages carried in frame payloads.

struct ShardSlice {
    std::uint32_t shard_id = 0;
    std::vector<double> data;

    bool operator==(const ShardSlice&) const = default;
};

// base_version u64 | n_slices u32 | { shard_id u32 | len u64 | f64[len] }*
struct GradPush {
    std::uint64_t base_version = 0;
    std::vector<ShardSlice> slices;

    bool operator==(const GradPush&) const = default;
};

// n_bits u32 | bitmap bytes, LSB first. n_bits == 0 requests every shard.
struct ParamFetchReq {
    std::vector<bool> shards;

    bool operator==(const ParamFetchReq&) const = default;
};

// version u64 | n_slices u32 | { shard_id u32 | len u64 | f64[len] }*
struct ParamFetchResp {
    std::uint64_t version = 0;
    std::vector<ShardSlice> slices;

    bool operator==(const ParamFetchResp&) const = default;
};

// One serialized transition.
struct PutExp {
    Transition transition;

    bool operator==(const PutExp&) const = default;
};

struct SampleReq {
    std::uint32_t batch = 0;

    bool operator==(const SampleReq&) const = default;
};

struct SampleResp {
    std::vector<Transition> transitions;

    bool operator==(const SampleResp&) const = default;
};

struct StatsReq {
    bool operator==(const StatsReq&) const = default;
};

struct StatsResp {
    std::uint64_t version = 0;
    std::uint64_t applied = 0;
    std::uint64_t discarded_stale = 0;
    std::vector<std::uint64_t> per_shard_apply_counts;
    std::uint64_t replay_size = 0;

    bool operator==(const StatsResp&) const = default;
};

enum class AckStatus : std::uint8_t { ok = 0, accepted = 1, discarded_stale = 2 };

struct Ack {
    AckStatus status = AckStatus::ok;
    std::uint64_t version = 0;

    bool operator==(const Ack&) const = default;
};

enum class ErrCode : std::uint32_t {
    protocol = 1,
    not_ready = 2,
    partial_fetch = 3,
    unsupported = 4,
    internal = 5,
};

struct ErrorMsg {
    ErrCode code = ErrCode::internal;
    std::string message;

    bool operator==(const ErrorMsg&) const = default;
};

using Message = std::variant<GradPush, ParamFetchReq, ParamFetchResp, PutExp, SampleReq, SampleResp,
                             StatsReq, StatsResp, Ack, ErrorMsg>;

MessageKind kind_of(const Message& msg);

Frame encode_message(const Message& msg);

/// Strict: trailing payload bytes are a malformed-message error.
Message decode_message(const Frame& frame);

void write_transition(ByteWriter& w, const Transition& t);
Transition read_transition(ByteReader& r);

}  // namespace gorila
