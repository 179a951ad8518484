#include "gorila/wire.hpp"

#include <zlib.h>

#include "gorila/bytes.hpp"
#include "gorila/errors.hpp"

namespace gorila {

namespace {

constexpr std::uint8_t kMagic[4] = {'G', 'R', 'L', '1'};

void write_slices(ByteWriter& w, const std::vector<ShardSlice>& slices) {
    w.u32(static_cast<std::uint32_t>(slices.size()));
    for (const auto& s : slices) {
        w.u32(s.shard_id);
        w.u64(s.data.size());
        w.f64s(s.data);
    }
}

std::vector<ShardSlice> read_slices(ByteReader& r) {
    const std::uint32_t n = r.u32();
    // Every slice needs at least 12 header bytes; reject absurd counts early.
    if (n > r.remaining() / 12) {
        throw ProtocolError(ProtocolErrc::truncated, "slice count exceeds payload");
    }
    std::vector<ShardSlice> slices(n);
    for (auto& s : slices) {
        s.shard_id = r.u32();
        s.data = r.f64s(r.u64());
    }
    return slices;
}

}  // namespace

const char* to_string(MessageKind kind) {
    switch (kind) {
        case MessageKind::grad_push: return "GRAD_PUSH";
        case MessageKind::param_fetch_req: return "PARAM_FETCH_REQ";
        case MessageKind::param_fetch_resp: return "PARAM_FETCH_RESP";
        case MessageKind::put_exp: return "PUT_EXP";
        case MessageKind::sample_req: return "SAMPLE_REQ";
        case MessageKind::sample_resp: return "SAMPLE_RESP";
        case MessageKind::stats_req: return "STATS_REQ";
        case MessageKind::stats_resp: return "STATS_RESP";
        case MessageKind::ack: return "ACK";
        case MessageKind::err: return "ERR";
    }
    return "UNKNOWN";
}

bool is_known_kind(std::uint8_t raw) noexcept {
    return raw >= static_cast<std::uint8_t>(MessageKind::grad_push) &&
           raw <= static_cast<std::uint8_t>(MessageKind::err);
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for payloads near the limit.
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
        crc = ::crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
        pos += n;
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_frame(const Frame& frame, std::size_t max_payload) {
    if (frame.payload.size() > max_payload) {
        throw ProtocolError(ProtocolErrc::oversize, "payload of " + std::to_string(frame.payload.size()) +
                                                        " bytes exceeds limit");
    }
    ByteWriter w;
    w.buffer().reserve(kFrameHeaderSize + frame.payload.size() + kFrameTrailerSize);
    for (auto b : kMagic) w.u8(b);
    w.u8(static_cast<std::uint8_t>(frame.kind));
    w.u32(static_cast<std::uint32_t>(frame.payload.size()));
    w.bytes(frame.payload);
    w.u32(crc32(frame.payload));
    return w.take();
}

std::size_t frame_size_from_header(std::span<const std::uint8_t> header, std::size_t max_payload) {
    const std::size_t magic_avail = std::min<std::size_t>(header.size(), 4);
    for (std::size_t i = 0; i < magic_avail; ++i) {
        if (header[i] != kMagic[i]) throw ProtocolError(ProtocolErrc::bad_magic, "frame magic mismatch");
    }
    if (header.size() < kFrameHeaderSize) {
        throw ProtocolError(ProtocolErrc::truncated, "incomplete frame header");
    }
    if (!is_known_kind(header[4])) {
        throw ProtocolError(ProtocolErrc::unknown_kind, "kind " + std::to_string(header[4]));
    }
    ByteReader r(header.subspan(5, 4));
    const std::uint32_t length = r.u32();
    if (length > max_payload) {
        throw ProtocolError(ProtocolErrc::oversize, "announced payload of " + std::to_string(length) + " bytes");
    }
    return kFrameHeaderSize + length + kFrameTrailerSize;
}

DecodedFrame decode_frame(std::span<const std::uint8_t> bytes, std::size_t max_payload) {
    const std::size_t total = frame_size_from_header(bytes, max_payload);
    if (bytes.size() < total) {
        throw ProtocolError(ProtocolErrc::truncated, "frame needs " + std::to_string(total) + " bytes, have " +
                                                         std::to_string(bytes.size()));
    }
    const std::size_t length = total - kFrameHeaderSize - kFrameTrailerSize;
    auto payload = bytes.subspan(kFrameHeaderSize, length);
    ByteReader tr(bytes.subspan(kFrameHeaderSize + length, kFrameTrailerSize));
    if (tr.u32() != crc32(payload)) throw ProtocolError(ProtocolErrc::bad_crc, "payload checksum mismatch");

    DecodedFrame out;
    out.frame.kind = static_cast<MessageKind>(bytes[4]);
    out.frame.payload.assign(payload.begin(), payload.end());
    out.consumed = total;
    return out;
}

void write_transition(ByteWriter& w, const Transition& t) {
    if (t.state.size() != t.next_state.size()) {
        throw ShapeError("transition state and next_state dimensions differ");
    }
    w.u32(t.actor_id);
    w.u64(t.step);
    w.u32(t.action);
    w.f64(t.reward);
    w.u8(t.terminal ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(t.state.size()));
    w.f64s(t.state);
    w.f64s(t.next_state);
}

Transition read_transition(ByteReader& r) {
    Transition t;
    t.actor_id = r.u32();
    t.step = r.u64();
    t.action = r.u32();
    t.reward = r.f64();
    const std::uint8_t terminal = r.u8();
    if (terminal > 1) throw ProtocolError(ProtocolErrc::malformed, "terminal flag must be 0 or 1");
    t.terminal = terminal == 1;
    const std::uint32_t dim = r.u32();
    t.state = r.f64s(dim);
    t.next_state = r.f64s(dim);
    return t;
}

MessageKind kind_of(const Message& msg) {
    struct Visitor {
        MessageKind operator()(const GradPush&) const { return MessageKind::grad_push; }
        MessageKind operator()(const ParamFetchReq&) const { return MessageKind::param_fetch_req; }
        MessageKind operator()(const ParamFetchResp&) const { return MessageKind::param_fetch_resp; }
        MessageKind operator()(const PutExp&) const { return MessageKind::put_exp; }
        MessageKind operator()(const SampleReq&) const { return MessageKind::sample_req; }
        MessageKind operator()(const SampleResp&) const { return MessageKind::sample_resp; }
        MessageKind operator()(const StatsReq&) const { return MessageKind::stats_req; }
        MessageKind operator()(const StatsResp&) const { return MessageKind::stats_resp; }
        MessageKind operator()(const Ack&) const { return MessageKind::ack; }
        MessageKind operator()(const ErrorMsg&) const { return MessageKind::err; }
    };
    return std::visit(Visitor{}, msg);
}

Frame encode_message(const Message& msg) {
    ByteWriter w;
    struct Visitor {
        ByteWriter& w;
        void operator()(const GradPush& m) {
            w.u64(m.base_version);
            write_slices(w, m.slices);
        }
        void operator()(const ParamFetchReq& m) {
            w.u32(static_cast<std::uint32_t>(m.shards.size()));
            std::vector<std::uint8_t> bits((m.shards.size() + 7) / 8, 0);
            for (std::size_t i = 0; i < m.shards.size(); ++i) {
                if (m.shards[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
            }
            w.bytes(bits);
        }
        void operator()(const ParamFetchResp& m) {
            w.u64(m.version);
            write_slices(w, m.slices);
        }
        void operator()(const PutExp& m) { write_transition(w, m.transition); }
        void operator()(const SampleReq& m) { w.u32(m.batch); }
        void operator()(const SampleResp& m) {
            w.u32(static_cast<std::uint32_t>(m.transitions.size()));
            for (const auto& t : m.transitions) write_transition(w, t);
        }
        void operator()(const StatsReq&) {}
        void operator()(const StatsResp& m) {
            w.u64(m.version);
            w.u64(m.applied);
            w.u64(m.discarded_stale);
            w.u32(static_cast<std::uint32_t>(m.per_shard_apply_counts.size()));
            for (auto c : m.per_shard_apply_counts) w.u64(c);
            w.u64(m.replay_size);
        }
        void operator()(const Ack& m) {
            w.u8(static_cast<std::uint8_t>(m.status));
            w.u64(m.version);
        }
        void operator()(const ErrorMsg& m) {
            w.u32(static_cast<std::uint32_t>(m.code));
            w.str(m.message);
        }
    };
    std::visit(Visitor{w}, msg);
    return Frame{kind_of(msg), w.take()};
}

Message decode_message(const Frame& frame) {
    ByteReader r(frame.payload);
    Message out;
    switch (frame.kind) {
        case MessageKind::grad_push: {
            GradPush m;
            m.base_version = r.u64();
            m.slices = read_slices(r);
            out = std::move(m);
            break;
        }
        case MessageKind::param_fetch_req: {
            ParamFetchReq m;
            const std::uint32_t n = r.u32();
            auto bits = r.raw((static_cast<std::size_t>(n) + 7) / 8);
            m.shards.resize(n);
            for (std::size_t i = 0; i < n; ++i) m.shards[i] = (bits[i / 8] >> (i % 8)) & 1u;
            if (n % 8 != 0 && (bits.back() >> (n % 8)) != 0) {
                throw ProtocolError(ProtocolErrc::malformed, "padding bits in shard bitmap must be zero");
            }
            out = std::move(m);
            break;
        }
        case MessageKind::param_fetch_resp: {
            ParamFetchResp m;
            m.version = r.u64();
            m.slices = read_slices(r);
            out = std::move(m);
            break;
        }
        case MessageKind::put_exp: out = PutExp{read_transition(r)}; break;
        case MessageKind::sample_req: out = SampleReq{r.u32()}; break;
        case MessageKind::sample_resp: {
            SampleResp m;
            const std::uint32_t n = r.u32();
            // 29 bytes is the smallest possible serialized transition.
            if (n > r.remaining() / 29) throw ProtocolError(ProtocolErrc::truncated, "transition count exceeds payload");
            m.transitions.reserve(n);
            for (std::uint32_t i = 0; i < n; ++i) m.transitions.push_back(read_transition(r));
            out = std::move(m);
            break;
        }
        case MessageKind::stats_req: out = StatsReq{}; break;
        case MessageKind::stats_resp: {
            StatsResp m;
            m.version = r.u64();
            m.applied = r.u64();
            m.discarded_stale = r.u64();
            const std::uint32_t n = r.u32();
            if (n > r.remaining() / 8) throw ProtocolError(ProtocolErrc::truncated, "shard count exceeds payload");
            m.per_shard_apply_counts.resize(n);
            for (auto& c : m.per_shard_apply_counts) c = r.u64();
            m.replay_size = r.u64();
            out = std::move(m);
            break;
        }
        case MessageKind::ack: {
            Ack m;
            const std::uint8_t status = r.u8();
            if (status > static_cast<std::uint8_t>(AckStatus::discarded_stale)) {
                throw ProtocolError(ProtocolErrc::malformed, "unknown ack status");
            }
            m.status = static_cast<AckStatus>(status);
            m.version = r.u64();
            out = m;
            break;
        }
        case MessageKind::err: {
            ErrorMsg m;
            const std::uint32_t code = r.u32();
            if (code < static_cast<std::uint32_t>(ErrCode::protocol) || code > static_cast<std::uint32_t>(ErrCode::internal)) {
                throw ProtocolError(ProtocolErrc::malformed, "unknown error code " + std::to_string(code));
            }
            m.code = static_cast<ErrCode>(code);
            m.message = r.str();
            out = std::move(m);
            break;
        }
        default:
            throw ProtocolError(ProtocolErrc::unknown_kind, "kind " + std::to_string(static_cast<int>(frame.kind)));
    }
    if (!r.done()) throw ProtocolError(ProtocolErrc::malformed, "trailing bytes in payload");
    return out;
}

}  // namespace gorila
