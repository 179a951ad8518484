#include <gtest/gtest.h>

#include "gorila/errors.hpp"
#include "gorila/wire.hpp"
#include "support/message_gen.hpp"

namespace gorila {
namespace {

using Bytes = std::vector<std::uint8_t>;

// Golden frames, computed independently with Python's struct and zlib.crc32.
// They are the worked examples in docs/wire.md.
const Bytes kAckAccepted5 = {0x47, 0x52, 0x4c, 0x31, 0x09, 0x09, 0x00, 0x00, 0x00, 0x01, 0x05,
                             0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x89, 0x0e, 0x92, 0xb9};
const Bytes kGradPush = {0x47, 0x52, 0x4c, 0x31, 0x01, 0x28, 0x00, 0x00, 0x00, 0x03, 0x00, 0x00, 0x00, 0x00, 0x00,
                         0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x00,
                         0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xe0, 0x3f, 0x00, 0x00, 0x00, 0x00,
                         0x00, 0x00, 0xf0, 0xbf, 0x74, 0xf3, 0xd2, 0x61};
const Bytes kFetchShards0And2And9 = {0x47, 0x52, 0x4c, 0x31, 0x02, 0x06, 0x00, 0x00, 0x00, 0x0a,
                                     0x00, 0x00, 0x00, 0x05, 0x02, 0xac, 0x17, 0x20, 0x83};
const Bytes kErrEmpty = {0x47, 0x52, 0x4c, 0x31, 0x0a, 0x0d, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00,
                         0x05, 0x00, 0x00, 0x00, 0x65, 0x6d, 0x70, 0x74, 0x79, 0x5f, 0x7c, 0x5a, 0x8b};
const Bytes kStatsReq = {0x47, 0x52, 0x4c, 0x31, 0x07, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00};

Bytes encode(const Message& m) { return encode_frame(encode_message(m)); }

ProtocolErrc decode_error(const Bytes& bytes) {
    try {
        decode_message(decode_frame(bytes).frame);
    } catch (const ProtocolError& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected a ProtocolError";
    return ProtocolErrc::malformed;
}

TEST(Wire, GoldenFrames) {
    EXPECT_EQ(encode(Ack{AckStatus::accepted, 5}), kAckAccepted5);
    EXPECT_EQ(encode(GradPush{3, {ShardSlice{2, {0.5, -1.0}}}}), kGradPush);
    ParamFetchReq fetch;
    fetch.shards.assign(10, false);
    fetch.shards[0] = fetch.shards[2] = fetch.shards[9] = true;
    EXPECT_EQ(encode(fetch), kFetchShards0And2And9);
    EXPECT_EQ(encode(ErrorMsg{ErrCode::not_ready, "empty"}), kErrEmpty);
    EXPECT_EQ(encode(StatsReq{}), kStatsReq);
}

TEST(Wire, GoldenFramesDecode) {
    EXPECT_EQ(decode_message(decode_frame(kAckAccepted5).frame), Message(Ack{AckStatus::accepted, 5}));
    EXPECT_EQ(decode_message(decode_frame(kGradPush).frame), Message(GradPush{3, {ShardSlice{2, {0.5, -1.0}}}}));
    const auto fetch = std::get<ParamFetchReq>(decode_message(decode_frame(kFetchShards0And2And9).frame));
    const std::vector<bool> want = {true, false, true, false, false, false, false, false, false, true};
    EXPECT_EQ(fetch.shards, want);
}

TEST(Wire, Crc32KnownVector) {
    const std::string s = "123456789";
    EXPECT_EQ(crc32(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())), 0xCBF43926u);
}

TEST(Wire, RandomMessagesRoundTrip) {
    oracle::MessageGenerator gen(1);
    for (int i = 0; i < 5000; ++i) {
        const Message m = gen.next();
        const auto bytes = encode(m);
        const auto d = decode_frame(bytes);
        EXPECT_EQ(d.consumed, bytes.size());
        EXPECT_EQ(decode_message(d.frame), m);
    }
}

TEST(Wire, RawDoubleBitsSurvive) {
    oracle::MessageGenerator gen(2, true);
    for (int i = 0; i < 2000; ++i) {
        const auto bytes = encode(gen.next());
        EXPECT_EQ(encode(decode_message(decode_frame(bytes).frame)), bytes);
    }
}

TEST(Wire, DecodesFirstFrameOfAStream) {
    Bytes stream = kAckAccepted5;
    stream.insert(stream.end(), kStatsReq.begin(), kStatsReq.end());
    const auto first = decode_frame(stream);
    EXPECT_EQ(first.consumed, kAckAccepted5.size());
    const auto second = decode_frame(std::span(stream).subspan(first.consumed));
    EXPECT_EQ(second.frame.kind, MessageKind::stats_req);
}

TEST(Wire, FrameErrors) {
    auto bad_magic = kAckAccepted5;
    bad_magic[0] = 'X';
    EXPECT_EQ(decode_error(bad_magic), ProtocolErrc::bad_magic);

    auto bad_kind = kAckAccepted5;
    bad_kind[4] = 0;
    EXPECT_EQ(decode_error(bad_kind), ProtocolErrc::unknown_kind);
    bad_kind[4] = 11;
    EXPECT_EQ(decode_error(bad_kind), ProtocolErrc::unknown_kind);

    auto bad_crc = kAckAccepted5;
    bad_crc.back() ^= 1;
    EXPECT_EQ(decode_error(bad_crc), ProtocolErrc::bad_crc);

    auto flipped_payload = kAckAccepted5;
    flipped_payload[12] ^= 0x80;
    EXPECT_EQ(decode_error(flipped_payload), ProtocolErrc::bad_crc);

    for (std::size_t n = 0; n < kAckAccepted5.size(); ++n) {
        const Bytes cut(kAckAccepted5.begin(), kAckAccepted5.begin() + static_cast<std::ptrdiff_t>(n));
        EXPECT_EQ(decode_error(cut), ProtocolErrc::truncated) << "prefix of " << n << " bytes";
    }
}

TEST(Wire, OversizeIsRejectedBothWays) {
    Frame big{MessageKind::ack, Bytes(100, 0)};
    EXPECT_THROW(encode_frame(big, 99), ProtocolError);
    const auto bytes = encode_frame(big);
    try {
        decode_frame(bytes, 99);
        FAIL();
    } catch (const ProtocolError& e) {
        EXPECT_EQ(e.code(), ProtocolErrc::oversize);
    }
}

TEST(Wire, MessageErrors) {
    auto reframe = [](MessageKind kind, Bytes payload) { return encode_frame(Frame{kind, std::move(payload)}); };
    // Ack with an unknown status.
    EXPECT_EQ(decode_error(reframe(MessageKind::ack, {7, 0, 0, 0, 0, 0, 0, 0, 0})), ProtocolErrc::malformed);
    // Trailing byte after a complete Ack.
    EXPECT_EQ(decode_error(reframe(MessageKind::ack, {1, 0, 0, 0, 0, 0, 0, 0, 0, 0})), ProtocolErrc::malformed);
    // Short Ack.
    EXPECT_EQ(decode_error(reframe(MessageKind::ack, {1, 0})), ProtocolErrc::truncated);
    // Unknown error code.
    EXPECT_EQ(decode_error(reframe(MessageKind::err, {9, 0, 0, 0, 0, 0, 0, 0})), ProtocolErrc::malformed);
    // Nonzero bitmap padding: 3 bits announced, bit 5 set.
    EXPECT_EQ(decode_error(reframe(MessageKind::param_fetch_req, {3, 0, 0, 0, 0x21})), ProtocolErrc::malformed);
    // Slice count far beyond the payload.
    EXPECT_EQ(decode_error(reframe(MessageKind::grad_push, {0, 0, 0, 0, 0, 0, 0, 0, 0xff, 0xff, 0xff, 0xff})),
              ProtocolErrc::truncated);
    // Slice length far beyond the payload.
    Bytes huge = {0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0};
    huge.insert(huge.end(), {0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0x7f});
    EXPECT_EQ(decode_error(reframe(MessageKind::grad_push, huge)), ProtocolErrc::truncated);
    // Terminal flag other than 0/1.
    Transition t;
    t.state = {1.0};
    t.next_state = {2.0};
    auto put = encode_message(PutExp{t});
    put.payload[24] = 2;
    EXPECT_EQ(decode_error(encode_frame(put)), ProtocolErrc::malformed);
}

TEST(Wire, TransitionStateDimensionsMustAgree) {
    Transition t;
    t.state = {1.0};
    EXPECT_THROW(encode_message(PutExp{t}), ShapeError);
}

TEST(Wire, EmptyTransitionsInSampleResponses) {
    SampleResp m;
    m.transitions.resize(3);
    EXPECT_EQ(decode_message(encode_message(m)), Message(m));
}

TEST(Wire, AcceptedInputsAreCanonical) {
    // Any byte string that decodes re-encodes to exactly the same bytes.
    oracle::MessageGenerator gen(3);
    std::mt19937_64 rng(4);
    int accepted = 0;
    for (int i = 0; i < 20000; ++i) {
        Frame f = encode_message(gen.next());
        if (f.payload.empty()) continue;
        f.payload[rng() % f.payload.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
        try {
            const Message m = decode_message(f);
            EXPECT_EQ(encode_message(m).payload, f.payload);
            ++accepted;
        } catch (const ProtocolError&) {
        }
    }
    EXPECT_GT(accepted, 0);
}

}  // namespace
}  // namespace gorila
