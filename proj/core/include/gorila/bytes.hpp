#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gorila/errors.hpp"

namespace gorila {

static_assert(std::endian::native == std::endian::little,
              "wire and file formats assume a little-endian host");

// Little-endian append-only encoder.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) { put(&v, sizeof v); }
    void u64(std::uint64_t v) { put(&v, sizeof v); }
    void f64(double v) { put(&v, sizeof v); }

    void f64s(std::span<const double> vs) { put(vs.data(), vs.size_bytes()); }

    void bytes(std::span<const std::uint8_t> bs) { put(bs.data(), bs.size()); }

    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        put(s.data(), s.size());
    }

    std::vector<std::uint8_t>& buffer() noexcept { return buf_; }
    std::vector<std::uint8_t> take() noexcept { return std::move(buf_); }

private:
    void put(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }

    std::vector<std::uint8_t> buf_;
};

// Bounds-checked little-endian decoder. Running past the end throws
// ProtocolError(truncated).
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() {
        std::uint8_t v;
        get(&v, sizeof v);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        get(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        get(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        get(&v, sizeof v);
        return v;
    }

    std::vector<double> f64s(std::uint64_t n) {
        if (n > remaining() / sizeof(double)) {
            throw ProtocolError(ProtocolErrc::truncated, "f64 array exceeds remaining bytes");
        }
        std::vector<double> out(static_cast<std::size_t>(n));
        get(out.data(), out.size() * sizeof(double));
        return out;
    }

    std::string str() {
        const std::uint32_t n = u32();
        if (n > remaining()) {
            throw ProtocolError(ProtocolErrc::truncated, "string exceeds remaining bytes");
        }
        std::string s(n, '\0');
        get(s.data(), n);
        return s;
    }

    std::span<const std::uint8_t> raw(std::size_t n) {
        if (n > remaining()) {
            throw ProtocolError(ProtocolErrc::truncated, "raw span exceeds remaining bytes");
        }
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }
    bool done() const noexcept { return pos_ == data_.size(); }

private:
    void get(void* p, std::size_t n) {
        if (n > remaining()) {
            throw ProtocolError(ProtocolErrc::truncated, "read past end of buffer");
        }
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace gorila
