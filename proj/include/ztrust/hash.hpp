// SHA-256 digests over canonical little-endian byte serializations, plus
// the seed-derivation scheme used for all per-device/per-round randomness.
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

namespace ztrust {

using Hash32 = std::array<std::uint8_t, 32>;

inline Hash32 sha256(std::span<const std::uint8_t> bytes) {
    Hash32 out{};
    unsigned int len = 0;
    static const std::uint8_t empty = 0;
    const std::uint8_t* data = bytes.empty() ? &empty : bytes.data();
    if (EVP_Digest(data, bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != out.size()) {
        throw std::runtime_error("sha256: digest computation failed");
    }
    return out;
}

// Canonical serialization sink. Field order is fixed by each caller; all
// integers little-endian, doubles as their IEEE-754 bit pattern.
class ByteSink {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }

    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void raw(std::span<const std::uint8_t> data) {
        bytes_.insert(bytes_.end(), data.begin(), data.end());
    }

    void str(std::string_view s) {
        u64(s.size());
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

    Hash32 digest() const { return sha256(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (std::uint8_t b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

inline std::vector<std::uint8_t> from_hex(std::string_view hex) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    if (hex.size() % 2 != 0) {
        throw std::invalid_argument("from_hex: odd-length hex string");
    }
    std::vector<std::uint8_t> out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = nibble(hex[2 * i]);
        int lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) {
            throw std::invalid_argument("from_hex: invalid hex digit");
        }
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

inline Hash32 hash_from_hex(std::string_view hex) {
    auto raw = from_hex(hex);
    if (raw.size() != 32) {
        throw std::invalid_argument("hash_from_hex: expected 32 bytes");
    }
    Hash32 out;
    std::memcpy(out.data(), raw.data(), 32);
    return out;
}

// seed(master, a, b, purpose) = first 8 bytes (LE) of
// SHA-256(LE64(master) || LE64(a) || LE64(b) || len-prefixed purpose).
// Every stochastic draw in the simulator flows from master_seed through here.
inline std::uint64_t derive_seed(std::uint64_t master, std::int64_t a, std::int64_t b,
                                 std::string_view purpose) {
    ByteSink sink;
    sink.u64(master);
    sink.i64(a);
    sink.i64(b);
    sink.str(purpose);
    Hash32 h = sink.digest();
    std::uint64_t seed = 0;
    for (int i = 0; i < 8; ++i) {
        seed |= static_cast<std::uint64_t>(h[i]) << (8 * i);
    }
    return seed;
}

}  // namespace ztrust
