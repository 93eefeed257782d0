#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace bertkit::text {

// MD5 (RFC 1321). Used only as a fast 128-bit fingerprint for window and
// file digests; collision resistance is irrelevant here.

struct Digest128 {
    uint64_t lo = 0;
    uint64_t hi = 0;
    friend bool operator==(const Digest128&, const Digest128&) = default;
    friend auto operator<=>(const Digest128&, const Digest128&) = default;
};

struct Digest128Hash {
    size_t operator()(const Digest128& d) const noexcept {
        return static_cast<size_t>(d.lo ^ (d.hi * 0x9e3779b97f4a7c15ull));
    }
};

namespace detail {

inline uint32_t rotl32(uint32_t x, int c) { return (x << c) | (x >> (32 - c)); }

inline constexpr std::array<uint32_t, 64> kMd5K = {
    0xd76aa478u, 0xe8c7b756u, 0x242070dbu, 0xc1bdceeeu, 0xf57c0fafu, 0x4787c62au,
    0xa8304613u, 0xfd469501u, 0x698098d8u, 0x8b44f7afu, 0xffff5bb1u, 0x895cd7beu,
    0x6b901122u, 0xfd987193u, 0xa679438eu, 0x49b40821u, 0xf61e2562u, 0xc040b340u,
    0x265e5a51u, 0xe9b6c7aau, 0xd62f105du, 0x02441453u, 0xd8a1e681u, 0xe7d3fbc8u,
    0x21e1cde6u, 0xc33707d6u, 0xf4d50d87u, 0x455a14edu, 0xa9e3e905u, 0xfcefa3f8u,
    0x676f02d9u, 0x8d2a4c8au, 0xfffa3942u, 0x8771f681u, 0x6d9d6122u, 0xfde5380cu,
    0xa4beea44u, 0x4bdecfa9u, 0xf6bb4b60u, 0xbebfbc70u, 0x289b7ec6u, 0xeaa127fau,
    0xd4ef3085u, 0x04881d05u, 0xd9d4d039u, 0xe6db99e5u, 0x1fa27cf8u, 0xc4ac5665u,
    0xf4292244u, 0x432aff97u, 0xab9423a7u, 0xfc93a039u, 0x655b59c3u, 0x8f0ccc92u,
    0xffeff47du, 0x85845dd1u, 0x6fa87e4fu, 0xfe2ce6e0u, 0xa3014314u, 0x4e0811a1u,
    0xf7537e82u, 0xbd3af235u, 0x2ad7d2bbu, 0xeb86d391u};

inline constexpr std::array<int, 64> kMd5S = {
    7, 12, 17, 22, 7, 12, 17, 22, 7, 12, 17, 22, 7, 12, 17, 22,
    5, 9,  14, 20, 5, 9,  14, 20, 5, 9,  14, 20, 5, 9,  14, 20,
    4, 11, 16, 23, 4, 11, 16, 23, 4, 11, 16, 23, 4, 11, 16, 23,
    6, 10, 15, 21, 6, 10, 15, 21, 6, 10, 15, 21, 6, 10, 15, 21};

inline void md5_block(const unsigned char* p, uint32_t state[4]) {
    uint32_t m[16];
    for (int i = 0; i < 16; ++i) {
        m[i] = static_cast<uint32_t>(p[4 * i]) | (static_cast<uint32_t>(p[4 * i + 1]) << 8) |
               (static_cast<uint32_t>(p[4 * i + 2]) << 16) |
               (static_cast<uint32_t>(p[4 * i + 3]) << 24);
    }
    uint32_t a = state[0], b = state[1], c = state[2], d = state[3];
    for (int i = 0; i < 64; ++i) {
        uint32_t f;
        int g;
        if (i < 16) {
            f = (b & c) | (~b & d);
            g = i;
        } else if (i < 32) {
            f = (d & b) | (~d & c);
            g = (5 * i + 1) % 16;
        } else if (i < 48) {
            f = b ^ c ^ d;
            g = (3 * i + 5) % 16;
        } else {
            f = c ^ (b | ~d);
            g = (7 * i) % 16;
        }
        const uint32_t tmp = d;
        d = c;
        c = b;
        b = b + rotl32(a + f + kMd5K[i] + m[g], kMd5S[i]);
        a = tmp;
    }
    state[0] += a;
    state[1] += b;
    state[2] += c;
    state[3] += d;
}

}  // namespace detail

inline std::array<unsigned char, 16> md5(std::string_view data) {
    uint32_t state[4] = {0x67452301u, 0xefcdab89u, 0x98badcfeu, 0x10325476u};
    const size_t n = data.size();
    size_t i = 0;
    for (; i + 64 <= n; i += 64) {
        detail::md5_block(reinterpret_cast<const unsigned char*>(data.data()) + i, state);
    }
    unsigned char tail[128] = {0};
    const size_t rem = n - i;
    std::memcpy(tail, data.data() + i, rem);
    tail[rem] = 0x80;
    const size_t tail_len = (rem < 56) ? 64 : 128;
    const uint64_t bits = static_cast<uint64_t>(n) * 8;
    for (int k = 0; k < 8; ++k) {
        tail[tail_len - 8 + k] = static_cast<unsigned char>(bits >> (8 * k));
    }
    detail::md5_block(tail, state);
    if (tail_len == 128) detail::md5_block(tail + 64, state);

    std::array<unsigned char, 16> out;
    for (int w = 0; w < 4; ++w) {
        for (int k = 0; k < 4; ++k) {
            out[4 * w + k] = static_cast<unsigned char>(state[w] >> (8 * k));
        }
    }
    return out;
}

inline Digest128 md5_digest(std::string_view data) {
    const auto raw = md5(data);
    Digest128 d;
    for (int k = 0; k < 8; ++k) d.lo |= static_cast<uint64_t>(raw[k]) << (8 * k);
    for (int k = 0; k < 8; ++k) d.hi |= static_cast<uint64_t>(raw[8 + k]) << (8 * k);
    return d;
}

inline std::string md5_hex(std::string_view data) {
    static constexpr char kHex[] = "0123456789abcdef";
    const auto raw = md5(data);
    std::string out;
    out.reserve(32);
    for (unsigned char b : raw) {
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0x0f]);
    }
    return out;
}

}  // namespace bertkit::text
