#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>

// One-shot XXH64. Endian-independent (little-endian reads via memcpy), seedable.

namespace upm {

namespace xxh_detail {

inline constexpr std::uint64_t kPrime1 = 11400714785074694791ULL;
inline constexpr std::uint64_t kPrime2 = 14029467366897019727ULL;
inline constexpr std::uint64_t kPrime3 = 1609587929392839161ULL;
inline constexpr std::uint64_t kPrime4 = 9650029242287828579ULL;
inline constexpr std::uint64_t kPrime5 = 2870177450012600261ULL;

inline std::uint64_t rotl(std::uint64_t x, int r) { return (x << r) | (x >> (64 - r)); }

inline std::uint64_t read64(const std::uint8_t* p) {
    std::uint64_t v;
    std::memcpy(&v, p, sizeof v);
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    v = __builtin_bswap64(v);
#endif
    return v;
}

inline std::uint32_t read32(const std::uint8_t* p) {
    std::uint32_t v;
    std::memcpy(&v, p, sizeof v);
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    v = __builtin_bswap32(v);
#endif
    return v;
}

inline std::uint64_t round_step(std::uint64_t acc, std::uint64_t lane) {
    acc += lane * kPrime2;
    acc = rotl(acc, 31);
    return acc * kPrime1;
}

inline std::uint64_t merge_round(std::uint64_t acc, std::uint64_t val) {
    acc ^= round_step(0, val);
    return acc * kPrime1 + kPrime4;
}

}  // namespace xxh_detail

inline std::uint64_t xxhash64(const void* data, std::size_t len, std::uint64_t seed) {
    using namespace xxh_detail;
    const auto* p = static_cast<const std::uint8_t*>(data);
    const std::uint8_t* const end = p + len;
    std::uint64_t h;

    if (len >= 32) {
        std::uint64_t v1 = seed + kPrime1 + kPrime2;
        std::uint64_t v2 = seed + kPrime2;
        std::uint64_t v3 = seed;
        std::uint64_t v4 = seed - kPrime1;
        do {
            v1 = round_step(v1, read64(p));
            v2 = round_step(v2, read64(p + 8));
            v3 = round_step(v3, read64(p + 16));
            v4 = round_step(v4, read64(p + 24));
            p += 32;
        } while (p + 32 <= end);
        h = rotl(v1, 1) + rotl(v2, 7) + rotl(v3, 12) + rotl(v4, 18);
        h = merge_round(h, v1);
        h = merge_round(h, v2);
        h = merge_round(h, v3);
        h = merge_round(h, v4);
    } else {
        h = seed + kPrime5;
    }

    h += static_cast<std::uint64_t>(len);

    while (p + 8 <= end) {
        h ^= round_step(0, read64(p));
        h = rotl(h, 27) * kPrime1 + kPrime4;
        p += 8;
    }
    if (p + 4 <= end) {
        h ^= static_cast<std::uint64_t>(read32(p)) * kPrime1;
        h = rotl(h, 23) * kPrime2 + kPrime3;
        p += 4;
    }
    while (p < end) {
        h ^= static_cast<std::uint64_t>(*p) * kPrime5;
        h = rotl(h, 11) * kPrime1;
        ++p;
    }

    h ^= h >> 33;
    h *= kPrime2;
    h ^= h >> 29;
    h *= kPrime3;
    h ^= h >> 32;
    return h;
}

inline std::uint64_t xxhash64(std::span<const std::uint8_t> data, std::uint64_t seed) {
    return xxhash64(data.data(), data.size(), seed);
}

}  // namespace upm
