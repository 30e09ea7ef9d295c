#include "upm/content_gen.hpp"

#include <cstring>

namespace upm {

namespace {

// splitmix64: full-period 64-bit generator, one multiply-shift chain per block.
std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix64(s);
}

}  // namespace

std::uint64_t derive_stream_seed(std::uint64_t seed, ContentRole role,
                                 std::uint64_t container_id, std::uint64_t invocation) {
    switch (role) {
        case ContentRole::Shared:
            return mix(seed, 0x5348415245440000ULL);  // container-independent
        case ContentRole::Private:
            return mix(mix(seed, 0x5052495641544500ULL), container_id);
        case ContentRole::Volatile:
            return mix(mix(mix(seed, 0x564f4c4154494c45ULL), container_id), invocation);
    }
    return seed;
}

void fill_stream_page(std::uint64_t stream_seed, std::uint64_t page_index,
                      std::span<std::uint8_t> out) {
    // Counter mode: the state depends only on (seed, absolute block index), so
    // any page can be generated independently.
    std::uint64_t base_block = page_index * (out.size() / 8 + 1);
    std::size_t i = 0;
    std::uint64_t block = base_block;
    while (i < out.size()) {
        std::uint64_t st = stream_seed ^ (block * 0xd6e8feb86659fd93ULL);
        std::uint64_t word = splitmix64(st);
        std::size_t n = std::min<std::size_t>(8, out.size() - i);
        std::memcpy(out.data() + i, &word, n);
        i += n;
        ++block;
    }
}

ContentSource stream_source(std::uint64_t stream_seed) {
    return [stream_seed](std::uint64_t page_index, std::span<std::uint8_t> out) {
        fill_stream_page(stream_seed, page_index, out);
    };
}

}  // namespace upm
