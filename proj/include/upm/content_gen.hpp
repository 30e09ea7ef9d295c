#pragma once

#include <cstdint>
#include <span>

#include "upm/address_space.hpp"
#include "upm/types.hpp"

namespace upm {

// Deterministic page-content streams for the simulator. The shared role
// yields identical bytes for every container; private and volatile roles are
// pairwise distinct across containers and invocations.
enum class ContentRole { Shared, Private, Volatile };

// Sub-seed for (role, container, invocation); the shared role ignores both.
std::uint64_t derive_stream_seed(std::uint64_t seed, ContentRole role,
                                 std::uint64_t container_id = 0, std::uint64_t invocation = 0);

// Fills out with the stream's bytes starting at byte offset page_index * out.size().
void fill_stream_page(std::uint64_t stream_seed, std::uint64_t page_index,
                      std::span<std::uint8_t> out);

ContentSource stream_source(std::uint64_t stream_seed);

}  // namespace upm
