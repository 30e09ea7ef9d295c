#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace upm {

using ProcessId = std::uint64_t;
using MmId = std::uint64_t;      // memory-descriptor id, identifies an address space
using FrameId = std::uint64_t;
using VirtAddr = std::uint64_t;

// One page worth of bytes; length is always exactly the system page size.
using PageContent = std::vector<std::uint8_t>;

inline constexpr std::size_t kDefaultPageSize = 4096;

constexpr bool is_power_of_two(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

constexpr std::uint64_t pages_for(std::uint64_t length, std::size_t page_size) {
    return (length + page_size - 1) / page_size;
}

}  // namespace upm
