#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "upm/errors.hpp"
#include "upm/types.hpp"

namespace upm {

enum class PageKind : std::uint8_t {
    Anonymous = 0,
    FileBacked = 1,
    FileBackedCacheShared = 2,  // already shared by the file system layer
};

struct SnapshotPage {
    VirtAddr vaddr = 0;
    PageKind kind = PageKind::Anonymous;
    PageContent content;
};

// Captured page contents of one function instance. Pages are sorted by vaddr
// and vaddrs are unique; every content is exactly page_size bytes.
struct Snapshot {
    std::uint32_t version = 1;
    std::uint32_t page_size = kDefaultPageSize;
    std::vector<SnapshotPage> pages;
};

// Binary format, bit-exact:
//   magic "UPMSNAP1" (8 bytes)
//   u32 version = 1 (little endian), u32 page_size, u64 page_count
//   page_count records of { u64 vaddr, u8 kind, page_size content bytes }
inline constexpr std::array<char, 8> kSnapshotMagic = {'U', 'P', 'M', 'S', 'N', 'A', 'P', '1'};

Snapshot load_snapshot(const std::filesystem::path& path);
void write_snapshot(const Snapshot& snap, const std::filesystem::path& path);

// Sharing-potential classification of snapshot `a` against snapshot `b`. The
// four categories partition total_pages; matching is by exact content
// anywhere in b (address-independent).
struct SharingReport {
    std::uint64_t total_pages = 0;
    std::uint64_t volatile_pages = 0;
    std::uint64_t cache_shared_pages = 0;
    std::uint64_t shareable_anonymous_pages = 0;
    std::uint64_t shareable_file_backed_pages = 0;
    double volatile_pct = 0;
    double cache_shared_pct = 0;
    double shareable_anonymous_pct = 0;
    double shareable_file_backed_pct = 0;
};

SharingReport classify(const Snapshot& a, const Snapshot& b);

// Histogram of per-page similarity of `a` against its best aligned-segment
// match in `b`, binned at {0, 25, 50, 75, 100} percent. Pages with an exact
// content match land in the 100 bin; the rest floor to the highest bin not
// exceeding their best matching-segment fraction.
using SubpageHistogram = std::map<int, std::uint64_t>;

SubpageHistogram subpage_similarity(const Snapshot& a, const Snapshot& b,
                                    std::uint32_t segment_size = 1024);

// Upper bound for ideal content dedup across the snapshots: bytes of
// non-cache-shared pages minus one page per distinct content.
std::uint64_t dedup_potential(const std::vector<Snapshot>& snapshots);

}  // namespace upm
