#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "upm/address_space.hpp"
#include "upm/types.hpp"

namespace upm {

// Engine configuration record (serializable; see report_json.hpp).
struct EngineConfig {
    std::size_t page_size = kDefaultPageSize;
    std::uint64_t budget_bytes = 200ull * 1024 * 1024;  // advised-memory sizing budget
    std::uint64_t hash_seed = 0x75706d2d73656564ULL;    // pinned; equal content => equal hash
    bool synchronous = true;

    // Bucket array sized for budget_bytes of advised pages, grown by the 1.3
    // load coefficient. Integer arithmetic so 200 MiB / 4 KiB lands on 66,560.
    std::uint64_t bucket_count() const {
        std::uint64_t pages = budget_bytes / page_size;
        std::uint64_t buckets = (pages * 13 + 9) / 10;
        return buckets < 1 ? 1 : buckets;
    }
};

// Record of one advised page, chained per bucket of the stable table.
// Accounting model: 48 bytes per entry (vaddr 8, page + memory-descriptor
// pointers 8 + 8, list pointers 16, hash 8).
struct StableEntry {
    std::uint64_t hash64 = 0;
    VirtAddr vaddr = 0;
    MmId mm_id = 0;
    FrameId frame_id = 0;
};

// Reversed mapping: (mm_id, vaddr) -> last advised hash. Detects re-advises
// of unchanged pages and stale re-advises with new content. Also 48 bytes in
// the accounting model (vaddr 8, hash 8, mm 8, pid 8, list pointers 16).
struct ReverseEntry {
    MmId mm_id = 0;
    VirtAddr vaddr = 0;
    ProcessId pid = 0;
    std::uint64_t hash64 = 0;
};

enum class StaleReason { NotPresent, FrameMoved, HashMismatch };

struct VerifyResult {
    bool valid = false;
    StaleReason reason = StaleReason::NotPresent;
};

// Durations in nanoseconds for the named parts of an advise call. The six
// named rows plus "other" partition total_ns exactly (lock wait is measured
// at acquisition and excluded from the enclosing phase).
struct PhaseTimings {
    std::uint64_t stable_search_ns = 0;
    std::uint64_t hash_ns = 0;
    std::uint64_t reverse_search_ns = 0;
    std::uint64_t merge_ns = 0;
    std::uint64_t insert_ns = 0;
    std::uint64_t lock_wait_ns = 0;
    std::uint64_t total_ns = 0;

    std::uint64_t other_ns() const {
        std::uint64_t named =
            stable_search_ns + hash_ns + reverse_search_ns + merge_ns + insert_ns + lock_wait_ns;
        return total_ns > named ? total_ns - named : 0;
    }
    PhaseTimings& operator+=(const PhaseTimings& o);
};

// Phase names as reported (metrics and JSON output).
namespace phase_names {
inline constexpr const char* kStableSearch = "Search in Hash Table";
inline constexpr const char* kHash = "Calculate Hash";
inline constexpr const char* kReverseSearch = "Search in Reversed Hash Table";
inline constexpr const char* kMerge = "Merge Pages";
inline constexpr const char* kInsert = "Add Page to Hash Table";
inline constexpr const char* kLockWait = "Spin Locks";
inline constexpr const char* kOther = "Other";
}  // namespace phase_names

struct AdviseReport {
    std::uint64_t pages_scanned = 0;
    std::uint64_t pages_inserted = 0;
    std::uint64_t pages_merged = 0;
    std::uint64_t pages_skipped_unchanged = 0;
    std::uint64_t stale_entries_replaced = 0;
    std::uint64_t bytes_saved = 0;
    std::uint64_t merge_aborts = 0;
    PhaseTimings phase_timings;

    AdviseReport& operator+=(const AdviseReport& o);
};

struct CleanupReport {
    std::uint64_t reverse_removed = 0;
    std::uint64_t stable_removed = 0;
};

// Space accounting per the fixed model: static bucket array at 8 bytes per
// bucket, 48 + 48 bytes per live advised page (both tables), independent of
// the host allocator's real sizes.
struct OverheadReport {
    std::uint64_t static_bytes = 0;
    std::uint64_t per_entry_bytes = 96;
    std::uint64_t total_bytes = 0;
    std::uint64_t live_entries = 0;     // advised pages alive = reverse entries
    std::uint64_t stable_entries = 0;   // raw table counts
    std::uint64_t reverse_entries = 0;
};

// User-guided page-merging engine: stable hash table (separate chaining),
// reversed table, validity verification, write protection and copy-on-write
// merging, plus exit-time cleanup. Thread-safe; advise may run concurrently
// from multiple containers. Lock order is tables -> memory system, and the
// test interleaving hook fires with no engine lock held.
class DedupEngine {
public:
    DedupEngine(MemorySystem& mem, EngineConfig config = {});
    ~DedupEngine();
    DedupEngine(const DedupEngine&) = delete;
    DedupEngine& operator=(const DedupEngine&) = delete;

    const EngineConfig& config() const { return config_; }

    // Synchronous: returns only after every page in the (page-rounded) range
    // has been hashed and either skipped, merged, or inserted.
    AdviseReport advise(ProcessId pid, VirtAddr vaddr, std::uint64_t length);

    // Valid iff the mapping still exists and is present, still references
    // entry.frame_id, and the content hash is unchanged. Stale entries are
    // removed from both tables as a side effect.
    VerifyResult verify_entry(const StableEntry& entry);

    void write_protect(ProcessId pid, VirtAddr vaddr);

    // Commits a verified, byte-identical pair: repoints the target PTE onto
    // the source frame after the final descriptor comparison. Throws
    // MergeAborted when a CoW fault slipped in; the caller re-runs the
    // per-page loop for that page.
    void merge_pages(ProcessId target_pid, VirtAddr target_vaddr, const StableEntry& source);

    CleanupReport cleanup_process(ProcessId pid);

    OverheadReport table_overhead() const;

    std::uint64_t compute_hash(std::span<const std::uint8_t> content) const;

    // --- stats / introspection ---
    std::uint64_t stable_entry_count() const;
    std::uint64_t reverse_entry_count() const;
    std::vector<StableEntry> stable_entries() const;    // sorted (mm, vaddr)
    std::vector<ReverseEntry> reverse_entries() const;  // sorted (mm, vaddr)
    std::uint64_t merge_abort_count() const;

    // Completed advise reports, oldest first (bounded history).
    std::vector<AdviseReport> advise_history(std::size_t last_n = 0) const;

    // --- test hooks ---
    // Fires between the byte comparison and the descriptor-checked merge,
    // with no engine or memory lock held; receives the merge target page.
    using MergeInterleaveHook = std::function<void(ProcessId pid, VirtAddr vaddr)>;
    void set_merge_interleave_hook(MergeInterleaveHook hook);
    // Replaces the content hash (e.g. a constant, to force collisions).
    void set_hash_override_for_testing(std::function<std::uint64_t(std::span<const std::uint8_t>)> fn);

private:
    struct PageOutcome {
        enum class Kind { Skipped, Merged, Inserted, Retry } kind;
    };

    PageOutcome::Kind process_page(ProcessId pid, MmId mm, VirtAddr vaddr, AdviseReport& report,
                                   bool& stale_counted);
    VerifyResult verify_locked(const StableEntry& entry);
    void erase_stable_locked(std::uint64_t hash, MmId mm, VirtAddr vaddr);
    StableEntry* find_stable_locked(std::uint64_t hash, MmId mm, VirtAddr vaddr);
    std::uint64_t bucket_of(std::uint64_t hash) const { return hash % buckets_.size(); }
    std::uint64_t hash_page_or_throw(MmId mm, VirtAddr vaddr) const;
    void record_report(const AdviseReport& report);

    MemorySystem& mem_;
    const EngineConfig config_;

    mutable std::mutex table_mu_;
    std::vector<std::vector<StableEntry>> buckets_;

    struct ReverseKey {
        MmId mm;
        VirtAddr vaddr;
        bool operator==(const ReverseKey&) const = default;
    };
    struct ReverseKeyHash {
        std::size_t operator()(const ReverseKey& k) const {
            return std::hash<std::uint64_t>()(k.mm * 0x9e3779b97f4a7c15ULL ^ k.vaddr);
        }
    };
    std::unordered_map<ReverseKey, ReverseEntry, ReverseKeyHash> reverse_;

    MergeInterleaveHook interleave_hook_;
    std::function<std::uint64_t(std::span<const std::uint8_t>)> hash_override_;
    std::uint64_t merge_aborts_total_ = 0;

    static constexpr std::size_t kMaxHistory = 65536;
    std::deque<AdviseReport> history_;
};

}  // namespace upm
