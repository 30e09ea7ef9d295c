#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "upm/errors.hpp"
#include "upm/types.hpp"

namespace upm {

struct PageTableEntry {
    FrameId frame_id = 0;
    bool present = false;
    bool writable = false;
};

struct WriteOutcome {
    enum class Kind { InPlace, CowBroken };
    Kind kind = Kind::InPlace;
    FrameId new_frame_id = 0;  // set when kind == CowBroken

    bool cow_broken() const { return kind == Kind::CowBroken; }
};

// Fills one page of a fresh mapping. page_index counts from the start of the
// mapped range; out is exactly page_size bytes.
using ContentSource = std::function<void(std::uint64_t page_index, std::span<std::uint8_t> out)>;

ContentSource constant_fill(std::uint8_t value);
ContentSource buffer_fill(std::vector<std::uint8_t> bytes);  // repeats/truncates to range

// Consistent copy of frame and page-table state (no page contents), taken
// under the system lock so invariant scans and PSS see one instant.
struct MemorySnapshot {
    std::size_t page_size = kDefaultPageSize;
    struct FrameInfo {
        FrameId id;
        std::uint32_t refcount;
        bool write_protected;
    };
    struct ProcessInfo {
        ProcessId pid;
        MmId mm_id;
        bool upm_used;
        std::vector<std::pair<VirtAddr, PageTableEntry>> pages;  // sorted by vaddr
    };
    std::vector<FrameInfo> frames;
    std::vector<ProcessInfo> processes;
};

struct PteView {
    FrameId frame_id;
    bool present;
    bool writable;
};

// Outcome of the final descriptor-checked PTE repoint that commits a merge.
enum class RepointStatus { Ok, TargetChanged, SourceChanged, AlreadyShared };

// Simulated physical frames plus per-process page tables with copy-on-write
// fault handling. All public operations are thread-safe and linearizable at
// page granularity (single internal lock).
class MemorySystem {
public:
    explicit MemorySystem(std::size_t page_size = kDefaultPageSize);

    std::size_t page_size() const { return page_size_; }

    ProcessId create_process();
    void map_anonymous(ProcessId pid, VirtAddr vaddr, std::uint64_t length, const ContentSource& src);
    std::vector<std::uint8_t> read(ProcessId pid, VirtAddr vaddr, std::uint64_t length) const;
    // Single-page writes only; callers split larger writes at page boundaries.
    WriteOutcome write(ProcessId pid, VirtAddr vaddr, std::span<const std::uint8_t> bytes);
    void unmap(ProcessId pid, VirtAddr vaddr, std::uint64_t length);
    void exit_process(ProcessId pid);

    // Invoked after a upm_used process is torn down, outside the system lock.
    void set_exit_hook(std::function<void(ProcessId)> hook);

    bool process_alive(ProcessId pid) const;
    MmId mm_of(ProcessId pid) const;
    std::optional<ProcessId> pid_of_mm(MmId mm) const;
    void mark_upm_used(ProcessId pid);
    bool upm_used(ProcessId pid) const;

    std::uint64_t rss_bytes(ProcessId pid) const;
    std::uint64_t live_frame_count() const;
    std::uint64_t live_frame_bytes() const;
    std::uint64_t tlb_flush_count() const;
    std::uint64_t cache_flush_count() const;
    std::size_t process_count() const;

    MemorySnapshot snapshot() const;

    // --- dedup-engine interface, keyed by memory descriptor ---
    std::optional<PteView> pte_mm(MmId mm, VirtAddr vaddr) const;
    // Copy of the page bytes; nullopt when the mapping is gone or not present.
    std::optional<PageContent> page_bytes_mm(MmId mm, VirtAddr vaddr) const;
    bool pages_equal(MmId mm_a, VirtAddr va_a, MmId mm_b, VirtAddr vb) const;
    void write_protect_mm(MmId mm, VirtAddr vaddr);
    // Repoints (tgt_mm, tgt_va) onto the frame behind (src_mm, src_va) iff both
    // PTEs still reference the expected frames and stayed write-protected.
    // Adjusts refcounts, reclaims an orphaned target frame, and records the
    // simulated TLB + cache flush events.
    RepointStatus repoint_shared(MmId tgt_mm, VirtAddr tgt_va, FrameId expect_tgt,
                                 MmId src_mm, VirtAddr src_va, FrameId expect_src);

private:
    struct Frame {
        PageContent content;
        std::uint32_t refcount = 0;
        bool write_protected = false;
    };

    struct Space {
        MmId mm_id = 0;
        ProcessId pid = 0;
        std::map<VirtAddr, PageTableEntry> page_table;
        bool upm_used = false;
    };

    Space& space_of(ProcessId pid);
    const Space& space_of(ProcessId pid) const;
    Space* space_of_mm(MmId mm);
    const Space* space_of_mm(MmId mm) const;
    FrameId alloc_frame(PageContent content);
    void drop_frame_ref(FrameId id);
    void check_alignment(VirtAddr vaddr) const;

    const std::size_t page_size_;
    mutable std::mutex mu_;
    std::unordered_map<FrameId, Frame> frames_;
    std::unordered_map<ProcessId, Space> spaces_;
    std::unordered_map<MmId, ProcessId> mm_index_;
    FrameId next_frame_ = 1;
    ProcessId next_pid_ = 1;
    MmId next_mm_ = 1;
    std::uint64_t tlb_flushes_ = 0;
    std::uint64_t cache_flushes_ = 0;
    std::function<void(ProcessId)> exit_hook_;
};

}  // namespace upm
