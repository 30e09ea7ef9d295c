#include "upm/dedup_engine.hpp"

#include <algorithm>
#include <chrono>

#include "upm/lock_wait.hpp"
#include "upm/xxhash64.hpp"

namespace upm {

namespace {

std::uint64_t ns_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() -
                                                                t0)
        .count();
}

// Accumulates wall time minus lock-acquisition wait into one phase slot, so
// the named phases and the lock-wait row partition the total disjointly.
class PhaseScope {
public:
    explicit PhaseScope(std::uint64_t& slot)
        : slot_(slot),
          t0_(std::chrono::steady_clock::now()),
          lw0_(lock_wait::thread_total_ns()) {}
    ~PhaseScope() {
        std::uint64_t wall = ns_since(t0_);
        std::uint64_t lw = lock_wait::thread_total_ns() - lw0_;
        slot_ += wall > lw ? wall - lw : 0;
    }

private:
    std::uint64_t& slot_;
    std::chrono::steady_clock::time_point t0_;
    std::uint64_t lw0_;
};

std::unique_lock<std::mutex> timed_unique_lock(std::mutex& m) {
    std::unique_lock<std::mutex> lk(m, std::try_to_lock);
    if (lk.owns_lock()) return lk;
    auto t0 = std::chrono::steady_clock::now();
    lk.lock();
    lock_wait::add_ns(ns_since(t0));
    return lk;
}

void timed_relock(std::unique_lock<std::mutex>& lk) {
    if (lk.try_lock()) return;
    auto t0 = std::chrono::steady_clock::now();
    lk.lock();
    lock_wait::add_ns(ns_since(t0));
}

constexpr int kMaxPageRetries = 4096;

}  // namespace

PhaseTimings& PhaseTimings::operator+=(const PhaseTimings& o) {
    stable_search_ns += o.stable_search_ns;
    hash_ns += o.hash_ns;
    reverse_search_ns += o.reverse_search_ns;
    merge_ns += o.merge_ns;
    insert_ns += o.insert_ns;
    lock_wait_ns += o.lock_wait_ns;
    total_ns += o.total_ns;
    return *this;
}

AdviseReport& AdviseReport::operator+=(const AdviseReport& o) {
    pages_scanned += o.pages_scanned;
    pages_inserted += o.pages_inserted;
    pages_merged += o.pages_merged;
    pages_skipped_unchanged += o.pages_skipped_unchanged;
    stale_entries_replaced += o.stale_entries_replaced;
    bytes_saved += o.bytes_saved;
    merge_aborts += o.merge_aborts;
    phase_timings += o.phase_timings;
    return *this;
}

DedupEngine::DedupEngine(MemorySystem& mem, EngineConfig config)
    : mem_(mem), config_(config), buckets_(config.bucket_count()) {
    if (config_.page_size != mem.page_size())
        throw InvalidConfig("engine page_size does not match the memory system");
    mem_.set_exit_hook([this](ProcessId pid) { cleanup_process(pid); });
}

DedupEngine::~DedupEngine() { mem_.set_exit_hook(nullptr); }

std::uint64_t DedupEngine::compute_hash(std::span<const std::uint8_t> content) const {
    if (hash_override_) return hash_override_(content);
    return xxhash64(content, config_.hash_seed);
}

std::uint64_t DedupEngine::hash_page_or_throw(MmId mm, VirtAddr vaddr) const {
    auto bytes = mem_.page_bytes_mm(mm, vaddr);
    if (!bytes)
        throw UnmappedRange("advised page vanished at 0x" + std::to_string(vaddr));
    return compute_hash(*bytes);
}

VerifyResult DedupEngine::verify_locked(const StableEntry& entry) {
    auto pte = mem_.pte_mm(entry.mm_id, entry.vaddr);
    if (!pte || !pte->present) return {false, StaleReason::NotPresent};
    if (pte->frame_id != entry.frame_id) return {false, StaleReason::FrameMoved};
    auto bytes = mem_.page_bytes_mm(entry.mm_id, entry.vaddr);
    if (!bytes) return {false, StaleReason::NotPresent};
    if (compute_hash(*bytes) != entry.hash64) return {false, StaleReason::HashMismatch};
    return {true, StaleReason::NotPresent};
}

void DedupEngine::erase_stable_locked(std::uint64_t hash, MmId mm, VirtAddr vaddr) {
    auto& bucket = buckets_[bucket_of(hash)];
    for (auto it = bucket.begin(); it != bucket.end(); ++it) {
        if (it->hash64 == hash && it->mm_id == mm && it->vaddr == vaddr) {
            bucket.erase(it);
            return;
        }
    }
}

StableEntry* DedupEngine::find_stable_locked(std::uint64_t hash, MmId mm, VirtAddr vaddr) {
    auto& bucket = buckets_[bucket_of(hash)];
    for (auto& e : bucket)
        if (e.hash64 == hash && e.mm_id == mm && e.vaddr == vaddr) return &e;
    return nullptr;
}

VerifyResult DedupEngine::verify_entry(const StableEntry& entry) {
    TimedLock lock(table_mu_);
    VerifyResult vr = verify_locked(entry);
    if (!vr.valid) {
        erase_stable_locked(entry.hash64, entry.mm_id, entry.vaddr);
        auto it = reverse_.find({entry.mm_id, entry.vaddr});
        if (it != reverse_.end() && it->second.hash64 == entry.hash64) reverse_.erase(it);
    }
    return vr;
}

void DedupEngine::write_protect(ProcessId pid, VirtAddr vaddr) {
    MmId mm = mem_.mm_of(pid);
    mem_.write_protect_mm(mm, vaddr - vaddr % config_.page_size);
}

void DedupEngine::merge_pages(ProcessId target_pid, VirtAddr target_vaddr,
                              const StableEntry& source) {
    MmId mm = mem_.mm_of(target_pid);
    auto lk = timed_unique_lock(table_mu_);
    auto pte = mem_.pte_mm(mm, target_vaddr);
    if (!pte || !pte->present)
        throw UnmappedRange("merge target unmapped at 0x" + std::to_string(target_vaddr));
    FrameId expect_tgt = pte->frame_id;
    MergeInterleaveHook hook = interleave_hook_;

    lk.unlock();
    if (hook) hook(target_pid, target_vaddr);
    timed_relock(lk);

    RepointStatus st = mem_.repoint_shared(mm, target_vaddr, expect_tgt, source.mm_id,
                                           source.vaddr, source.frame_id);
    if (st == RepointStatus::TargetChanged || st == RepointStatus::SourceChanged) {
        ++merge_aborts_total_;
        throw MergeAborted(st == RepointStatus::TargetChanged
                               ? "target page changed before merge"
                               : "source page changed before merge");
    }
    reverse_[{mm, target_vaddr}] = ReverseEntry{mm, target_vaddr, target_pid, source.hash64};
}

AdviseReport DedupEngine::advise(ProcessId pid, VirtAddr vaddr, std::uint64_t length) {
    auto t_start = std::chrono::steady_clock::now();
    std::uint64_t lw_start = lock_wait::thread_total_ns();

    if (vaddr % config_.page_size != 0)
        throw UnalignedAddress("advise address 0x" + std::to_string(vaddr) +
                               " is not page-aligned");

    AdviseReport report;
    std::uint64_t pages = pages_for(length, config_.page_size);
    report.pages_scanned = pages;
    MmId mm = mem_.mm_of(pid);

    if (pages == 0) {
        report.phase_timings.total_ns = ns_since(t_start);
        record_report(report);
        return report;
    }

    // Preconditions and budget, before any state is mutated.
    for (std::uint64_t i = 0; i < pages; ++i) {
        auto pte = mem_.pte_mm(mm, vaddr + i * config_.page_size);
        if (!pte)
            throw UnmappedRange("advise range not mapped at 0x" +
                                std::to_string(vaddr + i * config_.page_size));
        if (!pte->present)
            throw NotPresent("advise range not present at 0x" +
                             std::to_string(vaddr + i * config_.page_size));
    }
    {
        auto lk = timed_unique_lock(table_mu_);
        std::uint64_t new_keys = 0;
        for (std::uint64_t i = 0; i < pages; ++i)
            if (!reverse_.count({mm, vaddr + i * config_.page_size})) ++new_keys;
        std::uint64_t advised_pages = reverse_.size() + new_keys;
        if (advised_pages * config_.page_size > config_.budget_bytes)
            throw TableBudgetExceeded("advised pages (" + std::to_string(advised_pages) +
                                      ") would exceed the " +
                                      std::to_string(config_.budget_bytes) + "-byte budget");
    }

    for (std::uint64_t i = 0; i < pages; ++i) {
        VirtAddr va = vaddr + i * config_.page_size;
        bool stale_counted = false;
        int attempts = 0;
        for (;;) {
            auto kind = process_page(pid, mm, va, report, stale_counted);
            if (kind != PageOutcome::Kind::Retry) break;
            if (++attempts > kMaxPageRetries)
                throw InvariantViolation("page at 0x" + std::to_string(va) +
                                         " kept changing during merge; giving up");
        }
    }

    mem_.mark_upm_used(pid);
    report.phase_timings.lock_wait_ns = lock_wait::thread_total_ns() - lw_start;
    report.phase_timings.total_ns = ns_since(t_start);
    record_report(report);
    return report;
}

DedupEngine::PageOutcome::Kind DedupEngine::process_page(ProcessId pid, MmId mm, VirtAddr va,
                                                         AdviseReport& report,
                                                         bool& stale_counted) {
    std::uint64_t h;
    {
        PhaseScope phase(report.phase_timings.hash_ns);
        h = hash_page_or_throw(mm, va);
    }

    auto lk = timed_unique_lock(table_mu_);
    MergeInterleaveHook hook = interleave_hook_;

    {
        PhaseScope phase(report.phase_timings.reverse_search_ns);
        auto rev = reverse_.find({mm, va});
        if (rev != reverse_.end()) {
            if (rev->second.hash64 == h) {
                // Same content re-advised: skip when the page's own entry is
                // still good. A merged page has no stable entry; the candidate
                // scan below detects it by frame identity.
                StableEntry* own = find_stable_locked(h, mm, va);
                if (own) {
                    VerifyResult vr = verify_locked(*own);
                    if (vr.valid) {
                        ++report.pages_skipped_unchanged;
                        return PageOutcome::Kind::Skipped;
                    }
                    erase_stable_locked(h, mm, va);
                }
            } else {
                // Content changed since the last advise: replace the stale entry.
                erase_stable_locked(rev->second.hash64, mm, va);
                if (!stale_counted) {
                    ++report.stale_entries_replaced;
                    stale_counted = true;
                }
            }
        }
    }

    bool have_candidate = false;
    StableEntry candidate;
    FrameId target_frame = 0;
    {
        PhaseScope phase(report.phase_timings.stable_search_ns);
        auto tgt = mem_.pte_mm(mm, va);
        if (!tgt || !tgt->present)
            throw UnmappedRange("advised page vanished at 0x" + std::to_string(va));
        target_frame = tgt->frame_id;

        auto& bucket = buckets_[bucket_of(h)];
        for (std::size_t i = 0; i < bucket.size();) {
            StableEntry& e = bucket[i];
            if (e.hash64 != h || (e.mm_id == mm && e.vaddr == va)) {
                ++i;
                continue;
            }
            VerifyResult vr = verify_locked(e);
            if (!vr.valid) {
                // Purge eagerly so chains stay short.
                auto rit = reverse_.find({e.mm_id, e.vaddr});
                if (rit != reverse_.end() && rit->second.hash64 == e.hash64)
                    reverse_.erase(rit);
                bucket.erase(bucket.begin() + i);
                continue;
            }
            if (e.frame_id == target_frame) {
                // Already sharing this frame: re-advise of a merged page.
                ++report.pages_skipped_unchanged;
                reverse_[{mm, va}] = ReverseEntry{mm, va, pid, h};
                return PageOutcome::Kind::Skipped;
            }
            // Write-protect both sides, then the authoritative byte compare.
            try {
                mem_.write_protect_mm(e.mm_id, e.vaddr);
                mem_.write_protect_mm(mm, va);
            } catch (const Error&) {
                ++i;
                continue;
            }
            if (mem_.pages_equal(mm, va, e.mm_id, e.vaddr)) {
                candidate = e;
                have_candidate = true;
                break;
            }
            ++i;  // hash collision or concurrent mutation; try the next entry
        }
    }

    if (have_candidate) {
        PhaseScope phase(report.phase_timings.merge_ns);
        lk.unlock();
        if (hook) hook(pid, va);
        timed_relock(lk);
        RepointStatus st = mem_.repoint_shared(mm, va, target_frame, candidate.mm_id,
                                               candidate.vaddr, candidate.frame_id);
        switch (st) {
            case RepointStatus::Ok:
                ++report.pages_merged;
                report.bytes_saved += config_.page_size;
                reverse_[{mm, va}] = ReverseEntry{mm, va, pid, h};
                return PageOutcome::Kind::Merged;
            case RepointStatus::AlreadyShared:
                ++report.pages_skipped_unchanged;
                reverse_[{mm, va}] = ReverseEntry{mm, va, pid, h};
                return PageOutcome::Kind::Skipped;
            case RepointStatus::TargetChanged:
            case RepointStatus::SourceChanged:
                ++report.merge_aborts;
                ++merge_aborts_total_;
                return PageOutcome::Kind::Retry;
        }
        return PageOutcome::Kind::Retry;  // not reached
    }

    {
        PhaseScope phase(report.phase_timings.insert_ns);
        buckets_[bucket_of(h)].push_back(StableEntry{h, va, mm, target_frame});
        reverse_[{mm, va}] = ReverseEntry{mm, va, pid, h};
        ++report.pages_inserted;
    }
    return PageOutcome::Kind::Inserted;
}

CleanupReport DedupEngine::cleanup_process(ProcessId pid) {
    TimedLock lock(table_mu_);
    CleanupReport rep;
    // The reverse table is the ground truth for what this process advised:
    // freed pages are gone from its address space but still recorded here.
    for (auto it = reverse_.begin(); it != reverse_.end();) {
        if (it->second.pid != pid) {
            ++it;
            continue;
        }
        const ReverseEntry& e = it->second;
        if (find_stable_locked(e.hash64, e.mm_id, e.vaddr)) {
            erase_stable_locked(e.hash64, e.mm_id, e.vaddr);
            ++rep.stable_removed;
        }
        it = reverse_.erase(it);
        ++rep.reverse_removed;
    }
    return rep;
}

OverheadReport DedupEngine::table_overhead() const {
    TimedLock lock(table_mu_);
    OverheadReport rep;
    rep.static_bytes = static_cast<std::uint64_t>(buckets_.size()) * 8;
    rep.per_entry_bytes = 96;
    std::uint64_t stable = 0;
    for (const auto& b : buckets_) stable += b.size();
    rep.stable_entries = stable;
    rep.reverse_entries = reverse_.size();
    rep.live_entries = reverse_.size();
    rep.total_bytes = rep.static_bytes + rep.live_entries * rep.per_entry_bytes;
    return rep;
}

std::uint64_t DedupEngine::stable_entry_count() const {
    TimedLock lock(table_mu_);
    std::uint64_t n = 0;
    for (const auto& b : buckets_) n += b.size();
    return n;
}

std::uint64_t DedupEngine::reverse_entry_count() const {
    TimedLock lock(table_mu_);
    return reverse_.size();
}

std::vector<StableEntry> DedupEngine::stable_entries() const {
    TimedLock lock(table_mu_);
    std::vector<StableEntry> out;
    for (const auto& b : buckets_) out.insert(out.end(), b.begin(), b.end());
    std::sort(out.begin(), out.end(), [](const StableEntry& a, const StableEntry& b) {
        return std::tie(a.mm_id, a.vaddr, a.hash64) < std::tie(b.mm_id, b.vaddr, b.hash64);
    });
    return out;
}

std::vector<ReverseEntry> DedupEngine::reverse_entries() const {
    TimedLock lock(table_mu_);
    std::vector<ReverseEntry> out;
    out.reserve(reverse_.size());
    for (const auto& [k, v] : reverse_) out.push_back(v);
    std::sort(out.begin(), out.end(), [](const ReverseEntry& a, const ReverseEntry& b) {
        return std::tie(a.mm_id, a.vaddr) < std::tie(b.mm_id, b.vaddr);
    });
    return out;
}

std::uint64_t DedupEngine::merge_abort_count() const {
    TimedLock lock(table_mu_);
    return merge_aborts_total_;
}

void DedupEngine::record_report(const AdviseReport& report) {
    TimedLock lock(table_mu_);
    history_.push_back(report);
    if (history_.size() > kMaxHistory) history_.pop_front();
}

std::vector<AdviseReport> DedupEngine::advise_history(std::size_t last_n) const {
    TimedLock lock(table_mu_);
    std::size_t n = last_n == 0 ? history_.size() : std::min(last_n, history_.size());
    return std::vector<AdviseReport>(history_.end() - n, history_.end());
}

void DedupEngine::set_merge_interleave_hook(MergeInterleaveHook hook) {
    TimedLock lock(table_mu_);
    interleave_hook_ = std::move(hook);
}

void DedupEngine::set_hash_override_for_testing(
    std::function<std::uint64_t(std::span<const std::uint8_t>)> fn) {
    TimedLock lock(table_mu_);
    hash_override_ = std::move(fn);
}

}  // namespace upm
