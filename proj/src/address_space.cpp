#include "upm/address_space.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>

#include "upm/lock_wait.hpp"

namespace upm {

namespace lock_wait {

namespace {
thread_local std::uint64_t t_wait_ns = 0;
}

std::uint64_t thread_total_ns() { return t_wait_ns; }
void add_ns(std::uint64_t ns) { t_wait_ns += ns; }

}  // namespace lock_wait

TimedLock::TimedLock(std::mutex& m) : mu_(m) {
    if (m.try_lock()) return;
    auto t0 = std::chrono::steady_clock::now();
    m.lock();
    auto t1 = std::chrono::steady_clock::now();
    lock_wait::add_ns(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
}

ContentSource constant_fill(std::uint8_t value) {
    return [value](std::uint64_t, std::span<std::uint8_t> out) {
        std::fill(out.begin(), out.end(), value);
    };
}

ContentSource buffer_fill(std::vector<std::uint8_t> bytes) {
    return [bytes = std::move(bytes)](std::uint64_t page_index, std::span<std::uint8_t> out) {
        std::uint64_t start = page_index * out.size();
        for (std::size_t i = 0; i < out.size(); ++i) {
            std::uint64_t pos = start + i;
            out[i] = pos < bytes.size() ? bytes[pos] : 0;
        }
    };
}

MemorySystem::MemorySystem(std::size_t page_size) : page_size_(page_size) {
    if (!is_power_of_two(page_size))
        throw InvalidConfig("page_size must be a power of two");
}

void MemorySystem::check_alignment(VirtAddr vaddr) const {
    if (vaddr % page_size_ != 0)
        throw UnalignedAddress("address 0x" + std::to_string(vaddr) + " is not page-aligned");
}

MemorySystem::Space& MemorySystem::space_of(ProcessId pid) {
    auto it = spaces_.find(pid);
    if (it == spaces_.end())
        throw UnknownProcess("no such process: " + std::to_string(pid));
    return it->second;
}

const MemorySystem::Space& MemorySystem::space_of(ProcessId pid) const {
    auto it = spaces_.find(pid);
    if (it == spaces_.end())
        throw UnknownProcess("no such process: " + std::to_string(pid));
    return it->second;
}

MemorySystem::Space* MemorySystem::space_of_mm(MmId mm) {
    auto it = mm_index_.find(mm);
    if (it == mm_index_.end()) return nullptr;
    return &spaces_.at(it->second);
}

const MemorySystem::Space* MemorySystem::space_of_mm(MmId mm) const {
    auto it = mm_index_.find(mm);
    if (it == mm_index_.end()) return nullptr;
    return &spaces_.at(it->second);
}

FrameId MemorySystem::alloc_frame(PageContent content) {
    FrameId id = next_frame_++;
    frames_.emplace(id, Frame{std::move(content), 1, false});
    return id;
}

void MemorySystem::drop_frame_ref(FrameId id) {
    auto it = frames_.find(id);
    Frame& f = it->second;
    if (--f.refcount == 0) frames_.erase(it);
}

ProcessId MemorySystem::create_process() {
    TimedLock lock(mu_);
    ProcessId pid = next_pid_++;
    MmId mm = next_mm_++;
    spaces_.emplace(pid, Space{mm, pid, {}, false});
    mm_index_.emplace(mm, pid);
    return pid;
}

void MemorySystem::map_anonymous(ProcessId pid, VirtAddr vaddr, std::uint64_t length,
                                 const ContentSource& src) {
    check_alignment(vaddr);
    if (length == 0)
        throw InvalidConfig("map_anonymous: length must be > 0");
    std::uint64_t pages = pages_for(length, page_size_);

    TimedLock lock(mu_);
    Space& sp = space_of(pid);

    // Reject any intersection with existing mappings.
    VirtAddr end = vaddr + pages * page_size_;
    auto it = sp.page_table.lower_bound(vaddr);
    if (it != sp.page_table.end() && it->first < end)
        throw OverlappingMapping("range overlaps existing mapping at 0x" + std::to_string(it->first));

    std::vector<std::uint8_t> buf(page_size_);
    for (std::uint64_t i = 0; i < pages; ++i) {
        src(i, std::span<std::uint8_t>(buf));
        FrameId fid = alloc_frame(buf);
        sp.page_table.emplace(vaddr + i * page_size_, PageTableEntry{fid, true, true});
    }
}

std::vector<std::uint8_t> MemorySystem::read(ProcessId pid, VirtAddr vaddr,
                                             std::uint64_t length) const {
    TimedLock lock(mu_);
    const Space& sp = space_of(pid);
    std::vector<std::uint8_t> out;
    out.reserve(length);
    std::uint64_t pos = vaddr;
    std::uint64_t remaining = length;
    while (remaining > 0) {
        VirtAddr page = pos - pos % page_size_;
        auto it = sp.page_table.find(page);
        if (it == sp.page_table.end())
            throw UnmappedRange("read of unmapped address 0x" + std::to_string(pos));
        if (!it->second.present)
            throw NotPresent("read of non-present page 0x" + std::to_string(page));
        const Frame& f = frames_.at(it->second.frame_id);
        std::uint64_t off = pos - page;
        std::uint64_t n = std::min<std::uint64_t>(remaining, page_size_ - off);
        out.insert(out.end(), f.content.begin() + off, f.content.begin() + off + n);
        pos += n;
        remaining -= n;
    }
    return out;
}

WriteOutcome MemorySystem::write(ProcessId pid, VirtAddr vaddr,
                                 std::span<const std::uint8_t> bytes) {
    VirtAddr page = vaddr - vaddr % page_size_;
    if (!bytes.empty() && (vaddr + bytes.size() - 1) / page_size_ != page / page_size_)
        throw std::invalid_argument("write crosses a page boundary; split the write");

    TimedLock lock(mu_);
    Space& sp = space_of(pid);
    auto it = sp.page_table.find(page);
    if (it == sp.page_table.end())
        throw UnmappedRange("write to unmapped address 0x" + std::to_string(vaddr));
    PageTableEntry& pte = it->second;
    if (!pte.present)
        throw NotPresent("write to non-present page 0x" + std::to_string(page));

    std::uint64_t off = vaddr - page;
    if (bytes.empty()) return WriteOutcome{WriteOutcome::Kind::InPlace, 0};
    if (pte.writable) {
        Frame& f = frames_.at(pte.frame_id);
        std::copy(bytes.begin(), bytes.end(), f.content.begin() + off);
        return WriteOutcome{WriteOutcome::Kind::InPlace, 0};
    }

    // Copy-on-write fault: the new frame gets the old content plus this write;
    // every other mapping keeps seeing the shared frame.
    Frame& old = frames_.at(pte.frame_id);
    PageContent copy = old.content;
    std::copy(bytes.begin(), bytes.end(), copy.begin() + off);
    FrameId old_id = pte.frame_id;
    FrameId new_id = alloc_frame(std::move(copy));
    pte.frame_id = new_id;
    pte.writable = true;
    drop_frame_ref(old_id);
    ++tlb_flushes_;
    return WriteOutcome{WriteOutcome::Kind::CowBroken, new_id};
}

void MemorySystem::unmap(ProcessId pid, VirtAddr vaddr, std::uint64_t length) {
    check_alignment(vaddr);
    std::uint64_t pages = pages_for(length, page_size_);

    TimedLock lock(mu_);
    Space& sp = space_of(pid);
    for (std::uint64_t i = 0; i < pages; ++i) {
        if (!sp.page_table.count(vaddr + i * page_size_))
            throw UnmappedRange("unmap of unmapped page 0x" +
                                std::to_string(vaddr + i * page_size_));
    }
    for (std::uint64_t i = 0; i < pages; ++i) {
        auto it = sp.page_table.find(vaddr + i * page_size_);
        drop_frame_ref(it->second.frame_id);
        sp.page_table.erase(it);
    }
}

void MemorySystem::exit_process(ProcessId pid) {
    bool run_hook = false;
    {
        TimedLock lock(mu_);
        Space& sp = space_of(pid);
        for (auto& [va, pte] : sp.page_table) drop_frame_ref(pte.frame_id);
        run_hook = sp.upm_used;
        mm_index_.erase(sp.mm_id);
        spaces_.erase(pid);
    }
    // Engine cleanup happens outside the lock; it only touches its own tables.
    if (run_hook && exit_hook_) exit_hook_(pid);
}

void MemorySystem::set_exit_hook(std::function<void(ProcessId)> hook) {
    TimedLock lock(mu_);
    exit_hook_ = std::move(hook);
}

bool MemorySystem::process_alive(ProcessId pid) const {
    TimedLock lock(mu_);
    return spaces_.count(pid) != 0;
}

MmId MemorySystem::mm_of(ProcessId pid) const {
    TimedLock lock(mu_);
    return space_of(pid).mm_id;
}

std::optional<ProcessId> MemorySystem::pid_of_mm(MmId mm) const {
    TimedLock lock(mu_);
    auto it = mm_index_.find(mm);
    if (it == mm_index_.end()) return std::nullopt;
    return it->second;
}

void MemorySystem::mark_upm_used(ProcessId pid) {
    TimedLock lock(mu_);
    space_of(pid).upm_used = true;
}

bool MemorySystem::upm_used(ProcessId pid) const {
    TimedLock lock(mu_);
    return space_of(pid).upm_used;
}

std::uint64_t MemorySystem::rss_bytes(ProcessId pid) const {
    TimedLock lock(mu_);
    const Space& sp = space_of(pid);
    std::uint64_t n = 0;
    for (const auto& [va, pte] : sp.page_table)
        if (pte.present) ++n;
    return n * page_size_;
}

std::uint64_t MemorySystem::live_frame_count() const {
    TimedLock lock(mu_);
    return frames_.size();
}

std::uint64_t MemorySystem::live_frame_bytes() const {
    TimedLock lock(mu_);
    return frames_.size() * static_cast<std::uint64_t>(page_size_);
}

std::uint64_t MemorySystem::tlb_flush_count() const {
    TimedLock lock(mu_);
    return tlb_flushes_;
}

std::uint64_t MemorySystem::cache_flush_count() const {
    TimedLock lock(mu_);
    return cache_flushes_;
}

std::size_t MemorySystem::process_count() const {
    TimedLock lock(mu_);
    return spaces_.size();
}

MemorySnapshot MemorySystem::snapshot() const {
    TimedLock lock(mu_);
    MemorySnapshot snap;
    snap.page_size = page_size_;
    snap.frames.reserve(frames_.size());
    for (const auto& [id, f] : frames_)
        snap.frames.push_back({id, f.refcount, f.write_protected});
    snap.processes.reserve(spaces_.size());
    for (const auto& [pid, sp] : spaces_) {
        MemorySnapshot::ProcessInfo pi;
        pi.pid = pid;
        pi.mm_id = sp.mm_id;
        pi.upm_used = sp.upm_used;
        pi.pages.assign(sp.page_table.begin(), sp.page_table.end());
        snap.processes.push_back(std::move(pi));
    }
    std::sort(snap.frames.begin(), snap.frames.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    std::sort(snap.processes.begin(), snap.processes.end(),
              [](const auto& a, const auto& b) { return a.pid < b.pid; });
    return snap;
}

std::optional<PteView> MemorySystem::pte_mm(MmId mm, VirtAddr vaddr) const {
    TimedLock lock(mu_);
    const Space* sp = space_of_mm(mm);
    if (!sp) return std::nullopt;
    auto it = sp->page_table.find(vaddr);
    if (it == sp->page_table.end()) return std::nullopt;
    return PteView{it->second.frame_id, it->second.present, it->second.writable};
}

std::optional<PageContent> MemorySystem::page_bytes_mm(MmId mm, VirtAddr vaddr) const {
    TimedLock lock(mu_);
    const Space* sp = space_of_mm(mm);
    if (!sp) return std::nullopt;
    auto it = sp->page_table.find(vaddr);
    if (it == sp->page_table.end() || !it->second.present) return std::nullopt;
    return frames_.at(it->second.frame_id).content;
}

bool MemorySystem::pages_equal(MmId mm_a, VirtAddr va_a, MmId mm_b, VirtAddr vb) const {
    TimedLock lock(mu_);
    const Space* a = space_of_mm(mm_a);
    const Space* b = space_of_mm(mm_b);
    if (!a || !b) return false;
    auto ia = a->page_table.find(va_a);
    auto ib = b->page_table.find(vb);
    if (ia == a->page_table.end() || ib == b->page_table.end()) return false;
    if (!ia->second.present || !ib->second.present) return false;
    const PageContent& ca = frames_.at(ia->second.frame_id).content;
    const PageContent& cb = frames_.at(ib->second.frame_id).content;
    return ca == cb;
}

void MemorySystem::write_protect_mm(MmId mm, VirtAddr vaddr) {
    TimedLock lock(mu_);
    Space* sp = space_of_mm(mm);
    if (!sp)
        throw UnmappedRange("write_protect: no address space for mm " + std::to_string(mm));
    auto it = sp->page_table.find(vaddr);
    if (it == sp->page_table.end())
        throw UnmappedRange("write_protect of unmapped page 0x" + std::to_string(vaddr));
    if (!it->second.present)
        throw NotPresent("write_protect of non-present page 0x" + std::to_string(vaddr));
    it->second.writable = false;
    frames_.at(it->second.frame_id).write_protected = true;
}

RepointStatus MemorySystem::repoint_shared(MmId tgt_mm, VirtAddr tgt_va, FrameId expect_tgt,
                                           MmId src_mm, VirtAddr src_va, FrameId expect_src) {
    TimedLock lock(mu_);
    Space* tgt = space_of_mm(tgt_mm);
    Space* src = space_of_mm(src_mm);
    if (!tgt) return RepointStatus::TargetChanged;
    if (!src) return RepointStatus::SourceChanged;
    auto ti = tgt->page_table.find(tgt_va);
    auto si = src->page_table.find(src_va);
    // The descriptor comparison: a CoW fault in the window repoints the PTE to
    // a fresh frame (or re-enables the write bit), so any drift aborts.
    if (ti == tgt->page_table.end() || !ti->second.present ||
        ti->second.frame_id != expect_tgt || ti->second.writable)
        return RepointStatus::TargetChanged;
    if (si == src->page_table.end() || !si->second.present ||
        si->second.frame_id != expect_src || si->second.writable)
        return RepointStatus::SourceChanged;
    if (expect_tgt == expect_src) return RepointStatus::AlreadyShared;

    Frame& src_frame = frames_.at(expect_src);
    ++src_frame.refcount;
    src_frame.write_protected = true;
    ti->second.frame_id = expect_src;
    drop_frame_ref(expect_tgt);
    ++tlb_flushes_;
    ++cache_flushes_;
    return RepointStatus::Ok;
}

}  // namespace upm
