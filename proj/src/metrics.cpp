#include "upm/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

namespace upm {

namespace {

std::uint64_t gcd64(std::uint64_t a, std::uint64_t b) {
    while (b != 0) {
        std::uint64_t t = a % b;
        a = b;
        b = t;
    }
    return a;
}

}  // namespace

void Rational::normalize() {
    if (num == 0) {
        den = 1;
        return;
    }
    __int128 mag = num < 0 ? -num : num;
    std::uint64_t rem = static_cast<std::uint64_t>(mag % static_cast<__int128>(den));
    std::uint64_t g = rem == 0 ? den : gcd64(den, rem);
    if (g > 1) {
        num /= static_cast<__int128>(g);
        den /= g;
    }
}

Rational& Rational::add_big(__int128 n, std::uint64_t d) {
    // num/den + n/d with a gcd on the denominators to limit growth.
    std::uint64_t g = gcd64(den, d);
    std::uint64_t d1 = den / g;
    std::uint64_t d2 = d / g;
    num = num * static_cast<__int128>(d2) + n * static_cast<__int128>(d1);
    den = d1 * d;
    normalize();
    return *this;
}

Rational& Rational::add(std::uint64_t n, std::uint64_t d) {
    return add_big(static_cast<__int128>(n), d);
}

std::uint64_t Rational::rounded() const {
    __int128 q = num / static_cast<__int128>(den);
    std::uint64_t r = static_cast<std::uint64_t>(num % static_cast<__int128>(den));
    if (r >= den - r) ++q;  // half rounds up; avoids r*2 overflow
    return static_cast<std::uint64_t>(q);
}

MemoryAccounting pss(const MemorySnapshot& snap, ProcessId pid) {
    const MemorySnapshot::ProcessInfo* proc = nullptr;
    for (const auto& p : snap.processes)
        if (p.pid == pid) proc = &p;
    if (!proc) throw UnknownProcess("no such process: " + std::to_string(pid));

    std::unordered_map<FrameId, std::uint32_t> refcount;
    refcount.reserve(snap.frames.size());
    for (const auto& f : snap.frames) refcount.emplace(f.id, f.refcount);

    MemoryAccounting acc;
    std::uint64_t page = snap.page_size;
    for (const auto& [va, pte] : proc->pages) {
        if (!pte.present) continue;
        acc.rss_bytes += page;
        std::uint32_t rc = refcount.at(pte.frame_id);
        if (rc <= 1) {
            acc.private_bytes += page;
            acc.pss_exact.add(page, 1);
        } else {
            acc.pss_exact.add(page, rc);
        }
    }
    acc.pss_bytes = acc.pss_exact.rounded();
    return acc;
}

MemoryAccounting pss(const MemorySystem& mem, ProcessId pid) { return pss(mem.snapshot(), pid); }

std::map<ProcessId, MemoryAccounting> pss_all(const MemorySnapshot& snap) {
    std::map<ProcessId, MemoryAccounting> out;
    for (const auto& p : snap.processes) out.emplace(p.pid, pss(snap, p.pid));
    return out;
}

SystemAccounting system_memory(const MemorySystem& mem, const DedupEngine& engine) {
    SystemAccounting acc;
    acc.live_frame_bytes = mem.live_frame_bytes();
    acc.engine_overhead_bytes = engine.table_overhead().total_bytes;
    acc.total_bytes = acc.live_frame_bytes + acc.engine_overhead_bytes;
    return acc;
}

namespace {

std::map<std::string, double> percentages(const PhaseTimings& t) {
    std::map<std::string, double> out;
    std::uint64_t total = t.total_ns;
    auto pct = [total](std::uint64_t ns) {
        return total == 0 ? 0.0 : 100.0 * static_cast<double>(ns) / static_cast<double>(total);
    };
    out[phase_names::kStableSearch] = pct(t.stable_search_ns);
    out[phase_names::kHash] = pct(t.hash_ns);
    out[phase_names::kReverseSearch] = pct(t.reverse_search_ns);
    out[phase_names::kMerge] = pct(t.merge_ns);
    out[phase_names::kInsert] = pct(t.insert_ns);
    out[phase_names::kLockWait] = pct(t.lock_wait_ns);
    out[phase_names::kOther] = pct(t.other_ns());
    return out;
}

}  // namespace

PhaseBreakdown phase_breakdown(const DedupEngine& engine, std::size_t window) {
    return phase_breakdown(engine.advise_history(window));
}

PhaseBreakdown phase_breakdown(const std::vector<AdviseReport>& samples) {
    if (samples.empty()) throw NoSamples("no advise calls in the requested window");

    PhaseTimings sharing{};
    PhaseTimings merging{};
    PhaseBreakdown out;
    for (const auto& r : samples) {
        if (r.pages_merged > 0) {
            merging += r.phase_timings;
            ++out.merging_calls;
        } else {
            sharing += r.phase_timings;
            ++out.sharing_calls;
        }
    }
    if (out.sharing_calls > 0) out.sharing = percentages(sharing);
    if (out.merging_calls > 0) out.sharing_and_merging = percentages(merging);
    return out;
}

}  // namespace upm
