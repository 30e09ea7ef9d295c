#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "upm/address_space.hpp"
#include "upm/dedup_engine.hpp"

namespace upm {

// Exact non-negative rational, normalized. PSS sums stay exact internally;
// rounding to whole bytes happens only at report emission.
struct Rational {
    __int128 num = 0;
    std::uint64_t den = 1;

    static Rational from(std::uint64_t value) { return {static_cast<__int128>(value), 1}; }
    Rational& add(std::uint64_t n, std::uint64_t d);  // += n/d
    Rational& operator+=(const Rational& o) { return add_big(o.num, o.den); }
    bool operator==(const Rational& o) const { return num == o.num && den == o.den; }
    std::uint64_t rounded() const;  // nearest byte, half away from zero
    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }

private:
    Rational& add_big(__int128 n, std::uint64_t d);
    void normalize();
};

struct MemoryAccounting {
    std::uint64_t rss_bytes = 0;
    std::uint64_t private_bytes = 0;
    std::uint64_t pss_bytes = 0;  // pss_exact rounded to the nearest byte
    Rational pss_exact;
};

struct SystemAccounting {
    std::uint64_t live_frame_bytes = 0;
    std::uint64_t engine_overhead_bytes = 0;
    std::uint64_t total_bytes = 0;
};

// PSS = shared/n + private over the process's present mappings, from one
// consistent snapshot. Throws UnknownProcess for a pid not in the snapshot.
MemoryAccounting pss(const MemorySnapshot& snap, ProcessId pid);
MemoryAccounting pss(const MemorySystem& mem, ProcessId pid);
std::map<ProcessId, MemoryAccounting> pss_all(const MemorySnapshot& snap);

SystemAccounting system_memory(const MemorySystem& mem, const DedupEngine& engine);

// Percentage distribution over the six named phases plus "Other", split into
// the insert-dominated profile ("Sharing") and the profile of calls that
// merged at least one page ("Sharing & Merging"). Each non-empty profile sums
// to 100 within rounding. window = number of most recent advise calls
// considered, 0 for all; throws NoSamples when the window is empty.
struct PhaseBreakdown {
    std::map<std::string, double> sharing;
    std::map<std::string, double> sharing_and_merging;
    std::uint64_t sharing_calls = 0;
    std::uint64_t merging_calls = 0;
};

PhaseBreakdown phase_breakdown(const DedupEngine& engine, std::size_t window = 0);
PhaseBreakdown phase_breakdown(const std::vector<AdviseReport>& samples);

}  // namespace upm
