#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <random>
#include <thread>

#include "oracles.hpp"
#include "upm/address_space.hpp"

using namespace upm;
using namespace upm::testing;

namespace {

std::vector<std::uint8_t> random_bytes(std::mt19937_64& rng, std::size_t n) {
    std::vector<std::uint8_t> v(n);
    for (auto& b : v) b = static_cast<std::uint8_t>(rng());
    return v;
}

}  // namespace

TEST_CASE("create_process yields fresh pids with empty tables") {
    MemorySystem mem;
    ProcessId p1 = mem.create_process();
    ProcessId p2 = mem.create_process();
    CHECK(p1 != p2);
    CHECK(mem.rss_bytes(p1) == 0);
    auto snap = mem.snapshot();
    for (const auto& p : snap.processes) CHECK(p.pages.empty());
    CHECK(mem.mm_of(p1) != mem.mm_of(p2));
}

TEST_CASE("map_anonymous allocates page-rounded fresh frames") {
    MemorySystem mem;
    ProcessId pid = mem.create_process();
    mem.map_anonymous(pid, 0x1000, 8192, constant_fill(0x5A));
    CHECK(mem.rss_bytes(pid) == 8192);
    CHECK(mem.live_frame_count() == 2);

    // No automatic dedup: identical content in two processes = two frames.
    ProcessId other = mem.create_process();
    mem.map_anonymous(other, 0x1000, 4096, constant_fill(0x5A));
    mem.unmap(pid, 0x1000, 4096);
    CHECK(mem.live_frame_count() == 2);

    CHECK_THROWS_AS(mem.map_anonymous(pid, 0x1001, 4096, constant_fill(0)), UnalignedAddress);
    CHECK_THROWS_AS(mem.map_anonymous(other, 0x1000, 4096, constant_fill(0)), OverlappingMapping);
    // Length rounds up: 5000 bytes -> 2 pages.
    mem.map_anonymous(other, 0x10000, 5000, constant_fill(1));
    CHECK(mem.rss_bytes(other) == 3 * 4096);
}

TEST_CASE("read round-trips mapped content and rejects unmapped ranges") {
    MemorySystem mem;
    ProcessId pid = mem.create_process();
    std::mt19937_64 rng(3);
    auto bytes = random_bytes(rng, 8192);
    mem.map_anonymous(pid, 0x4000, bytes.size(), buffer_fill(bytes));
    CHECK(mem.read(pid, 0x4000, bytes.size()) == bytes);
    // Partial, straddling the page boundary.
    auto middle = mem.read(pid, 0x4000 + 4000, 200);
    CHECK(std::equal(middle.begin(), middle.end(), bytes.begin() + 4000));
    CHECK_THROWS_AS(mem.read(pid, 0x4000, 8193), UnmappedRange);
    CHECK_THROWS_AS(mem.read(pid, 0x100000, 1), UnmappedRange);
}

TEST_CASE("write in place keeps the frame; write spanning pages is rejected") {
    MemorySystem mem;
    ProcessId pid = mem.create_process();
    mem.map_anonymous(pid, 0x1000, 4096, constant_fill(0));
    std::vector<std::uint8_t> data{1, 2, 3};
    auto out = mem.write(pid, 0x1000 + 100, data);
    CHECK(out.kind == WriteOutcome::Kind::InPlace);
    CHECK(mem.live_frame_count() == 1);
    auto back = mem.read(pid, 0x1000 + 100, 3);
    CHECK(back == data);
    std::vector<std::uint8_t> big(10);
    CHECK_THROWS_AS(mem.write(pid, 0x1000 + 4090, big), std::invalid_argument);
}

TEST_CASE("copy-on-write gives the writer a private frame") {
    MemorySystem mem;
    ProcessId a = mem.create_process();
    ProcessId b = mem.create_process();
    mem.map_anonymous(a, 0x1000, 4096, constant_fill(7));
    mem.map_anonymous(b, 0x2000, 4096, constant_fill(7));

    // Manually share: protect both, repoint b's page onto a's frame.
    MmId mm_a = mem.mm_of(a), mm_b = mem.mm_of(b);
    FrameId fa = mem.pte_mm(mm_a, 0x1000)->frame_id;
    FrameId fb = mem.pte_mm(mm_b, 0x2000)->frame_id;
    mem.write_protect_mm(mm_a, 0x1000);
    mem.write_protect_mm(mm_b, 0x2000);
    REQUIRE(mem.repoint_shared(mm_b, 0x2000, fb, mm_a, 0x1000, fa) == RepointStatus::Ok);
    CHECK(mem.live_frame_count() == 1);

    auto snap = mem.snapshot();
    REQUIRE(snap.frames.size() == 1);
    CHECK(snap.frames[0].refcount == 2);
    CHECK(snap.frames[0].write_protected);

    std::vector<std::uint8_t> data{42};
    auto out = mem.write(b, 0x2000, data);
    CHECK(out.kind == WriteOutcome::Kind::CowBroken);
    CHECK(mem.read(b, 0x2000, 1)[0] == 42);
    CHECK(mem.read(a, 0x1000, 1)[0] == 7);  // a's view unchanged
    snap = mem.snapshot();
    CHECK(snap.frames.size() == 2);
    CHECK(refcounts_sound(snap));
}

TEST_CASE("two of three sharers cow-write: refcount 3 -> 1, two private frames") {
    MemorySystem mem;
    std::vector<ProcessId> pids;
    std::vector<MmId> mms;
    for (int i = 0; i < 3; ++i) {
        ProcessId p = mem.create_process();
        mem.map_anonymous(p, 0x1000, 4096, constant_fill(5));
        mem.write_protect_mm(mem.mm_of(p), 0x1000);
        pids.push_back(p);
        mms.push_back(mem.mm_of(p));
    }
    FrameId f0 = mem.pte_mm(mms[0], 0x1000)->frame_id;
    for (int i = 1; i < 3; ++i) {
        FrameId fi = mem.pte_mm(mms[i], 0x1000)->frame_id;
        REQUIRE(mem.repoint_shared(mms[i], 0x1000, fi, mms[0], 0x1000, f0) == RepointStatus::Ok);
    }
    auto snap = mem.snapshot();
    REQUIRE(snap.frames.size() == 1);
    REQUIRE(snap.frames[0].refcount == 3);

    std::vector<std::uint8_t> w1{11}, w2{22};
    CHECK(mem.write(pids[1], 0x1000, w1).cow_broken());
    CHECK(mem.write(pids[2], 0x1000, w2).cow_broken());
    snap = mem.snapshot();
    CHECK(snap.frames.size() == 3);  // original + two private copies
    for (const auto& f : snap.frames)
        if (f.id == f0) CHECK(f.refcount == 1);
    CHECK(mem.read(pids[0], 0x1000, 1)[0] == 5);
    CHECK(mem.read(pids[1], 0x1000, 1)[0] == 11);
    CHECK(mem.read(pids[2], 0x1000, 1)[0] == 22);
    CHECK(refcounts_sound(snap));
}

TEST_CASE("cow on a sole write-protected mapping reclaims the old frame") {
    MemorySystem mem;
    ProcessId a = mem.create_process();
    mem.map_anonymous(a, 0x1000, 4096, constant_fill(7));
    mem.write_protect_mm(mem.mm_of(a), 0x1000);
    std::vector<std::uint8_t> data{9};
    auto out = mem.write(a, 0x1000, data);
    CHECK(out.kind == WriteOutcome::Kind::CowBroken);
    CHECK(mem.live_frame_count() == 1);
    CHECK(mem.read(a, 0x1000, 1)[0] == 9);
}

TEST_CASE("unmap decrements refcounts and reclaims orphans") {
    MemorySystem mem;
    ProcessId a = mem.create_process();
    ProcessId b = mem.create_process();
    mem.map_anonymous(a, 0x1000, 4096, constant_fill(1));
    mem.map_anonymous(b, 0x1000, 4096, constant_fill(1));
    MmId mm_a = mem.mm_of(a), mm_b = mem.mm_of(b);
    mem.write_protect_mm(mm_a, 0x1000);
    mem.write_protect_mm(mm_b, 0x1000);
    REQUIRE(mem.repoint_shared(mm_b, 0x1000, mem.pte_mm(mm_b, 0x1000)->frame_id, mm_a, 0x1000,
                               mem.pte_mm(mm_a, 0x1000)->frame_id) == RepointStatus::Ok);

    std::uint64_t before = mem.live_frame_bytes();
    mem.unmap(a, 0x1000, 4096);  // one of two sharers: frame survives
    CHECK(mem.live_frame_bytes() == before);
    CHECK(mem.read(b, 0x1000, 1)[0] == 1);
    mem.unmap(b, 0x1000, 4096);  // last mapping: reclaimed
    CHECK(mem.live_frame_bytes() == before - 4096);
    CHECK_THROWS_AS(mem.unmap(b, 0x1000, 4096), UnmappedRange);
}

TEST_CASE("exit_process frees everything and retires the pid") {
    MemorySystem mem;
    ProcessId a = mem.create_process();
    mem.map_anonymous(a, 0x1000, 4 * 4096, constant_fill(2));
    mem.exit_process(a);
    CHECK(mem.live_frame_count() == 0);
    CHECK_THROWS_AS(mem.rss_bytes(a), UnknownProcess);
    CHECK_THROWS_AS(mem.exit_process(a), UnknownProcess);
}

TEST_CASE("exit hook fires only for processes that advised") {
    MemorySystem mem;
    std::vector<ProcessId> seen;
    mem.set_exit_hook([&](ProcessId pid) { seen.push_back(pid); });
    ProcessId a = mem.create_process();
    ProcessId b = mem.create_process();
    mem.mark_upm_used(b);
    mem.exit_process(a);
    CHECK(seen.empty());
    mem.exit_process(b);
    CHECK(seen == std::vector<ProcessId>{b});
}

TEST_CASE("concurrent map/write/read/unmap/exit keeps per-page linearizability") {
    MemorySystem mem;
    constexpr int kThreads = 8;
    std::atomic<int> failures{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < kThreads; ++t) {
        threads.emplace_back([&, t] {
            try {
                std::mt19937_64 rng(500 + t);
                ShadowMemory shadow(mem.page_size());
                for (int round = 0; round < 30; ++round) {
                    ProcessId pid = mem.create_process();
                    std::uint64_t pages = 1 + rng() % 8;
                    auto bytes = random_bytes(rng, pages * 4096);
                    mem.map_anonymous(pid, 0x10000, bytes.size(), buffer_fill(bytes));
                    shadow.on_map(pid, 0x10000, bytes);
                    for (int w = 0; w < 20; ++w) {
                        VirtAddr page = 0x10000 + (rng() % pages) * 4096;
                        auto patch = random_bytes(rng, 1 + rng() % 128);
                        std::uint64_t off = rng() % (4096 - patch.size());
                        mem.write(pid, page + off, patch);
                        shadow.on_write(pid, page + off, patch);
                        if (mem.read(pid, page, 4096) != shadow.read(pid, page, 4096))
                            throw std::runtime_error("shadow mismatch");
                    }
                    if (rng() % 2) {
                        mem.unmap(pid, 0x10000, 4096);
                        shadow.on_unmap(pid, 0x10000, 4096);
                    }
                    mem.exit_process(pid);
                    shadow.on_exit(pid);
                }
            } catch (...) {
                failures.fetch_add(1);
            }
        });
    }
    for (auto& t : threads) t.join();
    CHECK(failures.load() == 0);
    CHECK(mem.live_frame_count() == 0);
    CHECK(refcounts_sound(mem.snapshot()));
}

TEST_CASE("randomized ops agree with the shadow oracle") {
    MemorySystem mem;
    ShadowMemory shadow(mem.page_size());
    std::mt19937_64 rng(2024);

    std::vector<ProcessId> pids;
    for (int i = 0; i < 4; ++i) {
        pids.push_back(mem.create_process());
    }
    std::unordered_map<ProcessId, std::vector<VirtAddr>> mapped;

    for (int op = 0; op < 2000; ++op) {
        ProcessId pid = pids[rng() % pids.size()];
        auto& pages = mapped[pid];
        switch (rng() % 4) {
            case 0: {  // map 1-4 pages at a fresh address
                VirtAddr va = ((rng() % 1024) + 1) * 0x10000;
                std::uint64_t n = 1 + rng() % 4;
                bool clash = false;
                for (std::uint64_t i = 0; i < n; ++i)
                    if (std::count(pages.begin(), pages.end(), va + i * 4096)) clash = true;
                if (clash) break;
                auto bytes = random_bytes(rng, n * 4096);
                mem.map_anonymous(pid, va, bytes.size(), buffer_fill(bytes));
                shadow.on_map(pid, va, bytes);
                for (std::uint64_t i = 0; i < n; ++i) pages.push_back(va + i * 4096);
                break;
            }
            case 1: {  // write within a mapped page
                if (pages.empty()) break;
                VirtAddr page = pages[rng() % pages.size()];
                std::uint64_t off = rng() % 4000;
                auto bytes = random_bytes(rng, 1 + rng() % 96);
                mem.write(pid, page + off, bytes);
                shadow.on_write(pid, page + off, bytes);
                break;
            }
            case 2: {  // unmap one page
                if (pages.empty()) break;
                std::size_t idx = rng() % pages.size();
                VirtAddr page = pages[idx];
                mem.unmap(pid, page, 4096);
                shadow.on_unmap(pid, page, 4096);
                pages.erase(pages.begin() + idx);
                break;
            }
            case 3: {  // read-compare a random page
                if (pages.empty()) break;
                VirtAddr page = pages[rng() % pages.size()];
                CHECK(mem.read(pid, page, 4096) == shadow.read(pid, page, 4096));
                break;
            }
        }
        if (op % 200 == 0) {
            auto snap = mem.snapshot();
            REQUIRE(refcounts_sound(snap));
        }
    }
    REQUIRE(shadow.matches(mem));

    // Conservation: tearing everything down leaves zero frames.
    for (ProcessId pid : pids) mem.exit_process(pid);
    CHECK(mem.live_frame_count() == 0);
}
