#include "upm/snapshot.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "upm/xxhash64.hpp"

namespace upm {

namespace {

constexpr std::uint64_t kContentHashSeed = 0x736e617073686f74ULL;

std::uint64_t content_hash(const PageContent& c) { return xxhash64(c.data(), c.size(), 0); }

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::uint8_t* data;
    std::uint64_t size;
    std::uint64_t pos = 0;

    void need(std::uint64_t n, const char* what) const {
        if (pos + n > size)
            throw TruncatedFile(std::string("truncated file: expected ") + what, pos);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        std::memcpy(&v, data + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        std::memcpy(&v, data + pos, 8);
        pos += 8;
        return v;
    }
};

}  // namespace

Snapshot load_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open snapshot file: " + path.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    Reader r{buf.data(), buf.size()};

    r.need(8, "magic");
    if (std::memcmp(buf.data(), kSnapshotMagic.data(), 8) != 0)
        throw BadMagic("bad magic", 0);
    r.pos = 8;

    Snapshot snap;
    std::uint64_t version_off = r.pos;
    snap.version = r.u32("version");
    if (snap.version != 1)
        throw SnapshotFormatError("unsupported snapshot version " + std::to_string(snap.version),
                                  version_off);
    std::uint64_t page_size_off = r.pos;
    snap.page_size = r.u32("page_size");
    if (snap.page_size == 0 || !is_power_of_two(snap.page_size))
        throw BadPageSize("page_size must be a nonzero power of two", page_size_off);
    std::uint64_t count = r.u64("page_count");

    snap.pages.reserve(count);
    std::unordered_set<VirtAddr> seen;
    VirtAddr prev = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint64_t rec_off = r.pos;
        SnapshotPage page;
        page.vaddr = r.u64("page vaddr");
        r.need(1, "page kind");
        std::uint8_t kind = r.data[r.pos++];
        if (kind > 2)
            throw SnapshotFormatError("bad page kind " + std::to_string(kind), rec_off + 8);
        page.kind = static_cast<PageKind>(kind);
        r.need(snap.page_size, "page content");
        page.content.assign(r.data + r.pos, r.data + r.pos + snap.page_size);
        r.pos += snap.page_size;

        if (!seen.insert(page.vaddr).second)
            throw DuplicateVaddr("duplicate vaddr 0x" + std::to_string(page.vaddr), rec_off);
        if (i > 0 && page.vaddr < prev)
            throw SnapshotFormatError("page records not sorted by vaddr", rec_off);
        prev = page.vaddr;
        snap.pages.push_back(std::move(page));
    }
    if (r.pos != r.size)
        throw SnapshotFormatError("trailing bytes after last record", r.pos);
    return snap;
}

void write_snapshot(const Snapshot& snap, const std::filesystem::path& path) {
    for (const auto& p : snap.pages)
        if (p.content.size() != snap.page_size)
            throw BadPageSize("page content length != page_size", 0);

    std::string out;
    out.reserve(16 + snap.pages.size() * (9 + snap.page_size));
    out.append(kSnapshotMagic.data(), 8);
    put_u32(out, snap.version);
    put_u32(out, snap.page_size);
    put_u64(out, snap.pages.size());
    for (const auto& p : snap.pages) {
        put_u64(out, p.vaddr);
        out.push_back(static_cast<char>(p.kind));
        out.append(reinterpret_cast<const char*>(p.content.data()), p.content.size());
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write snapshot file: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("short write to snapshot file: " + path.string());
}

namespace {

// Hash-indexed content set with byte-compare confirmation.
class ContentSet {
public:
    explicit ContentSet(const Snapshot& s) {
        index_.reserve(s.pages.size());
        for (const auto& p : s.pages) index_[content_hash(p.content)].push_back(&p.content);
    }

    bool contains(const PageContent& c) const {
        auto it = index_.find(content_hash(c));
        if (it == index_.end()) return false;
        for (const PageContent* cand : it->second)
            if (*cand == c) return true;
        return false;
    }

private:
    std::unordered_map<std::uint64_t, std::vector<const PageContent*>> index_;
};

}  // namespace

SharingReport classify(const Snapshot& a, const Snapshot& b) {
    if (a.page_size != b.page_size)
        throw PageSizeMismatch("snapshots have different page sizes");

    ContentSet b_contents(b);
    SharingReport rep;
    rep.total_pages = a.pages.size();
    for (const auto& p : a.pages) {
        if (p.kind == PageKind::FileBackedCacheShared) {
            ++rep.cache_shared_pages;
        } else if (b_contents.contains(p.content)) {
            if (p.kind == PageKind::Anonymous)
                ++rep.shareable_anonymous_pages;
            else
                ++rep.shareable_file_backed_pages;
        } else {
            ++rep.volatile_pages;
        }
    }
    if (rep.total_pages > 0) {
        double t = static_cast<double>(rep.total_pages);
        rep.volatile_pct = 100.0 * rep.volatile_pages / t;
        rep.cache_shared_pct = 100.0 * rep.cache_shared_pages / t;
        rep.shareable_anonymous_pct = 100.0 * rep.shareable_anonymous_pages / t;
        rep.shareable_file_backed_pct = 100.0 * rep.shareable_file_backed_pages / t;
    }
    return rep;
}

SubpageHistogram subpage_similarity(const Snapshot& a, const Snapshot& b,
                                    std::uint32_t segment_size) {
    if (a.page_size != b.page_size)
        throw PageSizeMismatch("snapshots have different page sizes");
    if (segment_size == 0 || a.page_size % segment_size != 0)
        throw BadSegmentSize("segment_size must divide page_size");

    const std::uint32_t segments = a.page_size / segment_size;
    ContentSet b_contents(b);

    // Per-slot segment index: slot i of each b page, hashed with the slot
    // folded in so aligned comparisons stay aligned.
    std::unordered_map<std::uint64_t, std::vector<const SnapshotPage*>> seg_index;
    for (const auto& p : b.pages) {
        for (std::uint32_t s = 0; s < segments; ++s) {
            std::uint64_t h =
                xxhash64(p.content.data() + s * segment_size, segment_size, kContentHashSeed + s);
            seg_index[h].push_back(&p);
        }
    }

    SubpageHistogram hist{{0, 0}, {25, 0}, {50, 0}, {75, 0}, {100, 0}};
    for (const auto& p : a.pages) {
        if (b_contents.contains(p.content)) {
            ++hist[100];
            continue;
        }
        std::unordered_map<const SnapshotPage*, std::uint32_t> matches;
        for (std::uint32_t s = 0; s < segments; ++s) {
            const std::uint8_t* seg = p.content.data() + s * segment_size;
            std::uint64_t h = xxhash64(seg, segment_size, kContentHashSeed + s);
            auto it = seg_index.find(h);
            if (it == seg_index.end()) continue;
            for (const SnapshotPage* bp : it->second) {
                if (std::memcmp(seg, bp->content.data() + s * segment_size, segment_size) == 0)
                    ++matches[bp];
            }
        }
        std::uint32_t best = 0;
        for (const auto& [bp, n] : matches) best = std::max(best, n);
        double frac = segments == 0 ? 0.0 : static_cast<double>(best) / segments;
        int bin = frac >= 0.75 ? 75 : frac >= 0.5 ? 50 : frac >= 0.25 ? 25 : 0;
        ++hist[bin];
    }
    return hist;
}

std::uint64_t dedup_potential(const std::vector<Snapshot>& snapshots) {
    if (snapshots.size() < 2)
        throw InvalidConfig("dedup_potential needs at least two snapshots");
    std::uint32_t page_size = snapshots.front().page_size;
    for (const auto& s : snapshots)
        if (s.page_size != page_size)
            throw PageSizeMismatch("snapshots have different page sizes");

    // Cache-shared pages are already deduplicated by the file system layer
    // and are excluded from both the total and the distinct set.
    std::uint64_t total_pages = 0;
    std::unordered_map<std::uint64_t, std::vector<const PageContent*>> distinct;
    std::uint64_t distinct_count = 0;
    for (const auto& s : snapshots) {
        for (const auto& p : s.pages) {
            if (p.kind == PageKind::FileBackedCacheShared) continue;
            ++total_pages;
            auto& chain = distinct[content_hash(p.content)];
            bool found = false;
            for (const PageContent* c : chain)
                if (*c == p.content) {
                    found = true;
                    break;
                }
            if (!found) {
                chain.push_back(&p.content);
                ++distinct_count;
            }
        }
    }
    return (total_pages - distinct_count) * page_size;
}

}  // namespace upm
