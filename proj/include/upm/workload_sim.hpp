#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "upm/address_space.hpp"
#include "upm/dedup_engine.hpp"
#include "upm/metrics.hpp"

namespace upm {

enum class LaunchMode { Sequential, Concurrent };

// Scenario: n containers, each mapping a globally-seeded shared region and a
// per-container private region, advising the shared region on the cold
// invocation and rewriting V volatile bytes on each of k warm invocations.
struct ScenarioConfig {
    std::uint64_t container_count = 1;
    std::uint64_t shared_region_bytes = 0;
    std::uint64_t private_region_bytes = 0;
    std::uint64_t volatile_bytes_per_invocation = 0;
    std::uint64_t warm_invocations_per_container = 5;
    bool advise_on_cold = true;
    std::uint64_t content_seed = 1;
    LaunchMode launch_mode = LaunchMode::Sequential;

    // Engine settings for the run; 2 GiB covers large per-function models.
    std::size_t page_size = kDefaultPageSize;
    std::uint64_t budget_bytes = 2ull * 1024 * 1024 * 1024;
    // When set, warm-invocation rewrites land inside the advised shared
    // region (breaking sharing page by page) instead of the private region.
    bool volatile_in_shared = false;

    void validate() const;  // throws InvalidConfig
};

// Flat "key = value" config file; keys as named above, '#' starts a comment.
ScenarioConfig parse_scenario_config(std::istream& in);
ScenarioConfig load_scenario_config(const std::filesystem::path& path);

struct ColdTiming {
    std::uint64_t function_ns = 0;  // map + initialize, excluding advise
    std::uint64_t advise_ns = 0;
};

struct ScenarioReport {
    ScenarioConfig config;
    // One row per container, k + 1 samples each (post-cold + post-each-warm).
    std::vector<std::vector<MemoryAccounting>> container_series;
    SystemAccounting system_before;
    SystemAccounting system_after;
    std::vector<ColdTiming> cold_timings;          // per container
    std::vector<AdviseReport> cold_advise_reports;  // per container; empty if no advise
    AdviseReport advise_total;
    std::uint64_t advise_calls = 0;
};

ScenarioReport run_scenario(const ScenarioConfig& config);

struct TimingPoint {
    std::uint64_t container_index = 0;  // 1-based launch order
    std::uint64_t advise_ns = 0;
    std::uint64_t insert_count = 0;
    std::uint64_t merge_count = 0;
};

// Cold-start advise cost curve: sequential launches, one point per container.
// Requires advise_on_cold and sequential launch mode.
std::vector<TimingPoint> madvise_timing_curve(const ScenarioConfig& config);

// Memory layout used by the simulator (also by the snapshot generator).
struct RegionLayout {
    VirtAddr private_base = 0;
    VirtAddr shared_base = 0;
};
RegionLayout scenario_layout(const ScenarioConfig& config);

}  // namespace upm
