#include "upm/report_json.hpp"

namespace upm {

Json to_json(const PhaseTimings& t) {
    Json j;
    j[phase_names::kStableSearch] = t.stable_search_ns;
    j[phase_names::kHash] = t.hash_ns;
    j[phase_names::kReverseSearch] = t.reverse_search_ns;
    j[phase_names::kMerge] = t.merge_ns;
    j[phase_names::kInsert] = t.insert_ns;
    j[phase_names::kLockWait] = t.lock_wait_ns;
    j[phase_names::kOther] = t.other_ns();
    j["Total"] = t.total_ns;
    return j;
}

Json to_json(const AdviseReport& r) {
    return Json{{"pages_scanned", r.pages_scanned},
                {"pages_inserted", r.pages_inserted},
                {"pages_merged", r.pages_merged},
                {"pages_skipped_unchanged", r.pages_skipped_unchanged},
                {"stale_entries_replaced", r.stale_entries_replaced},
                {"bytes_saved", r.bytes_saved},
                {"merge_aborts", r.merge_aborts},
                {"phase_timings_ns", to_json(r.phase_timings)}};
}

Json to_json(const OverheadReport& r) {
    return Json{{"static_bytes", r.static_bytes},
                {"per_entry_bytes", r.per_entry_bytes},
                {"total_bytes", r.total_bytes},
                {"live_entries", r.live_entries},
                {"stable_entries", r.stable_entries},
                {"reverse_entries", r.reverse_entries}};
}

Json to_json(const MemoryAccounting& a) {
    return Json{{"rss_bytes", a.rss_bytes},
                {"private_bytes", a.private_bytes},
                {"pss_bytes", a.pss_bytes}};
}

Json to_json(const SystemAccounting& a) {
    return Json{{"live_frame_bytes", a.live_frame_bytes},
                {"engine_overhead_bytes", a.engine_overhead_bytes},
                {"total_bytes", a.total_bytes}};
}

Json to_json(const SharingReport& r) {
    return Json{{"total_pages", r.total_pages},
                {"volatile_pages", r.volatile_pages},
                {"cache_shared_pages", r.cache_shared_pages},
                {"shareable_anonymous_pages", r.shareable_anonymous_pages},
                {"shareable_file_backed_pages", r.shareable_file_backed_pages},
                {"volatile_pct", r.volatile_pct},
                {"cache_shared_pct", r.cache_shared_pct},
                {"shareable_anonymous_pct", r.shareable_anonymous_pct},
                {"shareable_file_backed_pct", r.shareable_file_backed_pct}};
}

Json to_json(const SubpageHistogram& h) {
    Json j;
    for (const auto& [bin, count] : h) j[std::to_string(bin)] = count;
    return j;
}

Json to_json(const PhaseBreakdown& b) {
    Json j;
    j["sharing_calls"] = b.sharing_calls;
    j["merging_calls"] = b.merging_calls;
    j["sharing_pct"] = Json(b.sharing);
    j["sharing_and_merging_pct"] = Json(b.sharing_and_merging);
    return j;
}

Json to_json(const ScenarioConfig& c) {
    return Json{{"container_count", c.container_count},
                {"shared_region_bytes", c.shared_region_bytes},
                {"private_region_bytes", c.private_region_bytes},
                {"volatile_bytes_per_invocation", c.volatile_bytes_per_invocation},
                {"warm_invocations_per_container", c.warm_invocations_per_container},
                {"advise_on_cold", c.advise_on_cold},
                {"content_seed", c.content_seed},
                {"launch_mode",
                 c.launch_mode == LaunchMode::Sequential ? "sequential" : "concurrent"},
                {"page_size", c.page_size},
                {"budget_bytes", c.budget_bytes},
                {"volatile_in_shared", c.volatile_in_shared}};
}

Json to_json(const ScenarioReport& r) {
    Json series = Json::array();
    for (std::size_t c = 0; c < r.container_series.size(); ++c) {
        Json samples = Json::array();
        for (const auto& acc : r.container_series[c]) samples.push_back(to_json(acc));
        series.push_back(Json{{"container", c}, {"samples", samples}});
    }
    Json timings = Json::array();
    for (std::size_t c = 0; c < r.cold_timings.size(); ++c)
        timings.push_back(Json{{"container", c},
                               {"function_ns", r.cold_timings[c].function_ns},
                               {"advise_ns", r.cold_timings[c].advise_ns}});
    Json advises = Json::array();
    for (const auto& a : r.cold_advise_reports) advises.push_back(to_json(a));
    return Json{{"container_series", series},
                {"system_before", to_json(r.system_before)},
                {"system_after", to_json(r.system_after)},
                {"cold_timings", timings},
                {"cold_advise_reports", advises},
                {"advise_total", to_json(r.advise_total)},
                {"advise_calls", r.advise_calls}};
}

Json to_json(const std::vector<TimingPoint>& curve) {
    Json j = Json::array();
    for (const auto& p : curve)
        j.push_back(Json{{"container_index", p.container_index},
                         {"advise_ns", p.advise_ns},
                         {"insert_count", p.insert_count},
                         {"merge_count", p.merge_count}});
    return j;
}

Json to_json(const EngineConfig& c) {
    return Json{{"page_size", c.page_size},
                {"budget_bytes", c.budget_bytes},
                {"hash_seed", c.hash_seed},
                {"synchronous", c.synchronous}};
}

EngineConfig engine_config_from_json(const Json& j) {
    EngineConfig c;
    c.page_size = j.at("page_size").get<std::size_t>();
    c.budget_bytes = j.at("budget_bytes").get<std::uint64_t>();
    c.hash_seed = j.at("hash_seed").get<std::uint64_t>();
    c.synchronous = j.at("synchronous").get<bool>();
    return c;
}

}  // namespace upm
