// upm: page-dedup simulator frontend.
//   sim           run a container scenario and report memory series
//   analyze       compare two memory snapshots (sharing categories, sub-page)
//   gen-snapshot  write per-container snapshots for a scenario
//
// Exit codes: 0 success, 1 user/config error, 2 internal invariant violation.

#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "upm/content_gen.hpp"
#include "upm/metrics.hpp"
#include "upm/report_json.hpp"
#include "upm/snapshot.hpp"
#include "upm/workload_sim.hpp"

namespace {

constexpr const char* kToolVersion = "1.0.0";
constexpr int kSchemaVersion = 1;

std::string iso_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

upm::Json envelope(const std::string& command, upm::Json config, upm::Json payload) {
    upm::Json j;
    j["tool"] = "upm";
    j["version"] = kToolVersion;
    j["schema_version"] = kSchemaVersion;
    j["command"] = command;
    j["timestamp"] = iso_timestamp();
    j["config"] = std::move(config);
    j["payload"] = std::move(payload);
    return j;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw upm::Error("cannot write output file: " + out_path);
    out << text;
}

// CSV carries the same numeric values as the JSON payload: a series section
// for sim, then flat "summary,<key>,<value>" rows.
std::string scenario_csv(const upm::ScenarioReport& rep) {
    std::ostringstream csv;
    csv << "container,sample,rss_bytes,private_bytes,pss_bytes\n";
    for (std::size_t c = 0; c < rep.container_series.size(); ++c) {
        const auto& series = rep.container_series[c];
        for (std::size_t s = 0; s < series.size(); ++s)
            csv << c << ',' << s << ',' << series[s].rss_bytes << ',' << series[s].private_bytes
                << ',' << series[s].pss_bytes << '\n';
    }
    csv << "summary,system_before_total_bytes," << rep.system_before.total_bytes << '\n';
    csv << "summary,system_after_total_bytes," << rep.system_after.total_bytes << '\n';
    csv << "summary,system_after_live_frame_bytes," << rep.system_after.live_frame_bytes << '\n';
    csv << "summary,system_after_engine_overhead_bytes,"
        << rep.system_after.engine_overhead_bytes << '\n';
    csv << "summary,bytes_saved," << rep.advise_total.bytes_saved << '\n';
    csv << "summary,pages_merged," << rep.advise_total.pages_merged << '\n';
    csv << "summary,pages_inserted," << rep.advise_total.pages_inserted << '\n';
    csv << "summary,advise_calls," << rep.advise_calls << '\n';
    return csv.str();
}

std::string sharing_csv(const upm::SharingReport& rep, const upm::SubpageHistogram* hist) {
    std::ostringstream csv;
    csv.precision(std::numeric_limits<double>::max_digits10);  // round-trip doubles
    csv << "metric,value\n";
    csv << "total_pages," << rep.total_pages << '\n';
    csv << "volatile_pages," << rep.volatile_pages << '\n';
    csv << "cache_shared_pages," << rep.cache_shared_pages << '\n';
    csv << "shareable_anonymous_pages," << rep.shareable_anonymous_pages << '\n';
    csv << "shareable_file_backed_pages," << rep.shareable_file_backed_pages << '\n';
    csv << "volatile_pct," << rep.volatile_pct << '\n';
    csv << "cache_shared_pct," << rep.cache_shared_pct << '\n';
    csv << "shareable_anonymous_pct," << rep.shareable_anonymous_pct << '\n';
    csv << "shareable_file_backed_pct," << rep.shareable_file_backed_pct << '\n';
    if (hist)
        for (const auto& [bin, count] : *hist) csv << "subpage_bin_" << bin << ',' << count << '\n';
    return csv.str();
}

struct SimFlags {
    std::string config_path;
    std::string format = "json";
    std::string out_path;
    bool timing_curve = false;
    // overrides; -1 = keep the config file's value
    std::int64_t seed = -1, containers = -1, shared_mb = -1, private_mb = -1, invocations = -1;
    bool no_advise = false, concurrent = false;
};

upm::ScenarioConfig resolve_config(const SimFlags& f) {
    upm::ScenarioConfig cfg = upm::load_scenario_config(f.config_path);
    if (f.seed >= 0) cfg.content_seed = static_cast<std::uint64_t>(f.seed);
    if (f.containers >= 0) cfg.container_count = static_cast<std::uint64_t>(f.containers);
    if (f.shared_mb >= 0)
        cfg.shared_region_bytes = static_cast<std::uint64_t>(f.shared_mb) * 1024 * 1024;
    if (f.private_mb >= 0)
        cfg.private_region_bytes = static_cast<std::uint64_t>(f.private_mb) * 1024 * 1024;
    if (f.invocations >= 0)
        cfg.warm_invocations_per_container = static_cast<std::uint64_t>(f.invocations);
    if (f.no_advise) cfg.advise_on_cold = false;
    if (f.concurrent) cfg.launch_mode = upm::LaunchMode::Concurrent;
    cfg.validate();
    return cfg;
}

int cmd_sim(const SimFlags& f) {
    upm::ScenarioConfig cfg = resolve_config(f);
    if (f.timing_curve) {
        auto curve = upm::madvise_timing_curve(cfg);
        if (f.format == "csv") {
            std::ostringstream csv;
            csv << "container_index,advise_ns,insert_count,merge_count\n";
            for (const auto& p : curve)
                csv << p.container_index << ',' << p.advise_ns << ',' << p.insert_count << ','
                    << p.merge_count << '\n';
            emit(csv.str(), f.out_path);
        } else {
            emit(envelope("sim --timing-curve", upm::to_json(cfg), upm::to_json(curve)).dump(2) + "\n",
                 f.out_path);
        }
        return 0;
    }

    upm::ScenarioReport rep = upm::run_scenario(cfg);
    if (f.format == "csv") {
        emit(scenario_csv(rep), f.out_path);
    } else {
        upm::Json payload = upm::to_json(rep);
        if (!rep.cold_advise_reports.empty())
            payload["phase_breakdown"] = upm::to_json(upm::phase_breakdown(rep.cold_advise_reports));
        emit(envelope("sim", upm::to_json(cfg), std::move(payload)).dump(2) + "\n", f.out_path);
    }
    return 0;
}

struct AnalyzeFlags {
    std::string snap_a, snap_b;
    bool subpage = false;
    std::uint32_t segment_size = 1024;
    std::string format = "json";
    std::string out_path;
};

int cmd_analyze(const AnalyzeFlags& f) {
    upm::Snapshot a = upm::load_snapshot(f.snap_a);
    upm::Snapshot b = upm::load_snapshot(f.snap_b);
    upm::SharingReport rep = upm::classify(a, b);
    upm::SubpageHistogram hist;
    if (f.subpage) hist = upm::subpage_similarity(a, b, f.segment_size);

    if (f.format == "csv") {
        emit(sharing_csv(rep, f.subpage ? &hist : nullptr), f.out_path);
    } else {
        upm::Json payload;
        payload["sharing"] = upm::to_json(rep);
        if (f.subpage) payload["subpage_histogram"] = upm::to_json(hist);
        upm::Json config{{"snapshot_a", f.snap_a},
                         {"snapshot_b", f.snap_b},
                         {"subpage", f.subpage},
                         {"segment_size", f.segment_size}};
        emit(envelope("analyze", std::move(config), std::move(payload)).dump(2) + "\n",
             f.out_path);
    }
    return 0;
}

int cmd_gen_snapshot(const std::string& config_path, const std::string& prefix) {
    upm::ScenarioConfig cfg = upm::load_scenario_config(config_path);
    cfg.validate();
    upm::RegionLayout layout = upm::scenario_layout(cfg);

    for (std::uint64_t c = 0; c < cfg.container_count; ++c) {
        upm::Snapshot snap;
        snap.page_size = static_cast<std::uint32_t>(cfg.page_size);
        auto add_region = [&](upm::VirtAddr base, std::uint64_t bytes, std::uint64_t seed) {
            for (std::uint64_t p = 0; p < bytes / cfg.page_size; ++p) {
                upm::SnapshotPage page;
                page.vaddr = base + p * cfg.page_size;
                page.kind = upm::PageKind::Anonymous;
                page.content.resize(cfg.page_size);
                upm::fill_stream_page(seed, p, page.content);
                snap.pages.push_back(std::move(page));
            }
        };
        add_region(layout.private_base, cfg.private_region_bytes,
                   upm::derive_stream_seed(cfg.content_seed, upm::ContentRole::Private, c));
        add_region(layout.shared_base, cfg.shared_region_bytes,
                   upm::derive_stream_seed(cfg.content_seed, upm::ContentRole::Shared));
        upm::write_snapshot(snap, prefix + "-" + std::to_string(c) + ".snap");
    }
    std::cout << "wrote " << cfg.container_count << " snapshots at " << prefix << "-<i>.snap\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"user-guided page-merging simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    SimFlags sim;
    auto* sim_cmd = app.add_subcommand("sim", "run a container scenario");
    sim_cmd->add_option("config", sim.config_path, "scenario config file (key = value)")
        ->required();
    sim_cmd->add_option("--format", sim.format, "json or csv")
        ->check(CLI::IsMember({"json", "csv"}));
    sim_cmd->add_option("--out", sim.out_path, "write the report here instead of stdout");
    sim_cmd->add_option("--seed", sim.seed, "override content_seed");
    sim_cmd->add_option("--containers", sim.containers, "override container_count");
    sim_cmd->add_option("--shared-mb", sim.shared_mb, "override shared region size (MiB)");
    sim_cmd->add_option("--private-mb", sim.private_mb, "override private region size (MiB)");
    sim_cmd->add_option("--invocations", sim.invocations, "override warm invocation count");
    sim_cmd->add_flag("--no-advise", sim.no_advise, "disable advising on cold start");
    sim_cmd->add_flag("--concurrent", sim.concurrent, "launch containers concurrently");
    sim_cmd->add_flag("--timing-curve", sim.timing_curve,
                      "report per-container advise timings instead of memory series");

    AnalyzeFlags an;
    auto* an_cmd = app.add_subcommand("analyze", "classify sharing potential of two snapshots");
    an_cmd->add_option("snapshot_a", an.snap_a, "first snapshot")->required();
    an_cmd->add_option("snapshot_b", an.snap_b, "second snapshot")->required();
    an_cmd->add_flag("--subpage", an.subpage, "also compute the sub-page similarity histogram");
    an_cmd->add_option("--segment-size", an.segment_size, "sub-page segment size (default 1024)");
    an_cmd->add_option("--format", an.format, "json or csv")
        ->check(CLI::IsMember({"json", "csv"}));
    an_cmd->add_option("--out", an.out_path, "write the report here instead of stdout");

    std::string gen_config, gen_prefix;
    auto* gen_cmd = app.add_subcommand("gen-snapshot", "write per-container snapshots");
    gen_cmd->add_option("config", gen_config, "scenario config file")->required();
    gen_cmd->add_option("--out", gen_prefix, "output file prefix")->required();

    try {
        app.parse(argc, argv);
        if (sim_cmd->parsed()) return cmd_sim(sim);
        if (an_cmd->parsed()) return cmd_analyze(an);
        if (gen_cmd->parsed()) return cmd_gen_snapshot(gen_config, gen_prefix);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const upm::InvariantViolation& e) {
        std::cerr << "internal invariant violation: " << e.what() << "\n";
        return 2;
    } catch (const upm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
